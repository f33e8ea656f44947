#pragma once

#include <deque>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "imps/analysis.hpp"
#include "imps/linalg.hpp"
#include "imps/mpo.hpp"
#include "imps/solver.hpp"
#include "imps/tensor.hpp"

namespace imps {

/// Running convergence bookkeeping: unit-norm reference tensor, weighted
/// deviation average, and the most recent mixing weight.
struct ConvergenceState {
    Tensor reference;           // unit norm once set
    double avg_deviation = 0.0; // normalized running average of ||A - reference||
    int avg_updates = 0;        // rounds that entered the average
    double last_xi = 1.0;
    double gamma_floor = 1e-12;
    double ema_keep = 0.9;
    double ema_mix = 0.1;
    double ema_cap = 1.02;
    std::vector<double> energy_history;
};

/// min(1, avg/deviation); 1 while no average exists.
double mixing_weight(const ConvergenceState& state, double deviation);

/// Normalized exponential average update with the per-round growth cap.
void update_deviation_average(ConvergenceState& state, double deviation);

/// reference <- normalize(reference + xi * a); first call sets a/||a||.
void update_reference(ConvergenceState& state, const Tensor& a, double xi);

struct AccumulatedEnvironments {
    Tensor left, right;
    double xi = 1.0;
};

/// Superposed accumulation: L_old + xi L_new, R_old + xi R_new with
/// xi = min(1, avg/deviation); also feeds `deviation` into the running
/// average for the following round.
AccumulatedEnvironments smo_accumulate(const Tensor& l_old, const Tensor& l_new,
                                       const Tensor& r_old, const Tensor& r_new,
                                       double deviation, ConvergenceState& state);

/// Implicit effective operator L . H . R on a (chi_l, chi_r, d) site tensor.
struct EffectiveOperator {
    const Tensor* env_left = nullptr;
    const Tensor* env_right = nullptr;
    const Mpo* mpo = nullptr;
    long chi_l = 0, chi_r = 0, d = 0;

    long dim() const { return chi_l * chi_r * d; }
    Tensor apply(const Tensor& a) const;
    cx trace() const;          // via pre-traced environments
    RealVector diagonal() const;
    LinearOperator linear_operator() const;
};

EffectiveOperator assemble_effective(const Tensor& env_left, const Mpo& mpo,
                                     const Tensor& env_right);

/// One-site environment extensions (the absorption step).
Tensor absorb_left(const Tensor& env_left, const Tensor& q_left, const Mpo& mpo);
Tensor absorb_right(const Tensor& env_right, const Tensor& q_right, const Mpo& mpo);

/// Decomposes a and extends both halves (symmetrized update).
std::pair<Tensor, Tensor> absorb_both(const Tensor& env_left, const Tensor& env_right,
                                      const Tensor& a, const Mpo& mpo);

/// Closed sandwich <lambda| L.R |lambda> (no inserted site).
cx closed_energy(const Tensor& env_left, const Tensor& env_right, const Matrix& lambda);

/// Rank-one bias strength gamma >= gamma_floor such that the biased
/// minimizer's deviation shrinks to about min(c * eps0, delta_max).
/// Quantities are the 2-level reduction: diagonal energies of the reference
/// and of the orthogonal complement direction, their real coupling, and the
/// unbiased mixing amplitude eps0.
double compute_gain_gamma(double h_rr, double h_bb, double h_rb, double eps0, double c,
                          double delta_max, double gamma_floor);

/// Same, reading the 2-level data off a solved subspace (first basis vector
/// is the reference; coeffs0 is the unbiased minimizer in that basis).
double compute_gain_gamma(const SubspaceBasis& basis, const Vector& coeffs0, double c,
                          double delta_max, double gamma_floor);

/// Adds -e . I to the local interaction slot.
void subtract_energy(Mpo& mpo, double e);

/// Index-symmetric projection (A + A^swap)/2, renormalized.
Tensor mirror_symmetrize(const Tensor& a);

/// Bond embedding with a real isometry u (chi_small x chi_big, u u^T = 1).
Tensor embed_environment(const Tensor& env, const Eigen::MatrixXd& u);
Tensor embed_site(const Tensor& a, const Eigen::MatrixXd& u);

/// p applications of the linear insertion map through a k-dimensional
/// Krylov projection; exact to round-off for p <= k-1.
Tensor krylov_insert(const Tensor& env, const std::function<Tensor(const Tensor&)>& insert,
                     long p, int k);

enum class EnergySubtraction { Off, Tracking, Eigenvalue };

struct EngineConfig {
    long chi = 16;
    long chi_start = 0;        // 0: start at chi
    int grow_at_round = 0;     // 0: grow immediately after initialization
    int init_sites = 8;        // even
    int max_rounds = 2000;
    double conv_tol = 1e-9;
    int conv_window = 20;
    bool superposition = true;
    bool gain = true;
    bool enforce_invariance = false;
    bool mirror_symmetry = false;
    EnergySubtraction energy_mode = EnergySubtraction::Tracking;
    double delta_max_factor = 10.0;
    double gamma_floor = 1e-12;
    double ema_keep = 0.9, ema_mix = 0.1, ema_cap = 1.02;
    int recycle_seeds = 3;
    double recycle_degeneracy_tol = 1e-8;
    double grow_noise = 1e-6; // relative; breaks the padded invariant subspace
    std::uint64_t seed = 1;
    // solver knobs
    double solver_tol = 1e-9;
    int solver_max_basis = 24;
    int solver_max_iterations = 60;
    int solver_restart_keep = 3;
    bool use_preconditioner = true;
    std::function<double(double)> c_policy; // deviation -> c; default heuristic
};

struct StepReport {
    int round = 0;
    double energy_site = 0;
    double eigenvalue = 0;
    double deviation = 0;
    double xi = 1;
    double gamma = 0;
    int solver_iterations = 0;
    bool solver_converged = true;
    double lambda_asymmetry = 0;
    bool converged = false;
};

struct InitData {
    Tensor env_left, env_right;
    Matrix lambda;
    Tensor seed;
    Matrix left_isometry;  // d^(n0/2) x chi split factor (bra basis of L)
    Matrix right_isometry; // same for R, rows packed with the last site slowest
    double dense_energy = 0;  // lowest eigenvalue of the dense small system
    double closed_energy = 0; // <lambda| L.R |lambda> before any shift
    long chi = 0;
};

/// Steps 1-6 of the small-system initialization: dense ground state, split,
/// SVD (or Takagi when the split matrix is symmetric and mirror symmetry is
/// requested), boundary projections of the operator halves.
InitData initialize(const Mpo& mpo, int n0, long chi_cap, bool prefer_takagi);

class Engine {
  public:
    Engine(Mpo mpo, EngineConfig cfg);

    StepReport step();
    /// Runs until convergence or the round cap; reports via the callback.
    StepReport run(const std::function<void(const StepReport&)>& on_step = nullptr);

    bool converged() const { return converged_; }
    /// Run-control limits may change on resume; state layout is untouched.
    void update_run_limits(int max_rounds, double conv_tol, int conv_window);
    int round() const { return round_; }
    double energy_per_site() const { return e_site_; }
    double lambda_asymmetry() const { return lambda_asym_; }

    const Tensor& site_tensor() const { return site_; }
    const Tensor& env_left() const { return env_left_; }
    const Tensor& env_right() const { return env_right_; }
    const ConvergenceState& convergence() const { return conv_; }
    const Mpo& mpo() const { return mpo_; }
    const EngineConfig& config() const { return cfg_; }
    double initial_closed_energy() const { return init_closed_energy_; }
    double initial_dense_energy() const { return init_dense_energy_; }

    /// Isometric bond growth; default u embeds the old space. No-op when
    /// chi_big equals the current bond dimension and u is the identity.
    void grow_bond(long chi_big, const Eigen::MatrixXd* u = nullptr);

    /// Inserts the current tensor p more times into both halves through a
    /// k-dimensional Krylov projection (post-convergence fast lengthening).
    void krylov_extend(long p, int k);

    UniformState uniform_state() const;

    friend void save_engine(const Engine& engine, std::ostream& os);
    friend Engine load_engine(std::istream& is);

  private:
    explicit Engine() = default; // for checkpoint restore
    void setup_from_init(InitData init);
    void add_growth_noise();
    std::vector<Vector> collect_seeds() const;
    std::function<Vector(const Vector&)> candidate_transform() const;
    void apply_energy_subtraction(double round_eigenvalue);
    void refresh_davidson(const SubspaceBasis& basis, const RitzSolution& unbiased, double trace_h);

    Mpo mpo_;
    HamiltonianTerms physical_terms_; // measurement truth, never shifted
    EngineConfig cfg_;
    Tensor env_left_, env_right_;
    Tensor site_;
    ConvergenceState conv_;
    std::deque<Tensor> reference_history_;
    Tensor q_left_prev_, q_right_prev_;
    std::optional<DavidsonPreconditioner> davidson_;
    bool recycle_disabled_ = false;
    double gamma_prev_ = 0.0;
    double sigma_shift_ = 0.0; // accumulated local-slot scalar
    double e_site_ = 0.0;
    double lambda_asym_ = 0.0;
    double init_closed_energy_ = 0.0;
    double init_dense_energy_ = 0.0;
    int round_ = 0;
    int consecutive_converged_ = 0;
    bool converged_ = false;
    bool plain_absorb_once_ = false; // after bond growth
    std::mt19937_64 rng_;
};

} // namespace imps
