#pragma once

#include <string>
#include <vector>

#include "imps/linalg.hpp"
#include "imps/mpo.hpp"
#include "imps/tensor.hpp"

namespace imps {

/// Converged state in mixed gauge: orthogonal factors on both sides of a
/// central matrix. All observables below are evaluated in this gauge.
struct UniformState {
    Tensor q_left;         // (chi, beta, d)
    Tensor q_right;        // (beta, chi, d)
    Matrix lambda_left;    // Hermitian psd
    Matrix lambda_right;
    Matrix lambda;         // the center matrix used for evaluation
    double lambda_asymmetry = 0.0;

    long chi() const { return q_left.empty() ? 0 : q_left.extent(0); }
    long phys_dim() const { return q_left.empty() ? 0 : q_left.extent(2); }
};

/// Decomposes a converged site tensor into the mixed-gauge form.
UniformState make_uniform_state(const Tensor& a_converged);

/// Left transfer matrix T[(a,a'),(b,b')] = sum_s Q(a,b,s) conj(Q)(a',b',s)
/// as a dense chi^2 x chi^2 map.
Matrix transfer_matrix(const Tensor& q);

/// Number of transfer eigenvalues with | 1 - |mu| | < tol (the spatial
/// period of the state).
int detect_periodicity(const Matrix& transfer, double tol = 1e-6);

/// <op> on one site adjacent to the center.
cx expectation_local(const UniformState& state, const Matrix& op);

/// Site-resolved expectations over `period` consecutive sites, optionally
/// with a replaced center matrix (symmetry-broken states).
std::vector<double> density_profile(const UniformState& state, const Matrix& op, int period,
                                    const Matrix* center_override = nullptr);

struct CorrelationSeries {
    std::vector<long> r;
    std::vector<double> values;
    bool connected = false;
    std::string op_names;
};

/// <op1_0 op2_r> for r = 1..r_max by repeated transfer application;
/// connected subtracts <op1><op2>.
CorrelationSeries correlation(const UniformState& state, const Matrix& op1, const Matrix& op2,
                              long r_max, bool connected = false,
                              const std::string& op_names = "");

/// Half-chain entanglement entropy in bits from the singular values of the
/// center matrix (normalized to unit total weight).
double entanglement_entropy_bits(const Matrix& lambda);

/// Energy density of the uniform state for the given physical terms;
/// long-range tails are summed until their geometric remainder is negligible.
double energy_per_site(const UniformState& state, const HamiltonianTerms& terms);

struct LuttingerFit {
    double k_nn = 0, k_cc = 0;
    double const1 = 0, const2 = 0;
    double residual_nn = 0, residual_cc = 0;
};

/// Fits the leading algebraic decay forms
///   nn(r) = nn_inf + const1 cos(2 pi rho0 r) r^(-2K)
///   cc(r) = const2 r^(-1/(2K))
/// over r in [r_lo, r_hi] and returns both K estimates.
LuttingerFit fit_luttinger(const CorrelationSeries& nn, const CorrelationSeries& cc, double rho0,
                           long r_lo, long r_hi);

struct GroundStateSelection {
    Matrix center;        // replacement for the central matrix, unit norm
    bool degenerate = false;
    double objective = 0; // attained <op>
    int manifold_dim = 0;
};

/// Picks, out of the degenerate ground manifold encoded by the converged
/// state, the center matrix maximizing <op> on the site right of the center.
/// The manifold is spanned by the unimodular eigenmatrices of the mixed
/// pull-through map g -> sum_s Q_L(s)^dag g Q_R(s).
GroundStateSelection select_ground_state(const UniformState& state, const Matrix& op,
                                         double tol = 1e-6);

} // namespace imps
