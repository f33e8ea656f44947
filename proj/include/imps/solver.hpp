#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "imps/linalg.hpp"
#include "imps/tensor.hpp"

namespace imps {

/// Implicit Hermitian operator: y = H x plus an optional cheap trace.
struct LinearOperator {
    long dim = 0;
    std::function<void(const Vector&, Vector&)> apply;
    std::function<cx()> trace;              // optional
    std::function<RealVector()> diagonal;   // optional; enables targeted
                                            // probes when the search stalls

    Vector operator()(const Vector& x) const {
        Vector y(dim);
        apply(x, y);
        return y;
    }
};

/// Orthonormal search space with cached operator applications and the
/// projected matrix h(i,j) = <v_i|H|v_j> (bias-free; the rank-one bias on
/// the first vector is applied at solve time).
struct SubspaceBasis {
    std::vector<Vector> vectors;
    std::vector<Vector> applied;
    Matrix h;

    long size() const { return static_cast<long>(vectors.size()); }
    Vector assemble(const Vector& coeffs) const;
    Vector assemble_applied(const Vector& coeffs) const;
    /// Appends an orthonormalized candidate and extends h; returns false if
    /// the candidate vanished under projection.
    bool append(const LinearOperator& op, Vector candidate);
};

/// Ritz solution of the k x k problem with h(0,0) -> h(0,0) - gamma.
/// Reuses the cached applications only; no operator calls.
struct RitzSolution {
    double value = 0;              // lowest eigenvalue of the biased matrix
    Vector coeffs;                 // lowest eigenvector (subspace coordinates)
    RealVector all_values;         // full biased Ritz spectrum
    Matrix all_vectors;            // columns: subspace coordinates
};
RitzSolution solve_projected(const SubspaceBasis& basis, double gamma);

/// Approximate inverse of (E0 - H) built from Ritz data of a previous,
/// nearby operator. alpha is the average eigenvalue assigned to the unknown
/// part of the spectrum.
struct DavidsonPreconditioner {
    std::vector<double> values;   // e_i, ascending, e_0 first
    std::vector<Vector> vectors;  // |e_i>
    std::vector<Vector> applied;  // H|e_i>
    double alpha = 0;
    double e0_shifted = 0;        // E0 = e_0 - epsilon_shift
    long dim = 0;
    double drop_ratio = 100.0;    // omit e_i with e_i - e_0 > drop_ratio * (e_1 - e_0)
};

/// eigvalues/vectors/applied must be index-aligned; trace_h is the exact
/// operator trace, n its dimension.
DavidsonPreconditioner build_davidson(std::vector<double> values, std::vector<Vector> vectors,
                                      std::vector<Vector> applied, double trace_h, long n,
                                      double epsilon_shift);

/// (E0-alpha)^{-1} (r + sum_{i>=1} (H-alpha)|e_i> <e_i|r> / (E0-e_i)), with
/// the i=0 term excluded and far-away terms dropped. Caller re-orthogonalizes.
Vector precondition_apply(const DavidsonPreconditioner& d, const Vector& r);

struct SolveOptions {
    double residual_tol = 1e-9;    // on ||r|| / max(1,|e0|)
    int max_iterations = 200;      // operator applications for expansions
    int max_basis = 24;
    int thick_restart_keep = 3;
    int extra_ritz = 0;            // additional Ritz pairs to return
    int closed_subspace_probes = 3; // extra directions tried when the seeds
                                    // close under the operator
    double gamma = 0.0;            // rank-one bias on the first basis vector
    const DavidsonPreconditioner* preconditioner = nullptr;
    /// Applied to every candidate vector (seed or expansion) before
    /// orthogonalization; used for invariance/mirror enforcement.
    std::function<Vector(const Vector&)> transform;
};

struct SolveResult {
    double e0 = 0;                 // lowest Ritz value of the biased operator
    Vector v0;
    std::vector<std::pair<double, Vector>> extra;
    int iterations = 0;
    bool converged = false;
    SubspaceBasis basis;           // surviving search space (bias-free h)
    Vector coeffs;                 // v0 = basis.assemble(coeffs)
};

/// Iterative lowest-eigenpair solver by subspace projection. Seeds are used
/// in order as the initial basis (first seed becomes the bias anchor);
/// expansion vectors are preconditioned residuals. Deterministic for fixed
/// seeds and options.
SolveResult solve_lowest(const LinearOperator& op, const std::vector<Vector>& seeds,
                         const SolveOptions& opts);

/// Expands the basis by the (preconditioned, transformed) residual of the
/// current lowest Ritz pair; one operator application. Returns false when
/// the residual already vanished (no expansion possible).
bool residual_expand(SubspaceBasis& basis, const LinearOperator& op, const SolveOptions& opts);

/// Mixes a candidate site tensor toward the translation-consistent form
/// 0.5*v + 0.25*(Q_L lbar_R + lbar_L Q_R) built from the previous round's
/// orthogonal factors; candidate is a vectorized (chi_l, chi_r, d) tensor.
Vector bias_candidate_uniform(const Vector& candidate, const Tensor& q_left_prev,
                              const Tensor& q_right_prev);

/// Averages the two bond-index orders of a vectorized (chi, chi, d) tensor.
Vector mirror_symmetrize_vec(const Vector& candidate, long chi, long d);

} // namespace imps
