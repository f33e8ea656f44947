#include "imps/solver.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace imps {

namespace {

constexpr double k_drop_tol = 1e-8; // candidate norm after projection

Tensor tensor_view(const Vector& v, long chi_l, long chi_r, long d) {
    std::vector<cx> data(v.data(), v.data() + v.size());
    return Tensor({chi_l, chi_r, d}, std::move(data));
}

Vector vector_view(const Tensor& t) {
    Vector v(t.size());
    for (long i = 0; i < t.size(); ++i) v(i) = t[i];
    return v;
}

// Two-pass modified Gram-Schmidt against the basis; returns empty on drop.
std::optional<Vector> orthonormalize(const std::vector<Vector>& basis, Vector v) {
    const double initial = v.norm();
    if (!(initial > 0) || !std::isfinite(initial)) return std::nullopt;
    for (int pass = 0; pass < 2; ++pass)
        for (const Vector& b : basis) v -= b * b.dot(v);
    const double n = v.norm();
    if (n < k_drop_tol * initial || n == 0.0) return std::nullopt;
    return Vector(v / n);
}

} // namespace

Vector SubspaceBasis::assemble(const Vector& coeffs) const {
    Vector out = Vector::Zero(vectors.empty() ? 0 : vectors.front().size());
    for (long i = 0; i < size(); ++i) out += coeffs(i) * vectors[static_cast<std::size_t>(i)];
    return out;
}

Vector SubspaceBasis::assemble_applied(const Vector& coeffs) const {
    Vector out = Vector::Zero(applied.empty() ? 0 : applied.front().size());
    for (long i = 0; i < size(); ++i) out += coeffs(i) * applied[static_cast<std::size_t>(i)];
    return out;
}

bool SubspaceBasis::append(const LinearOperator& op, Vector candidate) {
    auto v = orthonormalize(vectors, std::move(candidate));
    if (!v) return false;
    Vector w(op.dim);
    op.apply(*v, w);
    const long k = size();
    Matrix h_new(k + 1, k + 1);
    h_new.topLeftCorner(k, k) = h;
    for (long i = 0; i < k; ++i) {
        const cx hij = vectors[static_cast<std::size_t>(i)].dot(w);
        h_new(i, k) = hij;
        h_new(k, i) = std::conj(hij);
    }
    h_new(k, k) = cx(v->dot(w).real(), 0.0);
    h = std::move(h_new);
    vectors.push_back(std::move(*v));
    applied.push_back(std::move(w));
    return true;
}

RitzSolution solve_projected(const SubspaceBasis& basis, double gamma) {
    Matrix hb = basis.h;
    if (hb.rows() > 0) hb(0, 0) -= gamma;
    Eigen::SelfAdjointEigenSolver<Matrix> es(hb);
    if (es.info() != Eigen::Success) throw NumericalError("solve_projected: eigensolver failed");
    RitzSolution out;
    out.all_values = es.eigenvalues();
    out.all_vectors = es.eigenvectors();
    out.value = out.all_values(0);
    out.coeffs = out.all_vectors.col(0);
    // fix the global phase: largest coefficient real positive keeps the
    // returned vector deterministic across runs
    Eigen::Index imax = 0;
    out.coeffs.cwiseAbs().maxCoeff(&imax);
    const cx ph = out.coeffs(imax);
    if (std::abs(ph) > 0) out.coeffs *= std::conj(ph) / std::abs(ph);
    return out;
}

DavidsonPreconditioner build_davidson(std::vector<double> values, std::vector<Vector> vectors,
                                      std::vector<Vector> applied, double trace_h, long n,
                                      double epsilon_shift) {
    const long k = static_cast<long>(values.size());
    if (n <= k) throw PreconditionError("build_davidson: operator dimension must exceed pair count");
    DavidsonPreconditioner d;
    d.dim = n;
    double sum = 0;
    for (double e : values) sum += e;
    d.alpha = (trace_h - sum) / static_cast<double>(n - k);
    d.e0_shifted = (k > 0 ? values.front() : 0.0) - epsilon_shift;
    d.values = std::move(values);
    d.vectors = std::move(vectors);
    d.applied = std::move(applied);
    return d;
}

Vector precondition_apply(const DavidsonPreconditioner& d, const Vector& r) {
    Vector out = r;
    const long k = static_cast<long>(d.values.size());
    const double gap1 = (k > 1) ? (d.values[1] - d.values[0]) : 0.0;
    for (long i = 1; i < k; ++i) {
        const double sep = d.values[static_cast<std::size_t>(i)] - d.values[0];
        if (gap1 > 0 && sep > d.drop_ratio * gap1) continue; // negligible influence
        const double denom = d.e0_shifted - d.values[static_cast<std::size_t>(i)];
        if (std::abs(denom) < 1e-300) continue;
        const cx amp = d.vectors[static_cast<std::size_t>(i)].dot(r) / denom;
        out += amp * (d.applied[static_cast<std::size_t>(i)] -
                      d.alpha * d.vectors[static_cast<std::size_t>(i)]);
    }
    return out / (d.e0_shifted - d.alpha);
}

namespace {

// Shrinks the basis to {anchor, lowest Ritz vectors}. The first basis
// vector is kept verbatim so the rank-one bias stays attached to it; the
// whole restart happens in coefficient space (no operator calls).
void thick_restart(SubspaceBasis& basis, double gamma, int keep) {
    RitzSolution ritz = solve_projected(basis, gamma);
    const long k = basis.size();
    std::vector<Vector> cols;
    Vector anchor = Vector::Zero(k);
    anchor(0) = cx(1, 0);
    cols.push_back(anchor);
    for (long j = 0; j < k && static_cast<long>(cols.size()) < keep + 1; ++j) {
        Vector c = ritz.all_vectors.col(j);
        for (const Vector& b : cols) c -= b * b.dot(c);
        const double n = c.norm();
        if (n > 1e-10) cols.push_back(c / n);
    }
    const long kk = static_cast<long>(cols.size());
    Matrix cmat(k, kk);
    for (long j = 0; j < kk; ++j) cmat.col(j) = cols[static_cast<std::size_t>(j)];

    SubspaceBasis fresh;
    for (long j = 0; j < kk; ++j) {
        fresh.vectors.push_back(basis.assemble(cmat.col(j)));
        fresh.applied.push_back(basis.assemble_applied(cmat.col(j)));
    }
    fresh.h = cmat.adjoint() * basis.h * cmat;
    fresh.h = 0.5 * (fresh.h + fresh.h.adjoint()).eval();
    basis = std::move(fresh);
}

} // namespace

bool residual_expand(SubspaceBasis& basis, const LinearOperator& op, const SolveOptions& opts) {
    RitzSolution ritz = solve_projected(basis, opts.gamma);
    Vector r = basis.assemble_applied(ritz.coeffs) - ritz.value * basis.assemble(ritz.coeffs);
    if (opts.gamma != 0.0) r -= opts.gamma * ritz.coeffs(0) * basis.vectors.front();
    if (r.norm() <= 1e-15 * std::max(1.0, std::abs(ritz.value))) return false;
    Vector cand = opts.preconditioner ? precondition_apply(*opts.preconditioner, r) : r;
    if (opts.transform) cand = opts.transform(cand);
    return basis.append(op, std::move(cand));
}

SolveResult solve_lowest(const LinearOperator& op, const std::vector<Vector>& seeds,
                         const SolveOptions& opts) {
    if (seeds.empty()) throw PreconditionError("solve_lowest: at least one seed required");
    SubspaceBasis basis;
    basis.h = Matrix(0, 0);
    for (const Vector& s : seeds) {
        if (s.size() != op.dim) throw DimensionError("solve_lowest: seed dimension mismatch");
        Vector cand = opts.transform ? opts.transform(s) : s;
        basis.append(op, std::move(cand));
        if (basis.size() >= std::min<long>(opts.max_basis, op.dim)) break;
    }
    if (basis.size() == 0) throw DegenerateInputError("solve_lowest: all seeds vanished");

    SolveResult out;
    int applications = static_cast<int>(basis.size());
    const long hard_cap = std::min<long>(opts.max_basis, op.dim);
    const long seed_count = basis.size();
    int closed_probes = 0;
    std::vector<long> stall_order;

    RitzSolution ritz = solve_projected(basis, opts.gamma);
    while (true) {
        Vector v = basis.assemble(ritz.coeffs);
        Vector hv = basis.assemble_applied(ritz.coeffs);
        Vector r = hv - ritz.value * v;
        if (opts.gamma != 0.0) r -= opts.gamma * ritz.coeffs(0) * basis.vectors.front();
        const double scale = std::max(1.0, std::abs(ritz.value));
        if (r.norm() <= opts.residual_tol * scale) {
            // A vanishing residual with no expansions beyond the seeds can
            // mean the seeds span an invariant subspace (degenerate or
            // diagonal operators); probe a few deterministic directions
            // before accepting.
            if (basis.size() <= seed_count + closed_probes &&
                closed_probes < opts.closed_subspace_probes &&
                basis.size() < op.dim && applications < opts.max_iterations) {
                if (op.diagonal && stall_order.empty()) {
                    RealVector diag = op.diagonal();
                    stall_order.resize(static_cast<std::size_t>(op.dim));
                    std::iota(stall_order.begin(), stall_order.end(), 0L);
                    std::sort(stall_order.begin(), stall_order.end(),
                              [&diag](long a, long b) { return diag(a) < diag(b); });
                }
                bool appended = false;
                for (int attempt = 0; attempt < 8 && !appended; ++attempt) {
                    const int pick = closed_probes * 8 + attempt;
                    Vector filler;
                    if (!stall_order.empty() && pick < static_cast<int>(stall_order.size())) {
                        // lowest-diagonal coordinates first; exact escape on
                        // diagonal operators, Davidson-flavored otherwise
                        filler = Vector::Zero(op.dim);
                        filler(stall_order[static_cast<std::size_t>(pick)]) = 1.0;
                    } else {
                        // dense pseudo-random probe overlapping every sector
                        std::uint64_t state = 0x9e3779b97f4a7c15ULL * (pick + 1);
                        filler = Vector(op.dim);
                        for (long i = 0; i < op.dim; ++i) {
                            state ^= state << 13;
                            state ^= state >> 7;
                            state ^= state << 17;
                            filler(i) =
                                cx(static_cast<double>(state >> 11) / double(1ULL << 53) - 0.5, 0.0);
                        }
                    }
                    if (opts.transform) filler = opts.transform(filler);
                    appended = basis.append(op, std::move(filler));
                }
                ++closed_probes;
                if (appended) {
                    ++applications;
                    ritz = solve_projected(basis, opts.gamma);
                    continue;
                }
            }
            out.converged = true;
            break;
        }
        if (applications >= opts.max_iterations) break;
        if (basis.size() >= hard_cap) {
            if (basis.size() >= op.dim) {
                out.converged = true; // exact on the full space
                break;
            }
            thick_restart(basis, opts.gamma, opts.thick_restart_keep);
        }
        Vector cand = opts.preconditioner ? precondition_apply(*opts.preconditioner, r) : r;
        if (opts.transform) cand = opts.transform(cand);
        if (!basis.append(op, std::move(cand))) {
            // preconditioned direction collapsed onto the basis; fall back
            // to the raw residual before giving up
            if (!basis.append(op, r)) break;
        }
        ++applications;
        ritz = solve_projected(basis, opts.gamma);
    }

    ritz = solve_projected(basis, opts.gamma);
    out.e0 = ritz.value;
    out.coeffs = ritz.coeffs;
    out.v0 = basis.assemble(ritz.coeffs);
    out.iterations = applications;
    for (int j = 1; j <= opts.extra_ritz && j < basis.size(); ++j) {
        Vector c = ritz.all_vectors.col(j);
        out.extra.emplace_back(ritz.all_values(j), basis.assemble(c));
    }
    out.basis = std::move(basis);
    return out;
}

Vector bias_candidate_uniform(const Vector& candidate, const Tensor& q_left_prev,
                              const Tensor& q_right_prev) {
    const long chi_l = q_left_prev.extent(0);
    const long chi_r = q_right_prev.extent(1);
    const long d = q_left_prev.extent(2);
    Tensor a = tensor_view(candidate, chi_l, chi_r, d);
    // lbar_R(a,b) = sum_{s,g} A(a,g,s) conj(Q_R)(b,g,s)
    Tensor lbar_r = contract(a, conj(q_right_prev), {{1, 1}, {2, 2}});
    // lbar_L(a,b) = sum_{s,g} conj(Q_L)(g,a,s) A(g,b,s)
    Tensor lbar_l = contract(conj(q_left_prev), a, {{0, 0}, {2, 2}});
    // Q_L . lbar_R : (l, s) x (b, r) -> (l, r, s)
    Tensor t1 = contract(q_left_prev, lbar_r, {{1, 0}}).permuted({0, 2, 1});
    // lbar_L . Q_R : (l, b) x (b, r, s) -> (l, r, s)
    Tensor t2 = contract(lbar_l, q_right_prev, {{1, 0}});
    Tensor mixed = a;
    mixed *= cx(0.5, 0.0);
    mixed.axpy(cx(0.25, 0.0), t1);
    mixed.axpy(cx(0.25, 0.0), t2);
    return vector_view(mixed);
}

Vector mirror_symmetrize_vec(const Vector& candidate, long chi, long d) {
    Tensor a = tensor_view(candidate, chi, chi, d);
    Tensor swapped = a.permuted({1, 0, 2});
    a += swapped;
    a *= cx(0.5, 0.0);
    return vector_view(a);
}

} // namespace imps
