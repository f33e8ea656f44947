#include "imps/analysis.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

namespace imps {

namespace {

Matrix slot_to_matrix(const Tensor& q, long s, long rows, long cols) {
    Matrix m(rows, cols);
    for (long i = 0; i < rows; ++i)
        for (long j = 0; j < cols; ++j) m(i, j) = q.at({i, j, s});
    return m;
}

// density matrix flowing right out of the center: rho(b,b') = sum_a c(a,b) conj(c)(a,b')
Matrix center_density(const Matrix& center) {
    return center.transpose() * center.conjugate();
}

// one site to the right: X'(a,a') = sum X(b,b') Q(b,a,s) conj(Q)(b',a',s') op(s',s)
Matrix transfer_step(const Matrix& x, const Tensor& q_right, const Matrix& op) {
    const long chi_in = q_right.extent(0), chi_out = q_right.extent(1), d = q_right.extent(2);
    Matrix out = Matrix::Zero(chi_out, chi_out);
    for (long sp = 0; sp < d; ++sp)
        for (long s = 0; s < d; ++s) {
            const cx w = op(sp, s);
            if (w == cx(0, 0)) continue;
            Matrix qs = slot_to_matrix(q_right, s, chi_in, chi_out);
            Matrix qsp = slot_to_matrix(q_right, sp, chi_in, chi_out);
            out += w * (qs.transpose() * x * qsp.conjugate());
        }
    return out;
}

Matrix identity_step(const Matrix& x, const Tensor& q_right) {
    return transfer_step(x, q_right, Matrix::Identity(q_right.extent(2), q_right.extent(2)));
}

} // namespace

UniformState make_uniform_state(const Tensor& a_converged) {
    UniformState s;
    Tensor a = a_converged;
    const double n = a.norm();
    if (n == 0.0) throw DegenerateInputError("make_uniform_state: zero tensor");
    a *= cx(1.0 / n, 0.0);
    SiteDecomposition left = decompose_site(a, Side::Left);
    SiteDecomposition right = decompose_site(a, Side::Right);
    s.q_left = std::move(left.q);
    s.q_right = std::move(right.q);
    s.lambda_left = std::move(left.lambda);
    s.lambda_right = std::move(right.lambda);
    s.lambda_asymmetry = (s.lambda_left - s.lambda_right).norm() / s.lambda_left.norm();
    s.lambda = s.lambda_right;
    return s;
}

Matrix transfer_matrix(const Tensor& q) {
    const long chi_in = q.extent(0), chi_out = q.extent(1), d = q.extent(2);
    Matrix t = Matrix::Zero(chi_in * chi_in, chi_out * chi_out);
    for (long s = 0; s < d; ++s) {
        Matrix qs = slot_to_matrix(q, s, chi_in, chi_out);
        for (long a = 0; a < chi_in; ++a)
            for (long ap = 0; ap < chi_in; ++ap)
                for (long b = 0; b < chi_out; ++b)
                    for (long bp = 0; bp < chi_out; ++bp)
                        t(a * chi_in + ap, b * chi_out + bp) += qs(a, b) * std::conj(qs(ap, bp));
    }
    return t;
}

int detect_periodicity(const Matrix& transfer, double tol) {
    Eigen::ComplexEigenSolver<Matrix> es(transfer, false);
    if (es.info() != Eigen::Success) throw NumericalError("detect_periodicity: eigensolver failed");
    // unimodular eigenvalues carry the period; redundant (non-injective)
    // representations repeat each phase, so count distinct phases
    std::vector<double> phases;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
        if (std::abs(1.0 - std::abs(es.eigenvalues()(i))) < tol)
            phases.push_back(std::arg(es.eigenvalues()(i)));
    std::sort(phases.begin(), phases.end());
    int q = 0;
    const double phase_tol = 1e-4;
    for (std::size_t i = 0; i < phases.size(); ++i)
        if (i == 0 || phases[i] - phases[i - 1] > phase_tol) ++q;
    if (q > 1 && phases.back() - phases.front() > 2.0 * M_PI - phase_tol) --q; // wrap at pi
    return q;
}

cx expectation_local(const UniformState& state, const Matrix& op) {
    if (op.rows() != state.phys_dim() || op.cols() != state.phys_dim())
        throw DimensionError("expectation_local: operator dimension mismatch");
    Matrix rho = center_density(state.lambda);
    rho /= rho.trace();
    return transfer_step(rho, state.q_right, op).trace();
}

std::vector<double> density_profile(const UniformState& state, const Matrix& op, int period,
                                    const Matrix* center_override) {
    Matrix center = center_override ? *center_override : state.lambda;
    Matrix rho = center_density(center);
    rho /= rho.trace();
    std::vector<double> profile;
    for (int site = 0; site < period; ++site) {
        profile.push_back(transfer_step(rho, state.q_right, op).trace().real());
        rho = identity_step(rho, state.q_right);
    }
    return profile;
}

CorrelationSeries correlation(const UniformState& state, const Matrix& op1, const Matrix& op2,
                              long r_max, bool connected, const std::string& op_names) {
    CorrelationSeries series;
    series.connected = connected;
    series.op_names = op_names;
    Matrix rho = center_density(state.lambda);
    rho /= rho.trace();
    const double mean1 = transfer_step(rho, state.q_right, op1).trace().real();
    Matrix x = transfer_step(rho, state.q_right, op1);
    Matrix rho_plain = identity_step(rho, state.q_right);
    for (long r = 1; r <= r_max; ++r) {
        const double o2 = transfer_step(x, state.q_right, op2).trace().real();
        const double mean2 = transfer_step(rho_plain, state.q_right, op2).trace().real();
        series.r.push_back(r);
        series.values.push_back(connected ? o2 - mean1 * mean2 : o2);
        x = identity_step(x, state.q_right);
        rho_plain = identity_step(rho_plain, state.q_right);
    }
    return series;
}

double entanglement_entropy_bits(const Matrix& lambda) {
    Factorization f = svd(lambda);
    double total = 0;
    for (Eigen::Index i = 0; i < f.d.size(); ++i) total += f.d(i) * f.d(i);
    if (total <= 0) throw DegenerateInputError("entanglement_entropy_bits: zero matrix");
    double s = 0;
    for (Eigen::Index i = 0; i < f.d.size(); ++i) {
        const double p = f.d(i) * f.d(i) / total;
        if (p > 0) s -= p * std::log2(p);
    }
    return s;
}

double energy_per_site(const UniformState& state, const HamiltonianTerms& terms) {
    Matrix rho = center_density(state.lambda);
    rho /= rho.trace();
    double e = transfer_step(rho, state.q_right, terms.local).trace().real();
    for (const PairInteraction& pair : terms.pairs) {
        const long reach = pair.max_range(1e-16);
        Matrix x = transfer_step(rho, state.q_right, pair.op_a);
        for (long r = 1; r <= reach; ++r) {
            const double c = pair.coeff(r);
            if (c != 0.0)
                e += c * transfer_step(x, state.q_right, pair.op_b).trace().real();
            if (r < reach) x = identity_step(x, state.q_right);
        }
    }
    return e;
}

LuttingerFit fit_luttinger(const CorrelationSeries& nn, const CorrelationSeries& cc, double rho0,
                           long r_lo, long r_hi) {
    LuttingerFit fit;

    // cc: log|cc(r)| = log const2 - (1/2K) log r
    {
        std::vector<double> xs, ys;
        for (std::size_t i = 0; i < cc.r.size(); ++i) {
            const long r = cc.r[i];
            if (r < r_lo || r > r_hi) continue;
            const double v = cc.values[i];
            if (v <= 0) continue;
            xs.push_back(std::log(static_cast<double>(r)));
            ys.push_back(std::log(v));
        }
        if (xs.size() < 3) throw FitError("fit_luttinger: too few usable hopping correlations");
        // least squares line
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            sx += xs[i];
            sy += ys[i];
            sxx += xs[i] * xs[i];
            sxy += xs[i] * ys[i];
        }
        const double m = static_cast<double>(xs.size());
        const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        const double inter = (sy - slope * sx) / m;
        fit.k_cc = -1.0 / (2.0 * slope);
        fit.const2 = std::exp(inter);
        double res = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double pred = inter + slope * xs[i];
            res += (ys[i] - pred) * (ys[i] - pred);
        }
        fit.residual_cc = std::sqrt(res / m);
    }

    // nn: (nn(r) - nn_inf)/cos(2 pi rho0 r) = const1 r^(-2K); the saturation
    // value is pinned to rho0^2 so const1 and K stay the only free parameters
    {
        const double nn_inf = rho0 * rho0;
        std::vector<double> xs, ys;
        for (std::size_t i = 0; i < nn.r.size(); ++i) {
            const long r = nn.r[i];
            if (r < r_lo || r > r_hi) continue;
            const double phase = std::cos(2.0 * M_PI * rho0 * static_cast<double>(r));
            if (std::abs(phase) < 0.1) continue; // suppressed branch
            const double t = (nn.values[i] - nn_inf) / phase;
            if (t <= 0) continue;
            xs.push_back(std::log(static_cast<double>(r)));
            ys.push_back(std::log(t));
        }
        if (xs.size() < 3) throw FitError("fit_luttinger: too few usable density correlations");
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            sx += xs[i];
            sy += ys[i];
            sxx += xs[i] * xs[i];
            sxy += xs[i] * ys[i];
        }
        const double m = static_cast<double>(xs.size());
        const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        const double inter = (sy - slope * sx) / m;
        fit.k_nn = -slope / 2.0;
        fit.const1 = std::exp(inter);
        double res = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double pred = inter + slope * xs[i];
            res += (ys[i] - pred) * (ys[i] - pred);
        }
        fit.residual_nn = std::sqrt(res / m);
    }
    return fit;
}

GroundStateSelection select_ground_state(const UniformState& state, const Matrix& op, double tol) {
    const long chi = state.chi();
    const long d = state.phys_dim();
    if (op.rows() != d || op.cols() != d)
        throw DimensionError("select_ground_state: operator dimension mismatch");

    // mixed pull-through map S: g -> sum_s Q_L(s)^dag g Q_R(s), as a dense
    // matrix on vec(g) (column-major)
    Matrix s_map = Matrix::Zero(chi * chi, chi * chi);
    for (long s = 0; s < d; ++s) {
        Matrix ql = slot_to_matrix(state.q_left, s, chi, chi);
        Matrix qr = slot_to_matrix(state.q_right, s, chi, chi);
        Matrix a = ql.adjoint();
        Matrix bt = qr.transpose();
        // vec(A g B) = kron(B^T, A) vec(g)
        for (long i = 0; i < chi; ++i)
            for (long j = 0; j < chi; ++j)
                s_map.block(i * chi, j * chi, chi, chi) += bt(i, j) * a;
    }
    Eigen::ComplexEigenSolver<Matrix> es(s_map, true);
    if (es.info() != Eigen::Success) throw NumericalError("select_ground_state: eigensolver failed");

    std::vector<Matrix> span;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        if (std::abs(1.0 - std::abs(es.eigenvalues()(i))) >= tol) continue;
        Matrix g(chi, chi);
        for (long col = 0; col < chi; ++col) g.col(col) = es.eigenvectors().col(i).segment(col * chi, chi);
        // orthonormalize within the span (Frobenius inner product)
        for (const Matrix& prev : span) {
            const cx ov = (prev.adjoint() * g).trace();
            g -= ov * prev;
        }
        const double n = g.norm();
        if (n > 1e-8) span.push_back(g / n);
    }
    if (span.empty()) throw NumericalError("select_ground_state: no unimodular pull-through mode");

    const int q = static_cast<int>(span.size());
    Matrix form(q, q);
    for (int j = 0; j < q; ++j)
        for (int k = 0; k < q; ++k) {
            // <state(G_j)| op_1 |state(G_k)>; flanks contract to identity
            Matrix rho = span[static_cast<std::size_t>(k)].transpose() *
                         span[static_cast<std::size_t>(j)].conjugate();
            form(j, k) = transfer_step(rho, state.q_right, op).trace();
        }
    form = 0.5 * (form + form.adjoint()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> ef(form);

    GroundStateSelection out;
    out.manifold_dim = q;
    const double spread = ef.eigenvalues().maxCoeff() - ef.eigenvalues().minCoeff();
    out.degenerate = spread < 1e-10 * std::max(1.0, std::abs(ef.eigenvalues().maxCoeff()));
    out.objective = ef.eigenvalues().maxCoeff();
    Eigen::Index top;
    ef.eigenvalues().maxCoeff(&top);
    Matrix center = Matrix::Zero(chi, chi);
    for (int j = 0; j < q; ++j) center += ef.eigenvectors()(j, top) * span[static_cast<std::size_t>(j)];
    out.center = center / center.norm();
    return out;
}

} // namespace imps
