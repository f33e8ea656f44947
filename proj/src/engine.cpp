#include "imps/engine.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <sstream>

namespace imps {

namespace {

Vector to_vector(const Tensor& t) {
    Vector v(t.size());
    for (long i = 0; i < t.size(); ++i) v(i) = t[i];
    return v;
}

Tensor to_site_tensor(const Vector& v, long chi_l, long chi_r, long d) {
    std::vector<cx> data(v.data(), v.data() + v.size());
    return Tensor({chi_l, chi_r, d}, std::move(data));
}

double default_c_policy(double deviation) {
    // c = 1 - max(0.1, 0.7 + 0.1 log10(deviation)); deviation <= 2 keeps
    // c in (0.269, 0.9]
    const double dev = std::max(deviation, 1e-300);
    return 1.0 - std::max(0.1, 0.7 + 0.1 * std::log10(dev));
}

} // namespace

double mixing_weight(const ConvergenceState& state, double deviation) {
    if (state.avg_updates == 0 || deviation <= 0.0) return 1.0;
    return std::min(1.0, state.avg_deviation / deviation);
}

void update_deviation_average(ConvergenceState& state, double deviation) {
    const int n = state.avg_updates + 1;
    if (n == 1) {
        state.avg_deviation = deviation;
    } else {
        const double n_prev = 1.0 - std::pow(state.ema_keep, state.avg_updates);
        const double n_now = 1.0 - std::pow(state.ema_keep, n);
        const double plain =
            (state.ema_keep * n_prev * state.avg_deviation + state.ema_mix * deviation) / n_now;
        state.avg_deviation = std::min(plain, state.ema_cap * state.avg_deviation);
    }
    state.avg_updates = n;
}

void update_reference(ConvergenceState& state, const Tensor& a, double xi) {
    if (state.reference.empty()) {
        state.reference = a;
    } else {
        state.reference.axpy(cx(xi, 0.0), a);
    }
    const double n = state.reference.norm();
    if (n == 0.0) throw DegenerateInputError("update_reference: vanishing reference");
    state.reference *= cx(1.0 / n, 0.0);
}

AccumulatedEnvironments smo_accumulate(const Tensor& l_old, const Tensor& l_new,
                                       const Tensor& r_old, const Tensor& r_new,
                                       double deviation, ConvergenceState& state) {
    if (l_old.shape() != l_new.shape() || r_old.shape() != r_new.shape())
        throw DimensionError("smo_accumulate: environment shape mismatch");
    AccumulatedEnvironments out;
    out.xi = mixing_weight(state, deviation);
    out.left = l_old;
    out.left.axpy(cx(out.xi, 0.0), l_new);
    out.right = r_old;
    out.right.axpy(cx(out.xi, 0.0), r_new);
    state.last_xi = out.xi;
    update_deviation_average(state, deviation);
    return out;
}

Tensor EffectiveOperator::apply(const Tensor& a) const {
    // L(a',m,a) A(a,b,s) -> (a',m,b,s)
    Tensor t1 = contract(*env_left, a, {{2, 0}});
    // (a',m,b,s) H(m,n,s',s) -> (a',b,n,s')
    Tensor t2 = contract(t1, mpo->bulk, {{1, 0}, {3, 3}});
    // (a',b,n,s') R(b',n,b) -> (a',s',b')
    Tensor t3 = contract(t2, *env_right, {{1, 2}, {2, 1}});
    return t3.permuted({0, 2, 1});
}

RealVector EffectiveOperator::diagonal() const {
    const long m = mpo->bond_dim();
    RealVector diag(dim());
    // diag[(a,b,s)] = sum_{mu nu} L(a,mu,a) H(mu,nu,s,s) R(b,nu,b)
    Matrix hss(m, m);
    for (long s = 0; s < d; ++s) {
        for (long mu = 0; mu < m; ++mu)
            for (long nu = 0; nu < m; ++nu) hss(mu, nu) = mpo->bulk.at({mu, nu, s, s});
        for (long a = 0; a < chi_l; ++a) {
            Vector la(m);
            for (long mu = 0; mu < m; ++mu) la(mu) = env_left->at({a, mu, a});
            Vector mid = hss.transpose() * la;
            for (long b = 0; b < chi_r; ++b) {
                cx sum(0, 0);
                for (long nu = 0; nu < m; ++nu) sum += mid(nu) * env_right->at({b, nu, b});
                diag((a * chi_r + b) * d + s) = sum.real();
            }
        }
    }
    return diag;
}

cx EffectiveOperator::trace() const {
    const long m = mpo->bond_dim();
    Vector tl = Vector::Zero(m), tr = Vector::Zero(m);
    for (long mu = 0; mu < m; ++mu) {
        for (long a = 0; a < chi_l; ++a) tl(mu) += env_left->at({a, mu, a});
        for (long b = 0; b < chi_r; ++b) tr(mu) += env_right->at({b, mu, b});
    }
    Matrix hd = Matrix::Zero(m, m);
    for (long mu = 0; mu < m; ++mu)
        for (long nu = 0; nu < m; ++nu)
            for (long s = 0; s < d; ++s) hd(mu, nu) += mpo->bulk.at({mu, nu, s, s});
    return tl.transpose() * hd * tr;
}

LinearOperator EffectiveOperator::linear_operator() const {
    LinearOperator op;
    op.dim = dim();
    const EffectiveOperator* self = this;
    op.apply = [self](const Vector& in, Vector& out) {
        Tensor a = to_site_tensor(in, self->chi_l, self->chi_r, self->d);
        Tensor y = self->apply(a);
        for (long i = 0; i < y.size(); ++i) out(i) = y[i];
    };
    op.trace = [self]() { return self->trace(); };
    op.diagonal = [self]() { return self->diagonal(); };
    return op;
}

EffectiveOperator assemble_effective(const Tensor& env_left, const Mpo& mpo,
                                     const Tensor& env_right) {
    if (env_left.rank() != 3 || env_right.rank() != 3)
        throw DimensionError("assemble_effective: environments must be rank 3");
    if (env_left.extent(1) != mpo.bond_dim() || env_right.extent(1) != mpo.bond_dim())
        throw DimensionError("assemble_effective: operator bond mismatch");
    if (env_left.extent(0) != env_left.extent(2) || env_right.extent(0) != env_right.extent(2))
        throw DimensionError("assemble_effective: environments must be square in the state bonds");
    EffectiveOperator op;
    op.env_left = &env_left;
    op.env_right = &env_right;
    op.mpo = &mpo;
    op.chi_l = env_left.extent(2);
    op.chi_r = env_right.extent(2);
    op.d = mpo.phys_dim();
    return op;
}

Tensor absorb_left(const Tensor& env_left, const Tensor& q_left, const Mpo& mpo) {
    // L(a',m,a) Q(a,b,s) -> (a',m,b,s)
    Tensor x1 = contract(env_left, q_left, {{2, 0}});
    // (a',m,b,s) H(m,n,s',s) -> (a',b,n,s')
    Tensor x2 = contract(x1, mpo.bulk, {{1, 0}, {3, 3}});
    // conj(Q)(a',b',s') (a',b,n,s') -> (b',b,n)
    Tensor x3 = contract(conj(q_left), x2, {{0, 0}, {2, 3}});
    return x3.permuted({0, 2, 1});
}

Tensor absorb_right(const Tensor& env_right, const Tensor& q_right, const Mpo& mpo) {
    // Q(b,a,s) R(a',n,a) -> (b,s,a',n)
    Tensor x1 = contract(q_right, env_right, {{1, 2}});
    // (b,s,a',n) H(m,n,s',s) -> (b,a',m,s')
    Tensor x2 = contract(x1, mpo.bulk, {{1, 3}, {3, 1}});
    // conj(Q)(b',a',s') (b,a',m,s') -> (b',b,m)
    Tensor x3 = contract(conj(q_right), x2, {{1, 1}, {2, 3}});
    return x3.permuted({0, 2, 1});
}

std::pair<Tensor, Tensor> absorb_both(const Tensor& env_left, const Tensor& env_right,
                                      const Tensor& a, const Mpo& mpo) {
    SiteDecomposition left = decompose_site(a, Side::Left);
    SiteDecomposition right = decompose_site(a, Side::Right);
    return {absorb_left(env_left, left.q, mpo), absorb_right(env_right, right.q, mpo)};
}

cx closed_energy(const Tensor& env_left, const Tensor& env_right, const Matrix& lambda) {
    Tensor lam = from_matrix(lambda);
    // L(a',m,a) lam(a,b) -> (a',m,b)
    Tensor x = contract(env_left, lam, {{2, 0}});
    // conj(lam)(a',b') (a',m,b) -> (b',m,b)
    Tensor y = contract(conj(lam), x, {{0, 0}});
    Tensor s = contract(y, env_right, {{0, 0}, {1, 1}, {2, 2}});
    return s[0];
}

namespace {

double exact_mixing_amplitude(double h_rr, double h_bb, double h_rb, double gamma) {
    // lowest eigenvector of [[h_rr - gamma, h_rb], [h_rb, h_bb]]
    const double a = h_rr - gamma, c = h_bb, b = h_rb;
    const double mu = 0.5 * (a + c) - std::sqrt(0.25 * (a - c) * (a - c) + b * b);
    const double vx = b, vy = mu - a;
    const double n = std::sqrt(vx * vx + vy * vy);
    if (n == 0.0) return 0.0;
    return std::abs(vy) / n;
}

} // namespace

double compute_gain_gamma(double h_rr, double h_bb, double h_rb, double eps0, double c,
                          double delta_max, double gamma_floor) {
    if (!(c > 0.0) || c > 1.0) throw PreconditionError("compute_gain_gamma: c must be in (0,1]");
    if (eps0 <= 0.0 || h_rb == 0.0) return gamma_floor; // degenerate coupling
    const double target = std::min(c * eps0, delta_max);
    if (target >= eps0) return gamma_floor;
    const double d_gap = h_bb - h_rr;

    if (eps0 <= 0.01 && d_gap > 0.0) {
        const double gamma_c = (1.0 - c) / c * d_gap;
        const double gamma_dmax = -d_gap - h_rb / delta_max;
        return std::max({gamma_c, gamma_dmax, gamma_floor});
    }
    // exact branch: bisect on the 2-level eigenvector amplitude
    double hi = std::max({1.0, std::abs(d_gap), 2.0 * std::abs(h_rb) / std::max(target, 1e-12)});
    int guard = 0;
    while (exact_mixing_amplitude(h_rr, h_bb, h_rb, hi) > target && guard++ < 200) hi *= 2.0;
    double lo = 0.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (exact_mixing_amplitude(h_rr, h_bb, h_rb, mid) > target)
            lo = mid;
        else
            hi = mid;
    }
    return std::max(hi, gamma_floor);
}

double compute_gain_gamma(const SubspaceBasis& basis, const Vector& coeffs0, double c,
                          double delta_max, double gamma_floor) {
    const long k = basis.size();
    if (k < 2) return gamma_floor;
    Vector a = coeffs0;
    const cx a1 = a(0);
    if (std::abs(a1) > 0) a *= std::conj(a1) / std::abs(a1); // reference weight real >= 0
    const double ar = a(0).real();
    Vector b = a;
    b(0) = 0;
    const double eps0 = b.norm();
    if (eps0 < 1e-14) return gamma_floor;
    b /= eps0;
    double h_rb = (basis.h.row(0) * b)(0).real();
    if (h_rb > 0) {
        b = -b;
        h_rb = -h_rb;
    }
    const double h_rr = basis.h(0, 0).real();
    const double h_bb = (b.adjoint() * basis.h * b)(0).real();
    (void)ar;
    return compute_gain_gamma(h_rr, h_bb, h_rb, eps0, c, delta_max, gamma_floor);
}

void subtract_energy(Mpo& mpo, double e) {
    const long d = mpo.phys_dim();
    add_local_term(mpo, -e * Matrix::Identity(d, d));
}

Tensor mirror_symmetrize(const Tensor& a) {
    if (a.rank() != 3 || a.extent(0) != a.extent(1))
        throw DimensionError("mirror_symmetrize: expected (chi, chi, d) tensor");
    Tensor sym = a;
    sym += a.permuted({1, 0, 2});
    sym *= cx(0.5, 0.0);
    const double n = sym.norm();
    if (n < 1e-14 * std::max(1.0, a.norm()))
        throw DegenerateInputError("mirror_symmetrize: antisymmetric input");
    sym *= cx(1.0 / n, 0.0);
    return sym;
}

namespace {

Tensor isometry_tensor(const Eigen::MatrixXd& u) {
    Tensor t({static_cast<long>(u.rows()), static_cast<long>(u.cols())});
    for (long i = 0; i < u.rows(); ++i)
        for (long j = 0; j < u.cols(); ++j) t[i * u.cols() + j] = cx(u(i, j), 0.0);
    return t;
}

void check_isometry(const Eigen::MatrixXd& u) {
    Eigen::MatrixXd gram = u * u.transpose();
    if ((gram - Eigen::MatrixXd::Identity(u.rows(), u.rows())).norm() > 1e-10)
        throw PreconditionError("bond growth: u u^T must be the identity");
}

} // namespace

Tensor embed_environment(const Tensor& env, const Eigen::MatrixXd& u) {
    check_isometry(u);
    Tensor ut = isometry_tensor(u);
    // env(a',m,a) u(a',b') u(a,b) -> (b',m,b)
    Tensor x = contract(env, ut, {{0, 0}});  // (m,a,b')
    Tensor y = contract(x, ut, {{1, 0}});    // (m,b',b)
    return y.permuted({1, 0, 2});
}

Tensor embed_site(const Tensor& a, const Eigen::MatrixXd& u) {
    check_isometry(u);
    Tensor ut = isometry_tensor(u);
    Tensor x = contract(a, ut, {{0, 0}});    // (r,s,bl)
    Tensor y = contract(x, ut, {{0, 0}});    // (s,bl,br)
    return y.permuted({1, 2, 0});
}

Tensor krylov_insert(const Tensor& env, const std::function<Tensor(const Tensor&)>& insert,
                     long p, int k) {
    if (k < 2) throw PreconditionError("krylov_insert: need at least 2 basis vectors");
    const double base_norm = env.norm();
    if (base_norm == 0.0) throw DegenerateInputError("krylov_insert: zero environment");

    std::vector<Tensor> basis;
    Tensor v0 = env;
    v0 *= cx(1.0 / base_norm, 0.0);
    basis.push_back(std::move(v0));

    // Arnoldi on the insertion map; j(i, col) = <basis_i | insert(basis_col)>
    Matrix jmat = Matrix::Zero(k, k);
    int built = 1;
    for (int col = 0; col < k; ++col) {
        if (col >= built) break;
        Tensor w = insert(basis[static_cast<std::size_t>(col)]);
        if (!all_finite(w) || w.norm() > 1e100)
            throw NumericalError("krylov_insert: insertion map diverges (energy subtraction inactive?)");
        for (int i = 0; i < built; ++i) {
            const cx h = inner(basis[static_cast<std::size_t>(i)], w);
            jmat(i, col) = h;
            w.axpy(-h, basis[static_cast<std::size_t>(i)]);
        }
        const double rnorm = w.norm();
        if (built < k && rnorm > 1e-13) {
            jmat(built, col) = rnorm;
            w *= cx(1.0 / rnorm, 0.0);
            basis.push_back(std::move(w));
            ++built;
        }
    }
    jmat.conservativeResize(built, built);

    // j^p by binary powering with overflow detection
    Matrix power = Matrix::Identity(built, built);
    Matrix base = jmat;
    long e = p;
    while (e > 0) {
        if (e & 1) power = power * base;
        if (power.cwiseAbs().maxCoeff() > 1e100 || !power.allFinite())
            throw NumericalError("krylov_insert: power overflow (energy subtraction inactive?)");
        e >>= 1;
        if (e > 0) {
            base = base * base;
            if (base.cwiseAbs().maxCoeff() > 1e100 || !base.allFinite())
                throw NumericalError("krylov_insert: power overflow (energy subtraction inactive?)");
        }
    }

    Vector coeffs = power.col(0) * base_norm; // env = ||env|| basis_0
    Tensor out(env.shape());
    for (int i = 0; i < built; ++i) out.axpy(coeffs(i), basis[static_cast<std::size_t>(i)]);
    return out;
}

InitData initialize(const Mpo& mpo, int n0, long chi_cap, bool prefer_takagi) {
    if (n0 < 2 || n0 % 2 != 0) throw PreconditionError("initialize: site count must be even");
    const long d = mpo.phys_dim();
    double dim_d = std::pow(static_cast<double>(d), n0);
    if (dim_d > 4096.0)
        throw PreconditionError("initialize: dense system too large (d^n0 > 4096)");
    const int k = n0 / 2;
    long dk = 1;
    for (int i = 0; i < k; ++i) dk *= d;

    Matrix hd = mpo_to_dense(mpo, n0);
    hd = 0.5 * (hd + hd.adjoint()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> es(hd);
    if (es.info() != Eigen::Success) throw NumericalError("initialize: dense eigensolver failed");
    Vector psi = es.eigenvectors().col(0);
    const double e0 = es.eigenvalues()(0);

    // fix the global phase on the largest component
    Eigen::Index imax = 0;
    psi.cwiseAbs().maxCoeff(&imax);
    psi *= std::conj(psi(imax)) / std::abs(psi(imax));

    // split; the right multi-index is packed with the last site slowest so
    // mirror symmetry of the state shows up as matrix symmetry
    Matrix m(dk, dk);
    std::vector<long> rev(static_cast<std::size_t>(dk));
    for (long c = 0; c < dk; ++c) {
        long x = c, y = 0;
        for (int i = 0; i < k; ++i) {
            y = y * d + (x % d);
            x /= d;
        }
        rev[static_cast<std::size_t>(c)] = y;
    }
    for (long r = 0; r < dk; ++r)
        for (long c = 0; c < dk; ++c) m(r, rev[static_cast<std::size_t>(c)]) = psi(r * dk + c);

    Matrix u_full, v_full;
    RealVector sing;
    const bool symmetric = (m - m.transpose()).norm() <= 1e-10 * m.norm();
    if (prefer_takagi && symmetric) {
        TakagiResult t = takagi(m);
        u_full = t.u;
        v_full = t.u.conjugate();
        sing = t.d;
    } else {
        Factorization f = svd(m);
        u_full = f.u;
        v_full = f.v;
        sing = f.d;
    }
    const long chi = std::min<long>(chi_cap, dk);
    Matrix u = u_full.leftCols(chi);
    Matrix v = v_full.leftCols(chi);

    InitData out;
    out.chi = chi;
    out.dense_energy = e0;
    out.lambda = Matrix::Zero(chi, chi);
    for (long i = 0; i < chi; ++i) out.lambda(i, i) = sing(i);
    // normalize in case of truncation
    const double w = out.lambda.norm();
    if (w == 0.0) throw DegenerateInputError("initialize: vanishing split weight");
    out.lambda /= w;

    // k-site operator strips
    const long mdim = mpo.bond_dim();
    Tensor strip_l = mpo.left_boundary.permuted({1, 2, 0}); // (s',s,mu)
    for (int site = 2; site <= k; ++site) {
        Tensor t = contract(strip_l, mpo.bulk, {{2, 0}});   // (S',S,n,s',s)
        strip_l = t.permuted({0, 3, 1, 4, 2})
                      .reshaped({strip_l.extent(0) * d, strip_l.extent(1) * d, mdim});
    }
    Tensor strip_r = mpo.right_boundary.permuted({1, 2, 0});
    for (int site = 2; site <= k; ++site) {
        Tensor t = contract(strip_r, mpo.bulk, {{2, 1}});   // (S',S,m,s',s)
        strip_r = t.permuted({0, 3, 1, 4, 2})
                      .reshaped({strip_r.extent(0) * d, strip_r.extent(1) * d, mdim});
    }

    auto sandwich = [&](const Matrix& iso, const Tensor& strip) {
        Tensor iso_t({dk, chi});
        for (long i = 0; i < dk; ++i)
            for (long j = 0; j < chi; ++j) iso_t[i * chi + j] = iso(i, j);
        Tensor x = contract(conj(iso_t), strip, {{0, 0}}); // (chi', S, mu)
        Tensor y = contract(x, iso_t, {{1, 0}});           // (chi', mu, chi)
        return y;
    };
    out.env_left = sandwich(u, strip_l);
    // the right half enters the state conjugated; bra/ket roles swap
    out.env_right = sandwich(v.conjugate(), strip_r);
    out.left_isometry = u;
    out.right_isometry = v;

    out.closed_energy = closed_energy(out.env_left, out.env_right, out.lambda).real();

    // seed: the split weight dressed with a uniform physical direction
    out.seed = Tensor({chi, chi, d});
    const double phys = 1.0 / std::sqrt(static_cast<double>(d));
    for (long a = 0; a < chi; ++a)
        for (long b = 0; b < chi; ++b)
            for (long s = 0; s < d; ++s) out.seed.at({a, b, s}) = out.lambda(a, b) * phys;
    const double sn = out.seed.norm();
    out.seed *= cx(1.0 / sn, 0.0);
    return out;
}

Engine::Engine(Mpo mpo, EngineConfig cfg) : mpo_(std::move(mpo)), cfg_(std::move(cfg)) {
    if (cfg_.chi < 1) throw PreconditionError("engine: chi must be >= 1");
    if (cfg_.conv_tol <= 0 || cfg_.solver_tol <= 0)
        throw PreconditionError("engine: tolerances must be positive");
    if (cfg_.init_sites % 2 != 0) throw PreconditionError("engine: init_sites must be even");
    if (cfg_.chi_start > 0 && cfg_.chi_start < cfg_.chi && cfg_.grow_at_round < 1)
        throw PreconditionError("engine: staged bond dimension needs grow_at_round >= 1");
    if (!cfg_.c_policy) cfg_.c_policy = default_c_policy;
    physical_terms_ = mpo_.terms;
    conv_.gamma_floor = cfg_.gamma_floor;
    conv_.ema_keep = cfg_.ema_keep;
    conv_.ema_mix = cfg_.ema_mix;
    conv_.ema_cap = cfg_.ema_cap;
    rng_.seed(cfg_.seed);

    const long chi_first = cfg_.chi_start > 0 ? std::min(cfg_.chi_start, cfg_.chi) : cfg_.chi;
    InitData init = initialize(mpo_, cfg_.init_sites, chi_first, cfg_.mirror_symmetry);
    setup_from_init(std::move(init));
}

void Engine::setup_from_init(InitData init) {
    env_left_ = std::move(init.env_left);
    env_right_ = std::move(init.env_right);
    site_ = std::move(init.seed);
    init_closed_energy_ = init.closed_energy;
    init_dense_energy_ = init.dense_energy;

    // one-time removal of the finite-system energy from the operator
    // accumulator slots so round eigenvalues start O(1)
    if (cfg_.energy_mode != EnergySubtraction::Off) {
        const double half = 0.5 * init.closed_energy;
        const long m = mpo_.bond_dim();
        for (long a = 0; a < env_left_.extent(0); ++a) env_left_.at({a, 0, a}) -= half;
        for (long b = 0; b < env_right_.extent(0); ++b) env_right_.at({b, m - 1, b}) -= half;
    }

    const long chi_target = cfg_.chi_start > 0 ? cfg_.chi_start : cfg_.chi;
    if (init.chi < chi_target) {
        Eigen::MatrixXd u = Eigen::MatrixXd::Zero(init.chi, chi_target);
        u.leftCols(init.chi).setIdentity();
        env_left_ = embed_environment(env_left_, u);
        env_right_ = embed_environment(env_right_, u);
        site_ = embed_site(site_, u);
        add_growth_noise();
    }
}

// Without this the zero-padded directions form an exact invariant subspace:
// the orthogonal completion of a padded tensor's factors aligns with the
// padding and the optimizer can never leave the embedded block.
void Engine::add_growth_noise() {
    if (cfg_.grow_noise <= 0.0) return;
    std::normal_distribution<double> dist(0.0, cfg_.grow_noise * site_.norm());
    for (long i = 0; i < site_.size(); ++i) site_[i] += cx(dist(rng_), 0.0);
    site_ *= cx(1.0 / site_.norm(), 0.0);
}

std::vector<Vector> Engine::collect_seeds() const {
    std::vector<Vector> seeds;
    if (conv_.reference.empty()) {
        seeds.push_back(to_vector(site_));
        return seeds;
    }
    seeds.push_back(to_vector(conv_.reference));
    if (!recycle_disabled_)
        for (const Tensor& t : reference_history_) seeds.push_back(to_vector(t));
    return seeds;
}

std::function<Vector(const Vector&)> Engine::candidate_transform() const {
    const bool invar = cfg_.enforce_invariance && !q_left_prev_.empty();
    const bool mirror = cfg_.mirror_symmetry;
    if (!invar && !mirror) return nullptr;
    const Tensor* ql = &q_left_prev_;
    const Tensor* qr = &q_right_prev_;
    const long chi = env_left_.extent(2);
    const long d = mpo_.phys_dim();
    return [invar, mirror, ql, qr, chi, d](const Vector& v) {
        Vector out = v;
        if (invar) out = bias_candidate_uniform(out, *ql, *qr);
        if (mirror) out = mirror_symmetrize_vec(out, chi, d);
        return out;
    };
}

void Engine::apply_energy_subtraction(double round_eigenvalue) {
    switch (cfg_.energy_mode) {
        case EnergySubtraction::Off:
            return;
        case EnergySubtraction::Tracking: {
            // keep the accumulated local shift at -(energy per site)
            const double delta = sigma_shift_ + e_site_;
            subtract_energy(mpo_, delta);
            sigma_shift_ -= delta;
            return;
        }
        case EnergySubtraction::Eigenvalue:
            subtract_energy(mpo_, round_eigenvalue);
            sigma_shift_ -= round_eigenvalue;
            return;
    }
}

void Engine::refresh_davidson(const SubspaceBasis& basis, const RitzSolution& unbiased,
                              double trace_h) {
    if (!cfg_.use_preconditioner) return;
    const long keep = std::min<long>(basis.size(), 8);
    if (keep < 2) {
        davidson_.reset();
        return;
    }
    std::vector<double> values;
    std::vector<Vector> vectors, applied;
    for (long j = 0; j < keep; ++j) {
        Vector c = unbiased.all_vectors.col(j);
        values.push_back(unbiased.all_values(j));
        vectors.push_back(basis.assemble(c));
        applied.push_back(basis.assemble_applied(c));
    }
    const double eps_shift = 1e-3 * std::abs(values.front());
    davidson_ = build_davidson(std::move(values), std::move(vectors), std::move(applied), trace_h,
                               env_left_.extent(2) * env_right_.extent(2) * mpo_.phys_dim(),
                               eps_shift);
}

StepReport Engine::step() {
    ++round_;
    StepReport report;
    report.round = round_;

    // scheduled bond growth
    if (cfg_.chi_start > 0 && cfg_.chi_start < cfg_.chi && round_ == cfg_.grow_at_round)
        grow_bond(cfg_.chi);

    EffectiveOperator heff = assemble_effective(env_left_, mpo_, env_right_);
    LinearOperator op = heff.linear_operator();

    SolveOptions opts;
    opts.residual_tol = cfg_.solver_tol;
    opts.max_iterations = cfg_.solver_max_iterations;
    opts.max_basis = cfg_.solver_max_basis;
    opts.thick_restart_keep = cfg_.solver_restart_keep;
    opts.gamma = (cfg_.gain && round_ > 1) ? gamma_prev_ : 0.0;
    opts.transform = candidate_transform();
    if (davidson_ && round_ > 1) opts.preconditioner = &*davidson_;

    SolveResult sol = solve_lowest(op, collect_seeds(), opts);
    report.solver_iterations = sol.iterations;
    report.solver_converged = sol.converged;

    // unbiased quantities for the bias strength and the energy
    RitzSolution unbiased = solve_projected(sol.basis, 0.0);
    double gamma_n = cfg_.gamma_floor;
    if (cfg_.gain && round_ > 1 && conv_.avg_updates > 0) {
        Vector a0 = unbiased.coeffs;
        const cx a1 = a0(0);
        double dev0;
        if (std::abs(a1) > 0) {
            a0 *= std::conj(a1) / std::abs(a1);
            dev0 = std::sqrt(std::max(0.0, 2.0 - 2.0 * a0(0).real()));
        } else {
            dev0 = std::sqrt(2.0);
        }
        const double c = cfg_.c_policy(std::max(dev0, 1e-300));
        const double delta_max = cfg_.delta_max_factor * conv_.avg_deviation;
        gamma_n = compute_gain_gamma(sol.basis, unbiased.coeffs, c, delta_max, cfg_.gamma_floor);
    }
    RitzSolution biased = solve_projected(sol.basis, gamma_n);
    report.gamma = gamma_n;
    gamma_prev_ = gamma_n;

    Vector a_vec = sol.basis.assemble(biased.coeffs);
    a_vec /= a_vec.norm();
    // energy of the unbiased operator in the chosen state
    const double round_energy = (biased.coeffs.adjoint() * sol.basis.h * biased.coeffs)(0).real();
    report.eigenvalue = round_energy;

    Tensor a_new = to_site_tensor(a_vec, heff.chi_l, heff.chi_r, heff.d);
    if (!all_finite(a_new)) throw NumericalError("engine step: non-finite site tensor");

    // phase-align to the reference (round 1: to the seed) so deviations
    // measure shape change, not gauge drift
    const Tensor align_target = conv_.reference.empty() ? site_ : conv_.reference;
    {
        const cx ov = inner(align_target, a_new);
        if (std::abs(ov) > 0) a_new *= std::conj(ov) / std::abs(ov);
    }
    site_ = std::move(a_new);

    Tensor diff = site_;
    diff.axpy(cx(-1, 0), align_target);
    const double deviation = diff.norm();
    report.deviation = deviation;

    SiteDecomposition left = decompose_site(site_, Side::Left);
    SiteDecomposition right = decompose_site(site_, Side::Right);
    lambda_asym_ = (left.lambda - right.lambda).norm() / std::max(left.lambda.norm(), 1e-300);
    report.lambda_asymmetry = lambda_asym_;

    Tensor l_new = absorb_left(env_left_, left.q, mpo_);
    Tensor r_new = absorb_right(env_right_, right.q, mpo_);

    double xi;
    if (!cfg_.superposition || plain_absorb_once_) {
        xi = mixing_weight(conv_, deviation);
        conv_.last_xi = xi;
        update_deviation_average(conv_, deviation);
        env_left_ = std::move(l_new);
        env_right_ = std::move(r_new);
        plain_absorb_once_ = false;
    } else {
        AccumulatedEnvironments acc =
            smo_accumulate(env_left_, l_new, env_right_, r_new, deviation, conv_);
        xi = acc.xi;
        // rescale so the identity transport weight stays at one; a positive
        // overall scale leaves the variational problem unchanged
        const cx scale(1.0 / (1.0 + xi), 0.0);
        acc.left *= scale;
        acc.right *= scale;
        env_left_ = std::move(acc.left);
        env_right_ = std::move(acc.right);
    }
    report.xi = xi;

    // reference update (history feeds the recycled seeds)
    if (!conv_.reference.empty()) {
        reference_history_.push_front(conv_.reference);
        while (static_cast<int>(reference_history_.size()) > std::max(0, cfg_.recycle_seeds - 1))
            reference_history_.pop_back();
    }
    update_reference(conv_, site_, xi);

    // physical energy density of the current uniform state
    UniformState us;
    us.q_left = left.q;
    us.q_right = right.q;
    us.lambda_left = left.lambda;
    us.lambda_right = right.lambda;
    us.lambda = right.lambda;
    us.lambda_asymmetry = lambda_asym_;
    e_site_ = imps::energy_per_site(us, physical_terms_);
    report.energy_site = e_site_;
    conv_.energy_history.push_back(e_site_);

    apply_energy_subtraction(round_energy);
    refresh_davidson(sol.basis, unbiased, heff.trace().real());
    if (unbiased.all_values.size() > 1)
        recycle_disabled_ = (unbiased.all_values(1) - unbiased.all_values(0)) <
                            cfg_.recycle_degeneracy_tol * std::max(1.0, std::abs(unbiased.all_values(0)));

    q_left_prev_ = std::move(left.q);
    q_right_prev_ = std::move(right.q);

    if (round_ > 1 && deviation < cfg_.conv_tol)
        ++consecutive_converged_;
    else
        consecutive_converged_ = 0;
    converged_ = consecutive_converged_ >= cfg_.conv_window;
    report.converged = converged_;
    return report;
}

void Engine::update_run_limits(int max_rounds, double conv_tol, int conv_window) {
    if (max_rounds > 0) cfg_.max_rounds = max_rounds;
    if (conv_tol > 0) cfg_.conv_tol = conv_tol;
    if (conv_window > 0) cfg_.conv_window = conv_window;
}

StepReport Engine::run(const std::function<void(const StepReport&)>& on_step) {
    StepReport last;
    while (round_ < cfg_.max_rounds && !converged_) {
        last = step();
        if (on_step) on_step(last);
    }
    return last;
}

void Engine::grow_bond(long chi_big, const Eigen::MatrixXd* u_opt) {
    const long chi_now = env_left_.extent(2);
    if (chi_big < chi_now) throw PreconditionError("grow_bond: cannot shrink the bond");
    Eigen::MatrixXd u;
    if (u_opt) {
        if (u_opt->rows() != chi_now || u_opt->cols() != chi_big)
            throw DimensionError("grow_bond: isometry shape mismatch");
        u = *u_opt;
    } else {
        u = Eigen::MatrixXd::Zero(chi_now, chi_big);
        u.leftCols(chi_now).setIdentity();
    }
    check_isometry(u);
    const bool identity_embedding = (chi_big == chi_now) && u.isIdentity(1e-15);
    if (identity_embedding) return;

    env_left_ = embed_environment(env_left_, u);
    env_right_ = embed_environment(env_right_, u);
    site_ = embed_site(site_, u);
    add_growth_noise();
    if (!conv_.reference.empty()) {
        conv_.reference = embed_site(conv_.reference, u);
        const double n = conv_.reference.norm();
        if (n > 0) conv_.reference *= cx(1.0 / n, 0.0);
    }
    for (Tensor& t : reference_history_) {
        t = embed_site(t, u);
        const double n = t.norm();
        if (n > 0) t *= cx(1.0 / n, 0.0);
    }
    if (!q_left_prev_.empty()) {
        q_left_prev_ = Tensor();
        q_right_prev_ = Tensor();
    }
    davidson_.reset();
    plain_absorb_once_ = true;
}

void Engine::krylov_extend(long p, int k) {
    if (p < 1) return;
    SiteDecomposition left = decompose_site(site_, Side::Left);
    SiteDecomposition right = decompose_site(site_, Side::Right);
    const Mpo* mpo = &mpo_;
    const bool super = cfg_.superposition;
    Tensor ql = left.q, qr = right.q;
    auto insert_l = [mpo, super, ql](const Tensor& x) {
        Tensor grown = absorb_left(x, ql, *mpo);
        if (!super) return grown;
        grown += x;
        grown *= cx(0.5, 0.0);
        return grown;
    };
    auto insert_r = [mpo, super, qr](const Tensor& x) {
        Tensor grown = absorb_right(x, qr, *mpo);
        if (!super) return grown;
        grown += x;
        grown *= cx(0.5, 0.0);
        return grown;
    };
    env_left_ = krylov_insert(env_left_, insert_l, p, k);
    env_right_ = krylov_insert(env_right_, insert_r, p, k);
    davidson_.reset();
}

UniformState Engine::uniform_state() const { return make_uniform_state(site_); }

} // namespace imps
