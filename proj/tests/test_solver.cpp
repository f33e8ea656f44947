#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "imps/solver.hpp"
#include "oracles.hpp"

using namespace imps;

namespace {

LinearOperator dense_operator(const Matrix& h) {
    LinearOperator op;
    op.dim = h.rows();
    op.apply = [&h](const Vector& x, Vector& y) { y = h * x; };
    op.trace = [&h]() { return h.trace(); };
    return op;
}

Vector unit_random(long n, std::mt19937_64& rng) {
    std::normal_distribution<double> dist;
    Vector v(n);
    for (long i = 0; i < n; ++i) v(i) = cx(dist(rng), dist(rng));
    return v.normalized();
}

Vector to_vec(const Tensor& t) {
    Vector v(t.size());
    for (long i = 0; i < t.size(); ++i) v(i) = t[i];
    return v;
}

Tensor to_tensor(const Vector& v, std::vector<long> shape) {
    return Tensor(std::move(shape), std::vector<cx>(v.data(), v.data() + v.size()));
}

} // namespace

TEST_CASE("diagonal operator with a two-component seed") {
    Matrix h = Matrix::Zero(6, 6);
    for (long i = 0; i < 6; ++i) h(i, i) = i + 1.0;
    Vector seed = Vector::Zero(6);
    seed(0) = seed(1) = 1.0 / std::sqrt(2.0);
    SolveOptions opts;
    opts.residual_tol = 1e-12;
    SolveResult res = solve_lowest(dense_operator(h), {seed}, opts);
    CHECK(res.e0 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(res.converged);
}

TEST_CASE("random dense hermitian matches the dense oracle") {
    std::mt19937_64 rng(2);
    Matrix h = oracles::random_hermitian(100, rng);
    SolveOptions opts;
    opts.residual_tol = 1e-12;
    opts.max_basis = 40;
    opts.max_iterations = 500;
    SolveResult res = solve_lowest(dense_operator(h), {unit_random(100, rng)}, opts);
    auto [e_exact, v_exact] = oracles::dense_ground_state(h);
    CHECK(std::abs(res.e0 - e_exact) < 1e-10);
}

TEST_CASE("warm seeds beat cold seeds on a perturbed operator") {
    std::mt19937_64 rng(3);
    std::vector<int> warm_iters, cold_iters;
    for (int trial = 0; trial < 20; ++trial) {
        Matrix h = oracles::random_hermitian(80, rng);
        SolveOptions opts;
        opts.residual_tol = 1e-10;
        opts.max_basis = 30;
        opts.max_iterations = 300;
        SolveResult first = solve_lowest(dense_operator(h), {unit_random(80, rng)}, opts);
        Matrix hp = h + 0.01 * oracles::random_hermitian(80, rng);
        SolveResult warm = solve_lowest(dense_operator(hp), {first.v0}, opts);
        SolveResult cold = solve_lowest(dense_operator(hp), {unit_random(80, rng)}, opts);
        warm_iters.push_back(warm.iterations);
        cold_iters.push_back(cold.iterations);
    }
    std::nth_element(warm_iters.begin(), warm_iters.begin() + 10, warm_iters.end());
    std::nth_element(cold_iters.begin(), cold_iters.begin() + 10, cold_iters.end());
    CHECK(warm_iters[10] < cold_iters[10]);
}

TEST_CASE("residual expansion maintains the basis invariants") {
    std::mt19937_64 rng(5);
    Matrix h = oracles::random_hermitian(60, rng);
    LinearOperator op = dense_operator(h);
    SubspaceBasis basis;
    basis.append(op, unit_random(60, rng));
    SolveOptions opts;
    opts.residual_tol = 0.0; // force expansions
    double last = solve_projected(basis, 0.0).value;
    for (int k = 0; k < 50; ++k) {
        if (!residual_expand(basis, op, opts)) break;
        const double now = solve_projected(basis, 0.0).value;
        CHECK(now <= last + 1e-13); // Ritz value monotone under nesting
        last = now;
    }
    CHECK(basis.size() > 40);
    double worst = 0;
    for (long i = 0; i < basis.size(); ++i)
        for (long j = 0; j < basis.size(); ++j) {
            const cx g = basis.vectors[static_cast<std::size_t>(i)].dot(
                basis.vectors[static_cast<std::size_t>(j)]);
            worst = std::max(worst, std::abs(g - (i == j ? cx(1, 0) : cx(0, 0))));
        }
    CHECK(worst < 1e-11);
    CHECK((basis.h - basis.h.adjoint()).norm() < 1e-11);
}

TEST_CASE("exact eigenvector leaves nothing to expand") {
    Matrix h = Matrix::Zero(4, 4);
    for (long i = 0; i < 4; ++i) h(i, i) = i + 0.5;
    LinearOperator op = dense_operator(h);
    SubspaceBasis basis;
    Vector e0 = Vector::Zero(4);
    e0(0) = 1;
    basis.append(op, e0);
    SolveOptions opts;
    CHECK_FALSE(residual_expand(basis, op, opts));
    CHECK(basis.size() == 1);
}

TEST_CASE("two-by-two expansion hand check") {
    Matrix h(2, 2);
    h << 2.0, 0.5, 0.5, 1.0;
    LinearOperator op = dense_operator(h);
    SubspaceBasis basis;
    Vector seed = Vector::Zero(2);
    seed(0) = 1;
    basis.append(op, seed);
    CHECK(basis.h(0, 0).real() == doctest::Approx(2.0));
    SolveOptions opts;
    CHECK(residual_expand(basis, op, opts));
    // residual of the one-vector Ritz pair is (0, 0.5); normalized second vector
    CHECK(std::abs(basis.vectors[1](0)) < 1e-14);
    CHECK(std::abs(std::abs(basis.vectors[1](1)) - 1.0) < 1e-14);
    RitzSolution ritz = solve_projected(basis, 0.0);
    const double exact = 1.5 - std::sqrt(0.5);
    CHECK(ritz.value == doctest::Approx(exact).epsilon(1e-12));
}

TEST_CASE("davidson preconditioner closed forms") {
    SUBCASE("no pairs reduces to a scalar") {
        DavidsonPreconditioner d = build_davidson({}, {}, {}, 30.0, 10, 0.0);
        CHECK(d.alpha == doctest::Approx(3.0));
        Vector r = Vector::Ones(10);
        Vector out = precondition_apply(d, r);
        CHECK((out - r / (0.0 - 3.0)).norm() < 1e-14);
    }
    SUBCASE("inverse identity on the known span and trace consistency") {
        const long n = 12;
        Matrix h = Matrix::Zero(n, n);
        for (long i = 0; i < n; ++i) h(i, i) = 1.0 + 0.37 * double(i);
        std::vector<double> values;
        std::vector<Vector> vectors, applied;
        const int k = 4;
        for (int i = 0; i < k; ++i) {
            values.push_back(h(i, i).real());
            Vector e = Vector::Zero(n);
            e(i) = 1;
            vectors.push_back(e);
            applied.push_back(h * e);
        }
        const double trace = h.trace().real();
        DavidsonPreconditioner d =
            build_davidson(values, vectors, applied, trace, n, 1e-3 * values[0]);
        d.drop_ratio = 1e9;
        double esum = 0;
        for (double e : values) esum += e;
        CHECK(d.alpha * double(n - k) + esum == doctest::Approx(trace).epsilon(1e-15));
        // D (E0 - H_approx) = identity on span{e_1 .. e_{k-1}}
        for (int j = 1; j < k; ++j) {
            Vector x = Vector::Zero(n);
            x(j) = 1;
            Vector y = (d.e0_shifted - values[static_cast<std::size_t>(j)]) * x;
            Vector back = precondition_apply(d, y);
            CHECK((back - x).norm() < 1e-10);
        }
    }
    SUBCASE("component orthogonal to every pair is only rescaled") {
        const long n = 8;
        Matrix h = Matrix::Zero(n, n);
        for (long i = 0; i < n; ++i) h(i, i) = double(i + 1);
        std::vector<double> values{1.0, 2.0};
        std::vector<Vector> vectors, applied;
        for (int i = 0; i < 2; ++i) {
            Vector e = Vector::Zero(n);
            e(i) = 1;
            vectors.push_back(e);
            applied.push_back(h * e);
        }
        DavidsonPreconditioner d =
            build_davidson(values, vectors, applied, h.trace().real(), n, 1e-3);
        Vector r = Vector::Zero(n);
        r(5) = cx(0.3, -0.4);
        Vector out = precondition_apply(d, r);
        CHECK((out - r / (d.e0_shifted - d.alpha)).norm() < 1e-14);
    }
}

TEST_CASE("preconditioning halves the iteration count on clustered spectra") {
    std::mt19937_64 rng(7);
    const long n = 400;
    std::vector<int> plain_iters, prec_iters;
    for (int trial = 0; trial < 20; ++trial) {
        // tightly clustered low end far below a narrow bulk: the recycled
        // pairs resolve the cluster and the average eigenvalue handles the
        // bulk, which is where this preconditioner is designed to pay off
        Matrix h = Matrix::Zero(n, n);
        for (long i = 0; i < 8; ++i) h(i, i) = 1.0 + 0.01 * double(i);
        std::uniform_real_distribution<double> uni(100.0, 100.5);
        for (long i = 8; i < n; ++i) h(i, i) = uni(rng);
        std::normal_distribution<double> dist;
        for (long i = 0; i + 1 < n; ++i) {
            const double v = 0.005 * dist(rng);
            h(i, i + 1) += v;
            h(i + 1, i) += v;
        }

        // converged data from a nearby operator, as a previous round supplies
        Matrix h_prev = h;
        for (long i = 0; i < n; ++i) h_prev(i, i) += 0.001 * std::sin(0.1 * double(i));
        Eigen::SelfAdjointEigenSolver<Matrix> prev(h_prev);
        std::vector<double> values;
        std::vector<Vector> vectors, applied;
        for (int i = 0; i < 8; ++i) {
            values.push_back(prev.eigenvalues()(i));
            vectors.push_back(prev.eigenvectors().col(i));
            applied.push_back(h_prev * prev.eigenvectors().col(i));
        }
        DavidsonPreconditioner d = build_davidson(
            values, vectors, applied, h_prev.trace().real(), n, 1e-3 * std::abs(values[0]));

        // both arms start from the previous solution, as the engine does;
        // the dropped ground-projector term relies on residuals staying
        // orthogonal to it
        Vector seed = (vectors[0] + 0.02 * unit_random(n, rng)).normalized();
        SolveOptions opts;
        opts.residual_tol = 1e-9;
        opts.max_basis = 24;
        opts.max_iterations = 250;
        SolveResult plain = solve_lowest(dense_operator(h), {seed}, opts);
        opts.preconditioner = &d;
        SolveResult prec = solve_lowest(dense_operator(h), {seed}, opts);
        CHECK(std::abs(prec.e0 - plain.e0) < 1e-6);
        plain_iters.push_back(plain.iterations);
        prec_iters.push_back(prec.iterations);
    }
    std::nth_element(plain_iters.begin(), plain_iters.begin() + 10, plain_iters.end());
    std::nth_element(prec_iters.begin(), prec_iters.begin() + 10, prec_iters.end());
    CHECK(prec_iters[10] * 2 <= plain_iters[10]);
}

TEST_CASE("rank-one bias on the first basis vector") {
    std::mt19937_64 rng(11);
    Matrix h = oracles::random_hermitian(50, rng);
    Vector refer = unit_random(50, rng);
    SolveOptions opts;
    opts.residual_tol = 1e-13;
    opts.max_basis = 50;
    opts.max_iterations = 400;
    SolveResult base = solve_lowest(dense_operator(h), {refer}, opts);

    SUBCASE("gamma = 0 re-solve is identical") {
        RitzSolution again = solve_projected(base.basis, 0.0);
        CHECK(again.value == doctest::Approx(base.e0).epsilon(1e-14));
    }
    SUBCASE("gamma to infinity pins the first vector") {
        RitzSolution pinned = solve_projected(base.basis, 1e12);
        Vector v = base.basis.assemble(pinned.coeffs);
        CHECK(std::abs(std::abs(refer.dot(v)) - 1.0) < 1e-9);
    }
    SUBCASE("bias update matches a dense solve of the biased operator") {
        const double gamma = 0.8;
        RitzSolution biased = solve_projected(base.basis, gamma);
        Matrix hb = h - gamma * refer * refer.adjoint();
        auto [e_exact, v_exact] = oracles::dense_ground_state(hb);
        CHECK(std::abs(biased.value - e_exact) < 1e-10);
    }
}

TEST_CASE("invariance-biased candidates") {
    std::mt19937_64 rng(13);
    const long chi = 4, d = 2;
    Tensor a = oracles::random_tensor({chi, chi, d}, rng);
    auto left = decompose_site(a, Side::Left);
    auto right = decompose_site(a, Side::Right);

    SUBCASE("translation-consistent tensor is a fixed point") {
        // real index-symmetric slices give equal left/right split weights,
        // hence A = Q_L lambda = lambda Q_R and the mix must return A
        std::normal_distribution<double> dist;
        Tensor sym({chi, chi, d});
        for (long s = 0; s < d; ++s)
            for (long i = 0; i < chi; ++i)
                for (long j = 0; j <= i; ++j) {
                    const double v = dist(rng);
                    sym.at({i, j, s}) = v;
                    sym.at({j, i, s}) = v;
                }
        auto sl = decompose_site(sym, Side::Left);
        auto sr = decompose_site(sym, Side::Right);
        REQUIRE((sl.lambda - sr.lambda).norm() < 1e-10);
        Vector v = to_vec(sym);
        Vector mixed = bias_candidate_uniform(v, sl.q, sr.q);
        CHECK((mixed - v).norm() / v.norm() < 1e-12);
    }

    SUBCASE("mixing is contractive toward equal split weights") {
        for (int trial = 0; trial < 6; ++trial) {
            Tensor cand = oracles::random_tensor({chi, chi, d}, rng);
            Vector v = to_vec(cand);
            Vector mixed_v = bias_candidate_uniform(v, left.q, right.q);
            Tensor mixed = to_tensor(mixed_v, {chi, chi, d});
            auto asym = [&](const Tensor& t) {
                Tensor lbar_r = contract(t, conj(right.q), {{1, 1}, {2, 2}});
                Tensor lbar_l = contract(conj(left.q), t, {{0, 0}, {2, 2}});
                Tensor diff = lbar_l;
                diff.axpy(cx(-1, 0), lbar_r);
                return diff.norm();
            };
            CHECK(asym(mixed) <= asym(cand) + 1e-12);
        }
    }
}

TEST_CASE("mirror symmetrization of vectorized tensors is a projector") {
    std::mt19937_64 rng(19);
    Tensor a = oracles::random_tensor({3, 3, 2}, rng);
    Vector v = to_vec(a);
    Vector s1 = mirror_symmetrize_vec(v, 3, 2);
    Vector s2 = mirror_symmetrize_vec(s1, 3, 2);
    CHECK((s1 - s2).norm() < 1e-14);
    Tensor st = to_tensor(s1, {3, 3, 2});
    CHECK(max_abs_difference(st, st.permuted({1, 0, 2})) < 1e-14);
}
