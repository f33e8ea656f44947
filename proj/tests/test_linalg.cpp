#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "imps/linalg.hpp"
#include "oracles.hpp"

using namespace imps;

TEST_CASE("svd of a diagonal matrix") {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 0) = 3;
    m(1, 1) = 1;
    Factorization f = svd(m);
    CHECK(f.d(0) == doctest::Approx(3));
    CHECK(f.d(1) == doctest::Approx(1));
    CHECK((f.reconstruct() - m).norm() < 1e-13);
}

TEST_CASE("rank-1 outer product has one singular value") {
    Vector u(3), v(2);
    u << cx(1, 0), cx(0, 2), cx(2, 0);
    v << cx(0, 1), cx(1, 1);
    Matrix m = u * v.transpose();
    Factorization f = svd(m);
    CHECK(f.d(0) == doctest::Approx(u.norm() * v.norm()));
    for (Eigen::Index i = 1; i < f.d.size(); ++i) CHECK(f.d(i) < 1e-13);
}

TEST_CASE("svd reconstruction of random rectangular matrices") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> dist;
    Matrix m(8, 5);
    for (long i = 0; i < 8; ++i)
        for (long j = 0; j < 5; ++j) m(i, j) = cx(dist(rng), dist(rng));
    Factorization f = svd(m);
    CHECK((f.reconstruct() - m).norm() / m.norm() < 1e-12);
    CHECK((f.u.adjoint() * f.u - Matrix::Identity(5, 5)).norm() < 1e-12);
    CHECK((f.v.adjoint() * f.v - Matrix::Identity(5, 5)).norm() < 1e-12);
    // singular values are idempotent under re-factorization
    Factorization f2 = svd(f.reconstruct());
    CHECK((f.d - f2.d).norm() < 1e-12);
}

TEST_CASE("takagi on real diagonal and exchange matrices") {
    Matrix diag = Matrix::Zero(2, 2);
    diag(0, 0) = 2;
    diag(1, 1) = 1;
    TakagiResult t = takagi(diag);
    CHECK(t.d(0) == doctest::Approx(2));
    CHECK(t.d(1) == doctest::Approx(1));
    CHECK((t.reconstruct() - diag).norm() < 1e-12);

    Matrix x = Matrix::Zero(2, 2);
    x(0, 1) = 1;
    x(1, 0) = 1;
    TakagiResult tx = takagi(x);
    CHECK(tx.d(0) == doctest::Approx(1));
    CHECK(tx.d(1) == doctest::Approx(1));
    CHECK((tx.reconstruct() - x).norm() < 1e-10);
    CHECK((tx.u.adjoint() * tx.u - Matrix::Identity(2, 2)).norm() < 1e-10);
}

TEST_CASE("takagi on random complex symmetric matrices") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 6; ++trial) {
        Matrix s = oracles::random_complex_symmetric(6, rng);
        TakagiResult t = takagi(s);
        CHECK((t.reconstruct() - s).norm() / s.norm() < 1e-10);
        CHECK((t.u.adjoint() * t.u - Matrix::Identity(6, 6)).norm() < 1e-10);
        for (Eigen::Index i = 0; i + 1 < t.d.size(); ++i) CHECK(t.d(i) >= t.d(i + 1) - 1e-12);
    }
}

TEST_CASE("takagi rejects asymmetric input") {
    Matrix s(2, 2);
    s << cx(1, 0), cx(2, 0), cx(0, 0), cx(1, 0);
    CHECK_THROWS_AS(takagi(s), PreconditionError);
}

TEST_CASE("site decomposition reconstructs and orthogonalizes") {
    std::mt19937_64 rng(13);
    for (Side side : {Side::Left, Side::Right}) {
        Tensor a = oracles::random_tensor({4, 4, 3}, rng);
        SiteDecomposition dec = decompose_site(a, side);

        // lambda is Hermitian positive semidefinite
        CHECK((dec.lambda - dec.lambda.adjoint()).norm() < 1e-12);
        Eigen::SelfAdjointEigenSolver<Matrix> es(dec.lambda);
        CHECK(es.eigenvalues().minCoeff() > -1e-12);

        // norm bookkeeping: ||lambda||_F = ||a||
        CHECK(dec.lambda.norm() == doctest::Approx(a.norm()));

        // reconstruction
        Tensor rebuilt;
        if (side == Side::Left) {
            Tensor lam = from_matrix(dec.lambda);
            rebuilt = contract(dec.q, lam, {{1, 0}}).permuted({0, 2, 1});
        } else {
            Tensor lam = from_matrix(dec.lambda);
            rebuilt = contract(lam, dec.q, {{1, 0}});
        }
        CHECK(max_abs_difference(rebuilt, a) / a.norm() < 1e-12);

        // orthogonality over the grouped indices
        Tensor qq = (side == Side::Left) ? contract(conj(dec.q), dec.q, {{0, 0}, {2, 2}})
                                         : contract(conj(dec.q), dec.q, {{1, 1}, {2, 2}});
        for (long i = 0; i < qq.extent(0); ++i)
            for (long j = 0; j < qq.extent(1); ++j)
                CHECK(std::abs(qq.at({i, j}) - (i == j ? cx(1, 0) : cx(0, 0))) < 1e-12);
    }
}

TEST_CASE("already orthogonal tensor yields the identity weight") {
    // build a left-orthogonal tensor with unit singular values, then check
    // lambda = identity
    std::mt19937_64 rng(29);
    Tensor a = oracles::random_tensor({3, 3, 2}, rng);
    SiteDecomposition dec = decompose_site(a, Side::Left);
    SiteDecomposition again = decompose_site(dec.q, Side::Left);
    CHECK((again.lambda - Matrix::Identity(3, 3)).norm() < 1e-12);
}

TEST_CASE("zero tensor is rejected") {
    Tensor zero({2, 2, 2});
    CHECK_THROWS_AS(decompose_site(zero, Side::Left), DegenerateInputError);
}
