#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "imps/mpo.hpp"
#include "oracles.hpp"

using namespace imps;

namespace {

void check_dense_match(const Mpo& mpo, int n, double tol = 1e-12) {
    Matrix dense = mpo_to_dense(mpo, n);
    Matrix direct = oracles::dense_from_terms(mpo.terms, n);
    const double scale = std::max(1.0, direct.cwiseAbs().maxCoeff());
    CHECK((dense - direct).cwiseAbs().maxCoeff() / scale < tol);
    CHECK((dense - dense.adjoint()).cwiseAbs().maxCoeff() / scale < 1e-12);
}

} // namespace

TEST_CASE("ising bond dimension and two-site expansion") {
    Mpo mpo = build_ising_mpo(1.0, 1.0);
    CHECK(mpo.bond_dim() == 3);
    Matrix dense = mpo_to_dense(mpo, 2);
    Matrix expect = oracles::kron(-pauli_z(), pauli_z()) +
                    oracles::kron(-pauli_x(), Matrix::Identity(2, 2)) +
                    oracles::kron(Matrix::Identity(2, 2), -pauli_x());
    CHECK((dense - expect).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("ising dense equivalence at n=5") {
    check_dense_match(build_ising_mpo(1.0, 1.0), 5, 1e-13);
    check_dense_match(build_ising_mpo(0.7, -1.3), 4, 1e-13);
}

TEST_CASE("heisenberg has five slots and matches the dense sum") {
    Mpo mpo = build_heisenberg_mpo(0.9, -0.4, 1.1);
    CHECK(mpo.bond_dim() == 5);
    check_dense_match(mpo, 4, 1e-13);

    // Jx = Jy = 0 reduces to the z-only structure
    Mpo zonly = build_heisenberg_mpo(0.0, 0.0, 0.8);
    Matrix dense = mpo_to_dense(zonly, 3);
    Matrix direct = Matrix::Zero(8, 8);
    for (int i = 0; i + 1 < 3; ++i)
        direct += 0.8 * oracles::two_site_op(pauli_z(), i, pauli_z(), i + 1, 3);
    CHECK((dense - direct).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("exponential decay channel") {
    SUBCASE("lambda = 0 keeps only nearest neighbors") {
        Mpo mpo = build_exp_decay_mpo(1.3, 0.0);
        check_dense_match(mpo, 4, 1e-13);
    }
    SUBCASE("distance-2 weight is lambda") {
        Mpo mpo = build_exp_decay_mpo(1.0, 0.5);
        Matrix dense = mpo_to_dense(mpo, 3);
        // weight of sz_1 sz_3 is lambda^(3-1-1) = 0.5
        Matrix probe = oracles::two_site_op(pauli_z(), 0, pauli_z(), 2, 3);
        const double weight = (dense.cwiseProduct(probe.conjugate())).sum().real() / 8.0;
        CHECK(weight == doctest::Approx(0.5));
    }
    SUBCASE("random decay rates match the dense sum at n=6") {
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> uni(0.1, 0.9);
        for (int trial = 0; trial < 3; ++trial)
            check_dense_match(build_exp_decay_mpo(1.0 + uni(rng), uni(rng)), 6);
    }
    SUBCASE("non-decaying rate is rejected") {
        CHECK_THROWS_AS(build_exp_decay_mpo(1.0, 1.0), PreconditionError);
    }
}

TEST_CASE("dipolar bose-hubbard slots, local term, hop structure") {
    ExpSumFit fit = fit_power_law(3.0, 4, 64);
    SUBCASE("bond dimension is n_exp + 4") {
        Mpo mpo = build_dipolar_bose_hubbard_mpo(1.0, 1.0, 0.5, 0.2, 2, fit);
        CHECK(mpo.bond_dim() == 8);
        CHECK(mpo.phys_dim() == 3);
    }
    SUBCASE("pure on-site interaction in the occupation basis") {
        Mpo mpo = build_dipolar_bose_hubbard_mpo(0.0, 2.0, 0.0, 0.0, 2, fit);
        // local term acting on one site: diag(0, 0, 2) = U/2 n(n-1)
        Matrix local = mpo.terms.local;
        CHECK(local(0, 0).real() == doctest::Approx(0));
        CHECK(local(1, 1).real() == doctest::Approx(0));
        CHECK(local(2, 2).real() == doctest::Approx(2));
    }
    SUBCASE("hardcore hop at n=2") {
        Mpo mpo = build_dipolar_bose_hubbard_mpo(0.0, 0.0, 0.0, 1.0, 1, fit);
        Matrix dense = mpo_to_dense(mpo, 2);
        Matrix c = boson_annihilator(1);
        Matrix expect = -(oracles::kron(c.adjoint(), c) + oracles::kron(c, c.adjoint()));
        CHECK((dense - expect).cwiseAbs().maxCoeff() < 1e-13);
    }
    SUBCASE("random parameters match the dense sum with the fitted kernel") {
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> uni(0.1, 1.0);
        for (int trial = 0; trial < 3; ++trial) {
            Mpo mpo = build_dipolar_bose_hubbard_mpo(uni(rng), uni(rng), uni(rng), uni(rng), 2, fit);
            check_dense_match(mpo, 5);
        }
    }
}

TEST_CASE("add_local_term") {
    SUBCASE("identity shift moves every site") {
        Mpo mpo = build_ising_mpo(1.0, 0.5);
        const int n = 4;
        Matrix before = mpo_to_dense(mpo, n);
        add_local_term(mpo, -1.7 * Matrix::Identity(2, 2));
        Matrix after = mpo_to_dense(mpo, n);
        Matrix diff = after - before;
        CHECK((diff + 1.7 * n * Matrix::Identity(16, 16)).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("adding zero is bit-identical") {
        Mpo mpo = build_ising_mpo(1.0, 0.5);
        Mpo copy = mpo;
        add_local_term(copy, Matrix::Zero(2, 2));
        CHECK(max_abs_difference(copy.bulk, mpo.bulk) == 0.0);
        CHECK(max_abs_difference(copy.left_boundary, mpo.left_boundary) == 0.0);
        CHECK(max_abs_difference(copy.right_boundary, mpo.right_boundary) == 0.0);
    }
    SUBCASE("extra field matches the dense oracle") {
        Mpo mpo = build_ising_mpo(1.0, 0.5);
        add_local_term(mpo, -0.3 * pauli_x());
        check_dense_match(mpo, 4, 1e-13);
    }
    SUBCASE("dimension mismatch") {
        Mpo mpo = build_ising_mpo(1.0, 0.5);
        CHECK_THROWS_AS(add_local_term(mpo, Matrix::Zero(3, 3)), DimensionError);
    }
}

TEST_CASE("bulk tensor is shared by every interior site") {
    // translation structure holds by construction: the dense operators for
    // n and n+1 sites agree on all terms fully inside the smaller chain
    Mpo mpo = build_exp_decay_mpo(0.8, 0.6);
    Matrix h4 = mpo_to_dense(mpo, 4);
    Matrix h5 = mpo_to_dense(mpo, 5);
    Matrix embedded = oracles::kron(h4, Matrix::Identity(2, 2));
    // difference must consist only of terms touching site 5
    Matrix diff = h5 - embedded;
    Matrix direct = Matrix::Zero(32, 32);
    for (int i = 0; i < 4; ++i)
        direct += 0.8 * std::pow(0.6, 4 - i - 1) * oracles::two_site_op(pauli_z(), i, pauli_z(), 4, 5);
    CHECK((diff - direct).cwiseAbs().maxCoeff() < 1e-12);
}
