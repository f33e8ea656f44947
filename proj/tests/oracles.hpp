// Shared independent oracles for the test suites: dense Hamiltonian sums,
// exact diagonalization, quadrature energies, classical pattern search,
// finite-chain expectation values. These deliberately avoid the library's
// contraction paths wherever they are the thing under test.
#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>
#include <vector>

#include "imps/mpo.hpp"
#include "imps/tensor.hpp"

namespace oracles {

using imps::cx;
using imps::Matrix;
using imps::Tensor;
using imps::Vector;

inline Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (long i = 0; i < a.rows(); ++i)
        for (long j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

/// op at a single site of an n-site chain, identities elsewhere.
inline Matrix site_op(const Matrix& op, int n, int site) {
    const long d = op.rows();
    Matrix acc = Matrix::Identity(1, 1);
    for (int s = 0; s < n; ++s)
        acc = kron(acc, s == site ? op : Matrix::Identity(d, d).eval());
    return acc;
}

inline Matrix two_site_op(const Matrix& a, int i, const Matrix& b, int j, int n) {
    const long d = a.rows();
    Matrix acc = Matrix::Identity(1, 1);
    for (int s = 0; s < n; ++s) {
        Matrix op = Matrix::Identity(d, d);
        if (s == i) op = a;
        if (s == j) op = b;
        acc = kron(acc, op);
    }
    return acc;
}

/// Direct dense sum for the Hamiltonian term description.
inline Matrix dense_from_terms(const imps::HamiltonianTerms& terms, int n) {
    const long d = terms.local.rows();
    const long dim = static_cast<long>(std::llround(std::pow(double(d), n)));
    Matrix h = Matrix::Zero(dim, dim);
    for (int i = 0; i < n; ++i) h += site_op(terms.local, n, i);
    for (const imps::PairInteraction& p : terms.pairs)
        for (int i = 0; i < n; ++i)
            for (int jj = i + 1; jj < n; ++jj) {
                const double coeff = p.coeff(jj - i);
                if (coeff != 0.0) h += coeff * two_site_op(p.op_a, i, p.op_b, jj, n);
            }
    return h;
}

inline std::pair<double, Vector> dense_ground_state(const Matrix& h) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (h + h.adjoint()));
    return {es.eigenvalues()(0), es.eigenvectors().col(0)};
}

/// Ground energy per site of -sum sz sz - h sum sx by numerical quadrature
/// of the single-mode dispersion (composite Simpson, absolute accuracy well
/// below 1e-10 at the resolutions used).
inline double tfi_energy_per_site(double h, int intervals = 400000) {
    auto eps = [h](double k) { return std::sqrt(1.0 + h * h - 2.0 * h * std::cos(k)); };
    const double a = 0.0, b = M_PI;
    const double dk = (b - a) / intervals;
    double sum = eps(a) + eps(b);
    for (int i = 1; i < intervals; ++i) sum += (i % 2 ? 4.0 : 2.0) * eps(a + i * dk);
    return -(sum * dk / 3.0) / M_PI;
}

inline Tensor random_tensor(std::vector<long> shape, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist;
    for (long i = 0; i < t.size(); ++i) t[i] = cx(dist(rng), dist(rng));
    return t;
}

inline Matrix random_complex_symmetric(long n, std::mt19937_64& rng) {
    std::normal_distribution<double> dist;
    Matrix s(n, n);
    for (long i = 0; i < n; ++i)
        for (long j = 0; j <= i; ++j) {
            s(i, j) = cx(dist(rng), dist(rng));
            s(j, i) = s(i, j);
        }
    return s;
}

inline Matrix random_hermitian(long n, std::mt19937_64& rng) {
    std::normal_distribution<double> dist;
    Matrix h(n, n);
    for (long i = 0; i < n; ++i)
        for (long j = 0; j <= i; ++j) {
            const cx v(dist(rng), i == j ? 0.0 : dist(rng));
            h(i, j) = v;
            h(j, i) = std::conj(v);
        }
    return h;
}

/// Lowest energy per site over all periodic hardcore occupation patterns
/// with period <= q_max, for the fitted long-range kernel. The infinite
/// pair sum is closed analytically per rate: sum_m lam^(c + q m) =
/// lam^c / (1 - lam^q).
struct Classicalminimum {
    double energy = 0;
    double density = 0;
    int period = 1;
};

inline Classicalminimum classical_pattern_minimum(const imps::ExpSumFit& kernel, double v,
                                                  double mu, int q_max) {
    Classicalminimum best;
    best.energy = std::numeric_limits<double>::infinity();
    for (int q = 1; q <= q_max; ++q) {
        for (unsigned mask = 0; mask < (1u << q); ++mask) {
            int filled = 0;
            for (int i = 0; i < q; ++i)
                if (mask & (1u << i)) ++filled;
            double interaction = 0;
            for (int i = 0; i < q; ++i) {
                if (!(mask & (1u << i))) continue;
                for (int r = 1; r <= q; ++r) {
                    if (!(mask & (1u << ((i + r) % q)))) continue;
                    // distance r, r+q, r+2q, ... all occupied-pair distances
                    for (std::size_t p = 0; p < kernel.weights.size(); ++p) {
                        const double lam = kernel.rates[p];
                        interaction += v * kernel.weights[p] * std::pow(lam, r - 1) /
                                       (1.0 - std::pow(lam, q));
                    }
                }
            }
            const double density = static_cast<double>(filled) / q;
            const double energy = interaction / q - mu * density;
            if (energy < best.energy - 1e-14) {
                best.energy = energy;
                best.density = density;
                best.period = q;
            }
        }
    }
    return best;
}

} // namespace oracles
