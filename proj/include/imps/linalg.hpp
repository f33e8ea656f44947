#pragma once

#include <Eigen/Dense>

#include "imps/tensor.hpp"

namespace imps {

using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

/// m = u * d.asDiagonal() * v.adjoint(); u, v have orthonormal columns,
/// d non-negative descending. Thin factors (min(rows,cols) columns).
struct Factorization {
    Matrix u;
    RealVector d;
    Matrix v;

    Matrix reconstruct() const { return u * d.asDiagonal() * v.adjoint(); }
};

Factorization svd(const Matrix& m);

/// Takagi factorization of a complex symmetric matrix: s = u * d * u^T,
/// u unitary, d real non-negative descending. Throws PreconditionError if
/// ||s - s^T|| / ||s|| exceeds sym_tol.
struct TakagiResult {
    Matrix u;
    RealVector d;
    Matrix reconstruct() const { return u * d.asDiagonal() * u.transpose(); }
};

TakagiResult takagi(const Matrix& s, double sym_tol = 1e-10);

enum class Side { Left, Right };

/// Polar-like split of a site tensor a (chi_l, chi_r, d):
///   Left : a = Q . lambda  with Q orthonormal over the (s, alpha_l) group
///   Right: a = lambda . Q  with Q orthonormal over the (s, alpha_r) group
/// lambda is Hermitian positive semidefinite; no singular values are dropped.
struct SiteDecomposition {
    Tensor q;      // Left: (chi_l, beta, d); Right: (beta, chi_r, d)
    Matrix lambda; // Left: (beta, chi_r);   Right: (chi_l, beta)
};

SiteDecomposition decompose_site(const Tensor& a, Side side);

/// Rank-2 tensor <-> Eigen bridge (row-major tensor to column-major matrix).
Matrix to_matrix(const Tensor& t);
Tensor from_matrix(const Matrix& m);

} // namespace imps
