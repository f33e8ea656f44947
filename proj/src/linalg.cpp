#include "imps/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <vector>

namespace imps {

Factorization svd(const Matrix& m) {
    if (!m.allFinite()) throw NumericalError("svd: non-finite entries");
    // Jacobi is the accurate choice for the moderate sizes used here; fall
    // back to divide-and-conquer for large inputs (initialization strips).
    if (m.rows() <= 512 && m.cols() <= 512) {
        Eigen::JacobiSVD<Matrix> solver(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
        return {solver.matrixU(), solver.singularValues(), solver.matrixV()};
    }
    Eigen::BDCSVD<Matrix> solver(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (solver.info() != Eigen::Success) throw NumericalError("svd: did not converge");
    return {solver.matrixU(), solver.singularValues(), solver.matrixV()};
}

namespace {

// Joint eigenbasis of two commuting real symmetric matrices: diagonalize a,
// then diagonalize b restricted to each (near-)degenerate eigenspace of a.
Eigen::MatrixXd joint_diagonalize(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(a);
    Eigen::MatrixXd basis = ea.eigenvectors();
    const Eigen::VectorXd vals = ea.eigenvalues();
    const double scale = std::max(1.0, vals.cwiseAbs().maxCoeff());

    Eigen::Index i = 0;
    while (i < vals.size()) {
        Eigen::Index j = i + 1;
        while (j < vals.size() && std::abs(vals(j) - vals(i)) < 1e-10 * scale) ++j;
        if (j - i > 1) {
            Eigen::MatrixXd block = basis.middleCols(i, j - i);
            Eigen::MatrixXd b_proj = block.transpose() * b * block;
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eb(0.5 * (b_proj + b_proj.transpose()));
            basis.middleCols(i, j - i) = block * eb.eigenvectors();
        }
        i = j;
    }
    return basis;
}

// Square root of a symmetric unitary matrix, itself symmetric unitary.
Matrix symmetric_unitary_sqrt(const Matrix& w) {
    Eigen::MatrixXd re = w.real(), im = w.imag();
    re = 0.5 * (re + re.transpose());
    im = 0.5 * (im + im.transpose());
    Eigen::MatrixXd basis = joint_diagonalize(re, im);
    Vector half_phases(w.rows());
    for (Eigen::Index j = 0; j < w.rows(); ++j) {
        const double a = basis.col(j).dot(re * basis.col(j));
        const double b = basis.col(j).dot(im * basis.col(j));
        const double theta = std::atan2(b, a);
        half_phases(j) = std::polar(1.0, 0.5 * theta);
    }
    return basis.cast<cx>() * half_phases.asDiagonal() * basis.transpose().cast<cx>();
}

} // namespace

TakagiResult takagi(const Matrix& s, double sym_tol) {
    const double nrm = s.norm();
    if (nrm == 0.0) return {Matrix::Identity(s.rows(), s.cols()), RealVector::Zero(s.rows())};
    if ((s - s.transpose()).norm() > sym_tol * nrm)
        throw PreconditionError("takagi: input is not symmetric");
    if (s.rows() != s.cols()) throw DimensionError("takagi: input must be square");

    const Matrix sym = 0.5 * (s + s.transpose());
    Factorization f = svd(sym);
    // c = U^dag s conj(U) is symmetric, block diagonal on degenerate singular
    // clusters, and unitary (times sigma) within each block; with its
    // symmetric square root w, u = U w satisfies s = u D u^T.
    Matrix c = f.u.adjoint() * sym * f.u.conjugate();

    Matrix root = Matrix::Identity(c.rows(), c.cols());
    const double scale = std::max(f.d(0), 1e-300);
    Eigen::Index i = 0;
    while (i < f.d.size()) {
        Eigen::Index j = i + 1;
        while (j < f.d.size() && std::abs(f.d(j) - f.d(i)) < 1e-10 * scale) ++j;
        if (f.d(i) > 1e-14 * scale) {
            Matrix w = c.block(i, i, j - i, j - i) / f.d.segment(i, j - i).mean();
            root.block(i, i, j - i, j - i) = symmetric_unitary_sqrt(0.5 * (w + w.transpose()));
        }
        i = j;
    }
    TakagiResult out{f.u * root, f.d};
    return out;
}

SiteDecomposition decompose_site(const Tensor& a, Side side) {
    if (a.rank() != 3) throw DimensionError("decompose_site: expected rank-3 site tensor");
    if (a.norm() == 0.0) throw DegenerateInputError("decompose_site: zero-norm tensor");
    const long chi_l = a.extent(0), chi_r = a.extent(1), d = a.extent(2);

    if (side == Side::Left) {
        // group m = (s, alpha_l), leftover alpha_r
        Tensor m = a.permuted({2, 0, 1}).reshaped({d * chi_l, chi_r});
        Factorization f = svd(to_matrix(m));
        Matrix q_mat = f.u * f.v.adjoint();       // (d*chi_l, beta=chi_r)
        Matrix lambda = f.v * f.d.asDiagonal() * f.v.adjoint();
        Tensor q = from_matrix(q_mat).reshaped({d, chi_l, chi_r}).permuted({1, 2, 0});
        return {std::move(q), std::move(lambda)};
    }
    // group m = (s, alpha_r), leftover alpha_l
    Tensor m = a.permuted({2, 1, 0}).reshaped({d * chi_r, chi_l});
    Factorization f = svd(to_matrix(m));
    Matrix q_mat = f.u * f.v.adjoint();           // (d*chi_r, beta=chi_l)
    Matrix lambda = (f.v * f.d.asDiagonal() * f.v.adjoint()).conjugate();
    Tensor q = from_matrix(q_mat).reshaped({d, chi_r, chi_l}).permuted({2, 1, 0});
    return {std::move(q), std::move(lambda)};
}

Matrix to_matrix(const Tensor& t) {
    if (t.rank() != 2) throw DimensionError("to_matrix: expected rank-2 tensor");
    Matrix m(t.extent(0), t.extent(1));
    for (long i = 0; i < t.extent(0); ++i)
        for (long j = 0; j < t.extent(1); ++j) m(i, j) = t[i * t.extent(1) + j];
    return m;
}

Tensor from_matrix(const Matrix& m) {
    Tensor t({static_cast<long>(m.rows()), static_cast<long>(m.cols())});
    for (long i = 0; i < m.rows(); ++i)
        for (long j = 0; j < m.cols(); ++j) t[i * m.cols() + j] = m(i, j);
    return t;
}

} // namespace imps
