#include "imps/mpo.hpp"

#include <cmath>
#include <unsupported/Eigen/KroneckerProduct>

namespace imps {

double PairInteraction::coeff(long r) const {
    double c = 0;
    for (std::size_t p = 0; p < weights.size(); ++p) {
        if (rates[p] == 0.0)
            c += (r == 1) ? weights[p] : 0.0;
        else
            c += weights[p] * std::pow(rates[p], static_cast<double>(r - 1));
    }
    return c;
}

long PairInteraction::max_range(double cutoff) const {
    long range = 1;
    for (std::size_t p = 0; p < weights.size(); ++p) {
        if (rates[p] == 0.0 || weights[p] == 0.0) continue;
        const double lam = std::abs(rates[p]);
        // |w| lam^(r-1) < cutoff
        const long r = 1 + static_cast<long>(std::ceil(
                               (std::log(cutoff) - std::log(std::abs(weights[p]))) / std::log(lam)));
        range = std::max(range, r);
    }
    return std::max<long>(range, 1);
}

Matrix pauli_x() {
    Matrix m(2, 2);
    m << 0, 1, 1, 0;
    return m;
}

Matrix pauli_y() {
    Matrix m(2, 2);
    m << cx(0, 0), cx(0, -1), cx(0, 1), cx(0, 0);
    return m;
}

Matrix pauli_z() {
    Matrix m(2, 2);
    m << 1, 0, 0, -1;
    return m;
}

Matrix boson_annihilator(int n_max) {
    Matrix m = Matrix::Zero(n_max + 1, n_max + 1);
    for (int n = 1; n <= n_max; ++n) m(n - 1, n) = std::sqrt(static_cast<double>(n));
    return m;
}

Matrix boson_number(int n_max) {
    Matrix m = Matrix::Zero(n_max + 1, n_max + 1);
    for (int n = 0; n <= n_max; ++n) m(n, n) = n;
    return m;
}

namespace {

// Assembles the Schur MPO from its slot description. `channels[c]` is the
// list of (row entries): creation operator (last row -> channel), decay
// factor on the diagonal, and closing operator (channel -> column 0).
struct Channel {
    Matrix create; // entry (m-1, slot)
    Matrix close;  // entry (slot, 0)
    double decay = 0.0;
};

Mpo assemble(const Matrix& local, const std::vector<Channel>& channels, long d, std::string name) {
    const long m = static_cast<long>(channels.size()) + 2;
    Mpo mpo;
    mpo.name = std::move(name);
    mpo.local_row = m - 1;
    mpo.local_col = 0;
    mpo.bulk = Tensor({m, m, d, d});
    auto put = [&](Tensor& t, long row, long col, const Matrix& op) {
        for (long sp = 0; sp < d; ++sp)
            for (long s = 0; s < d; ++s)
                t.at({row, col, sp, s}) += op(sp, s);
    };
    const Matrix id = Matrix::Identity(d, d);
    put(mpo.bulk, 0, 0, id);
    put(mpo.bulk, m - 1, m - 1, id);
    put(mpo.bulk, m - 1, 0, local);
    for (long c = 0; c < static_cast<long>(channels.size()); ++c) {
        const long slot = 1 + c;
        put(mpo.bulk, slot, 0, channels[static_cast<std::size_t>(c)].close);
        put(mpo.bulk, m - 1, slot, channels[static_cast<std::size_t>(c)].create);
        if (channels[static_cast<std::size_t>(c)].decay != 0.0)
            put(mpo.bulk, slot, slot, channels[static_cast<std::size_t>(c)].decay * id);
    }
    // first site carries nothing to its left: bottom row of the bulk
    mpo.left_boundary = Tensor({m, d, d});
    for (long col = 0; col < m; ++col)
        for (long sp = 0; sp < d; ++sp)
            for (long s = 0; s < d; ++s)
                mpo.left_boundary.at({col, sp, s}) = mpo.bulk.at({m - 1, col, sp, s});
    // last site closes everything: first column of the bulk
    mpo.right_boundary = Tensor({m, d, d});
    for (long row = 0; row < m; ++row)
        for (long sp = 0; sp < d; ++sp)
            for (long s = 0; s < d; ++s)
                mpo.right_boundary.at({row, sp, s}) = mpo.bulk.at({row, 0, sp, s});
    return mpo;
}

} // namespace

Mpo build_ising_mpo(double j, double h) {
    const Matrix sx = pauli_x(), sz = pauli_z();
    const Matrix local = -h * sx;
    std::vector<Channel> channels{{sz, -j * sz, 0.0}};
    Mpo mpo = assemble(local, channels, 2, "ising");
    mpo.terms.local = local;
    mpo.terms.pairs.push_back({sz, sz, {-j}, {0.0}});
    return mpo;
}

Mpo build_heisenberg_mpo(double jx, double jy, double jz) {
    const Matrix sx = pauli_x(), sy = pauli_y(), sz = pauli_z();
    const Matrix zero = Matrix::Zero(2, 2);
    std::vector<Channel> channels{{sx, jx * sx, 0.0}, {sy, jy * sy, 0.0}, {sz, jz * sz, 0.0}};
    Mpo mpo = assemble(zero, channels, 2, "heisenberg");
    mpo.terms.local = zero;
    mpo.terms.pairs.push_back({sx, sx, {jx}, {0.0}});
    mpo.terms.pairs.push_back({sy, sy, {jy}, {0.0}});
    mpo.terms.pairs.push_back({sz, sz, {jz}, {0.0}});
    return mpo;
}

Mpo build_exp_decay_mpo(double j, double lambda) {
    if (std::abs(lambda) >= 1.0)
        throw PreconditionError("build_exp_decay_mpo: |lambda| must be < 1");
    const Matrix sz = pauli_z();
    std::vector<Channel> channels{{sz, j * sz, lambda}};
    Mpo mpo = assemble(Matrix::Zero(2, 2), channels, 2, "exp_decay");
    mpo.terms.local = Matrix::Zero(2, 2);
    mpo.terms.pairs.push_back({sz, sz, {j}, {lambda}});
    return mpo;
}

Mpo build_dipolar_bose_hubbard_mpo(double v, double u, double mu, double t, int n_max,
                                   const ExpSumFit& fit) {
    if (n_max < 1) throw PreconditionError("build_dipolar_bose_hubbard_mpo: n_max must be >= 1");
    if (fit.count() < 1) throw PreconditionError("build_dipolar_bose_hubbard_mpo: empty fit");
    const long d = n_max + 1;
    const Matrix c = boson_annihilator(n_max);
    const Matrix cdag = c.adjoint();
    const Matrix n = boson_number(n_max);
    const Matrix id = Matrix::Identity(d, d);
    const Matrix local = 0.5 * u * (n * n - n) - mu * n;

    std::vector<Channel> channels;
    channels.push_back({cdag, -t * c, 0.0});
    channels.push_back({c, -t * cdag, 0.0});
    for (int p = 0; p < fit.count(); ++p)
        channels.push_back({n, v * fit.weights[static_cast<std::size_t>(p)] * n,
                            fit.rates[static_cast<std::size_t>(p)]});

    Mpo mpo = assemble(local, channels, d, "dipolar_bose_hubbard");
    mpo.terms.local = local;
    mpo.terms.pairs.push_back({cdag, c, {-t}, {0.0}});
    mpo.terms.pairs.push_back({c, cdag, {-t}, {0.0}});
    PairInteraction density{n, n, {}, {}};
    for (int p = 0; p < fit.count(); ++p) {
        density.weights.push_back(v * fit.weights[static_cast<std::size_t>(p)]);
        density.rates.push_back(fit.rates[static_cast<std::size_t>(p)]);
    }
    mpo.terms.pairs.push_back(std::move(density));
    return mpo;
}

void add_local_term(Mpo& mpo, const Matrix& op) {
    const long d = mpo.phys_dim();
    if (op.rows() != d || op.cols() != d)
        throw DimensionError("add_local_term: operator dimension mismatch");
    for (long sp = 0; sp < d; ++sp)
        for (long s = 0; s < d; ++s) {
            mpo.bulk.at({mpo.local_row, mpo.local_col, sp, s}) += op(sp, s);
            // boundary rows mirror the bulk slots they were cut from
            mpo.left_boundary.at({mpo.local_col, sp, s}) += op(sp, s);
            mpo.right_boundary.at({mpo.local_row, sp, s}) += op(sp, s);
        }
    if (mpo.terms.local.size() == 0) mpo.terms.local = Matrix::Zero(d, d);
    mpo.terms.local += op;
}

Matrix mpo_to_dense(const Mpo& mpo, int n_sites) {
    if (n_sites < 2) throw DimensionError("mpo_to_dense: need at least 2 sites");
    const long m = mpo.bond_dim(), d = mpo.phys_dim();
    auto slot_matrix = [&](const Tensor& t, long row, long col) {
        Matrix op(d, d);
        for (long sp = 0; sp < d; ++sp)
            for (long s = 0; s < d; ++s)
                op(sp, s) = (t.rank() == 4) ? t.at({row, col, sp, s}) : t.at({row, sp, s});
        return op;
    };
    // running vector over slots of dense operators on sites 1..k
    std::vector<Matrix> acc(static_cast<std::size_t>(m));
    for (long slot = 0; slot < m; ++slot) acc[static_cast<std::size_t>(slot)] = slot_matrix(mpo.left_boundary, slot, 0);
    for (int site = 2; site <= n_sites - 1; ++site) {
        std::vector<Matrix> next(static_cast<std::size_t>(m));
        const long dim = acc[0].rows();
        for (long col = 0; col < m; ++col) next[static_cast<std::size_t>(col)] = Matrix::Zero(dim * d, dim * d);
        for (long row = 0; row < m; ++row)
            for (long col = 0; col < m; ++col) {
                Matrix op = slot_matrix(mpo.bulk, row, col);
                if (op.norm() == 0.0) continue;
                next[static_cast<std::size_t>(col)] +=
                    Eigen::kroneckerProduct(acc[static_cast<std::size_t>(row)], op);
            }
        acc = std::move(next);
    }
    const long dim = acc[0].rows();
    Matrix h = Matrix::Zero(dim * d, dim * d);
    for (long row = 0; row < m; ++row) {
        Matrix op = slot_matrix(mpo.right_boundary, row, 0);
        if (op.norm() == 0.0) continue;
        h += Eigen::kroneckerProduct(acc[static_cast<std::size_t>(row)], op);
    }
    return h;
}

} // namespace imps
