#pragma once

#include <string>
#include <vector>

#include "imps/expfit.hpp"
#include "imps/linalg.hpp"
#include "imps/tensor.hpp"

namespace imps {

/// One translation-invariant two-site interaction family:
///   sum_{i, r>=1} coeff(r) * op_a[i] op_b[i+r],
/// coeff(r) = sum_p weights[p] * rates[p]^(r-1); rate 0 makes the term
/// nearest-neighbor only (0^0 := 1).
struct PairInteraction {
    Matrix op_a, op_b;
    std::vector<double> weights;
    std::vector<double> rates;

    double coeff(long r) const;
    long max_range(double cutoff = 1e-16) const; // distance where coeff falls below cutoff
};

/// Physical term content of a Hamiltonian density; this is what observables
/// and per-site energies are measured against (the compiled operator below
/// may additionally carry constant shifts used by the engine).
struct HamiltonianTerms {
    Matrix local;
    std::vector<PairInteraction> pairs;
};

/// Translation-invariant matrix product operator in Schur form.
/// bulk axes: (mu_l, mu_r, s', s). Slot 0 accumulates the finished operator,
/// the last slot transports the identity; local terms live in the
/// bottom-left entry (local_row = m-1, local_col = 0). Boundary tensors have
/// axes (mu, s', s).
struct Mpo {
    Tensor bulk;
    Tensor left_boundary;
    Tensor right_boundary;
    long local_row = 0;
    long local_col = 0;
    HamiltonianTerms terms;
    std::string name;

    long bond_dim() const { return bulk.empty() ? 0 : bulk.extent(0); }
    long phys_dim() const { return bulk.empty() ? 0 : bulk.extent(2); }
};

/// -J sum sz.sz - h sum sx on spins-1/2 (bond dimension 3).
Mpo build_ising_mpo(double j, double h);

/// sum Jx sx.sx + Jy sy.sy + Jz sz.sz (bond dimension 5).
Mpo build_heisenberg_mpo(double jx, double jy, double jz);

/// J sum_{i>j} lambda^(i-j-1) sz_j.sz_i, |lambda| < 1 (bond dimension 3).
Mpo build_exp_decay_mpo(double j, double lambda);

/// Bose-Hubbard chain with a long-range density-density tail compiled from
/// the exponential-sum fit:
///   V sum_{k<j} K(j-k) n_k n_j + U/2 sum n(n-1) - mu sum n
///   - t sum (cdag_j c_{j+1} + c_j cdag_{j+1}),   K(r) = sum_p a_p lam_p^(r-1).
/// Local dimension n_max+1; bond dimension fit.count()+4.
Mpo build_dipolar_bose_hubbard_mpo(double v, double u, double mu, double t, int n_max,
                                   const ExpSumFit& fit);

/// Adds op to every site via the local slot of the bulk (and the matching
/// boundary entries), and to terms.local.
void add_local_term(Mpo& mpo, const Matrix& op);

/// Dense n-site operator from boundary . bulk^(n-2) . boundary. Exponential
/// in n; intended for validation at n <= 6.
Matrix mpo_to_dense(const Mpo& mpo, int n_sites);

/// Elementary operators used by the builders (handy for tests/analysis).
Matrix pauli_x();
Matrix pauli_y();
Matrix pauli_z();
Matrix boson_annihilator(int n_max);
Matrix boson_number(int n_max);

} // namespace imps
