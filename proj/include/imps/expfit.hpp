#pragma once

#include <iosfwd>
#include <vector>

namespace imps {

/// Weighted sum of decaying exponentials f(r) = sum_i a_i * rate_i^(r-1),
/// r = 1, 2, 3, ...  All rates strictly inside (0,1).
struct ExpSumFit {
    std::vector<double> weights; // a_i
    std::vector<double> rates;   // lambda_i in (0,1)
    double max_rel_error = 0.0;  // actual maximum over r = 1..r_max
    long r_max = 0;              // fitting range

    int count() const { return static_cast<int>(weights.size()); }
    double eval(long r) const;

    /// Text round-trip, 17 significant digits per value.
    void save(std::ostream& os) const;
    static ExpSumFit load(std::istream& is);
};

struct FitOptions {
    int max_iterations = 400;
    double error_ceiling = 0.1; // FitError beyond this
    bool refine = true;          // Gauss-Newton refinement after the init
};

/// Approximate r^(-k) over r = 1..r_max by n_exp exponentials, minimizing
/// the relative error. Initialized from a quadrature discretization of the
/// Gamma-function integral representation, then refined.
ExpSumFit fit_power_law(double k, int n_exp, long r_max, const FitOptions& opts = {});

/// Same machinery on tabulated samples g(1..r_max) (samples[r-1] = g(r)).
ExpSumFit fit_exponential_sum(const std::vector<double>& samples, int n_exp,
                              const FitOptions& opts = {});

} // namespace imps
