#include "imps/expfit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "imps/errors.hpp"

namespace imps {

double ExpSumFit::eval(long r) const {
    double f = 0;
    for (std::size_t i = 0; i < weights.size(); ++i)
        f += weights[i] * std::pow(rates[i], static_cast<double>(r - 1));
    return f;
}

void ExpSumFit::save(std::ostream& os) const {
    os << std::setprecision(17);
    os << "n_exp " << count() << "\n";
    os << "r_max " << r_max << "\n";
    os << "max_rel_error " << max_rel_error << "\n";
    for (int i = 0; i < count(); ++i) os << weights[i] << " " << rates[i] << "\n";
}

ExpSumFit ExpSumFit::load(std::istream& is) {
    ExpSumFit fit;
    std::string key;
    int n = 0;
    if (!(is >> key >> n) || key != "n_exp") throw FormatError("ExpSumFit: bad header");
    if (!(is >> key >> fit.r_max) || key != "r_max") throw FormatError("ExpSumFit: bad header");
    if (!(is >> key >> fit.max_rel_error) || key != "max_rel_error")
        throw FormatError("ExpSumFit: bad header");
    fit.weights.resize(n);
    fit.rates.resize(n);
    for (int i = 0; i < n; ++i)
        if (!(is >> fit.weights[i] >> fit.rates[i])) throw FormatError("ExpSumFit: truncated data");
    return fit;
}

namespace {

double max_rel_error_on(const std::vector<double>& g, const ExpSumFit& fit) {
    double worst = 0;
    for (std::size_t r = 1; r <= g.size(); ++r)
        worst = std::max(worst, std::abs(fit.eval(static_cast<long>(r)) - g[r - 1]) /
                                    std::abs(g[r - 1]));
    return worst;
}

// Trapezoid discretization of r^{-k} = 1/Gamma(k) Int t^{k-1} e^{-rt} dt in
// log-t. Yields positive weights and rates in (0,1) for any node placement.
ExpSumFit quadrature_init(double k, int n, long r_max) {
    // node range chosen so every rate stays well inside (0,1); the extreme
    // tails contribute negligibly after the weight re-solve
    const double u_min = std::log(k / static_cast<double>(r_max)) - 6.0 / k;
    const double u_max = std::log(5.0 + k);
    const double h = (u_max - u_min) / (n - 1 > 0 ? n - 1 : 1);
    ExpSumFit fit;
    fit.r_max = r_max;
    const double gamma_k = std::tgamma(k);
    for (int i = 0; i < n; ++i) {
        const double u = u_min + h * i;
        const double t = std::exp(u);
        const double lam = std::exp(-t);
        const double w = h * std::exp(k * u) / gamma_k; // weight for e^{-r t}
        fit.rates.push_back(lam);
        fit.weights.push_back(w * lam); // a * lam^{r-1} = w * e^{-r t}
    }
    return fit;
}

// Prony-style init for tabulated data: estimate rates from a shift-invariant
// linear prediction solved by least squares, then weights by linear lsq.
ExpSumFit prony_init(const std::vector<double>& g, int n) {
    const long m = static_cast<long>(g.size());
    ExpSumFit fit;
    fit.r_max = m;
    if (n == 1) {
        double lam = (m >= 2 && g[0] != 0.0) ? g[1] / g[0] : 0.5;
        lam = std::clamp(lam, 1e-12, 1.0 - 1e-12);
        fit.rates = {lam};
        fit.weights = {g[0]};
        return fit;
    }
    const long rows = std::min<long>(m - n, 4L * n);
    if (rows < n) throw FitError("fit: too few samples for requested n_exp");
    Eigen::MatrixXd a(rows, n);
    Eigen::VectorXd b(rows);
    for (long i = 0; i < rows; ++i) {
        for (int j = 0; j < n; ++j) a(i, j) = g[static_cast<std::size_t>(i + n - 1 - j)];
        b(i) = g[static_cast<std::size_t>(i + n)];
    }
    Eigen::VectorXd coef = a.colPivHouseholderQr().solve(b);
    // roots of x^n - c0 x^{n-1} - ... - c_{n-1} via companion matrix
    Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(n, n);
    for (int j = 0; j < n; ++j) comp(0, j) = coef(j);
    for (int j = 1; j < n; ++j) comp(j, j - 1) = 1.0;
    Eigen::EigenSolver<Eigen::MatrixXd> es(comp);
    for (int j = 0; j < n; ++j) {
        double lam = es.eigenvalues()(j).real();
        if (!(std::isfinite(lam))) lam = 0.5;
        lam = std::clamp(lam, 1e-12, 1.0 - 1e-12);
        fit.rates.push_back(lam);
    }
    std::sort(fit.rates.begin(), fit.rates.end());
    fit.rates.erase(std::unique(fit.rates.begin(), fit.rates.end(),
                                [](double x, double y) { return std::abs(x - y) < 1e-14; }),
                    fit.rates.end());
    while (static_cast<int>(fit.rates.size()) < n)
        fit.rates.push_back(std::clamp(fit.rates.back() * 0.7, 1e-12, 1.0 - 1e-12));
    // linear least squares for the weights, relative metric
    Eigen::MatrixXd v(m, n);
    Eigen::VectorXd rhs(m);
    for (long r = 1; r <= m; ++r) {
        const double gref = std::abs(g[static_cast<std::size_t>(r - 1)]);
        const double w = gref > 0 ? 1.0 / gref : 1.0;
        for (int j = 0; j < n; ++j)
            v(r - 1, j) = std::pow(fit.rates[static_cast<std::size_t>(j)], double(r - 1)) * w;
        rhs(r - 1) = g[static_cast<std::size_t>(r - 1)] * w;
    }
    Eigen::VectorXd wts = v.colPivHouseholderQr().solve(rhs);
    fit.weights.assign(wts.data(), wts.data() + n);
    return fit;
}

// Given rates, the optimal weights in the relative-error least-squares
// sense solve a linear system; cheap and a large quality gain.
void polish_weights(ExpSumFit& fit, const std::vector<double>& g) {
    const long m = static_cast<long>(g.size());
    const int n = fit.count();
    Eigen::MatrixXd v(m, n);
    Eigen::VectorXd rhs = Eigen::VectorXd::Ones(m);
    for (long r = 1; r <= m; ++r)
        for (int j = 0; j < n; ++j)
            v(r - 1, j) = std::pow(fit.rates[static_cast<std::size_t>(j)], double(r - 1)) /
                          g[static_cast<std::size_t>(r - 1)];
    Eigen::VectorXd w = v.colPivHouseholderQr().solve(rhs);
    ExpSumFit candidate = fit;
    candidate.weights.assign(w.data(), w.data() + n);
    if (max_rel_error_on(g, candidate) < max_rel_error_on(g, fit))
        fit.weights = candidate.weights;
}

// Weights-only Lawson iteration: for fixed rates the minimax weight problem
// is linear, and iteratively reweighted least squares homes in on the
// equal-ripple solution.
void lawson_weights(ExpSumFit& fit, const std::vector<double>& g, int rounds) {
    const long m = static_cast<long>(g.size());
    const int n = fit.count();
    Eigen::MatrixXd v(m, n);
    for (long r = 1; r <= m; ++r)
        for (int j = 0; j < n; ++j)
            v(r - 1, j) = std::pow(fit.rates[static_cast<std::size_t>(j)], double(r - 1)) /
                          g[static_cast<std::size_t>(r - 1)];
    Eigen::VectorXd omega = Eigen::VectorXd::Ones(m);
    ExpSumFit best = fit;
    double best_err = max_rel_error_on(g, fit);
    Eigen::VectorXd a(n);
    for (int j = 0; j < n; ++j) a(j) = fit.weights[static_cast<std::size_t>(j)];
    for (int round = 0; round < rounds; ++round) {
        Eigen::VectorXd sw = omega.cwiseSqrt();
        Eigen::MatrixXd vw = sw.asDiagonal() * v;
        a = vw.colPivHouseholderQr().solve(sw);
        Eigen::VectorXd resid = (v * a - Eigen::VectorXd::Ones(m)).cwiseAbs();
        ExpSumFit trial = fit;
        trial.weights.assign(a.data(), a.data() + n);
        const double err = resid.maxCoeff();
        if (err < best_err) {
            best = trial;
            best_err = err;
        }
        omega = omega.cwiseProduct(resid.cwiseMax(1e-15));
        omega *= static_cast<double>(m) / omega.sum();
    }
    fit = best;
}

// Joint damped Gauss-Newton on log residuals for strictly positive targets.
// Both weights and rates live in log-type coordinates, so positivity and
// the (0,1) rate window are built into the parametrization and the residual
// scale is balanced across the full dynamic range of the target.
bool refine_log_joint(ExpSumFit& fit, const std::vector<double>& g, int max_iterations,
                      const Eigen::VectorXd* row_weights = nullptr) {
    if (!std::all_of(g.begin(), g.end(), [](double v) { return v > 0; })) return false;
    if (!std::all_of(fit.weights.begin(), fit.weights.end(), [](double v) { return v > 0; }))
        return false;
    const long m = static_cast<long>(g.size());
    const int n = fit.count();
    auto logit = [](double x) { return std::log(x / (1.0 - x)); };
    auto sigm = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };

    Eigen::VectorXd theta(2 * n);
    for (int j = 0; j < n; ++j) {
        theta(j) = std::log(fit.weights[static_cast<std::size_t>(j)]);
        theta(n + j) = logit(std::clamp(fit.rates[static_cast<std::size_t>(j)], 1e-12, 1.0 - 1e-12));
    }
    auto unpack = [&](const Eigen::VectorXd& th, std::vector<double>& a, std::vector<double>& lam) {
        a.resize(n);
        lam.resize(n);
        for (int j = 0; j < n; ++j) {
            a[j] = std::exp(std::min(th(j), 700.0));
            lam[j] = std::clamp(sigm(th(n + j)), 1e-12, 1.0 - 1e-12);
        }
    };
    auto row_weight = [&](long r) { return row_weights ? (*row_weights)(r - 1) : 1.0; };
    auto cost_of = [&](const std::vector<double>& a, const std::vector<double>& lam) {
        double c = 0;
        for (long r = 1; r <= m; ++r) {
            double f = 0;
            for (int j = 0; j < n; ++j) f += a[j] * std::pow(lam[j], double(r - 1));
            const double rho = std::log(f / g[static_cast<std::size_t>(r - 1)]);
            if (!std::isfinite(rho)) return std::numeric_limits<double>::infinity();
            c += row_weight(r) * rho * rho;
        }
        return c;
    };

    std::vector<double> a, lam;
    unpack(theta, a, lam);
    double cost = cost_of(a, lam);
    if (!std::isfinite(cost)) return false;
    double mu = 1e-4;

    Eigen::MatrixXd jac(m, 2 * n);
    Eigen::VectorXd res(m);
    for (int iter = 0; iter < max_iterations; ++iter) {
        for (long r = 1; r <= m; ++r) {
            double f = 0;
            std::vector<double> powers(n);
            for (int j = 0; j < n; ++j) {
                powers[j] = std::pow(lam[j], double(r - 1));
                f += a[j] * powers[j];
            }
            const double sw = std::sqrt(row_weight(r));
            for (int j = 0; j < n; ++j) {
                jac(r - 1, j) = sw * a[j] * powers[j] / f;
                const double dp =
                    (r - 1) <= 0 ? 0.0 : a[j] * (r - 1) * std::pow(lam[j], double(r - 2));
                jac(r - 1, n + j) = sw * dp * lam[j] * (1.0 - lam[j]) / f;
            }
            res(r - 1) = sw * std::log(f / g[static_cast<std::size_t>(r - 1)]);
        }
        Eigen::MatrixXd h = jac.transpose() * jac;
        Eigen::VectorXd grad = jac.transpose() * res;
        const double diag_scale = std::max(h.diagonal().cwiseAbs().maxCoeff(), 1e-300);
        bool stepped = false;
        for (int attempt = 0; attempt < 20; ++attempt) {
            Eigen::MatrixXd hd = h;
            hd.diagonal().array() += mu * (h.diagonal().array().abs() + 1e-10 * diag_scale);
            Eigen::VectorXd delta = hd.ldlt().solve(-grad);
            if (!delta.allFinite()) {
                mu *= 10.0;
                continue;
            }
            Eigen::VectorXd trial = theta + delta;
            std::vector<double> ta, tlam;
            unpack(trial, ta, tlam);
            const double tc = cost_of(ta, tlam);
            if (std::isfinite(tc) && tc < cost) {
                const double gain = (cost - tc) / std::max(cost, 1e-300);
                theta = trial;
                a = ta;
                lam = tlam;
                cost = tc;
                mu = std::max(mu * 0.3, 1e-14);
                stepped = true;
                if (gain < 1e-14) iter = max_iterations;
                break;
            }
            mu *= 10.0;
        }
        if (!stepped) break;
    }
    fit.weights = a;
    fit.rates = lam;
    return true;
}

// Joint damped Gauss-Newton fallback for sign-mixed tabulated data.
void refine(ExpSumFit& fit, const std::vector<double>& g, int max_iterations) {
    const long m = static_cast<long>(g.size());
    const int n = fit.count();
    auto logit = [](double x) { return std::log(x / (1.0 - x)); };
    auto sigm = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };

    Eigen::VectorXd theta(2 * n);
    for (int j = 0; j < n; ++j) {
        theta(j) = std::log(std::max(fit.weights[j], 1e-300));
        theta(n + j) = logit(std::clamp(fit.rates[j], 1e-12, 1.0 - 1e-12));
    }
    // weights may be negative for tabulated data; remember signs
    std::vector<double> sign(n, 1.0);
    for (int j = 0; j < n; ++j)
        if (fit.weights[j] < 0) {
            sign[j] = -1.0;
            theta(j) = std::log(-fit.weights[j]);
        }

    auto unpack = [&](const Eigen::VectorXd& th, std::vector<double>& a, std::vector<double>& lam) {
        a.resize(n);
        lam.resize(n);
        for (int j = 0; j < n; ++j) {
            a[j] = sign[j] * std::exp(th(j));
            lam[j] = std::clamp(sigm(th(n + j)), 1e-12, 1.0 - 1e-12);
        }
    };
    bool log_mode = std::all_of(g.begin(), g.end(), [](double v) { return v > 0; }) &&
                    std::all_of(sign.begin(), sign.end(), [](double s) { return s > 0; });

    auto cost_of = [&](const std::vector<double>& a, const std::vector<double>& lam) {
        double c = 0;
        for (long r = 1; r <= m; ++r) {
            double f = 0;
            for (int j = 0; j < n; ++j) f += a[j] * std::pow(lam[j], double(r - 1));
            double rho;
            if (log_mode) {
                if (!(f > 0)) return std::numeric_limits<double>::infinity();
                rho = std::log(f / g[r - 1]);
            } else {
                rho = (f - g[r - 1]) / g[r - 1];
            }
            c += rho * rho;
        }
        return c;
    };

    std::vector<double> a, lam;
    unpack(theta, a, lam);
    double cost = cost_of(a, lam);
    double mu = 1e-6;

    Eigen::MatrixXd jac(m, 2 * n);
    Eigen::VectorXd res(m);
    for (int iter = 0; iter < max_iterations; ++iter) {
        for (long r = 1; r <= m; ++r) {
            double f = 0;
            std::vector<double> powers(n);
            for (int j = 0; j < n; ++j) {
                powers[j] = std::pow(lam[j], double(r - 1));
                f += a[j] * powers[j];
            }
            const double denom = log_mode ? f : g[r - 1];
            for (int j = 0; j < n; ++j) {
                jac(r - 1, j) = a[j] * powers[j] / denom; // d/d log|a|
                const double dp =
                    (r - 1) <= 0 ? 0.0 : a[j] * (r - 1) * std::pow(lam[j], double(r - 2));
                jac(r - 1, n + j) = dp * lam[j] * (1.0 - lam[j]) / denom;
            }
            res(r - 1) = log_mode ? std::log(f / g[r - 1]) : (f - g[r - 1]) / g[r - 1];
        }
        Eigen::MatrixXd h = jac.transpose() * jac;
        Eigen::VectorXd grad = jac.transpose() * res;
        bool stepped = false;
        for (int attempt = 0; attempt < 12; ++attempt) {
            Eigen::MatrixXd hd = h;
            hd.diagonal().array() += mu * (h.diagonal().array().abs() + 1e-12);
            Eigen::VectorXd delta = hd.ldlt().solve(-grad);
            Eigen::VectorXd trial = theta + delta;
            std::vector<double> ta, tlam;
            unpack(trial, ta, tlam);
            const double tc = cost_of(ta, tlam);
            if (std::isfinite(tc) && tc < cost) {
                theta = trial;
                a = ta;
                lam = tlam;
                const double gain = (cost - tc) / std::max(cost, 1e-300);
                cost = tc;
                mu = std::max(mu * 0.35, 1e-12);
                stepped = true;
                if (gain < 1e-14) iter = max_iterations; // converged
                break;
            }
            mu *= 8.0;
        }
        if (!stepped) break;
    }
    fit.weights = a;
    fit.rates = lam;
}

ExpSumFit finish(ExpSumFit fit, const std::vector<double>& g, const FitOptions& opts) {
    if (opts.refine) {
        if (refine_log_joint(fit, g, opts.max_iterations)) {
            // Lawson-style reweighting pulls the least-squares solution
            // toward the equal-ripple (minimax) one; two sweeps, each
            // followed by the exact weights-only polish
            const long m = static_cast<long>(g.size());
            for (int sweep = 0; sweep < 2; ++sweep) {
                Eigen::VectorXd w = Eigen::VectorXd::Ones(m);
                ExpSumFit best = fit;
                double best_err = max_rel_error_on(g, best);
                for (int round = 0; round < 30; ++round) {
                    Eigen::VectorXd resid(m);
                    for (long r = 1; r <= m; ++r)
                        resid(r - 1) = std::abs(fit.eval(r) - g[static_cast<std::size_t>(r - 1)]) /
                                       g[static_cast<std::size_t>(r - 1)];
                    w = w.cwiseProduct(resid.cwiseMax(1e-14));
                    w *= static_cast<double>(m) / w.sum();
                    if (!refine_log_joint(fit, g, 80, &w)) break;
                    const double err = max_rel_error_on(g, fit);
                    if (err < best_err) {
                        best = fit;
                        best_err = err;
                    }
                }
                fit = best;
                lawson_weights(fit, g, 60);
            }
        } else {
            refine(fit, g, opts.max_iterations);
        }
        polish_weights(fit, g);
    }
    fit.r_max = static_cast<long>(g.size());
    fit.max_rel_error = max_rel_error_on(g, fit);
    if (!std::isfinite(fit.max_rel_error) || fit.max_rel_error > opts.error_ceiling) {
        std::ostringstream os;
        os << "fit: max relative error " << fit.max_rel_error << " exceeds ceiling "
           << opts.error_ceiling << " (n_exp=" << fit.count() << ", r_max=" << fit.r_max << ")";
        throw FitError(os.str());
    }
    for (double lam : fit.rates)
        if (!(lam > 0.0 && lam < 1.0)) throw FitError("fit: rate escaped (0,1)");
    return fit;
}

} // namespace

ExpSumFit fit_power_law(double k, int n_exp, long r_max, const FitOptions& opts) {
    if (!(k > 0)) throw PreconditionError("fit_power_law: exponent must be positive");
    if (n_exp < 1) throw PreconditionError("fit_power_law: n_exp must be >= 1");
    if (r_max < 2 * n_exp) throw PreconditionError("fit_power_law: r_max must be >= 2*n_exp");
    std::vector<double> g(static_cast<std::size_t>(r_max));
    for (long r = 1; r <= r_max; ++r)
        g[static_cast<std::size_t>(r - 1)] = std::pow(static_cast<double>(r), -k);
    return finish(quadrature_init(k, n_exp, r_max), g, opts);
}

ExpSumFit fit_exponential_sum(const std::vector<double>& samples, int n_exp,
                              const FitOptions& opts) {
    if (n_exp < 1) throw PreconditionError("fit_exponential_sum: n_exp must be >= 1");
    if (static_cast<long>(samples.size()) < 2 * n_exp)
        throw PreconditionError("fit_exponential_sum: need at least 2*n_exp samples");
    for (double v : samples)
        if (v == 0.0 || !std::isfinite(v))
            throw PreconditionError("fit_exponential_sum: samples must be finite and nonzero");
    return finish(prony_init(samples, n_exp), samples, opts);
}

} // namespace imps
