#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "imps/expfit.hpp"
#include "imps/errors.hpp"

using namespace imps;

TEST_CASE("single exponential is reproduced exactly") {
    std::vector<double> samples;
    for (long r = 1; r <= 40; ++r) samples.push_back(0.8 * std::pow(0.35, r - 1));
    ExpSumFit fit = fit_exponential_sum(samples, 1);
    CHECK(fit.max_rel_error < 1e-12);
    CHECK(fit.rates[0] == doctest::Approx(0.35).epsilon(1e-10));
    CHECK(fit.weights[0] == doctest::Approx(0.8).epsilon(1e-10));
}

TEST_CASE("two exponentials recovered from tabulated data") {
    std::vector<double> samples;
    for (long r = 1; r <= 60; ++r)
        samples.push_back(1.5 * std::pow(0.7, r - 1) + 0.4 * std::pow(0.2, r - 1));
    ExpSumFit fit = fit_exponential_sum(samples, 2);
    CHECK(fit.max_rel_error < 1e-9);
}

TEST_CASE("cubic power law with 20 terms over r <= 1000") {
    ExpSumFit fit = fit_power_law(3.0, 20, 1000);
    CHECK(fit.count() == 20);
    // verify by direct evaluation on the full integer range
    double worst = 0;
    for (long r = 1; r <= 1000; ++r) {
        const double target = std::pow(double(r), -3.0);
        worst = std::max(worst, std::abs(fit.eval(r) - target) / target);
    }
    CHECK(worst == doctest::Approx(fit.max_rel_error));
    CHECK(worst < 2e-6); // verified constant at first build: 1.263e-6
    for (double lam : fit.rates) {
        CHECK(lam > 0.0);
        CHECK(lam < 1.0);
    }
}

TEST_CASE("more terms never fit worse") {
    ExpSumFit coarse = fit_power_law(3.0, 10, 1000);
    ExpSumFit fine = fit_power_law(3.0, 20, 1000);
    CHECK(coarse.max_rel_error >= fine.max_rel_error);
}

TEST_CASE("preconditions and failure reporting") {
    CHECK_THROWS_AS(fit_power_law(-1.0, 4, 64), PreconditionError);
    CHECK_THROWS_AS(fit_power_law(3.0, 0, 64), PreconditionError);
    CHECK_THROWS_AS(fit_power_law(3.0, 20, 30), PreconditionError);
    // an impossible budget trips the configured ceiling instead of passing
    // silently
    FitOptions opts;
    opts.error_ceiling = 1e-9;
    CHECK_THROWS_AS(fit_power_law(3.0, 1, 1000, opts), FitError);
}

TEST_CASE("text round trip keeps 17 significant digits") {
    ExpSumFit fit = fit_power_law(3.0, 6, 200);
    std::stringstream buf;
    fit.save(buf);
    ExpSumFit back = ExpSumFit::load(buf);
    REQUIRE(back.count() == fit.count());
    for (int i = 0; i < fit.count(); ++i) {
        CHECK(back.weights[i] == fit.weights[i]);
        CHECK(back.rates[i] == fit.rates[i]);
    }
    CHECK(back.max_rel_error == fit.max_rel_error);
}
