// Compares the OpenMP contraction kernel with the serial index-loop
// reference, on raw contractions and on the effective-operator application.
#include <chrono>
#include <cstdio>
#include <random>

#include <omp.h>

#include "imps/engine.hpp"
#include "imps/mpo.hpp"
#include "imps/tensor.hpp"

using namespace imps;

namespace {

Tensor random_tensor(std::vector<long> shape, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist;
    for (long i = 0; i < t.size(); ++i) t[i] = cx(dist(rng), dist(rng));
    return t;
}

template <typename F>
double time_ms(F&& f, int reps) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) f();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

} // namespace

int main() {
    std::mt19937_64 rng(42);
    std::printf("threads: %d\n\n", omp_get_max_threads());

    std::printf("%-34s %12s %12s %10s %12s\n", "case", "parallel/ms", "serial/ms", "speedup",
                "max |diff|");
    for (long chi : {16L, 32L, 64L}) {
        Tensor a = random_tensor({chi, chi, chi}, rng);
        Tensor b = random_tensor({chi, chi, chi}, rng);
        const std::vector<std::pair<long, long>> pairs{{2, 0}};
        Tensor fast = contract(a, b, pairs);
        Tensor slow = ref::contract(a, b, pairs);
        const double diff = max_abs_difference(fast, slow);
        const int reps = chi <= 32 ? 20 : 5;
        const double tp = time_ms([&] { contract(a, b, pairs); }, reps);
        const double ts = time_ms([&] { ref::contract(a, b, pairs); }, reps);
        std::printf("contract (%3ld,%3ld,%3ld)x(...)        %12.3f %12.3f %9.2fx %12.3e\n", chi,
                    chi, chi, tp, ts, ts / tp, diff);
    }

    ExpSumFit fit = fit_power_law(3.0, 8, 256);
    for (long chi : {16L, 32L}) {
        Mpo mpo = build_dipolar_bose_hubbard_mpo(1.0, 0.0, 0.5, 0.1, 1, fit);
        const long m = mpo.bond_dim(), d = mpo.phys_dim();
        Tensor env_l = random_tensor({chi, m, chi}, rng);
        Tensor env_r = random_tensor({chi, m, chi}, rng);
        Tensor site = random_tensor({chi, chi, d}, rng);
        EffectiveOperator op = assemble_effective(env_l, mpo, env_r);
        const double tp = time_ms([&] { op.apply(site); }, 40);
        std::printf("effective apply chi=%-3ld m=%-3ld       %12.3f %12s %10s %12s\n", chi, m, tp,
                    "-", "-", "-");
    }
    return 0;
}
