#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "imps/config.hpp"
#include "imps/engine.hpp"

namespace imps {

// Exit codes shared by the command drivers.
inline constexpr int exit_ok = 0;
inline constexpr int exit_failure = 1; // invariant / convergence failure
inline constexpr int exit_usage = 2;   // usage / config error

struct SolveOutcome {
    bool converged = false;
    double energy_site = 0;
    int periodicity = 0;
    double entropy_bits = 0;
    double density = 0;
    int rounds = 0;
    std::string checkpoint_path;
};

/// Full solve: engine to convergence (or cap), step stream + checkpoint +
/// summary into out_dir. resume_path restores and continues a checkpoint.
SolveOutcome run_solve(const RunConfig& config, const std::string& resume_path,
                       std::ostream& log);
int cmd_solve(const RunConfig& config, const std::string& resume_path, std::ostream& log);

struct SweepPoint {
    double t = 0, mu = 0;
    double density = 0;
    int periodicity = 0;
    double energy_site = 0;
    double entropy_bits = 0;
    bool converged = false;
    int rounds = 0;
};

/// Independent solves over the (t, mu) grid; rows sorted by (t, mu) so the
/// emitted CSV is byte-identical for any worker count.
std::vector<SweepPoint> run_sweep(const RunConfig& config, int workers);
int cmd_sweep(const RunConfig& config, std::ostream& log);

void write_sweep_csv(const std::vector<SweepPoint>& points, const std::string& echo,
                     std::ostream& os);

struct AnalyzeRequest {
    bool density = false;
    bool profile = false;
    bool entropy = false;
    bool periodicity = false;
    long correlation_nn = 0; // r_max, 0 = off
    long correlation_cc = 0;
    long luttinger_lo = 0, luttinger_hi = 0;
    bool select_density = false; // symmetry-broken profile via center choice
};

int cmd_analyze(const std::string& checkpoint_path, const AnalyzeRequest& request,
                std::ostream& out, std::ostream& log);

struct ValidationCheck {
    std::string name;
    std::function<bool(std::ostream&)> runner;
};

std::vector<ValidationCheck> validation_checks(bool inject_mpo_defect = false);
int cmd_validate(bool list_only, bool inject_mpo_defect, std::ostream& out);

} // namespace imps
