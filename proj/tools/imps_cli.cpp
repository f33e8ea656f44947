#include <CLI11.hpp>
#include <iostream>

#include "imps/run.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Infinite 1D lattice ground states with long-range interactions"};
    app.require_subcommand(1);

    std::string config_path, resume_path, out_dir, checkpoint_path;
    long chi_override = 0;
    long max_rounds_override = 0;
    long seed_override = -1;
    int workers = 0;

    auto add_common = [&](CLI::App* cmd, bool needs_config) {
        auto* opt = cmd->add_option("--config", config_path, "run configuration file");
        if (needs_config) opt->required();
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--chi", chi_override, "override bond dimension");
        cmd->add_option("--max-rounds", max_rounds_override, "override round cap");
        cmd->add_option("--seed", seed_override, "override RNG seed");
        cmd->add_option("--workers", workers, "parallel workers (sweep)");
    };

    CLI::App* solve = app.add_subcommand("solve", "run one ground-state search");
    add_common(solve, true);
    solve->add_option("--resume", resume_path, "continue from a checkpoint");

    CLI::App* sweep = app.add_subcommand("sweep", "independent solves over a (t, mu) grid");
    add_common(sweep, true);

    CLI::App* analyze = app.add_subcommand("analyze", "post-convergence analysis of a checkpoint");
    analyze->add_option("checkpoint", checkpoint_path, "checkpoint file")->required();
    bool a_density = false, a_profile = false, a_entropy = false, a_period = false,
         a_select = false;
    long a_nn = 0, a_cc = 0;
    std::string a_luttinger;
    analyze->add_flag("--density", a_density, "mean density");
    analyze->add_flag("--profile", a_profile, "density over one period");
    analyze->add_flag("--entropy", a_entropy, "half-chain entropy (bits)");
    analyze->add_flag("--periodicity", a_period, "spatial period q");
    analyze->add_flag("--select-density", a_select, "symmetry-broken profile (max density)");
    analyze->add_option("--nn", a_nn, "density-density correlations up to r");
    analyze->add_option("--cc", a_cc, "hopping correlations up to r");
    analyze->add_option("--luttinger", a_luttinger, "fit window lo:hi");

    CLI::App* validate = app.add_subcommand("validate", "built-in consistency checks");
    bool v_list = false, v_inject = false;
    validate->add_flag("--list", v_list, "list available checks");
    validate->add_flag("--inject-mpo-defect", v_inject, "corrupt an operator slot (self-test)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? imps::exit_ok : imps::exit_usage;
    }

    try {
        if (solve->parsed() || sweep->parsed()) {
            imps::RunConfig config = imps::RunConfig::from_file(config_path);
            if (!out_dir.empty()) config.out_dir = out_dir;
            if (chi_override > 0) config.engine.chi = chi_override;
            if (max_rounds_override > 0) config.engine.max_rounds = static_cast<int>(max_rounds_override);
            if (seed_override >= 0) config.engine.seed = static_cast<std::uint64_t>(seed_override);
            if (workers > 0) config.workers = workers;
            if (solve->parsed()) return imps::cmd_solve(config, resume_path, std::cout);
            return imps::cmd_sweep(config, std::cout);
        }
        if (analyze->parsed()) {
            imps::AnalyzeRequest req;
            req.density = a_density;
            req.profile = a_profile;
            req.entropy = a_entropy;
            req.periodicity = a_period;
            req.select_density = a_select;
            req.correlation_nn = a_nn;
            req.correlation_cc = a_cc;
            if (!a_luttinger.empty()) {
                const auto colon = a_luttinger.find(':');
                if (colon == std::string::npos) {
                    std::cout << "error: --luttinger expects lo:hi\n";
                    return imps::exit_usage;
                }
                req.luttinger_lo = std::stol(a_luttinger.substr(0, colon));
                req.luttinger_hi = std::stol(a_luttinger.substr(colon + 1));
            }
            return imps::cmd_analyze(checkpoint_path, req, std::cout, std::cerr);
        }
        if (validate->parsed()) return imps::cmd_validate(v_list, v_inject, std::cout);
    } catch (const imps::FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return imps::exit_usage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return imps::exit_failure;
    }
    return imps::exit_usage;
}
