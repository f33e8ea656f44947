#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "imps/checkpoint.hpp"
#include "imps/config.hpp"
#include "imps/run.hpp"

using namespace imps;

namespace {

std::string tiny_tfi_config(const std::string& out_dir, int max_rounds = 200) {
    std::ostringstream os;
    os << "[model]\n"
          "builder = ising\n"
          "J = 1.0\n"
          "h = 1.5\n"
          "[engine]\n"
          "chi = 8\n"
          "init_sites = 8\n"
          "conv_tol = 1e-8\n"
          "max_rounds = "
       << max_rounds
       << "\n"
          "[output]\n"
          "dir = "
       << out_dir << "\n";
    return os.str();
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() / ("imps_test_" + tag);
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

} // namespace

TEST_CASE("key value parsing") {
    SUBCASE("sections, comments and echo") {
        KeyValueFile kv = KeyValueFile::parse("# top comment\n"
                                              "[model]\n"
                                              "builder = ising   # trailing\n"
                                              "h = 1.5\n"
                                              "[engine]\n"
                                              "chi = 12\n");
        CHECK(kv.get("model", "builder") == "ising");
        CHECK(kv.get_double("model", "h") == doctest::Approx(1.5));
        CHECK(kv.get_long_or("engine", "chi", 0) == 12);
        CHECK(kv.get_or("engine", "missing", "fallback") == "fallback");
        CHECK(kv.echo().find("# chi = 12") != std::string::npos);
    }
    SUBCASE("errors carry line numbers") {
        CHECK_THROWS_WITH_AS(KeyValueFile::parse("[model]\nbuilder ising\n"),
                             doctest::Contains("line 2"), FormatError);
        KeyValueFile kv = KeyValueFile::parse("[model]\nh = abc\n");
        CHECK_THROWS_WITH_AS(kv.get_double("model", "h"), doctest::Contains("line 2"),
                             FormatError);
    }
    SUBCASE("grids") {
        std::vector<double> a = parse_grid("0:0.5:2");
        REQUIRE(a.size() == 5);
        CHECK(a[3] == doctest::Approx(1.5));
        std::vector<double> b = parse_grid("0.3, 0.7,0.9");
        REQUIRE(b.size() == 3);
        CHECK(b[2] == doctest::Approx(0.9));
        CHECK_THROWS_AS(parse_grid("0:2"), FormatError);
    }
    SUBCASE("unknown builder is rejected") {
        KeyValueFile kv = KeyValueFile::parse("[model]\nbuilder = bogus\n");
        CHECK_THROWS_AS(RunConfig::from_kv(kv), FormatError);
    }
}

TEST_CASE("solve driver") {
    TempDir dir("solve");
    std::ofstream(dir.path / "run.cfg") << tiny_tfi_config(dir.path.string());
    RunConfig config = RunConfig::from_file((dir.path / "run.cfg").string());
    std::ostringstream log;
    SolveOutcome outcome = run_solve(config, "", log);
    CHECK(outcome.converged);
    CHECK(outcome.periodicity == 1);
    CHECK(std::abs(outcome.energy_site + 1.6719262215) < 1e-7);
    CHECK(std::filesystem::exists(dir.path / "steps.csv"));
    CHECK(std::filesystem::exists(dir.path / "engine.ckpt"));

    // the step stream carries the config echo and one line per round
    std::ifstream steps(dir.path / "steps.csv");
    std::string line;
    int rows = 0;
    bool echoed = false;
    while (std::getline(steps, line)) {
        if (line.find("# builder = ising") != std::string::npos) echoed = true;
        if (!line.empty() && line[0] != '#' && line.find("round") == std::string::npos) ++rows;
    }
    CHECK(echoed);
    CHECK(rows == outcome.rounds);
}

TEST_CASE("resumed solve reproduces the uninterrupted result") {
    TempDir dir_a("resume_a"), dir_b("resume_b");
    std::ofstream(dir_a.path / "run.cfg") << tiny_tfi_config(dir_a.path.string());
    RunConfig full = RunConfig::from_file((dir_a.path / "run.cfg").string());
    std::ostringstream log;
    SolveOutcome straight = run_solve(full, "", log);

    RunConfig first = full;
    first.out_dir = dir_b.path.string();
    first.engine.max_rounds = 25;
    SolveOutcome partial = run_solve(first, "", log);
    CHECK_FALSE(partial.converged);
    RunConfig rest = full;
    rest.out_dir = dir_b.path.string();
    SolveOutcome resumed = run_solve(rest, partial.checkpoint_path, log);
    CHECK(resumed.converged);
    CHECK(std::abs(resumed.energy_site - straight.energy_site) < 1e-12);
    CHECK(resumed.rounds == straight.rounds);
}

TEST_CASE("sweep driver") {
    RunConfig config;
    config.model.builder = "dipolar_bose_hubbard";
    config.model.v = 1.0;
    config.model.u = -1.0; // hardcore
    config.model.n_exp = 4;
    config.model.fit_r_max = 64;
    config.engine.chi = 6;
    config.engine.init_sites = 6;
    config.engine.max_rounds = 400;
    config.engine.conv_tol = 1e-7;
    config.engine.enforce_invariance = true;
    config.sweep_t = {0.05};
    config.sweep_mu = {0.7, 0.75};

    std::vector<SweepPoint> serial = run_sweep(config, 1);
    std::vector<SweepPoint> parallel = run_sweep(config, 2);
    REQUIRE(serial.size() == 2);

    std::ostringstream csv_serial, csv_parallel;
    write_sweep_csv(serial, "", csv_serial);
    write_sweep_csv(parallel, "", csv_parallel);
    CHECK(csv_serial.str() == csv_parallel.str());

    for (const SweepPoint& p : serial) {
        CHECK(p.converged);
        CHECK(p.density == doctest::Approx(0.5).epsilon(0.01)); // inside the 1/2 lobe
    }
    SUBCASE("empty grids are rejected") {
        RunConfig bad = config;
        bad.sweep_mu.clear();
        CHECK_THROWS_AS(run_sweep(bad, 1), FormatError);
    }
}

TEST_CASE("analysis driver") {
    TempDir dir("analyze");
    RunConfig config;
    config.model.builder = "dipolar_bose_hubbard";
    config.model.u = -1.0;
    config.model.mu = 0.75;
    config.model.t = 0.05;
    config.model.n_exp = 4;
    config.model.fit_r_max = 64;
    config.engine.chi = 8;
    config.engine.init_sites = 8;
    config.engine.max_rounds = 300;
    config.engine.conv_tol = 1e-8;
    config.engine.enforce_invariance = true;
    config.out_dir = dir.path.string();
    std::ostringstream log;
    SolveOutcome outcome = run_solve(config, "", log);
    REQUIRE(outcome.converged);
    CHECK(outcome.periodicity == 2);

    AnalyzeRequest request;
    request.density = true;
    request.entropy = true;
    request.periodicity = true;
    request.profile = true;
    request.correlation_nn = 12;
    request.select_density = true;
    std::ostringstream out, err;
    const int code = cmd_analyze(outcome.checkpoint_path, request, out, err);
    CHECK(code == exit_ok);
    const std::string text = out.str();
    CHECK(text.find("density,") != std::string::npos);
    CHECK(text.find("periodicity,2") != std::string::npos);
    CHECK(text.find("nn,12,") != std::string::npos);
    CHECK(text.find("selected_profile,") != std::string::npos);

    SUBCASE("missing checkpoint is a usage error") {
        std::ostringstream o2, e2;
        CHECK(cmd_analyze((dir.path / "nope.ckpt").string(), request, o2, e2) == exit_usage);
    }
}

TEST_CASE("validation command") {
    std::ostringstream list_out;
    CHECK(cmd_validate(true, false, list_out) == exit_ok);
    CHECK(list_out.str().find("mpo_dense_equivalence_ising") != std::string::npos);

    std::ostringstream ok_out;
    CHECK(cmd_validate(false, false, ok_out) == exit_ok);
    CHECK(ok_out.str().find("[FAIL]") == std::string::npos);

    std::ostringstream bad_out;
    CHECK(cmd_validate(false, true, bad_out) == exit_failure);
    CHECK(bad_out.str().find("[FAIL] mpo_dense_equivalence_ising") != std::string::npos);
}

TEST_CASE("missing config file") {
    CHECK_THROWS_AS(RunConfig::from_file("/nonexistent/imps.cfg"), FormatError);
}
