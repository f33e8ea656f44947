#include "imps/run.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include "imps/analysis.hpp"
#include "imps/checkpoint.hpp"

namespace imps {

namespace {

int resolve_workers(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("IMPS_WORKERS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

void write_step_header(std::ostream& os, const std::string& echo) {
    os << echo;
    os << "round,energy_site,eigenvalue,deviation,xi,gamma,solver_iterations,lambda_asymmetry\n";
}

void write_step(std::ostream& os, const StepReport& r) {
    os << r.round << ',' << std::setprecision(17) << r.energy_site << ',' << r.eigenvalue << ','
       << r.deviation << ',' << r.xi << ',' << r.gamma << ',' << r.solver_iterations << ','
       << r.lambda_asymmetry << '\n';
}

SweepPoint measure(Engine& engine, const RunConfig& config) {
    SweepPoint p;
    p.converged = engine.converged();
    p.rounds = engine.round();
    p.energy_site = engine.energy_per_site();
    UniformState state = engine.uniform_state();
    const Matrix density_op = config.model.density_operator();
    p.density = expectation_local(state, density_op).real();
    p.periodicity = detect_periodicity(transfer_matrix(state.q_left));
    p.entropy_bits = entanglement_entropy_bits(state.lambda);
    return p;
}

} // namespace

SolveOutcome run_solve(const RunConfig& config, const std::string& resume_path,
                       std::ostream& log) {
    std::filesystem::create_directories(config.out_dir);
    const std::string steps_path = config.out_dir + "/steps.csv";
    const std::string ckpt_path = config.out_dir + "/engine.ckpt";

    Engine engine = resume_path.empty() ? Engine(config.model.build(), config.engine)
                                        : load_engine_file(resume_path);
    if (!resume_path.empty())
        engine.update_run_limits(config.engine.max_rounds, config.engine.conv_tol,
                                 config.engine.conv_window);

    std::ofstream steps(steps_path, resume_path.empty() ? std::ios::trunc : std::ios::app);
    if (resume_path.empty()) write_step_header(steps, config.echo);

    try {
        engine.run([&](const StepReport& r) { write_step(steps, r); });
    } catch (const NumericalError& err) {
        save_engine_file(engine, config.out_dir + "/engine.abort.ckpt");
        log << "aborted: " << err.what() << " (state saved to engine.abort.ckpt)\n";
        throw;
    }
    save_engine_file(engine, ckpt_path);

    RunConfig cfg = config;
    SweepPoint m = measure(engine, cfg);
    SolveOutcome out;
    out.converged = engine.converged();
    out.energy_site = m.energy_site;
    out.periodicity = m.periodicity;
    out.entropy_bits = m.entropy_bits;
    out.density = m.density;
    out.rounds = engine.round();
    out.checkpoint_path = ckpt_path;

    log << std::setprecision(12);
    log << "rounds            " << out.rounds << (out.converged ? " (converged)" : " (cap reached)")
        << "\n";
    log << "energy per site   " << out.energy_site << "\n";
    log << "periodicity q     " << out.periodicity << "\n";
    log << "entropy (bits)    " << out.entropy_bits << "\n";
    log << "density           " << out.density << "\n";
    log << "checkpoint        " << ckpt_path << "\n";
    return out;
}

int cmd_solve(const RunConfig& config, const std::string& resume_path, std::ostream& log) {
    try {
        SolveOutcome out = run_solve(config, resume_path, log);
        return out.converged ? exit_ok : exit_failure;
    } catch (const FormatError& e) {
        log << "error: " << e.what() << "\n";
        return exit_usage;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << "\n";
        return exit_failure;
    }
}

std::vector<SweepPoint> run_sweep(const RunConfig& config, int workers) {
    if (config.sweep_t.empty() || config.sweep_mu.empty())
        throw FormatError("sweep: t_values and mu_values must be non-empty");

    struct Task {
        double t, mu;
        std::size_t index;
    };
    std::vector<Task> tasks;
    for (double t : config.sweep_t)
        for (double mu : config.sweep_mu) tasks.push_back({t, mu, tasks.size()});
    std::vector<SweepPoint> points(tasks.size());

    const int nworkers = std::max(1, std::min<int>(resolve_workers(workers),
                                                   static_cast<int>(tasks.size())));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            const Task& task = tasks[i];
            RunConfig local = config;
            local.model.t = task.t;
            local.model.mu = task.mu;
            // per-point deterministic seed, independent of worker layout
            local.engine.seed = config.engine.seed + 0x9e3779b97f4a7c15ULL * (task.index + 1);
            Engine engine(local.model.build(), local.engine);
            engine.run();
            SweepPoint p = measure(engine, local);
            p.t = task.t;
            p.mu = task.mu;
            points[i] = p;
        }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < nworkers; ++w) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();

    std::sort(points.begin(), points.end(), [](const SweepPoint& a, const SweepPoint& b) {
        return a.t != b.t ? a.t < b.t : a.mu < b.mu;
    });
    return points;
}

void write_sweep_csv(const std::vector<SweepPoint>& points, const std::string& echo,
                     std::ostream& os) {
    os << echo;
    os << "t,mu,rho,q,energy_site,entropy_bits,converged,rounds\n";
    os << std::setprecision(17);
    for (const SweepPoint& p : points)
        os << p.t << ',' << p.mu << ',' << p.density << ',' << p.periodicity << ','
           << p.energy_site << ',' << p.entropy_bits << ',' << (p.converged ? 1 : 0) << ','
           << p.rounds << '\n';
}

int cmd_sweep(const RunConfig& config, std::ostream& log) {
    try {
        std::vector<SweepPoint> points = run_sweep(config, config.workers);
        std::filesystem::create_directories(config.out_dir);
        const std::string path = config.out_dir + "/sweep.csv";
        std::ofstream os(path);
        write_sweep_csv(points, config.echo, os);
        log << "wrote " << points.size() << " points to " << path << "\n";
        const bool all_converged =
            std::all_of(points.begin(), points.end(), [](const SweepPoint& p) { return p.converged; });
        return all_converged ? exit_ok : exit_failure;
    } catch (const FormatError& e) {
        log << "error: " << e.what() << "\n";
        return exit_usage;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << "\n";
        return exit_failure;
    }
}

int cmd_analyze(const std::string& checkpoint_path, const AnalyzeRequest& request,
                std::ostream& out, std::ostream& log) {
    try {
        Engine engine = load_engine_file(checkpoint_path);
        UniformState state = engine.uniform_state();
        const Matrix n_op = boson_number(static_cast<int>(state.phys_dim()) - 1);
        out << std::setprecision(17);

        if (request.density)
            out << "density," << expectation_local(state, n_op).real() << "\n";
        if (request.entropy)
            out << "entropy_bits," << entanglement_entropy_bits(state.lambda) << "\n";
        int q = 0;
        if (request.periodicity || request.profile || request.select_density ||
            (request.luttinger_lo > 0)) {
            q = detect_periodicity(transfer_matrix(state.q_left));
            if (request.periodicity) out << "periodicity," << q << "\n";
        }
        if (request.profile) {
            std::vector<double> profile = density_profile(state, n_op, std::max(q, 1));
            for (std::size_t i = 0; i < profile.size(); ++i)
                out << "profile," << i << ',' << profile[i] << "\n";
        }
        if (request.select_density) {
            GroundStateSelection sel = select_ground_state(state, n_op);
            out << "selected_objective," << sel.objective << "\n";
            out << "selected_degenerate," << (sel.degenerate ? 1 : 0) << "\n";
            std::vector<double> profile =
                density_profile(state, n_op, std::max(q, 1), &sel.center);
            for (std::size_t i = 0; i < profile.size(); ++i)
                out << "selected_profile," << i << ',' << profile[i] << "\n";
        }
        CorrelationSeries nn, cc;
        if (request.correlation_nn > 0 || request.luttinger_lo > 0) {
            const long rmax = std::max(request.correlation_nn, request.luttinger_hi);
            nn = correlation(state, n_op, n_op, rmax, false, "n,n");
            for (std::size_t i = 0; i < nn.r.size(); ++i)
                if (request.correlation_nn == 0 || nn.r[i] <= request.correlation_nn)
                    out << "nn," << nn.r[i] << ',' << nn.values[i] << "\n";
        }
        if (request.correlation_cc > 0 || request.luttinger_lo > 0) {
            const Matrix c_op = boson_annihilator(static_cast<int>(state.phys_dim()) - 1);
            const long rmax = std::max(request.correlation_cc, request.luttinger_hi);
            cc = correlation(state, c_op.adjoint(), c_op, rmax, false, "cdag,c");
            for (std::size_t i = 0; i < cc.r.size(); ++i)
                if (request.correlation_cc == 0 || cc.r[i] <= request.correlation_cc)
                    out << "cc," << cc.r[i] << ',' << cc.values[i] << "\n";
        }
        if (request.luttinger_lo > 0) {
            const double rho0 = expectation_local(state, n_op).real();
            LuttingerFit fit =
                fit_luttinger(nn, cc, rho0, request.luttinger_lo, request.luttinger_hi);
            out << "luttinger_k_nn," << fit.k_nn << ',' << fit.residual_nn << "\n";
            out << "luttinger_k_cc," << fit.k_cc << ',' << fit.residual_cc << "\n";
        }
        return exit_ok;
    } catch (const FormatError& e) {
        log << "error: " << e.what() << "\n";
        return exit_usage;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << "\n";
        return exit_failure;
    }
}

namespace {

Matrix dense_two_site(const Matrix& a, const Matrix& b, int n, int i) {
    // a at site i, b at site i+1 (0-based), identities elsewhere
    Matrix acc = Matrix::Identity(1, 1);
    const long d = a.rows();
    for (int s = 0; s < n; ++s) {
        const Matrix& op = (s == i) ? a : (s == i + 1) ? b : Matrix::Identity(d, d).eval();
        Matrix next(acc.rows() * d, acc.cols() * d);
        for (long r = 0; r < acc.rows(); ++r)
            for (long c = 0; c < acc.cols(); ++c)
                next.block(r * d, c * d, d, d) = acc(r, c) * op;
        acc = std::move(next);
    }
    return acc;
}

} // namespace

std::vector<ValidationCheck> validation_checks(bool inject_mpo_defect) {
    std::vector<ValidationCheck> checks;

    checks.push_back({"mpo_dense_equivalence_ising", [inject_mpo_defect](std::ostream& os) {
        Mpo mpo = build_ising_mpo(1.0, 0.7);
        if (inject_mpo_defect) mpo.bulk.at({1, 0, 0, 0}) += cx(0.1, 0.0);
        const int n = 4;
        Matrix dense = mpo_to_dense(mpo, n);
        Matrix direct = Matrix::Zero(dense.rows(), dense.cols());
        for (int i = 0; i + 1 < n; ++i) direct += dense_two_site(-pauli_z(), pauli_z(), n, i);
        for (int i = 0; i < n; ++i) {
            Matrix acc = Matrix::Identity(1, 1);
            for (int s = 0; s < n; ++s) {
                const Matrix op =
                    (s == i) ? (-0.7 * pauli_x()).eval() : Matrix::Identity(2, 2).eval();
                Matrix next(acc.rows() * 2, acc.cols() * 2);
                for (long r = 0; r < acc.rows(); ++r)
                    for (long c = 0; c < acc.cols(); ++c)
                        next.block(r * 2, c * 2, 2, 2) = acc(r, c) * op;
                acc = std::move(next);
            }
            direct += acc;
        }
        const double err = (dense - direct).cwiseAbs().maxCoeff();
        os << "  max entry deviation " << err << "\n";
        return err < 1e-12;
    }});

    checks.push_back({"mpo_hermiticity", [inject_mpo_defect](std::ostream& os) {
        ExpSumFit fit = fit_power_law(3.0, 4, 64);
        Mpo mpo = build_dipolar_bose_hubbard_mpo(1.0, 0.0, 0.4, 0.1, 1, fit);
        if (inject_mpo_defect) mpo.bulk.at({1, 0, 0, 1}) += cx(0.05, 0.02);
        Matrix dense = mpo_to_dense(mpo, 4);
        const double err = (dense - dense.adjoint()).cwiseAbs().maxCoeff();
        os << "  hermiticity deviation " << err << "\n";
        return err < 1e-12;
    }});

    checks.push_back({"initialization_dense_energy", [](std::ostream& os) {
        Mpo mpo = build_ising_mpo(1.0, 1.0);
        InitData init = initialize(mpo, 8, 16, false);
        const double err = std::abs(init.closed_energy - init.dense_energy);
        os << "  |closed - dense| " << err << "\n";
        return err < 1e-10;
    }});

    checks.push_back({"solver_dense_oracle", [](std::ostream& os) {
        const long n = 200;
        std::mt19937_64 rng(7);
        std::normal_distribution<double> dist;
        Matrix h(n, n);
        for (long i = 0; i < n; ++i)
            for (long j = 0; j <= i; ++j) {
                const cx v(dist(rng), i == j ? 0.0 : dist(rng));
                h(i, j) = v;
                h(j, i) = std::conj(v);
            }
        LinearOperator op;
        op.dim = n;
        op.apply = [&h](const Vector& x, Vector& y) { y = h * x; };
        Vector seed = Vector::Ones(n).normalized();
        SolveOptions opts;
        opts.residual_tol = 1e-11;
        opts.max_iterations = 400;
        opts.max_basis = 40;
        SolveResult res = solve_lowest(op, {seed}, opts);
        Eigen::SelfAdjointEigenSolver<Matrix> es(h);
        const double err = std::abs(res.e0 - es.eigenvalues()(0));
        os << "  |e0 - dense| " << err << "\n";
        return err < 1e-9;
    }});

    checks.push_back({"factorization_residuals", [](std::ostream& os) {
        std::mt19937_64 rng(11);
        std::normal_distribution<double> dist;
        Matrix m(8, 5);
        for (long i = 0; i < 8; ++i)
            for (long j = 0; j < 5; ++j) m(i, j) = cx(dist(rng), dist(rng));
        Factorization f = svd(m);
        const double svd_err = (f.reconstruct() - m).norm() / m.norm();
        Matrix s(6, 6);
        for (long i = 0; i < 6; ++i)
            for (long j = 0; j <= i; ++j) {
                s(i, j) = cx(dist(rng), dist(rng));
                s(j, i) = s(i, j);
            }
        TakagiResult t = takagi(s);
        const double tk_err = (t.reconstruct() - s).norm() / s.norm();
        os << "  svd residual " << svd_err << ", takagi residual " << tk_err << "\n";
        return svd_err < 1e-12 && tk_err < 1e-10;
    }});

    return checks;
}

int cmd_validate(bool list_only, bool inject_mpo_defect, std::ostream& out) {
    std::vector<ValidationCheck> checks = validation_checks(inject_mpo_defect);
    if (list_only) {
        for (const ValidationCheck& c : checks) out << c.name << "\n";
        return exit_ok;
    }
    bool all_ok = true;
    for (const ValidationCheck& c : checks) {
        bool ok = false;
        std::ostringstream detail;
        try {
            ok = c.runner(detail);
        } catch (const std::exception& e) {
            detail << "  exception: " << e.what() << "\n";
        }
        out << (ok ? "[PASS] " : "[FAIL] ") << c.name << "\n" << detail.str();
        all_ok = all_ok && ok;
    }
    return all_ok ? exit_ok : exit_failure;
}

} // namespace imps
