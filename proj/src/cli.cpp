#include "qflow/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "qflow/bubbles.hpp"
#include "qflow/config.hpp"
#include "qflow/elliptic.hpp"
#include "qflow/error.hpp"
#include "qflow/flow.hpp"
#include "qflow/io.hpp"
#include "qflow/operators.hpp"

namespace qflow {

namespace {

namespace fs = std::filesystem;

/// Failure of a run that still produced its outputs.
struct RunFailure {
    std::string failure_class;
    std::string message;
};

class RunLog {
public:
    RunLog(std::ostream& echo, fs::path path) : echo_(echo), path_(std::move(path)) {}
    void line(const std::string& s) {
        echo_ << s << "\n";
        text_ += s + "\n";
    }
    void flush() { write_file_atomic(path_, text_); }

private:
    std::ostream& echo_;
    fs::path path_;
    std::string text_;
};

std::string fmt(double x) { return format_double(x); }

std::optional<RunFailure> run_flow(const RunConfig& cfg, RunLog& log) {
    const TorusGrid grid(cfg.n, cfg.period);
    const ProblemData p = make_problem(build_field(cfg.problem, grid, cfg.seed));
    const ScalarField u0 = build_field(cfg.initial, grid, cfg.seed);
    log.line("k = " + fmt(p.k));
    const Trajectory traj = run(u0, p, cfg.flow);
    emit_diagnostics(traj, cfg.output / "trajectory.csv");
    save_field(traj.final.u, cfg.output / "final_field.qfld");

    std::ostringstream s;
    s << "outcome = " << to_string(traj.outcome) << "\n"
      << "t = " << fmt(traj.final.t) << "\n"
      << "steps = " << traj.final.step_count << "\n"
      << "rejected_steps = " << traj.rejected_steps << "\n"
      << "energy_initial = " << fmt(traj.rows.front().energy) << "\n"
      << "energy_final = " << fmt(traj.final.energy) << "\n"
      << "dissipation_total = " << fmt(traj.dissipation_total) << "\n"
      << "max_relative_energy_increase = " << fmt(traj.max_energy_increase) << "\n"
      << "raw_volume_drift = " << fmt(traj.final.raw_volume_drift) << "\n"
      << "residual_final = " << fmt(traj.final.residual_norm) << "\n";
    write_file_atomic(cfg.output / "summary.txt", s.str());
    log.line("outcome: " + to_string(traj.outcome) + " at t = " + fmt(traj.final.t) + " after " +
             std::to_string(traj.final.step_count) + " steps");
    if (traj.outcome == FlowOutcome::step_underflow)
        return RunFailure{"step_underflow", "time step fell below dt_min at t = " + fmt(traj.final.t)};
    return std::nullopt;
}

std::optional<RunFailure> run_solve(const RunConfig& cfg, RunLog& log) {
    const TorusGrid grid(cfg.n, cfg.period);
    const ProblemData p = make_problem(build_field(cfg.problem, grid, cfg.seed));
    const ScalarField u0 = build_field(cfg.initial, grid, cfg.seed);
    const EllipticSolution sol = newton_solve(p, u0, cfg.solve);
    save_field(sol.u, cfg.output / "solution.qfld");
    std::ostringstream s;
    s << "converged = " << (sol.converged ? "true" : "false") << "\n"
      << "iterations = " << sol.iterations << "\n"
      << "residual_norm = " << fmt(sol.residual_norm) << "\n"
      << "max_u = " << fmt(sol.u.max()) << "\n"
      << "min_u = " << fmt(sol.u.min()) << "\n"
      << "residual_history =";
    for (double r : sol.residual_history) s << " " << fmt(r);
    s << "\n";
    write_file_atomic(cfg.output / "solve_report.txt", s.str());
    log.line(std::string("newton: ") + (sol.converged ? "converged" : "not converged") +
             ", residual " + fmt(sol.residual_norm) + " after " + std::to_string(sol.iterations) +
             " iterations");
    if (!sol.converged)
        return RunFailure{"not_converged", "Newton did not reach tol = " + fmt(cfg.solve.tol)};
    return std::nullopt;
}

std::optional<RunFailure> run_continuation(const RunConfig& cfg, RunLog& log) {
    const TorusGrid grid(cfg.n, cfg.period);
    ScalarField shape = build_field(cfg.problem, grid, cfg.seed);
    const double mass = integrate(shape);
    if (!(mass > 0.0)) throw InvalidArgument("continuation: the problem datum must have positive integral");
    shape *= 1.0 / mass;
    // Rounding of the rescale can leave |mass - 1| at a few ulps.
    const ContinuationBranch branch = continuation(shape, cfg.k_list, cfg.continuation);
    std::string csv = "k,converged,iterations,residual_norm,max_u,min_u\n";
    for (std::size_t i = 0; i < branch.solutions.size(); ++i) {
        const auto& s = branch.solutions[i];
        csv += fmt(branch.k_values[i]) + "," + (s.converged ? "1" : "0") + "," +
               std::to_string(s.iterations) + "," + fmt(s.residual_norm) + "," + fmt(s.u.max()) +
               "," + fmt(s.u.min()) + "\n";
        log.line("k = " + fmt(branch.k_values[i]) + ": max_u = " + fmt(s.u.max()) +
                 ", residual = " + fmt(s.residual_norm));
    }
    write_file_atomic(cfg.output / "branch.csv", csv);
    if (!branch.solutions.empty()) save_field(branch.solutions.back().u, cfg.output / "branch_final.qfld");
    if (branch.truncated) {
        log.line("branch truncated: " + branch.failure);
        return RunFailure{"continuation_truncated", branch.failure};
    }
    return std::nullopt;
}

std::string sites_csv(const std::vector<ConcentrationSite>& sites) {
    std::string csv =
        "x1,x2,x3,x4,radius,mass,plateau_radius,plateau_mass,quantum_ratio,concentrated,quantized\n";
    for (const auto& s : sites) {
        for (double c : s.center) csv += fmt(c) + ",";
        csv += fmt(s.radius) + "," + fmt(s.mass) + "," + fmt(s.plateau_radius) + "," +
               fmt(s.plateau_mass) + "," + fmt(s.quantum_ratio) + "," +
               (s.concentrated ? "1" : "0") + "," + (s.quantized ? "1" : "0") + "\n";
    }
    return csv;
}

std::optional<RunFailure> run_analyze(const RunConfig& cfg, RunLog& log) {
    const ScalarField u = load_field(cfg.analyze_field);
    double k = cfg.analyze_k;
    if (k == 0.0) k = integrate(build_field(cfg.problem, u.grid(), cfg.seed));
    DetectionOptions opts;
    opts.rho = cfg.rho;
    const QuantizationReport rep = quantization_report(u, k, opts);
    write_file_atomic(cfg.output / "sites.csv", sites_csv(rep.sites));
    log.line("k = " + fmt(k) + ", sites = " + std::to_string(rep.sites.size()) +
             ", quantum sum = " + fmt(rep.quantum_sum) + ", accounting error = " +
             fmt(rep.accounting_error));
    return std::nullopt;
}

std::optional<RunFailure> run_bubble(const RunConfig& cfg, RunLog& log) {
    const TorusGrid grid(cfg.n, cfg.period);
    const double L = grid.period();
    const double k = cfg.bubble_k > 0.0 ? cfg.bubble_k : sphere_quantum * cfg.bubble_count;
    Bubble b{{}, cfg.bubble_lambda, k};
    std::vector<Point> centers{{0.5 * L, 0.5 * L, 0.5 * L, 0.5 * L}};
    if (cfg.bubble_count == 2) centers = {{0.25 * L, 0.25 * L, 0.25 * L, 0.25 * L},
                                          {0.75 * L, 0.25 * L, 0.25 * L, 0.25 * L}};
    const ScalarField u =
        sample_bubbles_on_torus(std::vector<Bubble>(centers.size(), b), centers, grid);
    save_field(u, cfg.output / "bubble.qfld");
    DetectionOptions opts;
    opts.rho = cfg.rho;
    const QuantizationReport rep = quantization_report(u, k, opts);
    write_file_atomic(cfg.output / "sites.csv", sites_csv(rep.sites));

    std::ostringstream s;
    s << "lambda = " << fmt(b.lambda) << "\nk = " << fmt(k) << "\nbubbles = " << centers.size()
      << "\nsites = " << rep.sites.size() << "\nquantum_sum = " << fmt(rep.quantum_sum)
      << "\ndiscarded_tail_mass_per_bubble = " << fmt(synthetic_tail_mass(b, L)) << "\n";
    for (std::size_t i = 0; i < rep.sites.size(); ++i) {
        const auto& site = rep.sites[i];
        s << "site " << i << ": quantum_ratio = " << fmt(site.quantum_ratio)
          << ", radius = " << fmt(site.radius);
        if (site.concentrated) {
            const double r = 1.0 / b.lambda;
            const double hw = 0.25 * L / r;
            const RescaledSamples rs = rescale(u, site.center, r, hw, cfg.fit_points);
            const BubbleFit fit = bubble_fit(rs, k);
            s << ", fitted lambda (rescaled) = " << fmt(fit.lambda_fit)
              << ", l2_error = " << fmt(fit.l2_error) << ", sup_error = " << fmt(fit.sup_error);
        }
        s << "\n";
    }
    write_file_atomic(cfg.output / "bubble_report.txt", s.str());
    log.line("bubble: " + std::to_string(rep.sites.size()) + " sites, quantum sum " +
             fmt(rep.quantum_sum));
    return std::nullopt;
}

std::optional<RunFailure> run_green(const RunConfig& cfg, RunLog& log) {
    const TorusGrid grid(cfg.n, cfg.period);
    const double r_min = cfg.green_r_min > 0.0 ? cfg.green_r_min : 6.0 * grid.spacing();
    const double r_max = cfg.green_r_max > 0.0 ? cfg.green_r_max : grid.period() / 8.0;
    const auto samples = green_annulus_samples(grid, r_min, r_max);
    const LogFit fit = fit_log_profile(samples, r_min, r_max);
    const double rel = std::abs(fit.slope - green_log_coefficient) / std::abs(green_log_coefficient);
    std::ostringstream s;
    s << "n = " << grid.n() << "\nr_min = " << fmt(r_min) << "\nr_max = " << fmt(r_max)
      << "\npoints = " << fmt(fit.points) << "\nslope = " << fmt(fit.slope)
      << "\nexpected = " << fmt(green_log_coefficient) << "\nrelative_error = " << fmt(rel)
      << "\nregular_estimate = " << fmt(fit.regular_estimate) << "\nresidual = " << fmt(fit.residual)
      << "\n";
    write_file_atomic(cfg.output / "green_report.txt", s.str());
    log.line("green: slope " + fmt(fit.slope) + " (relative error " + fmt(rel) + ")");
    return std::nullopt;
}

int execute(Mode mode, const std::string& config_path, const std::vector<std::string>& sets,
            std::ostream& out, std::ostream& err) {
    RunConfig cfg = config_path.empty()
                        ? parse_config("", sets, "(no config)", mode)
                        : load_config(config_path, sets, mode);
    fs::create_directories(cfg.output);
    RunLog log(out, cfg.output / "run.log");
    log.line("mode: " + to_string(cfg.mode));
    for (const auto& [key, value] : cfg.resolved)
        if (std::find(cfg.defaulted.begin(), cfg.defaulted.end(), key) != cfg.defaulted.end())
            log.line("default: " + key + " = " + value);
    write_file_atomic(cfg.output / "manifest.cfg", manifest_text(cfg));

    std::optional<RunFailure> failure;
    try {
        switch (cfg.mode) {
            case Mode::flow: failure = run_flow(cfg, log); break;
            case Mode::solve: failure = run_solve(cfg, log); break;
            case Mode::continuation: failure = run_continuation(cfg, log); break;
            case Mode::analyze: failure = run_analyze(cfg, log); break;
            case Mode::bubble: failure = run_bubble(cfg, log); break;
            case Mode::green: failure = run_green(cfg, log); break;
        }
    } catch (const NumericalError& e) {
        failure = RunFailure{e.failure_class(), e.what()};
    }
    if (failure) log.line("numerical failure: " + failure->failure_class);
    log.flush();
    if (failure) {
        err << "numerical failure [" << failure->failure_class << "]: " << failure->message << "\n";
        return exit_numerical;
    }
    return exit_success;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Q-curvature flow and blow-up analysis on the flat 4-torus", "qflow"};
    app.require_subcommand(1, 1);
    std::string config_path;
    std::vector<std::string> sets;
    const char* modes[] = {"flow", "solve", "continuation", "analyze", "bubble", "green"};
    const char* blurbs[] = {"integrate the flow", "Newton solve of the stationary equation",
                            "continuation in k", "concentration analysis of a field file",
                            "synthetic bubbles: detection and fitting", "Green function log fit"};
    std::vector<CLI::App*> subs;
    for (int i = 0; i < 6; ++i) {
        CLI::App* sub = app.add_subcommand(modes[i], blurbs[i]);
        sub->add_option("--config", config_path, "configuration file");
        sub->add_option("--set", sets, "override key=value")->take_all();
        subs.push_back(sub);
    }
    CLI::App* selftest = app.add_subcommand("selftest", "run the invariant suite");

    std::vector<std::string> argv_store{"qflow"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_store) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_success;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return exit_usage;
    }

    try {
        if (selftest->parsed()) {
            const int failed = run_selftest(out);
            if (failed > 0) {
                err << "numerical failure [selftest]: " << failed << " checks failed\n";
                return exit_numerical;
            }
            return exit_success;
        }
        for (int i = 0; i < 6; ++i)
            if (subs[static_cast<std::size_t>(i)]->parsed())
                return execute(static_cast<Mode>(i), config_path, sets, out, err);
    } catch (const NumericalError& e) {
        err << "numerical failure [" << e.failure_class() << "]: " << e.what() << "\n";
        return exit_numerical;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_usage;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return exit_usage;
    }
    err << app.help();
    return exit_usage;
}

}  // namespace qflow
