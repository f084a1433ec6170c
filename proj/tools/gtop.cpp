#include "gtop/errors.hpp"
#include "gtop/io.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Graph-structured multi-marginal optimal transport solver"};
    app.require_subcommand(1);

    std::string config_path;
    double tol = 0.0;
    int max_sweeps = 0;
    std::string output;
    bool verify = false;
    bool progress = false;
    bool quiet = false;

    CLI::App* solve = app.add_subcommand("solve", "Solve the problem described by a JSON config");
    solve->add_option("--config", config_path, "JSON run description")->required()->check(CLI::ExistingFile);
    solve->add_option("--tol", tol, "Feasibility and potential-change tolerance")->check(CLI::PositiveNumber);
    solve->add_option("--max-sweeps", max_sweeps, "Sweep limit")->check(CLI::PositiveNumber);
    solve->add_option("--output", output, "Output directory (overrides the config)");
    solve->add_flag("--verify", verify, "Check dual monotonicity per update and projections against the dense tensor");
    auto* p = solve->add_flag("--progress", progress, "Print one line per sweep to stderr");
    auto* q = solve->add_flag("--quiet", quiet, "Print nothing on success");
    p->excludes(q);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : gtop::kExitUsage;
    }

    gtop::RunConfig cfg;
    try {
        cfg = gtop::parse_config(config_path);
    } catch (const gtop::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return gtop::kExitUsage;
    }
    if (tol > 0.0) cfg.solver.feasibility_tol = cfg.solver.potential_tol = tol;
    if (max_sweeps > 0) cfg.solver.max_sweeps = max_sweeps;
    if (!output.empty()) cfg.output.directory = output;
    if (verify) cfg.solver.verify = true;
    if (progress)
        cfg.solver.progress = [](const gtop::SweepProgress& s) {
            std::fprintf(stderr, "sweep %6d  dual %.12g  max residual %.3e\n", s.sweep, s.dual, s.max_residual);
        };
    const int threads = gtop::configure_threads();

    gtop::RunOutcome out;
    try {
        out = gtop::run(cfg, std::cerr);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return gtop::kExitInfeasible;
    }
    const auto& r = out.report;
    if (!quiet || out.exit_code != gtop::kExitConverged) {
        std::cerr << gtop::termination_name(r.termination) << " after " << r.sweeps << " sweeps, max residual "
                  << r.max_residual() << ", " << r.wall_time_seconds << " s, " << threads << " thread(s)\n";
        if (!r.message.empty()) std::cerr << r.message << "\n";
        for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
        if (cfg.solver.verify)
            std::cerr << "verify: " << r.updates_checked << " updates checked, " << r.monotonicity_violations
                      << " monotonicity violations, oracle discrepancy " << r.oracle_discrepancy << "\n";
        std::cerr << "outputs in " << cfg.output.directory.string() << "\n";
    }
    return out.exit_code;
}
