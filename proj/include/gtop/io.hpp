#pragma once

#include "gtop/builders.hpp"
#include "gtop/solver.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace gtop {

enum class ProblemKind { Raw, Flow, MFG };

struct OutputOptions {
    std::filesystem::path directory = "gtop_out";
    bool marginals = true;
    bool bimarginals = true;
    bool dual_trace = true;
    bool summary = true;
};

struct RunConfig {
    ProblemKind kind = ProblemKind::Raw;
    std::optional<ProblemSpec> spec;
    std::optional<FlowNetwork> flow;  // kept for the utilization table
    SolverConfig solver;
    OutputOptions output;
    std::vector<std::string> warnings;  // from the builders
};

// Parses and fully validates a JSON run description. Relative CSV paths are
// resolved against base_dir. Errors are ConfigError with the field path first.
RunConfig parse_config(const std::filesystem::path& path);
RunConfig parse_config_text(const std::string& text, const std::filesystem::path& base_dir = ".");

// CSV with one row per line, 17 significant digits, "inf" for infinity.
void write_csv(const std::filesystem::path& path, const Matrix& m);
void write_csv_rows(const std::filesystem::path& path, const std::vector<Vector>& rows);
Matrix read_csv(const std::filesystem::path& path);
std::string format_number(double x);

enum ExitCode : int {
    kExitConverged = 0,
    kExitUsage = 2,
    kExitInfeasible = 3,
    kExitMaxSweeps = 4,
    kExitVerifyFailed = 5,
};

struct RunOutcome {
    SolveReport report;
    int exit_code = kExitConverged;
};

// Solves and writes every requested output file. Files other than
// summary.json are byte-identical across reruns; summary.json differs only
// in wall_time_seconds.
RunOutcome run(const RunConfig& config, std::ostream& log);

// Applies GTOP_THREADS to Eigen's thread pool when built with OpenMP;
// returns the thread count in effect.
int configure_threads();

}  // namespace gtop
