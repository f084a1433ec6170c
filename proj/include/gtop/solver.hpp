#pragma once

#include "gtop/model.hpp"
#include "gtop/projection.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace gtop {

struct SweepProgress {
    int sweep;
    double dual;
    double max_residual;
};

struct SolverConfig {
    double feasibility_tol = 1e-8;
    double potential_tol = 1e-9;
    int max_sweeps = 10000;
    // A message whose largest entry drifts past 2^threshold (either way)
    // counts as a rescaling event.
    int renormalize_threshold = 64;
    // |log u| beyond this on any entry raises a divergence warning.
    double log_potential_bound = 1e4;
    // Per-update dual monotonicity checks and, for small problems,
    // comparison of every projection against the dense tensor.
    bool verify = false;
    double monotonicity_slack = 1e-9;
    std::function<void(const SweepProgress&)> progress;
};

enum class Termination { Converged, MaxSweeps, Infeasible, NumericalFailure };

const char* termination_name(Termination t);

struct ConstraintResidual {
    std::string block;  // "node 3", "edge 0-4", with " part k" for composite factors
    double value;
};

struct SolveReport {
    std::vector<double> dual_trace;        // after each sweep
    std::vector<double> max_residual_trace;
    std::vector<ConstraintResidual> residuals;
    int sweeps = 0;
    double wall_time_seconds = 0.0;
    long rescaling_events = 0;
    Termination termination = Termination::MaxSweeps;
    std::string message;
    std::vector<std::string> warnings;

    // Verification mode only.
    long updates_checked = 0;
    long monotonicity_violations = 0;
    double worst_dual_drop = 0.0;          // largest relative decrease seen
    double oracle_discrepancy = -1.0;      // -1 when not checked

    double max_residual() const;
};

// Per-constraint feasibility residuals of the plan K.U for these potentials.
std::vector<ConstraintResidual> residuals(const DualPotentials& potentials, const ProblemSpec& spec);
std::vector<ConstraintResidual> residuals(const Projector& projector);

// Relative L1 residuals of one functional at a projection.
double equality_box_residual(const MarginalFunction& f, const Vector& projection);

// Generalized Sinkhorn: cyclic exact maximization of the dual, one block (or
// one factor of a composite block) at a time.
class Solver {
public:
    Solver(const ProblemSpec& spec, SolverConfig config);
    Solver(const ProblemSpec& spec, SolverConfig config, DualPotentials initial);

    // One full sweep; returns the dual value after it. Infeasibility and
    // numerical failures propagate as exceptions annotated with block and sweep.
    double sweep();

    // Runs until the stopping rule fires or max sweeps; never throws for
    // infeasible or numerically failing problems, the report says so instead.
    SolveReport run();

    const DualPotentials& potentials() const { return potentials_; }
    const Projector& projector() const { return *projector_; }
    const ProblemSpec& spec() const { return *spec_; }
    const SolveReport& report() const { return report_; }
    double dual() const;

    // Max |delta log u| over every potential entry during the last sweep.
    double last_potential_change() const { return last_change_; }

private:
    class Updater;
    friend class Updater;

    void verify_against_oracle();
    double dual_from(double mass) const;

    const ProblemSpec* spec_;
    SolverConfig config_;
    DualPotentials potentials_;
    std::unique_ptr<Projector> projector_;
    std::vector<std::vector<double>> node_conj_;
    std::vector<std::vector<double>> edge_conj_;
    SolveReport report_;
    double last_change_ = 0.0;
    double last_dual_ = 0.0;
};

struct SolveResult {
    DualPotentials potentials;
    SolveReport report;
};

SolveResult solve(const ProblemSpec& spec, const SolverConfig& config = {});

}  // namespace gtop
