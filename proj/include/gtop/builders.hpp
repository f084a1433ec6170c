#pragma once

#include "gtop/model.hpp"

#include <string>
#include <vector>

namespace gtop {

// ---- dynamic network flows ----

struct FlowEdge {
    int from = 0;
    int to = 0;
    // Travel time in steps. Only unit lengths are supported; split longer
    // edges into chains of auxiliary nodes before building.
    int length = 1;
    double capacity = kInf;
};

// States are ordered [edges, sources, sinks]; a vertex that is both a source
// and a sink gets two states.
struct FlowNetwork {
    int vertex_count = 0;
    std::vector<FlowEdge> edges;
    std::vector<int> sources;
    std::vector<int> sinks;
    int horizon = 3;  // number of time points

    Index state_count() const;
    Index edge_states() const { return static_cast<Index>(edges.size()); }
    Index source_state(std::size_t i) const { return edge_states() + static_cast<Index>(i); }
    Index sink_state(std::size_t i) const {
        return edge_states() + static_cast<Index>(sources.size()) + static_cast<Index>(i);
    }
    std::string state_label(Index s) const;
    void validate() const;
};

struct FlowCost {
    Matrix cost;
    std::vector<std::string> warnings;
};

// Zero cost on feasible one-step transitions, +inf elsewhere. Sources and
// sinks keep their mass with a zero-cost self-loop; edge states never do.
FlowCost build_flow_cost_matrix(const FlowNetwork& net);

// Congestion on the edge states, Zero on the source and sink states.
MarginalFunction build_congestion(const Vector& capacity, Index other_states = 0);
MarginalFunction build_congestion(const FlowNetwork& net);

// Embeds a sources x sinks demand table into the N x N OD matrix.
Matrix embed_od(const FlowNetwork& net, const Matrix& demand);

struct FlowProblem {
    ProblemSpec spec;
    std::vector<std::string> warnings;
};

// OD variant: time points on a path closed by a chord carrying Equality(od).
// interior_cost applies at every time except the first and last; it covers
// either all N states or only the edge states (then padded with Zero).
FlowProblem build_flow_problem(const FlowNetwork& net, const Matrix& od, const MarginalFunction& interior_cost,
                               double eps);
// Terminal variant: plain path with Equality on the first and last marginal.
FlowProblem build_flow_problem(const FlowNetwork& net, const Vector& first, const Vector& last,
                               const MarginalFunction& interior_cost, double eps);

// Per-time edge utilization P_t(e) / d_e, times x edges.
Matrix flow_utilization(const FlowNetwork& net, const std::vector<Vector>& marginals);

// ---- multi-species mean field games ----

// Squared Euclidean distances between the rows of points, times multiplier.
Matrix build_mfg_cost_matrix(const Matrix& points, double multiplier = 1.0);
// User-supplied cost: checked for shape and for -inf / NaN entries.
Matrix build_mfg_cost_matrix(const Matrix& cost, Index states);

struct MFGSetup {
    Matrix cost;               // N x N, shared by every time step
    int time_points = 3;       // j = 0 .. time_points - 1
    double dt = 0.0;           // 0 means 1 / (time_points - 1)
    Matrix initial;            // L x N, row l is species l at time 0
    // Functionals on the total density; index j. Entries for 1 <= j < last
    // are multiplied by dt, the last one is the terminal cost. Entry 0 is
    // ignored. Empty means Zero everywhere.
    std::vector<CompositeFunction> total;
    // species[j][l], same indexing and weighting; empty means Zero.
    std::vector<std::vector<MarginalFunction>> species;
    double epsilon = 1.0;

    Index states() const { return cost.rows(); }
    Index species_count() const { return initial.rows(); }
    double step() const { return dt > 0 ? dt : 1.0 / (time_points - 1); }
};

// Species hub: hub edge 0 fixes the initial species densities, later hub
// edges carry the stacked per-species functionals.
ProblemSpec build_mfg_problem(const MFGSetup& setup);
// Single-species path formulation; requires one species.
ProblemSpec build_mfg_chain_problem(const MFGSetup& setup);

}  // namespace gtop
