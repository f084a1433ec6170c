#include "gtop/builders.hpp"

#include "gtop/errors.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace gtop {

namespace {

std::string str(const std::string& a, long b) { return a + std::to_string(b); }

CompositeFunction scale_composite(const CompositeFunction& f, double factor) {
    CompositeFunction out;
    for (const auto& p : f.parts) out.parts.push_back(factor == 1.0 ? p : p.scaled(factor));
    return out;
}

// Drops Zero parts; an all-Zero function collapses to a single Zero.
CompositeFunction tidy(CompositeFunction f, Index size) {
    CompositeFunction out;
    for (auto& p : f.parts) {
        if (p.size() != size) throw InvalidInput(str("functional has size " + std::to_string(p.size()) + ", expected ", size));
        if (!p.is_zero()) out.parts.push_back(std::move(p));
    }
    if (out.parts.empty()) out.parts.push_back(MarginalFunction::zero(size));
    return out;
}

MarginalFunction pad_interior(const FlowNetwork& net, const MarginalFunction& f) {
    const Index n = net.state_count();
    if (f.size() == n) return f;
    if (f.size() == net.edge_states())
        return MarginalFunction::concat({f, MarginalFunction::zero(n - net.edge_states())});
    throw InvalidInput("interior flow cost must cover all " + std::to_string(n) + " states or the " +
                       std::to_string(net.edge_states()) + " edge states");
}

}  // namespace

Index FlowNetwork::state_count() const {
    return static_cast<Index>(edges.size() + sources.size() + sinks.size());
}

std::string FlowNetwork::state_label(Index s) const {
    if (s < edge_states()) {
        const auto& e = edges[static_cast<std::size_t>(s)];
        return "edge " + std::to_string(e.from) + "->" + std::to_string(e.to);
    }
    s -= edge_states();
    if (s < static_cast<Index>(sources.size())) return str("source ", sources[static_cast<std::size_t>(s)]);
    s -= static_cast<Index>(sources.size());
    return str("sink ", sinks.at(static_cast<std::size_t>(s)));
}

void FlowNetwork::validate() const {
    if (vertex_count <= 0) throw InvalidInput("flow network needs at least one vertex");
    if (horizon < 2) throw InvalidInput("flow horizon must have at least two time points");
    auto check_vertex = [&](int v, const std::string& what) {
        if (v < 0 || v >= vertex_count) throw InvalidInput(what + " refers to unknown vertex " + std::to_string(v));
    };
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const auto& e = edges[i];
        const std::string what = str("edge ", static_cast<long>(i));
        check_vertex(e.from, what);
        check_vertex(e.to, what);
        if (e.from == e.to) throw InvalidInput(what + " is a self-loop");
        if (e.length != 1)
            throw InvalidInput(what + " has length " + std::to_string(e.length) +
                               "; only unit travel times are supported, subdivide longer edges");
        if (!(e.capacity > 0.0)) throw InvalidInput(what + " must have positive capacity");
    }
    for (const auto* set : {&sources, &sinks}) {
        std::set<int> seen;
        for (int v : *set) {
            check_vertex(v, set == &sources ? "source" : "sink");
            if (!seen.insert(v).second)
                throw InvalidInput(std::string(set == &sources ? "source" : "sink") + " vertex " + std::to_string(v) +
                                   " listed twice");
        }
    }
    if (state_count() == 0) throw InvalidInput("flow network has no states");
}

FlowCost build_flow_cost_matrix(const FlowNetwork& net) {
    net.validate();
    const Index n = net.state_count();
    FlowCost out{Matrix::Constant(n, n, kInf), {}};
    Matrix& c = out.cost;
    const Index ne = net.edge_states();

    for (Index a = 0; a < ne; ++a) {
        const auto& e = net.edges[static_cast<std::size_t>(a)];
        for (Index b = 0; b < ne; ++b)
            if (a != b && net.edges[static_cast<std::size_t>(b)].from == e.to) c(a, b) = 0.0;
        for (std::size_t k = 0; k < net.sinks.size(); ++k)
            if (net.sinks[k] == e.to) c(a, net.sink_state(k)) = 0.0;
    }
    for (std::size_t i = 0; i < net.sources.size(); ++i) {
        const int v = net.sources[i];
        const Index s = net.source_state(i);
        c(s, s) = 0.0;
        bool leaves = false;
        for (Index b = 0; b < ne; ++b)
            if (net.edges[static_cast<std::size_t>(b)].from == v) {
                c(s, b) = 0.0;
                leaves = true;
            }
        // Mass that starts and ends at the same vertex needs no edge.
        for (std::size_t k = 0; k < net.sinks.size(); ++k)
            if (net.sinks[k] == v) c(s, net.sink_state(k)) = 0.0;
        if (!leaves) out.warnings.push_back("source at vertex " + std::to_string(v) + " has no outgoing edge");
    }
    for (std::size_t k = 0; k < net.sinks.size(); ++k) {
        const Index s = net.sink_state(k);
        c(s, s) = 0.0;
        const bool reached = std::any_of(net.edges.begin(), net.edges.end(),
                                         [&](const FlowEdge& e) { return e.to == net.sinks[k]; });
        if (!reached) out.warnings.push_back("sink at vertex " + std::to_string(net.sinks[k]) + " has no incoming edge");
    }
    return out;
}

MarginalFunction build_congestion(const Vector& capacity, Index other_states) {
    for (Index i = 0; i < capacity.size(); ++i)
        if (!(capacity[i] > 0.0)) throw InvalidInput(str("capacity of edge ", static_cast<long>(i)) + " must be positive");
    if (other_states == 0) return MarginalFunction::congestion(capacity);
    return MarginalFunction::concat({MarginalFunction::congestion(capacity), MarginalFunction::zero(other_states)});
}

MarginalFunction build_congestion(const FlowNetwork& net) {
    net.validate();
    Vector d(net.edge_states());
    for (Index i = 0; i < d.size(); ++i) d[i] = net.edges[static_cast<std::size_t>(i)].capacity;
    return build_congestion(d, net.state_count() - net.edge_states());
}

Matrix embed_od(const FlowNetwork& net, const Matrix& demand) {
    if (demand.rows() != static_cast<Index>(net.sources.size()) || demand.cols() != static_cast<Index>(net.sinks.size()))
        throw InvalidInput("OD demand must be sources x sinks");
    const Index n = net.state_count();
    Matrix r = Matrix::Zero(n, n);
    for (Index i = 0; i < demand.rows(); ++i)
        for (Index k = 0; k < demand.cols(); ++k)
            r(net.source_state(static_cast<std::size_t>(i)), net.sink_state(static_cast<std::size_t>(k))) = demand(i, k);
    return r;
}

FlowProblem build_flow_problem(const FlowNetwork& net, const Matrix& od, const MarginalFunction& interior_cost,
                               double eps) {
    FlowCost fc = build_flow_cost_matrix(net);
    const Index n = net.state_count();
    if (od.rows() != n || od.cols() != n) throw InvalidInput("OD matrix must be " + std::to_string(n) + " x " + std::to_string(n));
    const Index first_source = net.edge_states();
    const Index first_sink = first_source + static_cast<Index>(net.sources.size());
    for (Index i = 0; i < n; ++i)
        for (Index k = 0; k < n; ++k) {
            const double x = od(i, k);
            if (!(x >= 0.0) || !std::isfinite(x))
                throw InvalidInput("OD entry (" + std::to_string(i) + "," + std::to_string(k) + ") must be finite and nonnegative");
            const bool allowed = i >= first_source && i < first_sink && k >= first_sink;
            if (x != 0.0 && !allowed)
                throw InvalidInput("OD entry (" + net.state_label(i) + ", " + net.state_label(k) +
                                   ") is not a source-to-sink pair");
        }

    const int T = net.horizon;
    const MarginalFunction g = pad_interior(net, interior_cost);
    const EdgeKernel k = build_kernel(fc.cost, eps);
    std::vector<EdgeKernel> kernels(static_cast<std::size_t>(T - 1), k);
    std::vector<CompositeFunction> edge_fns(static_cast<std::size_t>(T - 1), MarginalFunction::zero(n * n));
    kernels.push_back(unit_kernel(n, n));
    edge_fns.emplace_back(MarginalFunction::equality(flatten(od)));
    std::vector<CompositeFunction> node_fns(static_cast<std::size_t>(T), g);
    node_fns.front() = MarginalFunction::zero(n);
    node_fns.back() = MarginalFunction::zero(n);
    return {ProblemSpec(GraphTopology::path_with_od_cycle(std::vector<Index>(static_cast<std::size_t>(T), n)),
                        std::move(kernels), std::move(node_fns), std::move(edge_fns), eps),
            std::move(fc.warnings)};
}

FlowProblem build_flow_problem(const FlowNetwork& net, const Vector& first, const Vector& last,
                               const MarginalFunction& interior_cost, double eps) {
    FlowCost fc = build_flow_cost_matrix(net);
    const Index n = net.state_count();
    if (first.size() != n || last.size() != n)
        throw InvalidInput("terminal flow marginals must have " + std::to_string(n) + " entries");
    const int T = net.horizon;
    const MarginalFunction g = pad_interior(net, interior_cost);
    std::vector<EdgeKernel> kernels(static_cast<std::size_t>(T - 1), build_kernel(fc.cost, eps));
    std::vector<CompositeFunction> edge_fns(static_cast<std::size_t>(T - 1), MarginalFunction::zero(n * n));
    std::vector<CompositeFunction> node_fns(static_cast<std::size_t>(T), g);
    node_fns.front() = MarginalFunction::equality(first);
    node_fns.back() = MarginalFunction::equality(last);
    return {ProblemSpec(GraphTopology::path_chain(std::vector<Index>(static_cast<std::size_t>(T), n)), std::move(kernels),
                        std::move(node_fns), std::move(edge_fns), eps),
            std::move(fc.warnings)};
}

Matrix flow_utilization(const FlowNetwork& net, const std::vector<Vector>& marginals) {
    const Index ne = net.edge_states();
    Matrix a(static_cast<Index>(marginals.size()), ne);
    for (std::size_t t = 0; t < marginals.size(); ++t) {
        if (marginals[t].size() != net.state_count()) throw InvalidInput("marginal size does not match the network");
        for (Index e = 0; e < ne; ++e) a(static_cast<Index>(t), e) = marginals[t][e] / net.edges[static_cast<std::size_t>(e)].capacity;
    }
    return a;
}

Matrix build_mfg_cost_matrix(const Matrix& points, double multiplier) {
    if (points.rows() == 0 || points.cols() == 0) throw InvalidInput("grid needs at least one point and one coordinate");
    if (!(multiplier > 0.0) || !std::isfinite(multiplier)) throw InvalidInput("cost multiplier must be positive");
    const Index n = points.rows();
    Matrix c(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index k = 0; k < n; ++k) c(i, k) = multiplier * (points.row(i) - points.row(k)).squaredNorm();
    return c;
}

Matrix build_mfg_cost_matrix(const Matrix& cost, Index states) {
    if (cost.rows() != states || cost.cols() != states)
        throw InvalidInput("cost matrix must be " + std::to_string(states) + " x " + std::to_string(states));
    for (Index i = 0; i < cost.size(); ++i) {
        const double x = cost.data()[i];
        if (std::isnan(x) || x == -kInf) throw InvalidInput("cost matrix entries must not be NaN or -inf");
    }
    return cost;
}

namespace {

void validate_mfg(const MFGSetup& s) {
    const Index n = s.states();
    if (n == 0 || s.cost.cols() != n) throw InvalidInput("MFG cost must be a nonempty square matrix");
    if (s.time_points < 2) throw InvalidInput("MFG needs at least two time points");
    if (s.species_count() == 0) throw InvalidInput("MFG needs at least one species");
    if (s.initial.cols() != n)
        throw InvalidInput("initial densities have " + std::to_string(s.initial.cols()) + " columns, grid has " +
                           std::to_string(n) + " points");
    for (Index l = 0; l < s.initial.rows(); ++l) {
        if ((s.initial.row(l).array() < 0.0).any() || !s.initial.row(l).allFinite())
            throw InvalidInput(str("initial density of species ", static_cast<long>(l)) + " must be finite and nonnegative");
        if (!(s.initial.row(l).sum() > 0.0)) throw InvalidInput(str("species ", static_cast<long>(l)) + " has no mass");
    }
    const auto T = static_cast<std::size_t>(s.time_points);
    if (!s.total.empty() && s.total.size() != T)
        throw InvalidInput("total functionals must list one entry per time point");
    if (!s.species.empty()) {
        if (s.species.size() != T) throw InvalidInput("species functionals must list one entry per time point");
        for (std::size_t j = 0; j < T; ++j)
            if (!s.species[j].empty() && static_cast<Index>(s.species[j].size()) != s.species_count())
                throw InvalidInput("species functionals at time " + std::to_string(j) + " must list every species");
    }
    if (!(s.epsilon > 0.0)) throw InvalidInput("epsilon must be positive");
}

double weight_at(const MFGSetup& s, std::size_t j) {
    return j + 1 == static_cast<std::size_t>(s.time_points) ? 1.0 : s.step();
}

CompositeFunction total_at(const MFGSetup& s, std::size_t j) {
    if (j == 0 || s.total.empty() || s.total[j].parts.empty()) return MarginalFunction::zero(s.states());
    return tidy(scale_composite(s.total[j], weight_at(s, j)), s.states());
}

MarginalFunction species_piece(const MFGSetup& s, std::size_t j, std::size_t l) {
    if (s.species.empty() || s.species[j].empty()) return MarginalFunction::zero(s.states());
    const MarginalFunction& f = s.species[j][l];
    if (f.size() != s.states())
        throw InvalidInput("species " + std::to_string(l) + " functional at time " + std::to_string(j) + " has size " +
                           std::to_string(f.size()));
    return f.is_zero() ? f : f.scaled(weight_at(s, j));
}

}  // namespace

ProblemSpec build_mfg_problem(const MFGSetup& setup) {
    validate_mfg(setup);
    const Index n = setup.states();
    const Index L = setup.species_count();
    const auto T = static_cast<std::size_t>(setup.time_points);
    const EdgeKernel k = build_kernel(build_mfg_cost_matrix(setup.cost, n), setup.epsilon);

    std::vector<EdgeKernel> kernels(T - 1, k);
    std::vector<CompositeFunction> edge_fns(T - 1, MarginalFunction::zero(n * n));
    for (std::size_t j = 0; j < T; ++j) {
        kernels.push_back(unit_kernel(L, n));
        if (j == 0) {
            edge_fns.emplace_back(MarginalFunction::equality(flatten(setup.initial)));
            continue;
        }
        std::vector<MarginalFunction> rows;
        bool all_zero = true;
        for (std::size_t l = 0; l < static_cast<std::size_t>(L); ++l) {
            rows.push_back(species_piece(setup, j, l));
            all_zero = all_zero && rows.back().is_zero();
        }
        edge_fns.emplace_back(all_zero ? MarginalFunction::zero(L * n) : MarginalFunction::concat(rows));
    }
    std::vector<CompositeFunction> node_fns;
    for (std::size_t j = 0; j < T; ++j) node_fns.push_back(total_at(setup, j));
    node_fns.emplace_back(MarginalFunction::zero(L));
    return ProblemSpec(GraphTopology::species_hub(std::vector<Index>(T, n), L), std::move(kernels), std::move(node_fns),
                       std::move(edge_fns), setup.epsilon);
}

ProblemSpec build_mfg_chain_problem(const MFGSetup& setup) {
    validate_mfg(setup);
    if (setup.species_count() != 1) throw InvalidInput("the path formulation handles a single species");
    const Index n = setup.states();
    const auto T = static_cast<std::size_t>(setup.time_points);
    std::vector<EdgeKernel> kernels(T - 1, build_kernel(build_mfg_cost_matrix(setup.cost, n), setup.epsilon));
    std::vector<CompositeFunction> edge_fns(T - 1, MarginalFunction::zero(n * n));
    std::vector<CompositeFunction> node_fns;
    node_fns.emplace_back(MarginalFunction::equality(setup.initial.row(0).transpose()));
    for (std::size_t j = 1; j < T; ++j) {
        // With one species the species density is the total density.
        CompositeFunction f = total_at(setup, j);
        MarginalFunction own = species_piece(setup, j, 0);
        if (!own.is_zero()) {
            if (f.is_zero()) f.parts.clear();
            f.parts.push_back(std::move(own));
        }
        node_fns.push_back(std::move(f));
    }
    return ProblemSpec(GraphTopology::path_chain(std::vector<Index>(T, n)), std::move(kernels), std::move(node_fns),
                       std::move(edge_fns), setup.epsilon);
}

}  // namespace gtop
