#include "gtop/model.hpp"

#include "gtop/errors.hpp"
#include "gtop/projection.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace gtop {

const char* topology_name(TopologyClass c) {
    switch (c) {
        case TopologyClass::PathChain: return "path_chain";
        case TopologyClass::PathWithODCycle: return "path_od_cycle";
        case TopologyClass::SpeciesHub: return "species_hub";
        case TopologyClass::GeneralSmall: return "general";
    }
    return "?";
}

GraphTopology::GraphTopology(TopologyClass kind, std::vector<Index> sizes, std::vector<Edge> edges)
    : kind_(kind), sizes_(std::move(sizes)), edges_(std::move(edges)) {
    if (sizes_.empty()) throw InvalidInput("topology needs at least one node");
    for (Index n : sizes_)
        if (n <= 0) throw InvalidInput("every node needs a positive state count");
    const int T = node_count();
    for (const Edge& e : edges_) {
        if (e.from < 0 || e.to < 0 || e.from >= T || e.to >= T || e.from == e.to)
            throw InvalidInput("edge endpoints out of range");
    }
    // Connectivity by union-find.
    std::vector<int> parent(static_cast<std::size_t>(T));
    std::iota(parent.begin(), parent.end(), 0);
    auto root = [&](int x) {
        while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)];
        return x;
    };
    for (const Edge& e : edges_) parent[static_cast<std::size_t>(root(e.from))] = root(e.to);
    for (int t = 1; t < T; ++t)
        if (root(t) != root(0)) throw InvalidInput("graph is not connected");
}

GraphTopology GraphTopology::path_chain(std::vector<Index> sizes) {
    std::vector<Edge> edges;
    for (int t = 0; t + 1 < static_cast<int>(sizes.size()); ++t) edges.push_back({t, t + 1});
    return GraphTopology(TopologyClass::PathChain, std::move(sizes), std::move(edges));
}

GraphTopology GraphTopology::path_with_od_cycle(std::vector<Index> sizes) {
    const int T = static_cast<int>(sizes.size());
    if (T < 3) throw InvalidInput("an origin-destination cycle needs at least three nodes");
    std::vector<Edge> edges;
    for (int t = 0; t + 1 < T; ++t) edges.push_back({t, t + 1});
    edges.push_back({0, T - 1});
    return GraphTopology(TopologyClass::PathWithODCycle, std::move(sizes), std::move(edges));
}

GraphTopology GraphTopology::species_hub(std::vector<Index> time_sizes, Index species) {
    if (species <= 0) throw InvalidInput("species count must be positive");
    const int T = static_cast<int>(time_sizes.size());
    if (T < 1) throw InvalidInput("species hub needs at least one time node");
    std::vector<Edge> edges;
    for (int t = 0; t + 1 < T; ++t) edges.push_back({t, t + 1});
    for (int t = 0; t < T; ++t) edges.push_back({T, t});
    time_sizes.push_back(species);
    return GraphTopology(TopologyClass::SpeciesHub, std::move(time_sizes), std::move(edges));
}

GraphTopology GraphTopology::general(std::vector<Index> sizes, std::vector<Edge> edges) {
    if (sizes.size() > 6) throw InvalidInput("general graphs are limited to 6 nodes");
    for (Index n : sizes)
        if (n > 6) throw InvalidInput("general graphs are limited to 6 states per node");
    for (std::size_t a = 0; a < edges.size(); ++a)
        for (std::size_t b = 0; b < a; ++b) {
            const bool same = (edges[a].from == edges[b].from && edges[a].to == edges[b].to) ||
                              (edges[a].from == edges[b].to && edges[a].to == edges[b].from);
            if (same) throw InvalidInput("duplicate edge in general graph");
        }
    return GraphTopology(TopologyClass::GeneralSmall, std::move(sizes), std::move(edges));
}

int GraphTopology::hub() const {
    if (kind_ != TopologyClass::SpeciesHub) throw InvalidInput("topology has no hub");
    return node_count() - 1;
}

Index GraphTopology::species() const { return sizes_.at(static_cast<std::size_t>(hub())); }

int GraphTopology::chord() const {
    if (kind_ != TopologyClass::PathWithODCycle) throw InvalidInput("topology has no chord");
    return edge_count() - 1;
}

int GraphTopology::hub_edge(int t) const {
    if (kind_ != TopologyClass::SpeciesHub) throw InvalidInput("topology has no hub");
    return time_nodes() - 1 + t;
}

std::optional<int> GraphTopology::find_edge(int a, int b) const {
    for (int e = 0; e < edge_count(); ++e)
        if (edges_[static_cast<std::size_t>(e)].from == a && edges_[static_cast<std::size_t>(e)].to == b) return e;
    return std::nullopt;
}

std::string GraphTopology::node_label(int node) const {
    if (kind_ == TopologyClass::SpeciesHub && node == hub()) return "node hub";
    return "node " + std::to_string(node);
}

std::string GraphTopology::edge_label(int e) const {
    const Edge& ed = edge(e);
    auto name = [&](int n) {
        return (kind_ == TopologyClass::SpeciesHub && n == hub()) ? std::string("hub") : std::to_string(n);
    };
    return "edge " + name(ed.from) + "-" + name(ed.to);
}

Index GraphTopology::dense_size() const {
    Index total = 1;
    for (Index n : sizes_) {
        if (total > kDenseLimit) return total;
        total *= n;
    }
    return total;
}

bool GraphTopology::within_dense_limit() const { return dense_size() <= kDenseLimit; }

EdgeKernel build_kernel(const Matrix& cost, double eps) {
    if (!std::isfinite(eps) || eps <= 0.0) throw InvalidInput("epsilon must be positive and finite");
    double cmin = kInf;
    for (Index i = 0; i < cost.size(); ++i) {
        const double c = cost.data()[i];
        if (std::isnan(c) || c == -kInf) throw InvalidInput("cost entries must be real or +inf");
        cmin = std::min(cmin, c);
    }
    EdgeKernel k;
    k.kernel.mantissa = Matrix::Zero(cost.rows(), cost.cols());
    if (cmin == kInf) return k;
    for (Index i = 0; i < cost.size(); ++i) {
        const double c = cost.data()[i];
        k.kernel.mantissa.data()[i] = c == kInf ? 0.0 : std::exp(-(c - cmin) / eps);
    }
    k.kernel.log_scale = -cmin / eps;
    return k;
}

EdgeKernel unit_kernel(Index rows, Index cols) { return EdgeKernel{ones_matrix(rows, cols)}; }

ProblemSpec::ProblemSpec(GraphTopology topology, std::vector<EdgeKernel> kernels,
                         std::vector<CompositeFunction> node_functions, std::vector<CompositeFunction> edge_functions,
                         double epsilon)
    : topology_(std::move(topology)),
      kernels_(std::move(kernels)),
      node_functions_(std::move(node_functions)),
      edge_functions_(std::move(edge_functions)),
      epsilon_(epsilon) {
    if (!std::isfinite(epsilon_) || epsilon_ <= 0.0) throw InvalidInput("epsilon must be positive and finite");
    const int T = topology_.node_count();
    const int E = topology_.edge_count();
    if (static_cast<int>(kernels_.size()) != E) throw InvalidInput("one kernel per edge required");
    if (static_cast<int>(node_functions_.size()) != T) throw InvalidInput("one functional per node required");
    if (static_cast<int>(edge_functions_.size()) != E) throw InvalidInput("one functional per edge required");
    for (int e = 0; e < E; ++e) {
        const Edge& ed = topology_.edge(e);
        const EdgeKernel& k = kernels_[static_cast<std::size_t>(e)];
        if (k.rows() != topology_.size(ed.from) || k.cols() != topology_.size(ed.to)) {
            std::ostringstream os;
            os << topology_.edge_label(e) << ": kernel is " << k.rows() << "x" << k.cols() << ", expected "
               << topology_.size(ed.from) << "x" << topology_.size(ed.to);
            throw InvalidInput(os.str());
        }
        if ((k.kernel.mantissa.array() < 0.0).any() || !k.kernel.mantissa.allFinite())
            throw InvalidInput(topology_.edge_label(e) + ": kernel entries must be finite and nonnegative");
        const auto& f = edge_functions_[static_cast<std::size_t>(e)];
        if (f.parts.empty()) throw InvalidInput(topology_.edge_label(e) + ": empty functional list");
        for (const auto& part : f.parts)
            if (part.size() != k.rows() * k.cols())
                throw InvalidInput(topology_.edge_label(e) + ": functional size does not match the edge");
    }
    for (int t = 0; t < T; ++t) {
        const auto& f = node_functions_[static_cast<std::size_t>(t)];
        if (f.parts.empty()) throw InvalidInput(topology_.node_label(t) + ": empty functional list");
        for (const auto& part : f.parts)
            if (part.size() != topology_.size(t))
                throw InvalidInput(topology_.node_label(t) + ": functional size does not match the node");
    }
}

DualPotentials DualPotentials::ones(const ProblemSpec& spec) {
    const GraphTopology& g = spec.topology();
    DualPotentials p;
    for (int t = 0; t < g.node_count(); ++t)
        p.node.emplace_back(spec.node_function(t).parts.size(), ones_vector(g.size(t)));
    for (int e = 0; e < g.edge_count(); ++e) {
        const Edge& ed = g.edge(e);
        p.edge.emplace_back(spec.edge_function(e).parts.size(), ones_matrix(g.size(ed.from), g.size(ed.to)));
    }
    return p;
}

ScaledVector DualPotentials::node_product(int t) const {
    const auto& fs = node.at(static_cast<std::size_t>(t));
    ScaledVector out = fs.front();
    for (std::size_t k = 1; k < fs.size(); ++k) out = hadamard(out, fs[k]);
    return out;
}

ScaledMatrix DualPotentials::edge_product(int e) const {
    const auto& fs = edge.at(static_cast<std::size_t>(e));
    ScaledMatrix out = fs.front();
    for (std::size_t k = 1; k < fs.size(); ++k) out = hadamard(out, fs[k]);
    return out;
}

double log_total_mass(const DualPotentials& potentials, const ProblemSpec& spec) {
    auto projector = make_projector(spec);
    projector->refresh(potentials);
    return projector->marginal(0).log_sum();
}

double total_mass(const DualPotentials& potentials, const ProblemSpec& spec) {
    return std::exp(log_total_mass(potentials, spec));
}

double conjugate_sum(const DualPotentials& potentials, const ProblemSpec& spec) {
    const double eps = spec.epsilon();
    const GraphTopology& g = spec.topology();
    double total = 0.0;
    for (int t = 0; t < g.node_count(); ++t) {
        const auto& parts = spec.node_function(t).parts;
        for (std::size_t k = 0; k < parts.size(); ++k)
            total += conjugate(parts[k], dual_argument(potentials.node[static_cast<std::size_t>(t)][k], eps));
    }
    for (int e = 0; e < g.edge_count(); ++e) {
        const auto& parts = spec.edge_function(e).parts;
        for (std::size_t k = 0; k < parts.size(); ++k) {
            const ScaledMatrix& U = potentials.edge[static_cast<std::size_t>(e)][k];
            total += conjugate(parts[k], dual_argument(ScaledVector(flatten(U.mantissa), U.log_scale), eps));
        }
    }
    return total;
}

double dual_objective(const DualPotentials& potentials, const ProblemSpec& spec) {
    const double conj = conjugate_sum(potentials, spec);
    if (conj == kInf) return -kInf;
    return -spec.epsilon() * total_mass(potentials, spec) - conj;
}

}  // namespace gtop
