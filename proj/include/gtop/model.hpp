#pragma once

#include "gtop/functions.hpp"
#include "gtop/scaled.hpp"

#include <optional>
#include <string>
#include <vector>

namespace gtop {

enum class TopologyClass { PathChain, PathWithODCycle, SpeciesHub, GeneralSmall };

const char* topology_name(TopologyClass c);

struct Edge {
    int from;
    int to;
};

// Edge numbering is fixed per class:
//   PathChain        edge t = (t, t+1)
//   PathWithODCycle  path edges first, then the chord (0, T-1)
//   SpeciesHub       time nodes 0..T-1, hub node T; path edges first, then (hub, t) for every t
class GraphTopology {
public:
    static GraphTopology path_chain(std::vector<Index> sizes);
    static GraphTopology path_with_od_cycle(std::vector<Index> sizes);
    static GraphTopology species_hub(std::vector<Index> time_sizes, Index species);
    static GraphTopology general(std::vector<Index> sizes, std::vector<Edge> edges);

    TopologyClass kind() const { return kind_; }
    int node_count() const { return static_cast<int>(sizes_.size()); }
    int edge_count() const { return static_cast<int>(edges_.size()); }
    Index size(int node) const { return sizes_.at(static_cast<std::size_t>(node)); }
    const std::vector<Index>& sizes() const { return sizes_; }
    const std::vector<Edge>& edges() const { return edges_; }
    const Edge& edge(int e) const { return edges_.at(static_cast<std::size_t>(e)); }

    // Number of nodes on the path (every node except the hub).
    int time_nodes() const { return kind_ == TopologyClass::SpeciesHub ? node_count() - 1 : node_count(); }
    int hub() const;
    Index species() const;
    int chord() const;
    int path_edge(int t) const { return t; }
    int hub_edge(int t) const;

    std::optional<int> find_edge(int a, int b) const;
    std::string node_label(int node) const;
    std::string edge_label(int e) const;

    // Largest dense tensor the brute-force path will build.
    static constexpr Index kDenseLimit = 46656;
    Index dense_size() const;
    bool within_dense_limit() const;

private:
    GraphTopology(TopologyClass kind, std::vector<Index> sizes, std::vector<Edge> edges);

    TopologyClass kind_;
    std::vector<Index> sizes_;
    std::vector<Edge> edges_;
};

// Gibbs kernel exp(-C/eps), stored scaled so the largest mantissa is 1.
struct EdgeKernel {
    ScaledMatrix kernel;

    Index rows() const { return kernel.mantissa.rows(); }
    Index cols() const { return kernel.mantissa.cols(); }
    // True where the cost was finite.
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> support() const {
        return kernel.mantissa.array() > 0.0;
    }
};

// Entries of C may be +inf (forbidden transitions). Finite costs more than
// ~745*eps above the smallest cost underflow to zero as well.
EdgeKernel build_kernel(const Matrix& cost, double eps);

// Kernel of a zero cost, i.e. all ones.
EdgeKernel unit_kernel(Index rows, Index cols);

class ProblemSpec {
public:
    ProblemSpec(GraphTopology topology, std::vector<EdgeKernel> kernels, std::vector<CompositeFunction> node_functions,
                std::vector<CompositeFunction> edge_functions, double epsilon);

    const GraphTopology& topology() const { return topology_; }
    const EdgeKernel& kernel(int e) const { return kernels_.at(static_cast<std::size_t>(e)); }
    const CompositeFunction& node_function(int t) const { return node_functions_.at(static_cast<std::size_t>(t)); }
    const CompositeFunction& edge_function(int e) const { return edge_functions_.at(static_cast<std::size_t>(e)); }
    double epsilon() const { return epsilon_; }

    bool node_constrained(int t) const { return !node_function(t).is_zero(); }
    bool edge_constrained(int e) const { return !edge_function(e).is_zero(); }

private:
    GraphTopology topology_;
    std::vector<EdgeKernel> kernels_;
    std::vector<CompositeFunction> node_functions_;
    std::vector<CompositeFunction> edge_functions_;
    double epsilon_;
};

// u_{t,k} per node and factor, U_{e,k} per edge and factor. All ones is the
// neutral start (every multiplier at zero).
struct DualPotentials {
    std::vector<std::vector<ScaledVector>> node;
    std::vector<std::vector<ScaledMatrix>> edge;

    static DualPotentials ones(const ProblemSpec& spec);

    ScaledVector node_product(int t) const;
    ScaledMatrix edge_product(int e) const;
};

// Sum of all tensor entries; evaluated as the total of the node-0 marginal.
double total_mass(const DualPotentials& potentials, const ProblemSpec& spec);
double log_total_mass(const DualPotentials& potentials, const ProblemSpec& spec);

// Sum of conjugate terms over every node and edge factor.
double conjugate_sum(const DualPotentials& potentials, const ProblemSpec& spec);

double dual_objective(const DualPotentials& potentials, const ProblemSpec& spec);

}  // namespace gtop
