#pragma once

#include "gtop/model.hpp"

#include <memory>
#include <vector>

namespace gtop {

// Callback used by Projector::sweep. It receives the weights of a block (the
// projection with that block's own potential left out) and returns the new
// combined potential of the block.
class BlockUpdater {
public:
    virtual ~BlockUpdater() = default;
    virtual ScaledVector update_node(int node, const ScaledVector& weights) = 0;
    virtual ScaledMatrix update_edge(int edge, const ScaledMatrix& weights) = 0;
};

// Marginal and bimarginal projections of K.U for one topology. Queries are
// valid after refresh() and after every completed sweep().
class Projector {
public:
    explicit Projector(const ProblemSpec& spec, int renormalize_threshold = 64);
    virtual ~Projector() = default;
    Projector(const Projector&) = delete;
    Projector& operator=(const Projector&) = delete;

    const ProblemSpec& spec() const { return *spec_; }

    void refresh(const DualPotentials& potentials);

    virtual ScaledVector marginal(int node) const = 0;
    virtual ScaledMatrix bimarginal(int edge) const = 0;
    virtual ScaledVector node_weights(int node) const = 0;
    virtual ScaledMatrix edge_weights(int edge) const = 0;

    // One pass over every constrained block, in the topology's update order.
    virtual void sweep(BlockUpdater& updater) = 0;

    long rescale_events() const { return events_; }

protected:
    virtual void rebuild_messages() = 0;

    template <typename Array>
    void normalize(Scaled<Array>& a) {
        if (a.renormalize(threshold_)) ++events_;
    }

    void set_node(int t, ScaledVector u) { u_[static_cast<std::size_t>(t)] = std::move(u); }
    void set_edge(int e, const ScaledMatrix& U);
    const ScaledVector& u(int t) const { return u_[static_cast<std::size_t>(t)]; }
    // K_e with the edge potential applied.
    const ScaledMatrix& eff(int e) const { return eff_[static_cast<std::size_t>(e)]; }
    const ScaledMatrix& kern(int e) const { return spec_->kernel(e).kernel; }

    void update_node(BlockUpdater& up, int t);
    void update_edge(BlockUpdater& up, int e);

    const ProblemSpec* spec_;
    int threshold_;
    long events_ = 0;
    std::vector<ScaledVector> u_;
    std::vector<ScaledMatrix> eff_;
};

std::unique_ptr<Projector> make_projector(const ProblemSpec& spec, int renormalize_threshold = 64);
// Dense brute-force projector; any topology within the dense size limit.
std::unique_ptr<Projector> make_oracle_projector(const ProblemSpec& spec);

// Forward messages collect everything before a node, backward messages
// everything after it; neither contains the node's own potential.
struct ChainMessages {
    std::vector<ScaledVector> forward;
    std::vector<ScaledVector> backward;
};

// forward[j] (j >= 1) sums paths 0 -> j, N_0 x N_j; backward[j] (j <= T-2)
// sums paths j -> T-1, N_j x N_{T-1}. Endpoint and chord potentials excluded.
struct ODMessages {
    std::vector<ScaledMatrix> forward;
    std::vector<ScaledMatrix> backward;
};

// Species x state matrices. forward[t] carries the hub potential and
// everything before t; backward[t] everything after t.
struct HubMessages {
    std::vector<ScaledMatrix> forward;
    std::vector<ScaledMatrix> backward;
};

class ChainProjector final : public Projector {
public:
    explicit ChainProjector(const ProblemSpec& spec, int renormalize_threshold = 64);
    ScaledVector marginal(int node) const override;
    ScaledMatrix bimarginal(int edge) const override;
    ScaledVector node_weights(int node) const override;
    ScaledMatrix edge_weights(int edge) const override;
    void sweep(BlockUpdater& updater) override;
    ChainMessages messages() const { return {fwd_, bwd_}; }

private:
    void rebuild_messages() override;
    void push_forward(int t);
    void backward_pass();
    ScaledMatrix pair(int edge, const ScaledMatrix& core) const;

    std::vector<ScaledVector> fwd_;
    std::vector<ScaledVector> bwd_;
};

class ODProjector final : public Projector {
public:
    explicit ODProjector(const ProblemSpec& spec, int renormalize_threshold = 64);
    ScaledVector marginal(int node) const override;
    ScaledMatrix bimarginal(int edge) const override;
    ScaledVector node_weights(int node) const override;
    ScaledMatrix edge_weights(int edge) const override;
    void sweep(BlockUpdater& updater) override;
    ODMessages messages() const { return {fwd_, bwd_}; }

private:
    void rebuild_messages() override;
    void push_forward(int j);
    void backward_pass();
    ScaledMatrix chord_plan() const;
    ScaledVector interior_weights(int j) const;
    ScaledMatrix path_pair(int j, const ScaledMatrix& core) const;

    int last_;
    int chord_;
    std::vector<ScaledMatrix> fwd_;
    std::vector<ScaledMatrix> bwd_;
};

class HubProjector final : public Projector {
public:
    explicit HubProjector(const ProblemSpec& spec, int renormalize_threshold = 64);
    ScaledVector marginal(int node) const override;
    ScaledMatrix bimarginal(int edge) const override;
    ScaledVector node_weights(int node) const override;
    ScaledMatrix edge_weights(int edge) const override;
    void sweep(BlockUpdater& updater) override;
    HubMessages messages() const { return {fwd_, bwd_}; }

private:
    void rebuild_messages() override;
    void reset_forward();
    void push_forward(int t);
    void backward_pass();
    ScaledMatrix attach(int t) const;  // hub-edge matrix with u_t applied to its columns
    ScaledMatrix species_time(int t, const ScaledMatrix& local) const;
    ScaledMatrix path_pair(int t, const ScaledMatrix& core) const;

    int times_;
    int hub_;
    std::vector<ScaledMatrix> fwd_;
    std::vector<ScaledMatrix> bwd_;
};

ChainMessages chain_messages(const DualPotentials& potentials, const ProblemSpec& spec);
ScaledVector chain_project_marginal(int node, const DualPotentials& potentials, const ProblemSpec& spec);
ScaledMatrix chain_project_bimarginal(int node, const DualPotentials& potentials, const ProblemSpec& spec);

ODMessages od_messages(const DualPotentials& potentials, const ProblemSpec& spec);
ScaledVector od_project_marginal(int node, const DualPotentials& potentials, const ProblemSpec& spec);
ScaledMatrix od_project_od(const DualPotentials& potentials, const ProblemSpec& spec);

HubMessages hub_messages(const DualPotentials& potentials, const ProblemSpec& spec);
ScaledMatrix hub_project_species_time(int node, const DualPotentials& potentials, const ProblemSpec& spec);
ScaledVector hub_project_time(int node, const DualPotentials& potentials, const ProblemSpec& spec);
ScaledVector hub_project_species(const DualPotentials& potentials, const ProblemSpec& spec);

// Row-major dense tensor, mode 0 slowest.
struct DenseTensor {
    std::vector<Index> dims;
    std::vector<double> values;
    double log_scale = 0.0;
};

// Materializes K.U entry by entry. The potentials of skip_node / skip_edge
// are left out, which yields block weights instead of projections.
DenseTensor oracle_dense_tensor(const DualPotentials& potentials, const ProblemSpec& spec, int skip_node = -1,
                                int skip_edge = -1);
// Sums out every mode not listed; result modes follow the given order.
DenseTensor oracle_project(const DenseTensor& tensor, const std::vector<int>& modes);
ScaledVector oracle_marginal(const DenseTensor& tensor, int node);
ScaledMatrix oracle_bimarginal(const DenseTensor& tensor, int a, int b);

}  // namespace gtop
