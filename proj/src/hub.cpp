#include "gtop/errors.hpp"
#include "gtop/projection.hpp"
#include "ops.hpp"

namespace gtop {

HubProjector::HubProjector(const ProblemSpec& spec, int renormalize_threshold)
    : Projector(spec, renormalize_threshold),
      times_(spec.topology().time_nodes()),
      hub_(spec.topology().kind() == TopologyClass::SpeciesHub ? spec.topology().hub() : -1) {
    if (spec.topology().kind() != TopologyClass::SpeciesHub) throw InvalidInput("hub projector needs a species hub");
    fwd_.resize(static_cast<std::size_t>(times_));
    bwd_.resize(static_cast<std::size_t>(times_));
}

ScaledMatrix HubProjector::attach(int t) const {
    return ops::scale_cols(eff(spec_->topology().hub_edge(t)), u(t));
}

void HubProjector::reset_forward() {
    const Index n0 = spec_->topology().size(0);
    fwd_[0] = ScaledMatrix(u(hub_).mantissa * Vector::Ones(n0).transpose(), u(hub_).log_scale);
}

// F_{t+1} = (F_t . A_t) E_t
void HubProjector::push_forward(int t) {
    ScaledMatrix m = ops::mul(ops::prod(fwd_[static_cast<std::size_t>(t)], attach(t)), eff(t));
    normalize(m);
    fwd_[static_cast<std::size_t>(t) + 1] = std::move(m);
}

// B_t = (B_{t+1} . A_{t+1}) E_t^T
void HubProjector::backward_pass() {
    const GraphTopology& g = spec_->topology();
    bwd_[static_cast<std::size_t>(times_) - 1] = ones_matrix(g.species(), g.size(times_ - 1));
    for (int t = times_ - 2; t >= 0; --t) {
        ScaledMatrix m = ops::mul_t(ops::prod(bwd_[static_cast<std::size_t>(t) + 1], attach(t + 1)), eff(t));
        normalize(m);
        bwd_[static_cast<std::size_t>(t)] = std::move(m);
    }
}

void HubProjector::rebuild_messages() {
    reset_forward();
    for (int t = 0; t + 1 < times_; ++t) push_forward(t);
    backward_pass();
}

// F_t . B_t . local, the species x state projection when local = A_t.
ScaledMatrix HubProjector::species_time(int t, const ScaledMatrix& local) const {
    const auto i = static_cast<std::size_t>(t);
    return ops::normalized(ops::prod(ops::prod(fwd_[i], bwd_[i]), local));
}

ScaledVector HubProjector::node_weights(int node) const {
    if (node == hub_) return ops::normalized(ops::row_sums(ops::prod(bwd_[0], attach(0))));
    return ops::normalized(ops::col_sums(species_time(node, eff(spec_->topology().hub_edge(node)))));
}

ScaledVector HubProjector::marginal(int node) const {
    if (node == hub_) return ops::normalized(ops::row_sums(species_time(0, attach(0))));
    return ops::normalized(ops::col_sums(species_time(node, attach(node))));
}

ScaledMatrix HubProjector::path_pair(int t, const ScaledMatrix& core) const {
    const auto i = static_cast<std::size_t>(t);
    const ScaledMatrix left = ops::normalized(ops::prod(fwd_[i], attach(t)));
    const ScaledMatrix right = ops::normalized(ops::prod(bwd_[i + 1], attach(t + 1)));
    return ops::normalized(ops::prod(core, ops::t_mul(left, right)));
}

ScaledMatrix HubProjector::bimarginal(int edge) const {
    const Edge& ed = spec_->topology().edge(edge);
    if (ed.from == hub_) return species_time(ed.to, attach(ed.to));
    return path_pair(edge, eff(edge));
}

ScaledMatrix HubProjector::edge_weights(int edge) const {
    const Edge& ed = spec_->topology().edge(edge);
    if (ed.from == hub_) return species_time(ed.to, ops::scale_cols(kern(edge), u(ed.to)));
    return path_pair(edge, kern(edge));
}

void HubProjector::sweep(BlockUpdater& updater) {
    const GraphTopology& g = spec_->topology();
    update_node(updater, hub_);
    reset_forward();
    for (int t = 0; t < times_; ++t) {
        update_edge(updater, g.hub_edge(t));
        update_node(updater, t);
        if (t + 1 < times_) {
            update_edge(updater, t);
            push_forward(t);
        }
    }
    backward_pass();
}

}  // namespace gtop
