#include "gtop/errors.hpp"
#include "gtop/projection.hpp"
#include "ops.hpp"

namespace gtop {

ChainProjector::ChainProjector(const ProblemSpec& spec, int renormalize_threshold)
    : Projector(spec, renormalize_threshold) {
    if (spec.topology().kind() != TopologyClass::PathChain) throw InvalidInput("chain projector needs a path chain");
    fwd_.resize(u_.size());
    bwd_.resize(u_.size());
}

void ChainProjector::push_forward(int t) {
    ScaledVector m = ops::tmul(eff(t), ops::prod(u(t), fwd_[static_cast<std::size_t>(t)]));
    normalize(m);
    fwd_[static_cast<std::size_t>(t) + 1] = std::move(m);
}

void ChainProjector::backward_pass() {
    const int T = static_cast<int>(u_.size());
    bwd_[static_cast<std::size_t>(T) - 1] = ones_vector(spec_->topology().size(T - 1));
    for (int t = T - 2; t >= 0; --t) {
        ScaledVector m = ops::mul(eff(t), ops::prod(u(t + 1), bwd_[static_cast<std::size_t>(t) + 1]));
        normalize(m);
        bwd_[static_cast<std::size_t>(t)] = std::move(m);
    }
}

void ChainProjector::rebuild_messages() {
    fwd_[0] = ones_vector(spec_->topology().size(0));
    for (int t = 0; t + 1 < static_cast<int>(u_.size()); ++t) push_forward(t);
    backward_pass();
}

ScaledVector ChainProjector::node_weights(int node) const {
    return ops::normalized(ops::prod(fwd_.at(static_cast<std::size_t>(node)), bwd_.at(static_cast<std::size_t>(node))));
}

ScaledVector ChainProjector::marginal(int node) const { return ops::normalized(ops::prod(u(node), node_weights(node))); }

ScaledMatrix ChainProjector::pair(int edge, const ScaledMatrix& core) const {
    const auto t = static_cast<std::size_t>(edge);
    const ScaledVector left = ops::prod(u(edge), fwd_[t]);
    const ScaledVector right = ops::prod(u(edge + 1), bwd_[t + 1]);
    return ops::normalized(ops::scale_cols(ops::scale_rows(left, core), right));
}

ScaledMatrix ChainProjector::bimarginal(int edge) const { return pair(edge, eff(edge)); }
ScaledMatrix ChainProjector::edge_weights(int edge) const { return pair(edge, kern(edge)); }

void ChainProjector::sweep(BlockUpdater& updater) {
    const int T = static_cast<int>(u_.size());
    fwd_[0] = ones_vector(spec_->topology().size(0));
    for (int t = 0; t < T; ++t) {
        update_node(updater, t);
        if (t + 1 < T) {
            update_edge(updater, t);
            push_forward(t);
        }
    }
    backward_pass();
}

}  // namespace gtop
