#include "gtop/errors.hpp"
#include "gtop/projection.hpp"
#include "ops.hpp"

namespace gtop {

ODProjector::ODProjector(const ProblemSpec& spec, int renormalize_threshold)
    : Projector(spec, renormalize_threshold),
      last_(spec.topology().node_count() - 1),
      chord_(spec.topology().kind() == TopologyClass::PathWithODCycle ? spec.topology().chord() : -1) {
    if (spec.topology().kind() != TopologyClass::PathWithODCycle)
        throw InvalidInput("OD projector needs a path with an origin-destination chord");
    fwd_.resize(u_.size());
    bwd_.resize(u_.size());
}

// fwd_[j+1] = fwd_[j] diag(u_j) E_j, with fwd_[1] = E_0.
void ODProjector::push_forward(int j) {
    ScaledMatrix m = j == 0 ? eff(0) : ops::mul(ops::scale_cols(fwd_[static_cast<std::size_t>(j)], u(j)), eff(j));
    normalize(m);
    fwd_[static_cast<std::size_t>(j) + 1] = std::move(m);
}

// bwd_[j] = E_j diag(u_{j+1}) bwd_[j+1], with bwd_[T-2] = E_{T-2}.
void ODProjector::backward_pass() {
    bwd_[static_cast<std::size_t>(last_) - 1] = eff(last_ - 1);
    for (int j = last_ - 2; j >= 0; --j) {
        ScaledMatrix m = ops::mul(ops::scale_cols(eff(j), u(j + 1)), bwd_[static_cast<std::size_t>(j) + 1]);
        normalize(m);
        bwd_[static_cast<std::size_t>(j)] = std::move(m);
    }
}

void ODProjector::rebuild_messages() {
    for (int j = 0; j < last_; ++j) push_forward(j);
    backward_pass();
}

ScaledMatrix ODProjector::chord_plan() const {
    return ops::scale_cols(ops::scale_rows(u(0), eff(chord_)), u(last_));
}

ScaledVector ODProjector::interior_weights(int j) const {
    const ScaledMatrix x = ops::mul_t(bwd_[static_cast<std::size_t>(j)], ops::normalized(chord_plan()));
    const ScaledMatrix& f = fwd_[static_cast<std::size_t>(j)];
    return ops::normalized(ScaledVector(f.mantissa.transpose().cwiseProduct(x.mantissa).rowwise().sum(),
                                        f.log_scale + x.log_scale));
}

ScaledVector ODProjector::node_weights(int node) const {
    const ScaledMatrix& paths = bwd_[0];
    if (node == 0)
        return ops::normalized(ops::row_sums(ops::prod(ops::scale_cols(eff(chord_), u(last_)), paths)));
    if (node == last_)
        return ops::normalized(ops::col_sums(ops::prod(ops::scale_rows(u(0), eff(chord_)), paths)));
    return interior_weights(node);
}

ScaledVector ODProjector::marginal(int node) const {
    if (node == 0 || node == last_) {
        const ScaledMatrix p = bimarginal(chord_);
        return ops::normalized(node == 0 ? ops::row_sums(p) : ops::col_sums(p));
    }
    return ops::normalized(ops::prod(u(node), interior_weights(node)));
}

// Pair (j, j+1) of the path: u~_j(a) core(a,b) u~_{j+1}(b) (F_j^T Ch B_{j+1}^T)(a,b),
// where F_0 and B_{T-1} are identities and u~ is one at the two endpoints
// (their potentials already sit inside Ch).
ScaledMatrix ODProjector::path_pair(int j, const ScaledMatrix& core) const {
    ScaledMatrix g = ops::normalized(chord_plan());
    if (j > 0) g = ops::normalized(ops::t_mul(fwd_[static_cast<std::size_t>(j)], g));
    if (j + 1 < last_) g = ops::mul_t(g, bwd_[static_cast<std::size_t>(j) + 1]);
    ScaledMatrix local = core;
    if (j > 0) local = ops::scale_rows(u(j), local);
    if (j + 1 < last_) local = ops::scale_cols(local, u(j + 1));
    return ops::normalized(ops::prod(local, g));
}

ScaledMatrix ODProjector::bimarginal(int edge) const {
    if (edge == chord_) return ops::normalized(ops::prod(chord_plan(), bwd_[0]));
    return path_pair(edge, eff(edge));
}

ScaledMatrix ODProjector::edge_weights(int edge) const {
    if (edge == chord_)
        return ops::normalized(ops::scale_cols(ops::scale_rows(u(0), ops::prod(kern(chord_), bwd_[0])), u(last_)));
    return path_pair(edge, kern(edge));
}

void ODProjector::sweep(BlockUpdater& updater) {
    update_node(updater, 0);
    update_node(updater, last_);
    update_edge(updater, chord_);
    update_edge(updater, 0);
    push_forward(0);
    for (int j = 1; j < last_; ++j) {
        update_node(updater, j);
        update_edge(updater, j);
        push_forward(j);
    }
    backward_pass();
}

}  // namespace gtop
