#include "gtop/projection.hpp"

#include "gtop/errors.hpp"
#include "ops.hpp"

#include <cmath>
#include <string>

namespace gtop {

Projector::Projector(const ProblemSpec& spec, int renormalize_threshold)
    : spec_(&spec), threshold_(renormalize_threshold) {
    u_.resize(static_cast<std::size_t>(spec.topology().node_count()));
    eff_.resize(static_cast<std::size_t>(spec.topology().edge_count()));
}

void Projector::refresh(const DualPotentials& potentials) {
    const GraphTopology& g = spec_->topology();
    for (int t = 0; t < g.node_count(); ++t) set_node(t, ops::normalized(potentials.node_product(t)));
    for (int e = 0; e < g.edge_count(); ++e) set_edge(e, potentials.edge_product(e));
    rebuild_messages();
}

void Projector::set_edge(int e, const ScaledMatrix& U) {
    ScaledMatrix m = ops::prod(kern(e), U);
    normalize(m);
    eff_[static_cast<std::size_t>(e)] = std::move(m);
}

void Projector::update_node(BlockUpdater& up, int t) {
    if (!spec_->node_constrained(t)) return;
    ScaledVector u = up.update_node(t, node_weights(t));
    u.renormalize();
    set_node(t, std::move(u));
}

void Projector::update_edge(BlockUpdater& up, int e) {
    if (!spec_->edge_constrained(e)) return;
    set_edge(e, up.update_edge(e, edge_weights(e)));
}

namespace {

DenseTensor dense_from(const ProblemSpec& spec, const std::vector<ScaledVector>& u,
                       const std::vector<ScaledMatrix>& eff, int skip_node, int skip_edge) {
    const GraphTopology& g = spec.topology();
    if (!g.within_dense_limit()) throw InvalidInput("dense tensor exceeds the brute-force size limit");
    const int T = g.node_count();
    DenseTensor out;
    out.dims = g.sizes();
    Index total = g.dense_size();
    out.values.assign(static_cast<std::size_t>(total), 0.0);

    std::vector<const ScaledMatrix*> mats;
    for (int e = 0; e < g.edge_count(); ++e) {
        const ScaledMatrix* m = e == skip_edge ? &spec.kernel(e).kernel : &eff[static_cast<std::size_t>(e)];
        mats.push_back(m);
        out.log_scale += m->log_scale;
    }
    for (int t = 0; t < T; ++t)
        if (t != skip_node) out.log_scale += u[static_cast<std::size_t>(t)].log_scale;

    std::vector<Index> idx(static_cast<std::size_t>(T), 0);
    for (Index lin = 0; lin < total; ++lin) {
        double v = 1.0;
        for (int t = 0; t < T && v != 0.0; ++t)
            if (t != skip_node) v *= u[static_cast<std::size_t>(t)].mantissa[idx[static_cast<std::size_t>(t)]];
        for (int e = 0; e < g.edge_count() && v != 0.0; ++e) {
            const Edge& ed = g.edge(e);
            v *= mats[static_cast<std::size_t>(e)]->mantissa(idx[static_cast<std::size_t>(ed.from)],
                                                             idx[static_cast<std::size_t>(ed.to)]);
        }
        out.values[static_cast<std::size_t>(lin)] = v;
        for (int t = T - 1; t >= 0; --t) {
            auto& i = idx[static_cast<std::size_t>(t)];
            if (++i < g.size(t)) break;
            i = 0;
        }
    }
    return out;
}

class OracleProjector final : public Projector {
public:
    explicit OracleProjector(const ProblemSpec& spec) : Projector(spec) {
        if (!spec.topology().within_dense_limit())
            throw InvalidInput("problem too large for the brute-force projector");
    }

    ScaledVector marginal(int node) const override { return oracle_marginal(tensor(), node); }
    ScaledMatrix bimarginal(int edge) const override {
        const Edge& ed = spec_->topology().edge(edge);
        return oracle_bimarginal(tensor(), ed.from, ed.to);
    }
    ScaledVector node_weights(int node) const override {
        return oracle_marginal(dense_from(*spec_, u_, eff_, node, -1), node);
    }
    ScaledMatrix edge_weights(int edge) const override {
        const Edge& ed = spec_->topology().edge(edge);
        return oracle_bimarginal(dense_from(*spec_, u_, eff_, -1, edge), ed.from, ed.to);
    }

    void sweep(BlockUpdater& updater) override {
        const GraphTopology& g = spec_->topology();
        for (int t = 0; t < g.node_count(); ++t) update_node(updater, t);
        for (int e = 0; e < g.edge_count(); ++e) update_edge(updater, e);
    }

private:
    void rebuild_messages() override {}
    DenseTensor tensor() const { return dense_from(*spec_, u_, eff_, -1, -1); }
};

std::vector<ScaledVector> node_products(const DualPotentials& p) {
    std::vector<ScaledVector> out;
    for (std::size_t t = 0; t < p.node.size(); ++t) out.push_back(p.node_product(static_cast<int>(t)));
    return out;
}

}  // namespace

DenseTensor oracle_dense_tensor(const DualPotentials& potentials, const ProblemSpec& spec, int skip_node,
                                int skip_edge) {
    std::vector<ScaledMatrix> eff;
    for (int e = 0; e < spec.topology().edge_count(); ++e)
        eff.push_back(ops::prod(spec.kernel(e).kernel, potentials.edge_product(e)));
    return dense_from(spec, node_products(potentials), eff, skip_node, skip_edge);
}

DenseTensor oracle_project(const DenseTensor& tensor, const std::vector<int>& modes) {
    const int T = static_cast<int>(tensor.dims.size());
    DenseTensor out;
    out.log_scale = tensor.log_scale;
    std::vector<Index> stride(modes.size(), 1);
    for (int m : modes) {
        if (m < 0 || m >= T) throw InvalidInput("projection mode out of range");
        out.dims.push_back(tensor.dims[static_cast<std::size_t>(m)]);
    }
    for (int k = static_cast<int>(modes.size()) - 2; k >= 0; --k)
        stride[static_cast<std::size_t>(k)] = stride[static_cast<std::size_t>(k) + 1] * out.dims[static_cast<std::size_t>(k) + 1];
    Index total_out = 1;
    for (Index d : out.dims) total_out *= d;
    out.values.assign(static_cast<std::size_t>(total_out), 0.0);

    std::vector<Index> idx(static_cast<std::size_t>(T), 0);
    for (double v : tensor.values) {
        Index o = 0;
        for (std::size_t k = 0; k < modes.size(); ++k) o += stride[k] * idx[static_cast<std::size_t>(modes[k])];
        out.values[static_cast<std::size_t>(o)] += v;
        for (int t = T - 1; t >= 0; --t) {
            auto& i = idx[static_cast<std::size_t>(t)];
            if (++i < tensor.dims[static_cast<std::size_t>(t)]) break;
            i = 0;
        }
    }
    return out;
}

ScaledVector oracle_marginal(const DenseTensor& tensor, int node) {
    DenseTensor p = oracle_project(tensor, {node});
    ScaledVector out(Eigen::Map<const Vector>(p.values.data(), static_cast<Index>(p.values.size())), p.log_scale);
    out.renormalize();
    return out;
}

ScaledMatrix oracle_bimarginal(const DenseTensor& tensor, int a, int b) {
    DenseTensor p = oracle_project(tensor, {a, b});
    ScaledMatrix out(Eigen::Map<const Matrix>(p.values.data(), p.dims[0], p.dims[1]), p.log_scale);
    out.renormalize();
    return out;
}

std::unique_ptr<Projector> make_projector(const ProblemSpec& spec, int renormalize_threshold) {
    switch (spec.topology().kind()) {
        case TopologyClass::PathChain: return std::make_unique<ChainProjector>(spec, renormalize_threshold);
        case TopologyClass::PathWithODCycle: return std::make_unique<ODProjector>(spec, renormalize_threshold);
        case TopologyClass::SpeciesHub: return std::make_unique<HubProjector>(spec, renormalize_threshold);
        case TopologyClass::GeneralSmall: return std::make_unique<OracleProjector>(spec);
    }
    throw InvalidInput("unknown topology");
}

std::unique_ptr<Projector> make_oracle_projector(const ProblemSpec& spec) {
    return std::make_unique<OracleProjector>(spec);
}

ChainMessages chain_messages(const DualPotentials& potentials, const ProblemSpec& spec) {
    ChainProjector p(spec);
    p.refresh(potentials);
    return p.messages();
}

ScaledVector chain_project_marginal(int node, const DualPotentials& potentials, const ProblemSpec& spec) {
    ChainProjector p(spec);
    p.refresh(potentials);
    return p.marginal(node);
}

ScaledMatrix chain_project_bimarginal(int node, const DualPotentials& potentials, const ProblemSpec& spec) {
    ChainProjector p(spec);
    p.refresh(potentials);
    return p.bimarginal(node);
}

ODMessages od_messages(const DualPotentials& potentials, const ProblemSpec& spec) {
    ODProjector p(spec);
    p.refresh(potentials);
    return p.messages();
}

ScaledVector od_project_marginal(int node, const DualPotentials& potentials, const ProblemSpec& spec) {
    ODProjector p(spec);
    p.refresh(potentials);
    return p.marginal(node);
}

ScaledMatrix od_project_od(const DualPotentials& potentials, const ProblemSpec& spec) {
    ODProjector p(spec);
    p.refresh(potentials);
    return p.bimarginal(spec.topology().chord());
}

HubMessages hub_messages(const DualPotentials& potentials, const ProblemSpec& spec) {
    HubProjector p(spec);
    p.refresh(potentials);
    return p.messages();
}

ScaledMatrix hub_project_species_time(int node, const DualPotentials& potentials, const ProblemSpec& spec) {
    HubProjector p(spec);
    p.refresh(potentials);
    return p.bimarginal(spec.topology().hub_edge(node));
}

ScaledVector hub_project_time(int node, const DualPotentials& potentials, const ProblemSpec& spec) {
    HubProjector p(spec);
    p.refresh(potentials);
    return p.marginal(node);
}

ScaledVector hub_project_species(const DualPotentials& potentials, const ProblemSpec& spec) {
    HubProjector p(spec);
    p.refresh(potentials);
    return p.marginal(spec.topology().hub());
}

}  // namespace gtop
