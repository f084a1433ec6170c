#include "doctest.h"
#include "gtop/errors.hpp"
#include "gtop/projection.hpp"
#include "oracle/instances.hpp"

#include <random>

using namespace gtop;

namespace {

std::vector<CompositeFunction> zeros_for_nodes(const GraphTopology& g) {
    std::vector<CompositeFunction> out;
    for (int t = 0; t < g.node_count(); ++t) out.emplace_back(MarginalFunction::zero(g.size(t)));
    return out;
}

ProblemSpec constant_spec(const GraphTopology& g) {
    std::vector<EdgeKernel> k;
    std::vector<CompositeFunction> ef;
    for (int e = 0; e < g.edge_count(); ++e) {
        const Edge& ed = g.edge(e);
        k.push_back(unit_kernel(g.size(ed.from), g.size(ed.to)));
        ef.emplace_back(MarginalFunction::zero(g.size(ed.from) * g.size(ed.to)));
    }
    return ProblemSpec(g, k, zeros_for_nodes(g), ef, 1.0);
}

// Compares every marginal and bimarginal with the dense oracle.
double worst_against_oracle(const fixtures::Instance& inst) {
    const auto g = fixtures::graph_of(inst.spec);
    const auto dense = oracle::tensor(g, fixtures::factors_of(inst.spec, inst.potentials));
    auto proj = make_projector(inst.spec);
    proj->refresh(inst.potentials);
    double worst = 0.0;
    for (int t = 0; t < inst.spec.topology().node_count(); ++t)
        worst = std::max(worst, oracle::max_rel_diff(fixtures::values(proj->marginal(t)), oracle::marginal(g, dense, t)));
    for (int e = 0; e < inst.spec.topology().edge_count(); ++e) {
        const Edge& ed = inst.spec.topology().edge(e);
        worst = std::max(worst, oracle::max_rel_diff(fixtures::values(proj->bimarginal(e)),
                                                     oracle::pair(g, dense, ed.from, ed.to)));
    }
    return worst;
}

// Returns fresh random potentials for every block it is asked about.
class RandomUpdater final : public BlockUpdater {
public:
    explicit RandomUpdater(unsigned seed) : rng_(seed) {}
    ScaledVector update_node(int, const ScaledVector& w) override { return draw(w); }
    ScaledMatrix update_edge(int, const ScaledMatrix& w) override { return draw(w); }
    std::vector<ScaledVector> nodes;
    std::vector<ScaledMatrix> edges;

private:
    template <typename Array>
    Scaled<Array> draw(const Scaled<Array>& like) {
        std::uniform_real_distribution<double> d(0.1, 3.0);
        Scaled<Array> out = like;
        for (Index i = 0; i < out.mantissa.size(); ++i) out.mantissa.data()[i] = d(rng_);
        out.log_scale = 0.0;
        return out;
    }
    std::mt19937_64 rng_;
};

}  // namespace

TEST_CASE("chain projections of the constant tensor") {
    ProblemSpec spec = constant_spec(GraphTopology::path_chain({2, 2, 2}));
    DualPotentials p = DualPotentials::ones(spec);
    CHECK(chain_project_marginal(1, p, spec).value().isApprox(Vector::Constant(2, 4.0), 1e-14));
    CHECK(chain_project_bimarginal(1, p, spec).value().isApprox(Matrix::Constant(2, 2, 2.0), 1e-14));
    p.node[2][0].mantissa.setZero();
    CHECK(chain_project_bimarginal(1, p, spec).value() == Matrix::Zero(2, 2));
}

TEST_CASE("chain with a unit-mass potential matches the oracle") {
    std::mt19937_64 rng(1);
    fixtures::Shape shape;
    shape.nodes = 4;
    auto inst = fixtures::random_instance(TopologyClass::PathChain, shape, rng);
    const Index n0 = inst.spec.topology().size(0);
    for (auto& u : inst.potentials.node[0]) u = ones_vector(n0);
    inst.potentials.node[0][0] = ScaledVector(Vector::Unit(n0, 0));
    CHECK(worst_against_oracle(inst) <= 1e-10);
}

TEST_CASE("chain messages exclude the node's own potential") {
    std::mt19937_64 rng(2);
    fixtures::Shape shape;
    shape.nodes = 4;
    auto inst = fixtures::random_instance(TopologyClass::PathChain, shape, rng);
    const ChainMessages before = chain_messages(inst.potentials, inst.spec);
    for (auto& u : inst.potentials.node[2]) u.mantissa *= 3.0;
    const ChainMessages after = chain_messages(inst.potentials, inst.spec);
    for (int j = 0; j <= 2; ++j) CHECK(relative_difference(before.forward[static_cast<std::size_t>(j)], after.forward[static_cast<std::size_t>(j)]) <= 1e-15);
    for (int j = 2; j <= 3; ++j) CHECK(relative_difference(before.backward[static_cast<std::size_t>(j)], after.backward[static_cast<std::size_t>(j)]) <= 1e-15);
}

TEST_CASE("OD projections of the constant tensor") {
    ProblemSpec spec = constant_spec(GraphTopology::path_with_od_cycle({2, 2, 2}));
    DualPotentials p = DualPotentials::ones(spec);
    const ODMessages m = od_messages(p, spec);
    CHECK(m.backward[0].value().isApprox(Matrix::Constant(2, 2, 2.0), 1e-14));
    CHECK(m.forward[1].value() == Matrix::Ones(2, 2));
    CHECK(m.backward[1].value() == Matrix::Ones(2, 2));
    CHECK(od_project_od(p, spec).value().isApprox(Matrix::Constant(2, 2, 2.0), 1e-14));
    CHECK(od_project_marginal(1, p, spec).value().isApprox(Vector::Constant(2, 4.0), 1e-14));
    CHECK(total_mass(p, spec) == doctest::Approx(8.0));
}

TEST_CASE("OD message recursions") {
    std::mt19937_64 rng(4);
    fixtures::Shape shape;
    shape.nodes = 5;
    shape.max_states = 3;
    auto inst = fixtures::random_instance(TopologyClass::PathWithODCycle, shape, rng);
    const ODMessages m = od_messages(inst.potentials, inst.spec);
    auto eff = [&](int e) {
        return ScaledMatrix(inst.spec.kernel(e).kernel.mantissa.cwiseProduct(inst.potentials.edge_product(e).mantissa),
                            inst.spec.kernel(e).kernel.log_scale + inst.potentials.edge_product(e).log_scale);
    };
    CHECK(relative_difference(m.forward[1], eff(0)) <= 1e-15);
    CHECK(relative_difference(m.backward[3], eff(3)) <= 1e-15);
    for (int j = 2; j <= 4; ++j) {
        const ScaledVector u = inst.potentials.node_product(j - 1);
        const ScaledMatrix& prev = m.forward[static_cast<std::size_t>(j) - 1];
        ScaledMatrix expect((prev.mantissa * u.mantissa.asDiagonal()) * eff(j - 1).mantissa,
                            prev.log_scale + u.log_scale + eff(j - 1).log_scale);
        CHECK(relative_difference(m.forward[static_cast<std::size_t>(j)], expect) <= 1e-13);
    }
}

TEST_CASE("hub with one species and unit hub edges reduces to the chain") {
    std::mt19937_64 rng(6);
    fixtures::Shape shape;
    shape.nodes = 4;
    auto chain = fixtures::random_instance(TopologyClass::PathChain, shape, rng);
    const GraphTopology& cg = chain.spec.topology();
    auto hg = GraphTopology::species_hub(cg.sizes(), 1);
    std::vector<EdgeKernel> k;
    std::vector<CompositeFunction> ef;
    for (int e = 0; e < cg.edge_count(); ++e) {
        k.push_back(chain.spec.kernel(e));
        ef.push_back(chain.spec.edge_function(e));
    }
    for (int t = 0; t < cg.node_count(); ++t) {
        k.push_back(unit_kernel(1, cg.size(t)));
        ef.emplace_back(MarginalFunction::zero(cg.size(t)));
    }
    std::vector<CompositeFunction> nf;
    for (int t = 0; t < cg.node_count(); ++t) nf.push_back(chain.spec.node_function(t));
    nf.emplace_back(MarginalFunction::zero(1));
    ProblemSpec hub(hg, k, nf, ef, chain.spec.epsilon());
    DualPotentials hp = DualPotentials::ones(hub);
    for (int t = 0; t < cg.node_count(); ++t) hp.node[static_cast<std::size_t>(t)] = chain.potentials.node[static_cast<std::size_t>(t)];
    for (int e = 0; e < cg.edge_count(); ++e) hp.edge[static_cast<std::size_t>(e)] = chain.potentials.edge[static_cast<std::size_t>(e)];

    auto cp = make_projector(chain.spec);
    cp->refresh(chain.potentials);
    auto hpj = make_projector(hub);
    hpj->refresh(hp);
    for (int t = 0; t < cg.node_count(); ++t) {
        CHECK(relative_difference(cp->marginal(t), hpj->marginal(t)) <= 1e-12);
        const ScaledMatrix st = hpj->bimarginal(hg.hub_edge(t));
        CHECK(relative_difference(ScaledVector(st.mantissa.row(0).transpose(), st.log_scale), cp->marginal(t)) <= 1e-12);
    }
    for (int e = 0; e < cg.edge_count(); ++e) CHECK(relative_difference(cp->bimarginal(e), hpj->bimarginal(e)) <= 1e-12);
}

TEST_CASE("dense oracle on a rank-one coupling") {
    auto g = GraphTopology::general({2, 2}, {{0, 1}});
    ProblemSpec spec = constant_spec(g);
    DualPotentials p = DualPotentials::ones(spec);
    p.node[0][0] = ScaledVector(Vector{{0.3, 0.7}});
    p.node[1][0] = ScaledVector(Vector{{0.6, 0.4}});
    const DenseTensor m = oracle_dense_tensor(p, spec);
    const std::vector<double> expect{0.18, 0.12, 0.42, 0.28};
    for (std::size_t i = 0; i < 4; ++i) CHECK(m.values[i] * std::exp(m.log_scale) == doctest::Approx(expect[i]).epsilon(1e-15));
    CHECK(oracle_marginal(m, 0).value()[1] == doctest::Approx(0.7));
    CHECK(oracle_marginal(m, 1).value()[0] == doctest::Approx(0.6));
    auto proj = make_projector(spec);
    proj->refresh(p);
    CHECK(proj->marginal(1).value()[1] == doctest::Approx(0.4));
}

TEST_CASE("dense oracle enforces its size bound") {
    auto g = GraphTopology::path_chain({7, 7, 7, 7, 7, 7});
    ProblemSpec spec = constant_spec(g);
    CHECK_THROWS_AS(oracle_dense_tensor(DualPotentials::ones(spec), spec), InvalidInput);
    CHECK_THROWS_AS(make_oracle_projector(spec), InvalidInput);
}

TEST_CASE("structured projections match the dense oracle on random instances") {
    std::mt19937_64 rng(2024);
    for (auto kind : {TopologyClass::PathChain, TopologyClass::PathWithODCycle, TopologyClass::SpeciesHub,
                      TopologyClass::GeneralSmall}) {
        for (int rep = 0; rep < 12; ++rep) {
            fixtures::Shape shape;
            shape.nodes = 3 + rep % 3;
            shape.max_states = 4;
            shape.species = 1 + rep % 3;
            shape.eps = rep % 2 ? 0.5 : 1.0;
            auto inst = fixtures::random_instance(kind, shape, rng);
            INFO(topology_name(kind) << " rep " << rep);
            CHECK(worst_against_oracle(inst) <= 1e-10);
        }
    }
}

TEST_CASE("bimarginal sums equal marginals") {
    std::mt19937_64 rng(99);
    for (auto kind : {TopologyClass::PathChain, TopologyClass::PathWithODCycle, TopologyClass::SpeciesHub}) {
        fixtures::Shape shape;
        shape.nodes = 4;
        shape.species = 3;
        shape.zero_fraction = 0.0;
        shape.inf_fraction = 0.0;
        auto inst = fixtures::random_instance(kind, shape, rng);
        auto proj = make_projector(inst.spec);
        proj->refresh(inst.potentials);
        const GraphTopology& g = inst.spec.topology();
        for (int e = 0; e < g.edge_count(); ++e) {
            const ScaledMatrix b = proj->bimarginal(e);
            const Edge& ed = g.edge(e);
            CHECK(relative_difference(ScaledVector(b.mantissa.rowwise().sum(), b.log_scale), proj->marginal(ed.from)) <= 1e-12);
            CHECK(relative_difference(ScaledVector(b.mantissa.colwise().sum().transpose(), b.log_scale),
                                      proj->marginal(ed.to)) <= 1e-12);
        }
    }
}

TEST_CASE("species rows add up to the time marginal") {
    std::mt19937_64 rng(8);
    fixtures::Shape shape;
    shape.nodes = 4;
    shape.species = 3;
    auto inst = fixtures::random_instance(TopologyClass::SpeciesHub, shape, rng);
    for (int t = 0; t < 4; ++t) {
        const ScaledMatrix st = hub_project_species_time(t, inst.potentials, inst.spec);
        CHECK(relative_difference(ScaledVector(st.mantissa.colwise().sum().transpose(), st.log_scale),
                                  hub_project_time(t, inst.potentials, inst.spec)) <= 1e-12);
        CHECK(relative_difference(ScaledVector(st.mantissa.rowwise().sum(), st.log_scale),
                                  hub_project_species(inst.potentials, inst.spec)) <= 1e-12);
    }
}

TEST_CASE("weights times the block potential give the projection") {
    std::mt19937_64 rng(17);
    for (auto kind : {TopologyClass::PathChain, TopologyClass::PathWithODCycle, TopologyClass::SpeciesHub,
                      TopologyClass::GeneralSmall}) {
        fixtures::Shape shape;
        shape.nodes = 4;
        shape.species = 2;
        auto inst = fixtures::random_instance(kind, shape, rng);
        auto proj = make_projector(inst.spec);
        proj->refresh(inst.potentials);
        const GraphTopology& g = inst.spec.topology();
        for (int t = 0; t < g.node_count(); ++t)
            CHECK(relative_difference(hadamard(proj->node_weights(t), inst.potentials.node_product(t)), proj->marginal(t)) <= 1e-12);
        for (int e = 0; e < g.edge_count(); ++e)
            CHECK(relative_difference(hadamard(proj->edge_weights(e), inst.potentials.edge_product(e)), proj->bimarginal(e)) <= 1e-12);
    }
}

TEST_CASE("incremental messages after a sweep equal a full rebuild") {
    std::mt19937_64 rng(31);
    for (auto kind : {TopologyClass::PathChain, TopologyClass::PathWithODCycle, TopologyClass::SpeciesHub}) {
        fixtures::Shape shape;
        shape.nodes = 5;
        shape.species = 2;
        shape.composite = false;
        auto inst = fixtures::random_instance(kind, shape, rng);
        auto proj = make_projector(inst.spec);
        proj->refresh(inst.potentials);

        // Record what the sweep installs so the same potentials can be rebuilt from scratch.
        struct Recorder final : BlockUpdater {
            RandomUpdater inner{5};
            DualPotentials* pot;
            ScaledVector update_node(int n, const ScaledVector& w) override {
                auto u = inner.update_node(n, w);
                pot->node[static_cast<std::size_t>(n)][0] = u;
                return u;
            }
            ScaledMatrix update_edge(int e, const ScaledMatrix& w) override {
                auto u = inner.update_edge(e, w);
                pot->edge[static_cast<std::size_t>(e)][0] = u;
                return u;
            }
        } rec;
        rec.pot = &inst.potentials;
        proj->sweep(rec);

        auto fresh = make_projector(inst.spec);
        fresh->refresh(inst.potentials);
        const GraphTopology& g = inst.spec.topology();
        for (int t = 0; t < g.node_count(); ++t) CHECK(relative_difference(proj->marginal(t), fresh->marginal(t)) <= 1e-12);
        for (int e = 0; e < g.edge_count(); ++e)
            CHECK(relative_difference(proj->bimarginal(e), fresh->bimarginal(e)) <= 1e-12);
    }
}

TEST_CASE("topology mismatch is rejected") {
    ProblemSpec chain = constant_spec(GraphTopology::path_chain({2, 2, 2}));
    DualPotentials p = DualPotentials::ones(chain);
    CHECK_THROWS_AS(od_messages(p, chain), InvalidInput);
    CHECK_THROWS_AS(hub_messages(p, chain), InvalidInput);
}

TEST_CASE("small epsilon messages stay finite and count rescaling events") {
    const Index N = 4;
    const int T = 40;
    Matrix c(N, N);
    for (Index i = 0; i < N; ++i)
        for (Index j = 0; j < N; ++j) c(i, j) = 5.0 + static_cast<double>((i - j) * (i - j));
    std::vector<EdgeKernel> k(static_cast<std::size_t>(T - 1), build_kernel(c, 0.01));
    std::vector<CompositeFunction> ef(static_cast<std::size_t>(T - 1), MarginalFunction::zero(N * N));
    auto g = GraphTopology::path_chain(std::vector<Index>(static_cast<std::size_t>(T), N));
    ProblemSpec spec(g, k, zeros_for_nodes(g), ef, 0.01);
    auto proj = make_projector(spec);
    proj->refresh(DualPotentials::ones(spec));
    const double lm0 = proj->marginal(0).log_sum();
    const double lm1 = proj->marginal(T / 2).log_sum();
    CHECK(std::isfinite(lm0));
    CHECK(lm0 == doctest::Approx(lm1).epsilon(1e-12));
    CHECK(lm0 < -700.0 * 39 / 1.5);  // far below double range
    CHECK(proj->rescale_events() == 0);  // renormalized each step, drift stays small

    auto strict = make_projector(spec, 1);
    strict->refresh(DualPotentials::ones(spec));
    CHECK(strict->rescale_events() > 0);
}
