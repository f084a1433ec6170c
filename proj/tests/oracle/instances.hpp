#pragma once

// Seeded random problems for projection and solver tests, plus conversion of
// library objects into the plain form the dense oracle consumes.

#include "gtop/model.hpp"
#include "oracle/dense.hpp"

#include <random>

namespace fixtures {

struct Instance {
    gtop::ProblemSpec spec;
    gtop::DualPotentials potentials;
};

struct Shape {
    int nodes = 3;       // time nodes (excluding the hub)
    int max_states = 3;  // per node, drawn from [2, max_states]
    int species = 1;
    double eps = 1.0;
    double inf_fraction = 0.15;   // share of +inf costs
    double zero_fraction = 0.1;   // share of exactly-zero potential entries
    bool composite = true;        // allow two-factor node functionals
};

Instance random_instance(gtop::TopologyClass kind, const Shape& shape, std::mt19937_64& rng);

oracle::Graph graph_of(const gtop::ProblemSpec& spec);
oracle::Factors factors_of(const gtop::ProblemSpec& spec, const gtop::DualPotentials& potentials);

oracle::Values values(const gtop::ScaledVector& v);
oracle::Values values(const gtop::ScaledMatrix& m);

}  // namespace fixtures
