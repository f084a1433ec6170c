#include "doctest.h"
#include "gtop/errors.hpp"
#include "gtop/functions.hpp"
#include "oracle/dense.hpp"

#include <cmath>
#include <random>

using namespace gtop;

namespace {

Vector vec(std::initializer_list<double> xs) {
    Vector v(static_cast<Index>(xs.size()));
    Index i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

ScaledVector sv(std::initializer_list<double> xs) { return ScaledVector(vec(xs)); }

double scalar_u(const MarginalFunction& f, double w, double eps) {
    return solve_inclusion(f, ScaledVector(Vector::Constant(1, w)), eps).value()[0];
}

}  // namespace

TEST_CASE("conjugate values from the catalog table") {
    CHECK(conjugate(MarginalFunction::box(vec({0}), vec({1})), vec({2})) == 2.0);
    CHECK(conjugate(MarginalFunction::box(vec({0.5}), vec({1})), vec({-2})) == -1.0);
    CHECK(conjugate(MarginalFunction::box(vec({0.5}), vec({1})), vec({0})) == 0.0);
    CHECK(conjugate(MarginalFunction::congestion(vec({1})), vec({1})) == 0.0);
    CHECK(conjugate(MarginalFunction::congestion(vec({1})), vec({4})) == doctest::Approx(1.0));
    CHECK(conjugate(MarginalFunction::congestion(vec({2})), vec({-3})) == 0.0);
    CHECK(conjugate(MarginalFunction::equality(vec({1, 2})), vec({0, 0})) == 0.0);
    CHECK(conjugate(MarginalFunction::equality(vec({1, 2})), vec({3, -1})) == 1.0);
    CHECK(conjugate(MarginalFunction::quadratic(0.5, vec({1})), vec({2})) == doctest::Approx(2.0 + 4.0 / 2.0));
    CHECK(conjugate(MarginalFunction::zero(2), vec({0, 0})) == 0.0);
    CHECK(conjugate(MarginalFunction::zero(2), vec({0, 1e-3})) == kInf);
    CHECK(conjugate(MarginalFunction::linear(vec({1, 2})), vec({1, 2})) == 0.0);
    CHECK(conjugate(MarginalFunction::linear(vec({1, 2})), vec({1, 2.5})) == kInf);
}

TEST_CASE("general exponent conjugate") {
    // weight*|x-y|^3 has conjugate <s,y> + |s|^{3/2} / (1.5 (3 weight)^{1/2}).
    auto f = MarginalFunction::quadratic(2.0, vec({0.5}), 3.0);
    const double s = 1.7;
    CHECK(conjugate(f, vec({s})) == doctest::Approx(s * 0.5 + std::pow(s, 1.5) / (1.5 * std::sqrt(6.0))));
}

TEST_CASE("eliminated entries use the 0 * inf = 0 convention") {
    CHECK(conjugate(MarginalFunction::equality(vec({0, 1})), vec({kInf, 0.5})) == 0.5);
    CHECK(conjugate(MarginalFunction::box(vec({0}), vec({0})), vec({kInf})) == 0.0);
    CHECK(conjugate(MarginalFunction::box(vec({0}), vec({1})), vec({kInf})) == kInf);
    CHECK(conjugate(MarginalFunction::box(vec({0}), vec({kInf})), vec({1.0})) == kInf);
    CHECK(conjugate(MarginalFunction::box(vec({0}), vec({kInf})), vec({-1.0})) == 0.0);
}

TEST_CASE("equality inclusion is plain scaling") {
    ScaledVector u = solve_inclusion(MarginalFunction::equality(vec({2, 3})), sv({1, 1}), 0.3);
    CHECK(u.value()[0] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(u.value()[1] == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("equality with zero target eliminates states even where w is zero") {
    ScaledVector u = solve_inclusion(MarginalFunction::equality(vec({0, 1})), sv({0, 4}), 1.0);
    CHECK(u.mantissa[0] == 0.0);
    CHECK(u.value()[1] == doctest::Approx(0.25));
}

TEST_CASE("equality target unreachable is infeasible") {
    CHECK_THROWS_AS(solve_inclusion(MarginalFunction::equality(vec({1, 1})), sv({0, 4}), 1.0), InfeasibleError);
}

TEST_CASE("box inclusion clamps") {
    CHECK(scalar_u(MarginalFunction::box(vec({0}), vec({1})), 4.0, 0.7) == doctest::Approx(0.25));
    CHECK(scalar_u(MarginalFunction::box(vec({0}), vec({1})), 0.5, 0.7) == 1.0);
    CHECK(scalar_u(MarginalFunction::box(vec({2}), vec({3})), 0.5, 0.7) == doctest::Approx(4.0));
    CHECK(scalar_u(MarginalFunction::box(vec({0}), vec({0})), 0.5, 0.7) == 0.0);
    CHECK(scalar_u(MarginalFunction::box(vec({0}), vec({kInf})), 1e30, 0.7) == 1.0);
    // Slack constraint with no mass reaching it: multiplier stays 0.
    CHECK(scalar_u(MarginalFunction::box(vec({0}), vec({1})), 0.0, 0.7) == 1.0);
    CHECK_THROWS_AS(scalar_u(MarginalFunction::box(vec({1}), vec({2})), 0.0, 0.7), InfeasibleError);
}

TEST_CASE("box complementary slackness") {
    auto f = MarginalFunction::box_upper(vec({1, 1, 1}));
    ScaledVector w = sv({4, 1, 0.2});
    ScaledVector u = solve_inclusion(f, w, 1.0);
    const Vector x = u.value().cwiseProduct(w.value());
    CHECK(x[0] == doctest::Approx(1.0));
    CHECK(x[1] == doctest::Approx(1.0));
    CHECK(u.value()[2] == 1.0);
    CHECK(inclusion_residual(f, u, w, 1.0) <= 1e-15);
}

TEST_CASE("box residual at u one ulp off 1") {
    // composite updates leave the box multiplier at 1 up to rounding
    auto f = MarginalFunction::box(vec({0.1, 0.1}), vec({0.3, 0.3}));
    ScaledVector w = sv({0.2, 0.2});
    ScaledVector u = sv({std::nextafter(1.0, 0.0), std::nextafter(1.0, 2.0)});
    CHECK(inclusion_residual(f, u, w, 0.05) <= 1e-15);
}

TEST_CASE("linear inclusion ignores the weights") {
    auto f = MarginalFunction::linear(vec({0.3, -1}));
    for (double w : {1e-5, 1.0, 1e8}) {
        ScaledVector u = solve_inclusion(f, ScaledVector(Vector::Constant(2, w)), 0.1);
        CHECK(u.value()[0] == doctest::Approx(std::exp(-3.0)));
        CHECK(u.value()[1] == doctest::Approx(std::exp(10.0)));
    }
}

TEST_CASE("zero inclusion keeps the multiplier at zero") {
    ScaledVector u = solve_inclusion(MarginalFunction::zero(3), sv({0, 5, 1e-9}), 2.0);
    CHECK(u.value() == Vector::Ones(3));
}

TEST_CASE("quadratic inclusion root") {
    // u = -ln u, frozen from a 30-digit evaluation and re-derived by bisection.
    const double frozen = 0.56714329040978387;
    const double u = scalar_u(MarginalFunction::quadratic(0.5, vec({0})), 1.0, 1.0);
    CHECK(u == doctest::Approx(frozen).epsilon(1e-13));
    const double bis = oracle::bisect([](double x) { return x + std::log(x); }, 1e-3, 1.0);
    CHECK(u == doctest::Approx(bis).epsilon(1e-12));
}

TEST_CASE("congestion inclusion root") {
    // u = 1 - 1/sqrt(-ln u) below e^-1.
    const double frozen = 0.20528557574970007;
    const double u = scalar_u(MarginalFunction::congestion(vec({1})), 1.0, 1.0);
    CHECK(u == doctest::Approx(frozen).epsilon(1e-13));
    const double bis =
        oracle::bisect([](double x) { return x - 1.0 + 1.0 / std::sqrt(-std::log(x)); }, 1e-6, std::exp(-1.0));
    CHECK(u == doctest::Approx(bis).epsilon(1e-12));
    // No mass: the constraint is slack and the multiplier stays 0.
    CHECK(scalar_u(MarginalFunction::congestion(vec({1})), 0.0, 1.0) == 1.0);
}

TEST_CASE("bimarginal inclusions") {
    Matrix r = Matrix::Identity(2, 2);
    ScaledMatrix U = solve_inclusion_bimarginal(MarginalFunction::equality(flatten(r)), ones_matrix(2, 2), 1.0);
    CHECK(U.value() == r);

    ScaledMatrix Z = solve_inclusion_bimarginal(MarginalFunction::zero(6), ScaledMatrix(Matrix::Random(2, 3).cwiseAbs()),
                                                1.0);
    CHECK(Z.value() == Matrix::Ones(2, 3));

    Matrix c(2, 2);
    c << 0.1, 0.2, 0.3, 0.4;
    ScaledMatrix L = solve_inclusion_bimarginal(MarginalFunction::linear(flatten(c)), ones_matrix(2, 2), 0.5);
    CHECK((L.value() - (-c / 0.5).array().exp().matrix()).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("conjugate subgradients") {
    auto box = MarginalFunction::box_upper(vec({2, 2, 2}));
    auto sb = conjugate_subgradient(box, vec({1, 0, -1}));
    CHECK(sb[0].lo == 2.0);
    CHECK(sb[0].hi == 2.0);
    CHECK(sb[1].lo == 0.0);
    CHECK(sb[1].hi == 2.0);
    CHECK(sb[2].hi == 0.0);

    auto q = conjugate_subgradient(MarginalFunction::quadratic(0.25, vec({1})), vec({0.5}));
    CHECK(q[0].lo == doctest::Approx(2.0));

    auto c = conjugate_subgradient(MarginalFunction::congestion(vec({2})), vec({0.5}));
    CHECK(c[0].lo == 0.0);
    CHECK(c[0].hi == 0.0);
    // Derivative is continuous at the kink: just past it the gradient is still ~0.
    auto c2 = conjugate_subgradient(MarginalFunction::congestion(vec({2})), vec({0.5 + 1e-10}));
    CHECK(c2[0].lo == doctest::Approx(0.0).epsilon(1e-9));

    auto z = conjugate_subgradient(MarginalFunction::zero(1), vec({1}));
    CHECK(z[0].empty());
    auto l = conjugate_subgradient(MarginalFunction::linear(vec({1})), vec({2}));
    CHECK(l[0].empty());
}

TEST_CASE("smooth inclusions meet the residual bound across scales") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> lw(-30.0, 30.0);
    std::uniform_real_distribution<double> y(-2.0, 3.0);
    std::vector<MarginalFunction> fs;
    for (double p : {2.0, 3.0, 1.5}) fs.push_back(MarginalFunction::quadratic(0.7, Vector::Constant(1, y(rng)), p));
    fs.push_back(MarginalFunction::congestion(vec({0.3})));
    fs.push_back(MarginalFunction::congestion(vec({5.0})));
    for (double eps : {0.05, 1.0}) {
        for (const auto& f : fs) {
            for (int rep = 0; rep < 60; ++rep) {
                ScaledVector w(Vector::Constant(1, 0.75), lw(rng));
                ScaledVector u = solve_inclusion(f, w, eps);
                CHECK(inclusion_residual(f, u, w, eps) <= 1e-10);
            }
        }
    }
}

TEST_CASE("the inclusion map is nondecreasing in u") {
    std::vector<MarginalFunction> fs{MarginalFunction::quadratic(0.7, vec({1.2})),
                                     MarginalFunction::quadratic(0.7, vec({-0.4}), 3.0),
                                     MarginalFunction::congestion(vec({1.5})),
                                     MarginalFunction::box(vec({0.2}), vec({1.0})),
                                     MarginalFunction::equality(vec({0.6}))};
    const double eps = 0.3;
    const double w = 2.0;
    for (const auto& f : fs) {
        double prev = -kInf;
        for (double lu = -20.0; lu <= 5.0; lu += 0.05) {
            const Vector s = Vector::Constant(1, -eps * lu);
            const auto sub = conjugate_subgradient(f, s);
            // The upper end of the subdifferential is taken as the representative value.
            const double value = std::exp(lu) * w - sub[0].hi;
            CHECK(value >= prev - 1e-12);
            prev = value;
        }
    }
}

TEST_CASE("concatenated functions act piecewise") {
    auto f = MarginalFunction::concat({MarginalFunction::congestion(vec({1, 2})), MarginalFunction::zero(2)});
    CHECK(f.size() == 4);
    CHECK(f.offsets()[1] == 2);
    ScaledVector u = solve_inclusion(f, sv({1, 1, 3, 3}), 1.0);
    CHECK(u.value()[0] == doctest::Approx(0.20528557574970007).epsilon(1e-13));
    CHECK(u.value()[2] == 1.0);
    CHECK(u.value()[3] == 1.0);
    CHECK(evaluate(f, vec({0.5, 1, 7, -3})) == doctest::Approx(1.0 + 1.0));
}

TEST_CASE("time-step weighting") {
    auto q = MarginalFunction::quadratic(2.0, vec({1})).scaled(0.25);
    CHECK(std::get<fn::QuadraticDistance>(q.pieces()[0]).weight == 0.5);
    auto l = MarginalFunction::linear(vec({4})).scaled(0.25);
    CHECK(std::get<fn::Linear>(l.pieces()[0]).cost[0] == 1.0);
    auto b = MarginalFunction::box_upper(vec({4})).scaled(0.25);
    CHECK(std::get<fn::Box>(b.pieces()[0]).upper[0] == 4.0);
    CHECK_THROWS_AS(MarginalFunction::congestion(vec({1})).scaled(0.5), InvalidInput);
}

TEST_CASE("catalog parameter validation") {
    CHECK_THROWS_AS(MarginalFunction::equality(vec({-1})), InvalidInput);
    CHECK_THROWS_AS(MarginalFunction::box(vec({2}), vec({1})), InvalidInput);
    CHECK_THROWS_AS(MarginalFunction::congestion(vec({0})), InvalidInput);
    CHECK_THROWS_AS(MarginalFunction::congestion(vec({-1})), InvalidInput);
    CHECK_THROWS_AS(MarginalFunction::quadratic(0.0, vec({1})), InvalidInput);
    CHECK_THROWS_AS(MarginalFunction::quadratic(1.0, vec({1}), 1.0), InvalidInput);
    CHECK_THROWS_AS(MarginalFunction::linear(vec({kInf})), InvalidInput);
}

TEST_CASE("primal evaluation") {
    CHECK(evaluate(MarginalFunction::congestion(vec({2})), vec({1})) == 1.0);
    CHECK(evaluate(MarginalFunction::congestion(vec({2})), vec({2})) == kInf);
    CHECK(evaluate(MarginalFunction::quadratic(3.0, vec({1})), vec({3})) == 12.0);
    CHECK(evaluate(MarginalFunction::equality(vec({1})), vec({1.5})) == kInf);
    CHECK(evaluate(MarginalFunction::box_upper(vec({1})), vec({0.5})) == 0.0);
}
