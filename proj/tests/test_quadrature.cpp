#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "svi/quadrature.hpp"

#include <cmath>
#include <random>

using namespace svi;

TEST_CASE("linear basis values and derivatives") {
  const auto basis = LagrangeBasisd::equispaced(1);
  CHECK(basis.eval(0, 0.25) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(basis.eval(1, 0.25) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(basis.deriv(0, 0.9) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(basis.deriv(1, 0.1) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("quadratic basis cardinality") {
  const auto basis = LagrangeBasisd::equispaced(2);
  CHECK(basis.eval(1, 0.5) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(basis.eval(1, 0.0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(basis.eval(1, 1.0) == doctest::Approx(0.0).epsilon(1e-15));
  // l_2 = 2 tau^2 - tau, derivative 4 tau - 1.
  CHECK(basis.deriv(2, 1.0) == doctest::Approx(3.0).epsilon(1e-14));
}

TEST_CASE("cardinality and partition of unity at random points") {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int degree = 1; degree <= 4; ++degree) {
    const auto basis = LagrangeBasisd::equispaced(degree);
    for (int mu = 0; mu <= degree; ++mu)
      for (int nu = 0; nu <= degree; ++nu)
        CHECK(std::abs(basis.eval(mu, basis.points[nu]) - (mu == nu ? 1.0 : 0.0)) < 1e-13);
    for (int rep = 0; rep < 50; ++rep) {
      const double tau = uni(gen);
      double sum = 0, dsum = 0;
      for (int mu = 0; mu <= degree; ++mu) {
        sum += basis.eval(mu, tau);
        dsum += basis.deriv(mu, tau);
      }
      CHECK(std::abs(sum - 1.0) < 1e-12);
      CHECK(std::abs(dsum) < 1e-11);
    }
  }
}

TEST_CASE("basis argument validation") {
  CHECK_THROWS_AS(LagrangeBasisd({0.0, 0.5}), ArgumentError);
  CHECK_THROWS_AS(LagrangeBasisd({0.0, 0.5, 0.5, 1.0}), ArgumentError);
  CHECK_THROWS_AS(LagrangeBasisd::equispaced(0), ArgumentError);
}

TEST_CASE("named rules carry the printed nodes and weights") {
  const auto simpson = named_rule<double>("simpson");
  CHECK(simpson.weights[0] == doctest::Approx(1.0 / 6).epsilon(1e-15));
  CHECK(simpson.weights[1] == doctest::Approx(2.0 / 3).epsilon(1e-15));
  CHECK(simpson.weights[2] == doctest::Approx(1.0 / 6).epsilon(1e-15));

  const auto milne = named_rule<double>("milne");
  CHECK(milne.weights[0] == doctest::Approx(2.0 / 3).epsilon(1e-15));
  CHECK(milne.weights[1] == doctest::Approx(-1.0 / 3).epsilon(1e-15));
  CHECK(milne.weights[2] == doctest::Approx(2.0 / 3).epsilon(1e-15));
  CHECK(milne.nodes[0] == doctest::Approx(0.25).epsilon(1e-15));

  const auto rectangle = named_rule<double>("rectangle");
  CHECK(rectangle.nodes == std::vector<double>{1.0});
  CHECK(rectangle.weights == std::vector<double>{1.0});

  CHECK_THROWS_AS(named_rule<double>("gauss7"), ArgumentError);
}

TEST_CASE("named rules are exact up to their classical order") {
  for (const char* name :
       {"midpoint", "trapezoidal", "simpson", "open-trapezoidal", "milne", "rectangle"}) {
    const auto rule = named_rule<double>(name);
    double weight_sum = 0;
    for (double w : rule.weights) weight_sum += w;
    CHECK(std::abs(weight_sum - 1.0) < 1e-15);
    for (int degree = 0; degree < rule.classical_order; ++degree) {
      double quad = 0;
      for (int i = 0; i < rule.size(); ++i)
        quad += rule.weights[i] * std::pow(rule.nodes[i], degree);
      const double exact = 1.0 / (degree + 1);
      CHECK(std::abs(quad - exact) < 1e-12);
    }
  }
}

TEST_CASE("interpolatory weights from nodes") {
  const auto trap = weights_from_nodes<double>({0.0, 1.0});
  CHECK(trap[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(trap[1] == doctest::Approx(0.5).epsilon(1e-15));

  const auto simpson = weights_from_nodes<double>({0.0, 0.5, 1.0});
  CHECK(std::abs(simpson[0] - 1.0 / 6) < 1e-15);
  CHECK(std::abs(simpson[1] - 2.0 / 3) < 1e-15);
  CHECK(std::abs(simpson[2] - 1.0 / 6) < 1e-15);

  const auto mid = weights_from_nodes<double>({0.5});
  CHECK(mid[0] == doctest::Approx(1.0).epsilon(1e-15));

  CHECK_THROWS_AS(weights_from_nodes<double>({0.3, 0.3}), ArgumentError);
}

TEST_CASE("every named rule is interpolatory for its own nodes") {
  for (const char* name :
       {"midpoint", "trapezoidal", "simpson", "open-trapezoidal", "milne", "rectangle"}) {
    const auto rule = named_rule<double>(name);
    const auto recomputed = weights_from_nodes(rule.nodes);
    for (int i = 0; i < rule.size(); ++i)
      CHECK(std::abs(recomputed[i] - rule.weights[i]) < 1e-13);
  }
}

TEST_CASE("cardinal integrals over partial intervals") {
  // Nodes (1/3, 2/3): integral of the first cardinal polynomial over [0, 1/3]
  // is 1/2, over [0, 2/3] is 2/3.
  const std::vector<double> nodes{1.0 / 3, 2.0 / 3};
  CHECK(std::abs(cardinal_integral(nodes, 0, 1.0 / 3) - 0.5) < 1e-15);
  CHECK(std::abs(cardinal_integral(nodes, 0, 2.0 / 3) - 2.0 / 3) < 1e-15);
  CHECK(std::abs(cardinal_integral(nodes, 1, 1.0 / 3) + 1.0 / 6) < 1e-15);
}
