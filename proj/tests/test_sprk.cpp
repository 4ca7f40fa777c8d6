#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "svi/builtin_systems.hpp"
#include "svi/schemes.hpp"
#include "svi/sprk.hpp"

#include <cmath>
#include <random>

using namespace svi;
using Eigen::VectorXd;

namespace {

VectorXd dw1(double w) { return VectorXd::Constant(1, w); }

SprkTableaud midpoint_tableau() {
  SprkTableaud t;
  t.stages = 1;
  t.a = Eigen::MatrixXd::Constant(1, 1, 0.5);
  t.a_bar = t.a;
  t.b = t.a;
  t.b_bar = t.a;
  t.alpha = VectorXd::Constant(1, 1.0);
  t.beta = t.alpha;
  return t;
}

}  // namespace

TEST_CASE("midpoint tableau satisfies the symplectic conditions exactly") {
  CHECK(check_symplectic(midpoint_tableau()) == 0.0);
}

TEST_CASE("Stormer-Verlet tableau satisfies the symplectic conditions") {
  const auto t = galerkin_to_sprk(*build_scheme<double>(SchemeId::P2N2Q2Lob).galerkin);
  CHECK(check_symplectic(t) <= 1e-15);
}

TEST_CASE("perturbing a coefficient breaks the identities") {
  auto t = galerkin_to_sprk(*build_scheme<double>(SchemeId::P2N2Q2Lob).galerkin);
  t.a(0, 0) += 0.1;
  CHECK(check_symplectic(t) > 0.01);
}

TEST_CASE("conversion reproduces the printed Stormer-Verlet coefficients") {
  const auto t = galerkin_to_sprk(*build_scheme<double>(SchemeId::P2N2Q2Lob).galerkin);
  REQUIRE(t.stages == 2);
  CHECK(std::abs(t.a(0, 0)) <= 1e-15);
  CHECK(std::abs(t.a(0, 1)) <= 1e-15);
  CHECK(std::abs(t.a(1, 0) - 0.5) <= 1e-15);
  CHECK(std::abs(t.a(1, 1) - 0.5) <= 1e-15);
  CHECK(std::abs(t.a_bar(0, 0) - 0.5) <= 1e-15);
  CHECK(std::abs(t.a_bar(0, 1)) <= 1e-15);
  CHECK(std::abs(t.a_bar(1, 0) - 0.5) <= 1e-15);
  CHECK(std::abs(t.a_bar(1, 1)) <= 1e-15);
  CHECK(t.b == t.a);
  CHECK(t.b_bar == t.a_bar);
}

TEST_CASE("conversion reproduces the printed open-trapezoidal coefficients") {
  const auto t = galerkin_to_sprk(*build_scheme<double>(SchemeId::P2N2Q2Otr).galerkin);
  CHECK(std::abs(t.a(0, 0) - 0.5) <= 1e-15);
  CHECK(std::abs(t.a(0, 1) + 1.0 / 6) <= 1e-15);
  CHECK(std::abs(t.a(1, 0) - 2.0 / 3) <= 1e-15);
  CHECK(std::abs(t.a(1, 1)) <= 1e-15);
  CHECK(std::abs(t.a_bar(0, 0)) <= 1e-15);
  CHECK(std::abs(t.a_bar(0, 1) + 1.0 / 6) <= 1e-15);
  CHECK(std::abs(t.a_bar(1, 0) - 2.0 / 3) <= 1e-15);
  CHECK(std::abs(t.a_bar(1, 1) - 0.5) <= 1e-15);
  CHECK(check_symplectic(t) <= 1e-13);
}

TEST_CASE("conversion of the one-stage midpoint scheme") {
  const auto t = galerkin_to_sprk(*build_scheme<double>(SchemeId::P1N1Q2Gau).galerkin);
  CHECK(t.stages == 1);
  CHECK(t.a(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(t.a_bar(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(t.b(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(t.b_bar(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("conversion requires r = s") {
  CHECK_THROWS_AS(galerkin_to_sprk(*build_scheme<double>(SchemeId::P1N2Q2Lob).galerkin),
                  ConfigError);
  CHECK_THROWS_AS(galerkin_to_sprk(*build_scheme<double>(SchemeId::P1N1Q1RecN2Q2Lob).galerkin),
                  ConfigError);
}

TEST_CASE("sprk step matches the closed-form midpoint solve on Kubo") {
  const double beta = 0.1, dt = 0.02, w = -0.07;
  const auto sys = kubo_system<double>(beta);
  const auto r = sprk_step(midpoint_tableau(), sys, PhaseStated(0.3, 0.5), dt, dw1(w));
  // Linear solve of the midpoint system with theta = dt + beta dW.
  const double h = (dt + beta * w) / 2;
  Eigen::Matrix2d lhs, rhs;
  lhs << 1, -h, h, 1;
  rhs << 1, h, -h, 1;
  const Eigen::Vector2d expected = lhs.inverse() * (rhs * Eigen::Vector2d(0.3, 0.5));
  CHECK(std::abs(r.state.q[0] - expected[0]) < 1e-10);
  CHECK(std::abs(r.state.p[0] - expected[1]) < 1e-10);
}

TEST_CASE("dW = 0 gives the deterministic partitioned RK step") {
  const auto sys = synchrotron_system<double>(0.1);
  const auto t = galerkin_to_sprk(*build_scheme<double>(SchemeId::P2N2Q2Lob).galerkin);
  const PhaseStated z0(0.4, 0.9);
  const double dt = 0.05;
  const auto r = sprk_step(t, sys, z0, dt, dw1(0.0));
  // Deterministic leapfrog for H = p^2/2 - cos q.
  const double p_half = z0.p[0] - dt / 2 * std::sin(z0.q[0]);
  const double q1 = z0.q[0] + dt * p_half;
  const double p1 = p_half - dt / 2 * std::sin(q1);
  CHECK(std::abs(r.state.q[0] - q1) < 1e-12);
  CHECK(std::abs(r.state.p[0] - p1) < 1e-12);
}

TEST_CASE("Stormer-Verlet tableau reproduces the explicit sequence on a separable system") {
  const double beta = 0.1, dt = 0.08, w = 0.11;
  const auto sys = synchrotron_system<double>(beta);
  const auto t = galerkin_to_sprk(*build_scheme<double>(SchemeId::P2N2Q2Lob).galerkin);
  const PhaseStated z0(0.2, 1.1);
  const auto r = sprk_step(t, sys, z0, dt, dw1(w));
  // Direct evaluation of the explicit half-step/full-step/half-step sequence.
  const double p_half =
      z0.p[0] - dt / 2 * std::sin(z0.q[0]) - w / 2 * beta * std::cos(z0.q[0]);
  const double q1 = z0.q[0] + dt * p_half;
  const double p1 = p_half - dt / 2 * std::sin(q1) - w / 2 * beta * std::cos(q1);
  CHECK(std::abs(r.state.q[0] - q1) < 1e-12);
  CHECK(std::abs(r.state.p[0] - p1) < 1e-12);
}

TEST_CASE("order-3/2 tableau stores the printed coefficients verbatim") {
  const auto t = milstein32_tableau<double>();
  CHECK(t.lambda_bar(0, 0) == 1.5);
  CHECK(t.lambda_bar(1, 1) == -1.5);
  CHECK(t.b_bar(1, 1) == 1.5);
  CHECK(t.a_bar(1, 1) == 0.75);
  CHECK(t.a(1, 0) == doctest::Approx(2.0 / 3).epsilon(1e-16));
  CHECK(t.a(0, 0) == 0.0);
  CHECK(t.a(0, 1) == 0.0);
  CHECK(t.a(1, 1) == 0.0);
  CHECK(t.alpha[0] == doctest::Approx(2.0 / 3).epsilon(1e-16));
  CHECK(t.alpha[1] == doctest::Approx(1.0 / 3).epsilon(1e-16));
  CHECK(t.alpha_bar[0] == 0.25);
  CHECK(t.alpha_bar[1] == 0.75);
  CHECK(t.beta_bar[0] == -0.5);
  CHECK(t.beta_bar[1] == 1.5);
  CHECK(t.gamma_bar[0] == 1.5);
  CHECK(t.gamma_bar[1] == -1.5);
}

TEST_CASE("order-3/2 step runs the explicit sweep and matches a manual evaluation") {
  const double beta = 0.1, dt = 0.05;
  const auto sys = synchrotron_system<double>(beta);
  const auto t = milstein32_tableau<double>();
  IncrementPaird inc{0.04, 0.0007, true};
  const PhaseStated z0(0.3, 0.7);
  const auto r = sprk32_step(t, sys, z0, dt, inc);
  CHECK(r.stats.iterations == 0);

  // Manual sweep with the printed coefficients.
  const double zw = inc.dz / dt;
  auto uq = [&](double q) { return std::sin(q); };
  auto hq = [&](double q) { return beta * std::cos(q); };
  const double Q1 = z0.q[0];
  const double P1 = z0.p[0] - dt * 0.25 * uq(Q1) - (-0.5 * inc.dw + 1.5 * zw) * hq(Q1);
  const double Q2 = z0.q[0] + dt * (2.0 / 3) * P1;
  const double P2 = z0.p[0] - dt * (0.25 * uq(Q1) + 0.75 * uq(Q2)) -
                    (-0.5 * inc.dw + 1.5 * zw) * hq(Q1) - (1.5 * inc.dw - 1.5 * zw) * hq(Q2);
  const double q1 = z0.q[0] + dt * (2.0 / 3 * P1 + 1.0 / 3 * P2);
  const double p1 = z0.p[0] - dt * (0.25 * uq(Q1) + 0.75 * uq(Q2)) -
                    (-0.5 * inc.dw + 1.5 * zw) * hq(Q1) - (1.5 * inc.dw - 1.5 * zw) * hq(Q2);
  CHECK(std::abs(r.state.q[0] - q1) < 1e-14);
  CHECK(std::abs(r.state.p[0] - p1) < 1e-14);
}

TEST_CASE("order-3/2 step with zero increments is a deterministic PRK step") {
  const auto sys = anharmonic_system<double>(0.1, 0.1);
  const auto t = milstein32_tableau<double>();
  IncrementPaird inc{0.0, 0.0, true};
  const PhaseStated z0(0.5, -0.3);
  const double dt = 0.05;
  const auto r = sprk32_step(t, sys, z0, dt, inc);
  auto uq = [&](double q) { return 0.4 * q * q * q; };
  const double Q1 = z0.q[0];
  const double P1 = z0.p[0] - dt * 0.25 * uq(Q1);
  const double Q2 = z0.q[0] + dt * (2.0 / 3) * P1;
  const double P2 = z0.p[0] - dt * (0.25 * uq(Q1) + 0.75 * uq(Q2));
  CHECK(std::abs(r.state.q[0] - (z0.q[0] + dt * (2.0 / 3 * P1 + 1.0 / 3 * P2))) < 1e-14);
  CHECK(std::abs(r.state.p[0] - (z0.p[0] - dt * (0.25 * uq(Q1) + 0.75 * uq(Q2)))) < 1e-14);
}

TEST_CASE("order-3/2 family degenerates to the plain SPRK step") {
  // lambda = gamma = 0 and matching weight rows: both steppers must agree on
  // a separable system with h = h(q).
  const auto sys = synchrotron_system<double>(0.1);
  const auto sv = galerkin_to_sprk(*build_scheme<double>(SchemeId::P2N2Q2Lob).galerkin);
  Sprk32Tableaud t;
  t.stages = sv.stages;
  t.a = sv.a;
  t.a_bar = sv.a_bar;
  t.b_bar = sv.b_bar;
  t.lambda_bar = Eigen::MatrixXd::Zero(2, 2);
  t.alpha = sv.alpha;
  t.alpha_bar = sv.alpha;
  t.beta_bar = sv.beta;
  t.gamma_bar = VectorXd::Zero(2);

  std::mt19937_64 gen(29);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int rep = 0; rep < 10; ++rep) {
    const PhaseStated z0(uni(gen), uni(gen));
    const double dt = 0.02 + 0.08 * std::abs(uni(gen));
    const double w = 0.2 * uni(gen);
    IncrementPaird inc{w, 0.0, true};
    const auto a = sprk32_step(t, sys, z0, dt, inc);
    const auto b = sprk_step(sv, sys, z0, dt, dw1(w));
    CHECK((a.state.flat() - b.state.flat()).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("order-3/2 step validates its preconditions") {
  const auto t = milstein32_tableau<double>();
  const auto kubo = kubo_system<double>(0.1);  // h depends on p
  IncrementPaird with_dz{0.1, 0.001, true};
  CHECK_THROWS_AS(sprk32_step(t, kubo, PhaseStated(0.0, 1.0), 0.1, with_dz), ConfigError);

  const auto sync = synchrotron_system<double>(0.1);
  IncrementPaird no_dz{0.1, 0.0, false};
  CHECK_THROWS_AS(sprk32_step(t, sync, PhaseStated(0.0, 1.0), 0.1, no_dz), ConfigError);
}

TEST_CASE("pretty-printing shows coefficients and the violation") {
  const auto text = to_string(galerkin_to_sprk(*build_scheme<double>(SchemeId::P2N2Q2Lob).galerkin));
  CHECK(text.find("alpha") != std::string::npos);
  CHECK(text.find("violation") != std::string::npos);
  const auto text32 = to_string(milstein32_tableau<double>());
  CHECK(text32.find("gammab") != std::string::npos);
}
