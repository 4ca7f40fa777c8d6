#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "svi/builtin_systems.hpp"
#include "svi/galerkin.hpp"
#include "svi/schemes.hpp"

#include <cmath>
#include <random>

using namespace svi;
using Eigen::VectorXd;

namespace {

VectorXd dw1(double w) { return VectorXd::Constant(1, w); }

/// Closed-form one step of the stochastic midpoint method on the Kubo
/// oscillator: with theta = dt + beta dW the scheme is the 2x2 linear system
///   q1 = q + theta (p + p1)/2,   p1 = p - theta (q + q1)/2.
PhaseStated kubo_midpoint_closed_form(const PhaseStated& z, double dt, double beta, double w) {
  const double th = dt + beta * w;
  const double h = th / 2;
  Eigen::Matrix2d lhs, rhs;
  lhs << 1, -h, h, 1;
  rhs << 1, h, -h, 1;
  const Eigen::Vector2d out = lhs.inverse() * (rhs * Eigen::Vector2d(z.q[0], z.p[0]));
  return {out[0], out[1]};
}

}  // namespace

TEST_CASE("zero residual at the deterministic implicit midpoint solution") {
  const auto sys = kubo_system<double>(0.1);
  const auto scheme = *build_scheme<double>(SchemeId::P1N1Q2Gau).galerkin;
  const double dt = 0.05;
  const PhaseStated z0(0.3, 0.8);
  const auto z1 = kubo_midpoint_closed_form(z0, dt, 0.1, 0.0);

  StageVectord stages;
  stages.q_controls = {z1.q};
  stages.p_stages = {0.5 * (z0.p + z1.p)};
  const VectorXd res = galerkin_residual(scheme, sys, z0, stages, dt, dw1(0.0));
  CHECK(res.lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("zero residual at the closed-form stochastic midpoint solution") {
  const double beta = 0.1;
  const auto sys = kubo_system<double>(beta);
  const auto scheme = *build_scheme<double>(SchemeId::P1N1Q2Gau).galerkin;
  const double dt = 0.02, w = 0.17;
  const PhaseStated z0(-0.4, 1.1);
  const auto z1 = kubo_midpoint_closed_form(z0, dt, beta, w);

  StageVectord stages;
  stages.q_controls = {z1.q};
  stages.p_stages = {0.5 * (z0.p + z1.p)};
  CHECK(galerkin_residual(scheme, sys, z0, stages, dt, dw1(w)).lpNorm<Eigen::Infinity>() < 1e-10);

  const auto step = galerkin_step(scheme, sys, z0, dt, dw1(w));
  CHECK(std::abs(step.state.q[0] - z1.q[0]) < 1e-10);
  CHECK(std::abs(step.state.p[0] - z1.p[0]) < 1e-10);
}

TEST_CASE("random stages do not satisfy the stage system") {
  const auto sys = kubo_system<double>(0.1);
  const auto scheme = *build_scheme<double>(SchemeId::P1N1Q2Gau).galerkin;
  StageVectord stages;
  stages.q_controls = {VectorXd::Constant(1, 0.9)};
  stages.p_stages = {VectorXd::Constant(1, -1.3)};
  const VectorXd res =
      galerkin_residual(scheme, sys, PhaseStated(0.0, 1.0), stages, 0.01, dw1(0.05));
  CHECK(res.lpNorm<Eigen::Infinity>() > 1e-3);
}

TEST_CASE("dt = 0 and dW = 0 is the identity") {
  for (SchemeId id : {SchemeId::P1N1Q2Gau, SchemeId::P2N2Q2Lob, SchemeId::P1N3Q4Lob}) {
    const auto sys = kubo_system<double>(0.1);
    const auto scheme = *build_scheme<double>(id).galerkin;
    const PhaseStated z0(0.6, -0.2);
    const auto step = galerkin_step(scheme, sys, z0, 0.0, dw1(0.0));
    CHECK(step.state.q[0] == doctest::Approx(z0.q[0]).epsilon(1e-15));
    CHECK(step.state.p[0] == doctest::Approx(z0.p[0]).epsilon(1e-15));
  }
}

TEST_CASE("midpoint step conserves the Kubo Hamiltonian") {
  const auto sys = kubo_system<double>(0.1);
  const auto scheme = *build_scheme<double>(SchemeId::P1N1Q2Gau).galerkin;
  const PhaseStated z0(0.0, 1.0);
  const auto step = galerkin_step(scheme, sys, z0, 0.01, dw1(0.13));
  CHECK(std::abs(sys.H(step.state.q, step.state.p) - sys.H(z0.q, z0.p)) < 1e-10);
}

TEST_CASE("deterministic limits reproduce the classical integrators") {
  const auto sys = kubo_system<double>(0.0);  // harmonic oscillator, zero noise
  const double dt = 0.1;
  const PhaseStated z0(0.37, -0.81);
  const VectorXd zero = dw1(0.0);

  SUBCASE("midpoint") {
    const auto scheme = *build_scheme<double>(SchemeId::P1N1Q2Gau).galerkin;
    const auto step = galerkin_step(scheme, sys, z0, dt, zero);
    const auto exact = kubo_midpoint_closed_form(z0, dt, 0.0, 0.0);
    CHECK(std::abs(step.state.q[0] - exact.q[0]) < 1e-12);
    CHECK(std::abs(step.state.p[0] - exact.p[0]) < 1e-12);
  }
  SUBCASE("Stormer-Verlet and trapezoidal collapse to the leapfrog update") {
    const double p_half = z0.p[0] - dt / 2 * z0.q[0];
    const double q1 = z0.q[0] + dt * p_half;
    const double p1 = p_half - dt / 2 * q1;
    for (SchemeId id : {SchemeId::P2N2Q2Lob, SchemeId::P1N2Q2Lob}) {
      const auto scheme = *build_scheme<double>(id).galerkin;
      const auto step = galerkin_step(scheme, sys, z0, dt, zero);
      CHECK(std::abs(step.state.q[0] - q1) < 1e-12);
      CHECK(std::abs(step.state.p[0] - p1) < 1e-12);
    }
  }
}

TEST_CASE("analytic and finite-difference Jacobians agree") {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (SchemeId id : {SchemeId::P1N1Q2Gau, SchemeId::P2N2Q2Lob, SchemeId::P1N3Q4Lob,
                      SchemeId::P1N1Q1RecN2Q2Lob}) {
    const auto desc = build_scheme<double>(id);
    const auto sys = desc.caps.requires_h_independent_of_p ? synchrotron_system<double>(0.1)
                                                           : kubo_system<double>(0.1);
    for (int rep = 0; rep < 5; ++rep) {
      const PhaseStated z0(uni(gen), uni(gen));
      const double dt = 0.05 + 0.05 * uni(gen);
      const VectorXd w = dw1(0.2 * uni(gen));
      SolverConfig fd;
      SolverConfig an;
      an.jacobian = JacobianMode::analytic_if_available;
      const auto a = galerkin_step(*desc.galerkin, sys, z0, dt, w, fd);
      const auto b = galerkin_step(*desc.galerkin, sys, z0, dt, w, an);
      CHECK((a.state.flat() - b.state.flat()).lpNorm<Eigen::Infinity>() < 1e-12);
    }
  }
}

TEST_CASE("warm starts from converged stages keep Newton short") {
  const auto sys = synchrotron_system<double>(0.1);
  const auto scheme = *build_scheme<double>(SchemeId::P1N1Q2GauN2Q2Lob).galerkin;
  PhaseStated z(0.1, 0.9);
  std::optional<StageVectord> warm;
  int total_iters = 0;
  for (int k = 0; k < 5; ++k) {
    const auto step = galerkin_step(scheme, sys, z, 0.05, dw1(0.02), {}, warm);
    warm = step.stages;
    z = step.state;
    total_iters += step.stats.iterations;
    CHECK(step.stats.converged);
  }
  CHECK(total_iters < 5 * 10);
}

TEST_CASE("scheme/system compatibility is enforced") {
  const auto kubo = kubo_system<double>(0.1);
  const auto rec = *build_scheme<double>(SchemeId::P1N1Q1Rec).galerkin;
  CHECK_THROWS_AS(galerkin_step(rec, kubo, PhaseStated(0.0, 1.0), 0.1, dw1(0.1)), ConfigError);

  const auto mid = *build_scheme<double>(SchemeId::P1N1Q2Gau).galerkin;
  CHECK_THROWS_AS(galerkin_step(mid, kubo, PhaseStated(0.0, 1.0), 0.1, VectorXd(VectorXd::Zero(2))),
                  ArgumentError);
}

TEST_CASE("newton failure carries the last residual") {
  // The open-trapezoidal s=2 scheme on the Kubo oscillator has no solution
  // when dt + beta dW = 3; a nearby increment defeats the solve.
  const auto sys = kubo_system<double>(1.0);
  const auto desc = build_scheme<double>(SchemeId::P2N2Q2Otr);
  const auto tableau = galerkin_to_sprk(*desc.galerkin);
  SolverConfig cfg;
  cfg.max_iter = 25;
  try {
    (void)sprk_step(tableau, sys, PhaseStated(0.0, 1.0), 0.5, dw1(2.5), cfg);
    FAIL("expected SolveError");
  } catch (const SolveError& e) {
    CHECK(e.stats().iterations >= 1);
    CHECK(std::isfinite(e.stats().residual_norm));
  }
}

TEST_CASE("retry with a truncated increment recovers the singular step") {
  const double beta = 1.0, dt = 0.5;
  const auto sys = kubo_system<double>(beta);
  const auto desc = build_scheme<double>(SchemeId::P2N2Q2Otr);
  const auto tableau = galerkin_to_sprk(*desc.galerkin);
  SolverConfig cfg;
  cfg.max_iter = 25;
  const double bound = (3.0 - dt) / (2.0 * beta);
  const double w = 2.5;  // dt + beta w = 3: no solution
  CHECK_THROWS_AS(sprk_step(tableau, sys, PhaseStated(0.0, 1.0), dt, dw1(w), cfg), SolveError);
  const double w_trunc = truncate_increment(w, bound);
  const auto retry = sprk_step(tableau, sys, PhaseStated(0.0, 1.0), dt, dw1(w_trunc), cfg);
  CHECK(retry.stats.converged);
}
