#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "svi/noise.hpp"

#include <cmath>
#include <cstdio>
#include <random>

using namespace svi;

TEST_CASE("increment pair from injected unit normals") {
  const auto inc = increment_from_normals(1.0, 0.0, 4.0);
  CHECK(inc.dw == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(inc.dz == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("sampled moments match the joint law") {
  const double dt = 0.01;
  const Eigen::Index n = 100000;
  const auto path = sample_path<double>(2024, n, dt, 1, true);
  double mw = 0, mz = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    mw += path.dw(k, 0);
    mz += (*path.dz)(k, 0);
  }
  mw /= n;
  mz /= n;
  double vw = 0, vz = 0, cov = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double a = path.dw(k, 0) - mw, b = (*path.dz)(k, 0) - mz;
    vw += a * a;
    vz += b * b;
    cov += a * b;
  }
  vw /= n - 1;
  vz /= n - 1;
  cov /= n - 1;
  CHECK(vw > dt * 0.98);
  CHECK(vw < dt * 1.02);
  CHECK(vz > dt * dt * dt / 3 * 0.95);
  CHECK(vz < dt * dt * dt / 3 * 1.05);
  CHECK(cov > dt * dt / 2 * 0.95);
  CHECK(cov < dt * dt / 2 * 1.05);
}

TEST_CASE("same seed reproduces the increments bitwise") {
  const auto a = sample_path<double>(77, 256, 0.05, 2, true);
  const auto b = sample_path<double>(77, 256, 0.05, 2, true);
  CHECK(a.dw == b.dw);
  CHECK(*a.dz == *b.dz);
  const auto c = sample_path<double>(78, 256, 0.05, 2, true);
  CHECK(a.dw != c.dw);
}

TEST_CASE("coarsening adds increments") {
  WienerPathd path;
  path.dt = 1.0;
  path.dw.resize(2, 1);
  path.dw << 0.1, -0.2;
  const auto merged = coarsen(path, 2);
  CHECK(merged.steps() == 1);
  CHECK(merged.dt == 2.0);
  CHECK(merged.dw(0, 0) == doctest::Approx(-0.1).epsilon(1e-15));
}

TEST_CASE("coarsening merges dZ with the cross term") {
  WienerPathd path;
  path.dt = 1.0;
  path.dw.resize(2, 1);
  path.dw << 1.0, 0.0;
  path.dz.emplace(2, 1);
  *path.dz << 0.3, 0.1;
  const auto merged = coarsen(path, 2);
  CHECK((*merged.dz)(0, 0) == doctest::Approx(1.4).epsilon(1e-15));
}

TEST_CASE("factor one is the identity") {
  const auto path = sample_path<double>(5, 8, 0.25, 1, true);
  const auto same = coarsen(path, 1);
  CHECK(same.dw == path.dw);
  CHECK(*same.dz == *path.dz);
  CHECK_THROWS_AS(coarsen(path, 3), ArgumentError);
}

TEST_CASE("dZ merge rule against a quadrature oracle") {
  // Deterministic "path" W(t) = sin t on [0, 2]: fine increments and exact
  // per-step integrals int (W - W(t_k)) dt, computed by fine Simpson sums.
  const int fine = 64;
  const double dt = 2.0 / fine;
  auto w = [](double t) { return std::sin(t); };
  auto z_between = [&](double a, double b) {
    const int panels = 200;
    const double h = (b - a) / panels;
    double acc = 0;
    for (int i = 0; i < panels; ++i) {
      const double lo = a + i * h, hi = lo + h, mid = 0.5 * (lo + hi);
      acc += h / 6 * (w(lo) + 4 * w(mid) + w(hi));
    }
    return acc - (b - a) * w(a);
  };
  WienerPathd path;
  path.dt = dt;
  path.dw.resize(fine, 1);
  path.dz.emplace(fine, 1);
  for (int k = 0; k < fine; ++k) {
    path.dw(k, 0) = w((k + 1) * dt) - w(k * dt);
    (*path.dz)(k, 0) = z_between(k * dt, (k + 1) * dt);
  }
  for (int factor : {2, 4, 16, 64}) {
    const auto merged = coarsen(path, factor);
    for (Eigen::Index k = 0; k < merged.steps(); ++k) {
      const double a = k * factor * dt, b = (k + 1) * factor * dt;
      CHECK((*merged.dz)(k, 0) == doctest::Approx(z_between(a, b)).epsilon(1e-9));
      CHECK(merged.dw(k, 0) == doctest::Approx(w(b) - w(a)).epsilon(1e-12));
    }
  }
}

TEST_CASE("coarsening is associative and conserves the terminal value") {
  const auto path = sample_path<double>(99, 96, 0.01, 2, true);
  const auto ab = coarsen(coarsen(path, 2), 3);
  const auto once = coarsen(path, 6);
  CHECK((ab.dw - once.dw).lpNorm<Eigen::Infinity>() < 1e-14 * once.dw.cwiseAbs().maxCoeff());
  CHECK((*ab.dz - *once.dz).lpNorm<Eigen::Infinity>() <
        1e-14 * (1 + once.dz->cwiseAbs().maxCoeff()));
  const auto w_fine = path.terminal_value();
  for (int factor : {2, 4, 8}) {
    const auto w_coarse = coarsen(path, factor).terminal_value();
    CHECK((w_fine - w_coarse).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("truncation clamps and is idempotent") {
  CHECK(truncate_increment(5.0, 2.0) == 2.0);
  CHECK(truncate_increment(-0.3, 2.0) == -0.3);
  CHECK(truncate_increment(-5.0, 2.0) == -2.0);
  CHECK_THROWS_AS(truncate_increment(1.0, 0.0), ArgumentError);
  std::mt19937_64 gen(3);
  std::normal_distribution<double> normal(0.0, 3.0);
  for (int rep = 0; rep < 200; ++rep) {
    const double x = normal(gen);
    const double once = truncate_increment(x, 1.7);
    CHECK(truncate_increment(once, 1.7) == once);
    CHECK(std::abs(once) <= 1.7);
  }
}

TEST_CASE("binary dump and load round-trips bitwise") {
  const auto path = sample_path<double>(31337, 64, 0.125, 3, true);
  const std::string file = "wiener_roundtrip.bin";
  save_path(path, file);
  const auto loaded = load_path(file);
  std::remove(file.c_str());
  CHECK(loaded.seed == path.seed);
  CHECK(loaded.dt == path.dt);
  CHECK(loaded.dw == path.dw);
  REQUIRE(loaded.dz.has_value());
  CHECK(*loaded.dz == *path.dz);

  const auto plain = sample_path<double>(1, 4, 0.5, 1, false);
  save_path(plain, file);
  const auto loaded2 = load_path(file);
  std::remove(file.c_str());
  CHECK(!loaded2.dz.has_value());
  CHECK(loaded2.dw == plain.dw);
}

TEST_CASE("trial streams are decorrelated and stable") {
  CHECK(trial_seed(42, 0) != trial_seed(42, 1));
  CHECK(trial_seed(42, 0) != trial_seed(43, 0));
  CHECK(trial_seed(42, 7) == trial_seed(42, 7));
}

TEST_CASE("sampling validates its arguments") {
  CHECK_THROWS_AS(sample_path<double>(1, 0, 0.1), ArgumentError);
  CHECK_THROWS_AS(sample_path<double>(1, 4, -0.1), ArgumentError);
  CHECK_THROWS_AS(sample_path<double>(1, 4, 0.1, 0), ArgumentError);
}
