#pragma once

#include "svi/reference.hpp"
#include "svi/schemes.hpp"

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace svi {

/// Experiment-level failure (e.g. too many dropped trials).
class ExperimentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A steppable method: a registry scheme or one of the non-symplectic
/// comparison integrators.
struct Stepper {
  enum class Kind { scheme, milstein, taylor32 };
  Kind kind = Kind::scheme;
  SchemeId scheme = SchemeId::P1N1Q2Gau;

  static Stepper make(SchemeId id) { return {Kind::scheme, id}; }
  static Stepper parse(const std::string& name) {
    if (name == "milstein") return {Kind::milstein, SchemeId::P1N1Q2Gau};
    if (name == "taylor32") return {Kind::taylor32, SchemeId::P1N1Q2Gau};
    return {Kind::scheme, parse_scheme(name)};
  }

  std::string name() const {
    switch (kind) {
      case Kind::milstein: return "milstein";
      case Kind::taylor32: return "taylor32";
      case Kind::scheme: return to_string(scheme);
    }
    return {};
  }

  bool needs_dz() const {
    return kind == Kind::taylor32 ||
           (kind == Kind::scheme && scheme == SchemeId::SPRK32Milstein);
  }
  bool symplectic() const { return kind == Kind::scheme; }
};

/// One step of a Stepper with the k-th increment of a path. A failed implicit
/// solve is retried once with clamped increments when the solver config
/// carries a truncation bound.
template <typename Scalar>
PhaseState<Scalar> stepper_step(const Stepper& st, const System<Scalar>& sys,
                                const PhaseState<Scalar>& z, const WienerPath<Scalar>& path,
                                Eigen::Index k, const SolverConfig& cfg) {
  VectorX<Scalar> dw = path.dw.row(k).transpose();
  switch (st.kind) {
    case Stepper::Kind::milstein:
      return milstein_step(sys, z, path.dt, dw);
    case Stepper::Kind::taylor32:
      return taylor32_step(sys, z, path.dt, path.at(k, 0));
    case Stepper::Kind::scheme: {
      std::optional<IncrementPair<Scalar>> inc;
      if (st.scheme == SchemeId::SPRK32Milstein) inc = path.at(k, 0);
      try {
        return fast_step(st.scheme, sys, z, path.dt, dw, cfg, inc).state;
      } catch (const SolveError&) {
        if (!cfg.truncation_retry_bound) throw;
        const auto bound = static_cast<Scalar>(*cfg.truncation_retry_bound);
        for (Eigen::Index m = 0; m < dw.size(); ++m)
          dw[m] = truncate_increment(dw[m], bound);
        if (inc) inc->dw = truncate_increment(inc->dw, bound);
        return fast_step(st.scheme, sys, z, path.dt, dw, cfg, inc).state;
      }
    }
  }
  throw ArgumentError("stepper_step: bad stepper");
}

template <typename Scalar>
PhaseState<Scalar> run_to_end(const Stepper& st, const System<Scalar>& sys,
                              const PhaseState<Scalar>& z0, const WienerPath<Scalar>& path,
                              const SolverConfig& cfg) {
  PhaseState<Scalar> z = z0;
  for (Eigen::Index k = 0; k < path.steps(); ++k) z = stepper_step(st, sys, z, path, k, cfg);
  return z;
}

template <typename Scalar>
std::vector<PhaseState<Scalar>> run_trajectory(const Stepper& st, const System<Scalar>& sys,
                                               const PhaseState<Scalar>& z0,
                                               const WienerPath<Scalar>& path,
                                               const SolverConfig& cfg) {
  std::vector<PhaseState<Scalar>> traj;
  traj.reserve(path.steps() + 1);
  traj.push_back(z0);
  for (Eigen::Index k = 0; k < path.steps(); ++k)
    traj.push_back(stepper_step(st, sys, traj.back(), path, k, cfg));
  return traj;
}

struct FitResult {
  double slope = 0;
  double std_error = 0;
};

/// Ordinary least-squares slope (and its standard error when more than two
/// points are given).
inline FitResult fit_linear(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw ArgumentError("fit_linear: need >= 2 matching points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0) throw ArgumentError("fit_linear: degenerate abscissae");
  FitResult fit;
  fit.slope = sxy / sxx;
  if (n > 2) {
    double ssr = 0;
    const double intercept = my - fit.slope * mx;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - intercept - fit.slope * x[i];
      ssr += r * r;
    }
    fit.std_error = std::sqrt(ssr / static_cast<double>(n - 2) / sxx);
  }
  return fit;
}

/// Least-squares slope of log(error) against log(dt): the empirical
/// mean-square order.
inline double fit_order(const std::vector<double>& dt_levels, const std::vector<double>& errors) {
  if (dt_levels.size() != errors.size() || dt_levels.size() < 2)
    throw ArgumentError("fit_order: need >= 2 levels");
  std::vector<double> lx(dt_levels.size()), ly(errors.size());
  for (std::size_t i = 0; i < dt_levels.size(); ++i) {
    if (!(dt_levels[i] > 0)) throw ArgumentError("fit_order: dt levels must be positive");
    if (!(errors[i] > 0)) throw ArgumentError("fit_order: errors must be positive");
    lx[i] = std::log(dt_levels[i]);
    ly[i] = std::log(errors[i]);
  }
  return fit_linear(lx, ly).slope;
}

inline FitResult fit_order_with_error(const std::vector<double>& dt_levels,
                                      const std::vector<double>& errors) {
  std::vector<double> lx(dt_levels.size()), ly(errors.size());
  for (std::size_t i = 0; i < dt_levels.size(); ++i) {
    lx[i] = std::log(dt_levels[i]);
    ly[i] = std::log(errors[i]);
  }
  return fit_linear(lx, ly);
}

/// Reference solution for the mean-square error at the final time.
struct ReferenceSpec {
  enum class Kind { exact_kubo, fine_taylor32 };
  Kind kind = Kind::fine_taylor32;
  double kubo_beta = 0.1;  // exact_kubo only
  int refine = 32;         // fine_taylor32: reference step = finest level / refine
};

struct ConvergenceResult {
  std::string stepper;
  std::vector<double> dt_levels;
  std::vector<double> ms_errors;
  std::vector<double> std_errors;
  double fitted_order = 0;
  double order_std_error = 0;
  int n_paths = 0;
  int n_dropped = 0;
  std::uint64_t seed = 0;
};

namespace detail {

/// Runs `body(trial)` for trial = 0..n-1 on up to `threads` workers. SolveError
/// inside a trial is the body's business; any other exception aborts the run.
template <typename Body>
void parallel_trials(int n, int threads, const Body& body) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int t = 0; t < n; ++t) body(t);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      while (!failed.load(std::memory_order_relaxed)) {
        const int t = next.fetch_add(1);
        if (t >= n) return;
        try {
          body(t);
        } catch (...) {
          std::scoped_lock lock(error_mutex);
          if (!error) error = std::current_exception();
          failed.store(true);
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

inline void check_grid(double T, const std::vector<double>& dt_levels,
                       std::vector<Eigen::Index>& factors, Eigen::Index& k_finest) {
  if (dt_levels.empty()) throw ArgumentError("convergence: no dt levels");
  for (std::size_t i = 1; i < dt_levels.size(); ++i)
    if (!(dt_levels[i] > dt_levels[i - 1]))
      throw ArgumentError("convergence: dt levels must be strictly increasing");
  const double dt0 = dt_levels.front();
  k_finest = static_cast<Eigen::Index>(std::llround(T / dt0));
  if (k_finest < 1 || std::abs(static_cast<double>(k_finest) * dt0 - T) > 1e-9 * T)
    throw ArgumentError("convergence: finest dt must divide T");
  factors.clear();
  for (double dt : dt_levels) {
    const auto f = static_cast<Eigen::Index>(std::llround(dt / dt0));
    if (f < 1 || std::abs(static_cast<double>(f) * dt0 - dt) > 1e-12 ||
        k_finest % f != 0)
      throw ArgumentError("convergence: every level must be an integer multiple of the finest");
    factors.push_back(f);
  }
}

}  // namespace detail

/// Mean-square convergence study against a shared-path reference. Each trial
/// draws one Brownian path at the master resolution (the reference step for a
/// fine-step reference, the finest level otherwise) and coarsens it so that
/// every level sees the same sample. A trial whose solve fails at any level
/// is dropped from all levels of that stepper and counted; more than 1% drops
/// aborts the run.
template <typename Scalar>
std::vector<ConvergenceResult> ms_convergence_multi(
    const std::vector<Stepper>& steppers, const System<Scalar>& sys, const PhaseState<Scalar>& z0,
    Scalar T, const std::vector<double>& dt_levels, int n_paths, std::uint64_t seed,
    const ReferenceSpec& reference, const SolverConfig& cfg = {}, int threads = 1) {
  if (n_paths < 1) throw ArgumentError("ms_convergence: need at least one path");
  if (reference.kind == ReferenceSpec::Kind::exact_kubo && sys.name != "kubo")
    throw ArgumentError("ms_convergence: exact reference is only available for the Kubo system");

  std::vector<Eigen::Index> factors;
  Eigen::Index k_finest = 0;
  detail::check_grid(T, dt_levels, factors, k_finest);

  const bool fine_reference = reference.kind == ReferenceSpec::Kind::fine_taylor32;
  const Eigen::Index refine = fine_reference ? std::max(1, reference.refine) : 1;
  const Eigen::Index k_master = k_finest * refine;
  const Scalar dt_master = T / static_cast<Scalar>(k_master);

  bool with_dz = fine_reference;
  for (const auto& st : steppers) with_dz = with_dz || st.needs_dz();

  const std::size_t n_steppers = steppers.size();
  const std::size_t n_levels = dt_levels.size();
  std::vector<std::vector<std::vector<double>>> errsq(
      n_steppers, std::vector<std::vector<double>>(n_levels, std::vector<double>(n_paths, 0.0)));
  std::vector<std::vector<std::uint8_t>> dropped(n_steppers,
                                                 std::vector<std::uint8_t>(n_paths, 0));

  const Stepper ref_stepper{Stepper::Kind::taylor32, SchemeId::P1N1Q2Gau};

  detail::parallel_trials(n_paths, threads, [&](int trial) {
    const auto path = sample_path<Scalar>(trial_seed(seed, trial), k_master, dt_master,
                                          sys.channels, with_dz);
    VectorX<Scalar> ref_flat;
    bool ref_ok = true;
    if (fine_reference) {
      try {
        ref_flat = run_to_end(ref_stepper, sys, z0, path, cfg).flat();
      } catch (const SolveError&) {
        ref_ok = false;
      }
    } else {
      const Scalar w_t = path.terminal_value()[0];
      ref_flat = kubo_exact(z0.q[0], z0.p[0], Scalar(reference.kubo_beta), T, w_t).flat();
    }
    for (std::size_t s = 0; s < n_steppers; ++s) {
      if (!ref_ok) {
        dropped[s][trial] = 1;
        continue;
      }
      try {
        for (std::size_t l = 0; l < n_levels; ++l) {
          const auto coarse = coarsen(path, factors[l] * refine);
          const auto z_end = run_to_end(steppers[s], sys, z0, coarse, cfg);
          errsq[s][l][trial] = (z_end.flat() - ref_flat).squaredNorm();
        }
      } catch (const SolveError&) {
        dropped[s][trial] = 1;
      }
    }
  });

  std::vector<ConvergenceResult> results;
  results.reserve(n_steppers);
  for (std::size_t s = 0; s < n_steppers; ++s) {
    ConvergenceResult r;
    r.stepper = steppers[s].name();
    r.dt_levels = dt_levels;
    r.n_paths = n_paths;
    r.seed = seed;
    for (int t = 0; t < n_paths; ++t) r.n_dropped += dropped[s][t];
    if (r.n_dropped * 100 > n_paths)
      throw ExperimentError("ms_convergence: " + r.stepper + " dropped " +
                            std::to_string(r.n_dropped) + " of " + std::to_string(n_paths) +
                            " trials (> 1%)");
    const int kept = n_paths - r.n_dropped;
    for (std::size_t l = 0; l < n_levels; ++l) {
      double mean = 0;
      for (int t = 0; t < n_paths; ++t)
        if (!dropped[s][t]) mean += errsq[s][l][t];
      mean /= kept;
      double var = 0;
      for (int t = 0; t < n_paths; ++t)
        if (!dropped[s][t]) var += (errsq[s][l][t] - mean) * (errsq[s][l][t] - mean);
      var = kept > 1 ? var / (kept - 1) : 0.0;
      const double err = std::sqrt(mean);
      r.ms_errors.push_back(err);
      r.std_errors.push_back(err > 0 ? std::sqrt(var / kept) / (2 * err) : 0.0);
    }
    if (n_levels >= 2) {
      const FitResult fit = fit_order_with_error(r.dt_levels, r.ms_errors);
      r.fitted_order = fit.slope;
      r.order_std_error = fit.std_error;
    } else {
      r.fitted_order = std::numeric_limits<double>::quiet_NaN();
    }
    results.push_back(std::move(r));
  }
  return results;
}

template <typename Scalar>
ConvergenceResult ms_convergence(const Stepper& stepper, const System<Scalar>& sys,
                                 const PhaseState<Scalar>& z0, Scalar T,
                                 const std::vector<double>& dt_levels, int n_paths,
                                 std::uint64_t seed, const ReferenceSpec& reference,
                                 const SolverConfig& cfg = {}, int threads = 1) {
  return ms_convergence_multi<Scalar>({stepper}, sys, z0, T, dt_levels, n_paths, seed, reference,
                                      cfg, threads)
      .front();
}

struct EnergyResult {
  std::string stepper;
  std::vector<double> times;
  std::vector<double> mean_H;
  std::vector<double> std_errors;
  int n_paths = 0;
  int n_dropped = 0;
  std::uint64_t seed = 0;
  std::optional<MatrixX<double>> per_path;  // (K+1) x n_paths when requested
};

/// Monte Carlo mean of H(q_k, p_k) over time. Same drop policy as the
/// convergence engine.
template <typename Scalar>
EnergyResult energy_experiment(const Stepper& stepper, const System<Scalar>& sys,
                               const PhaseState<Scalar>& z0, Scalar T, Scalar dt, int n_paths,
                               std::uint64_t seed, const SolverConfig& cfg = {}, int threads = 1,
                               bool keep_per_path = false) {
  if (n_paths < 1) throw ArgumentError("energy_experiment: need at least one path");
  const auto k_steps = static_cast<Eigen::Index>(std::llround(static_cast<double>(T / dt)));
  if (k_steps < 1 || std::abs(static_cast<double>(k_steps) * static_cast<double>(dt) -
                              static_cast<double>(T)) > 1e-9 * static_cast<double>(T))
    throw ArgumentError("energy_experiment: dt must divide T");

  MatrixX<double> h_all(k_steps + 1, n_paths);
  std::vector<std::uint8_t> dropped(n_paths, 0);

  detail::parallel_trials(n_paths, threads, [&](int trial) {
    const auto path = sample_path<Scalar>(trial_seed(seed, trial), k_steps, dt, sys.channels,
                                          stepper.needs_dz());
    try {
      PhaseState<Scalar> z = z0;
      h_all(0, trial) = static_cast<double>(sys.H(z.q, z.p));
      for (Eigen::Index k = 0; k < k_steps; ++k) {
        z = stepper_step(stepper, sys, z, path, k, cfg);
        h_all(k + 1, trial) = static_cast<double>(sys.H(z.q, z.p));
      }
    } catch (const SolveError&) {
      dropped[trial] = 1;
    }
  });

  EnergyResult r;
  r.stepper = stepper.name();
  r.n_paths = n_paths;
  r.seed = seed;
  for (int t = 0; t < n_paths; ++t) r.n_dropped += dropped[t];
  if (r.n_dropped * 100 > n_paths)
    throw ExperimentError("energy_experiment: dropped " + std::to_string(r.n_dropped) + " of " +
                          std::to_string(n_paths) + " trials (> 1%)");
  const int kept = n_paths - r.n_dropped;
  r.times.resize(k_steps + 1);
  r.mean_H.resize(k_steps + 1);
  r.std_errors.resize(k_steps + 1);
  for (Eigen::Index k = 0; k <= k_steps; ++k) {
    r.times[k] = static_cast<double>(dt) * static_cast<double>(k);
    double mean = 0;
    for (int t = 0; t < n_paths; ++t)
      if (!dropped[t]) mean += h_all(k, t);
    mean /= kept;
    double var = 0;
    for (int t = 0; t < n_paths; ++t)
      if (!dropped[t]) var += (h_all(k, t) - mean) * (h_all(k, t) - mean);
    r.mean_H[k] = mean;
    r.std_errors[k] = kept > 1 ? std::sqrt(var / (kept - 1) / kept) : 0.0;
  }
  if (keep_per_path) r.per_path = std::move(h_all);
  return r;
}

}  // namespace svi
