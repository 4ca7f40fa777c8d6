#pragma once

#include "svi/phase.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <optional>

namespace svi {

enum class JacobianMode {
  finite_difference,
  analytic_if_available,
};

/// Newton iteration controls for the implicit stage solves. The residual is
/// measured in the max norm. When `truncation_retry_bound` is set, trajectory
/// drivers retry a failed step once with the Wiener increments clamped to
/// [-bound, bound]; by default a failed solve is an error.
struct SolverConfig {
  double tol = 1e-12;
  int max_iter = 50;
  JacobianMode jacobian = JacobianMode::finite_difference;
  double fd_step = 1e-7;
  std::optional<double> truncation_retry_bound;
};

struct SolveStats {
  int iterations = 0;
  double residual_norm = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
};

/// Newton failed to reach the residual tolerance; carries the last residual so
/// callers can decide on a retry (e.g. with truncated increments).
class SolveError : public std::runtime_error {
 public:
  SolveError(const std::string& what, SolveStats stats)
      : std::runtime_error(what + " (residual " + std::to_string(stats.residual_norm) + " after " +
                           std::to_string(stats.iterations) + " iterations)"),
        stats_(stats) {}
  const SolveStats& stats() const { return stats_; }

 private:
  SolveStats stats_;
};

namespace detail {

template <typename Scalar, typename F>
MatrixX<Scalar> fd_jacobian(const F& f, VectorX<Scalar> x, Scalar step) {
  const Eigen::Index n = x.size();
  MatrixX<Scalar> jac(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Scalar saved = x[j];
    const Scalar h = step * (Scalar(1) + std::abs(saved));
    x[j] = saved + h;
    const VectorX<Scalar> fp = f(x);
    x[j] = saved - h;
    const VectorX<Scalar> fm = f(x);
    x[j] = saved;
    jac.col(j) = (fp - fm) / (2 * h);
  }
  return jac;
}

}  // namespace detail

/// Solve F(x) = 0 starting from x0. `jacobian` may be empty, in which case a
/// central-difference Jacobian is used. Throws SolveError when max_iter is
/// exhausted without meeting the tolerance.
template <typename Scalar>
VectorX<Scalar> newton_solve(
    const std::function<VectorX<Scalar>(const VectorX<Scalar>&)>& residual,
    VectorX<Scalar> x, const SolverConfig& cfg, SolveStats* stats_out = nullptr,
    const std::function<MatrixX<Scalar>(const VectorX<Scalar>&)>& jacobian = nullptr) {
  if (cfg.max_iter < 1 || !(cfg.tol > 0)) throw ArgumentError("newton_solve: bad solver config");

  SolveStats stats;
  VectorX<Scalar> r = residual(x);
  stats.residual_norm = r.template lpNorm<Eigen::Infinity>();

  while (!(stats.residual_norm <= cfg.tol)) {
    if (stats.iterations >= cfg.max_iter) {
      if (stats_out) *stats_out = stats;
      throw SolveError("newton_solve: no convergence", stats);
    }
    const MatrixX<Scalar> jac = jacobian
                                    ? jacobian(x)
                                    : detail::fd_jacobian<Scalar>(residual, x, Scalar(cfg.fd_step));
    VectorX<Scalar> dx;
    if (x.size() == 1) {
      if (jac(0, 0) == Scalar(0)) {
        if (stats_out) *stats_out = stats;
        throw SolveError("newton_solve: singular Jacobian", stats);
      }
      dx = -r / jac(0, 0);
    } else {
      dx = jac.partialPivLu().solve(-r);
    }
    if (!all_finite(dx)) {
      if (stats_out) *stats_out = stats;
      throw SolveError("newton_solve: non-finite Newton update", stats);
    }
    x += dx;
    r = residual(x);
    stats.residual_norm = r.template lpNorm<Eigen::Infinity>();
    ++stats.iterations;
  }

  stats.converged = true;
  if (stats_out) *stats_out = stats;
  return x;
}

}  // namespace svi
