#pragma once

#include "svi/galerkin.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>
#include <string>

namespace svi {

/// Coefficients of an s-stage stochastic partitioned Runge-Kutta method:
///
///   Q_i = q_k + dt sum_j a_ij dH_p(Q_j,P_j) + sum_m dW_m sum_j b_ij dh_p^m(Q_j,P_j)
///   P_i = p_k - dt sum_j ab_ij dH_q(Q_j,P_j) - sum_m dW_m sum_j bb_ij dh_q^m(Q_j,P_j)
///   q_{k+1} = q_k + dt sum_i alpha_i dH_p(Q_i,P_i) + sum_m dW_m sum_i beta_i dh_p^m(Q_i,P_i)
///   p_{k+1} = p_k - dt sum_i alpha_i dH_q(Q_i,P_i) - sum_m dW_m sum_i beta_i dh_q^m(Q_i,P_i)
template <typename Scalar>
struct SprkTableau {
  int stages = 0;
  MatrixX<Scalar> a, a_bar, b, b_bar;
  VectorX<Scalar> alpha, beta;
};

/// Largest violation of the four symplecticity identities
///   alpha_i ab_ij + alpha_j a_ji = alpha_i alpha_j
///   beta_i  ab_ij + alpha_j b_ji = beta_i  alpha_j
///   alpha_i bb_ij + beta_j  a_ji = alpha_i beta_j
///   beta_i  bb_ij + beta_j  b_ji = beta_i  beta_j
/// over all i, j. Zero (to roundoff) means the one-step map is symplectic.
template <typename Scalar>
Scalar check_symplectic(const SprkTableau<Scalar>& t) {
  Scalar worst = 0;
  for (int i = 0; i < t.stages; ++i)
    for (int j = 0; j < t.stages; ++j) {
      worst = std::max(worst, std::abs(t.alpha[i] * t.a_bar(i, j) + t.alpha[j] * t.a(j, i) -
                                       t.alpha[i] * t.alpha[j]));
      worst = std::max(worst, std::abs(t.beta[i] * t.a_bar(i, j) + t.alpha[j] * t.b(j, i) -
                                       t.beta[i] * t.alpha[j]));
      worst = std::max(worst, std::abs(t.alpha[i] * t.b_bar(i, j) + t.beta[j] * t.a(j, i) -
                                       t.alpha[i] * t.beta[j]));
      worst = std::max(worst, std::abs(t.beta[i] * t.b_bar(i, j) + t.beta[j] * t.b(j, i) -
                                       t.beta[i] * t.beta[j]));
    }
  return worst;
}

/// Convert a Galerkin scheme with r = s and a shared node set into its
/// equivalent SPRK tableau:
///   a_ij  = integral over [0, c_i] of the j-th cardinal polynomial,
///   ab_ij = alpha_j (alpha_i - a_ji) / alpha_i,
///   b_ij  = beta_j a_ij / alpha_j,
///   bb_ij = beta_j (alpha_i - a_ji) / alpha_i,
/// where alpha are the interpolatory weights of the drift nodes. Requires all
/// alpha_i nonzero.
template <typename Scalar>
SprkTableau<Scalar> galerkin_to_sprk(const GalerkinScheme<Scalar>& scheme) {
  const int s = scheme.basis.degree();
  const int r = scheme.drift_rule.size();
  if (r != s)
    throw ConfigError("galerkin_to_sprk: conversion requires r = s (got r = " +
                      std::to_string(r) + ", s = " + std::to_string(s) + ")");
  if (scheme.diffusion_rule.size() != r)
    throw ConfigError("galerkin_to_sprk: drift and diffusion rules must share the node set");
  const Scalar node_tol = Scalar(1e-12);
  for (int i = 0; i < r; ++i)
    if (std::abs(scheme.drift_rule.nodes[i] - scheme.diffusion_rule.nodes[i]) > node_tol)
      throw ConfigError("galerkin_to_sprk: drift and diffusion rules must share the node set");

  const auto& nodes = scheme.drift_rule.nodes;
  const auto interp = weights_from_nodes(nodes);
  for (int i = 0; i < s; ++i) {
    if (interp[i] == Scalar(0))
      throw ConfigError("galerkin_to_sprk: zero interpolatory weight");
    if (std::abs(interp[i] - scheme.drift_rule.weights[i]) > Scalar(1e-12))
      throw ConfigError("galerkin_to_sprk: drift weights are not interpolatory for the nodes");
  }

  SprkTableau<Scalar> t;
  t.stages = s;
  t.a.resize(s, s);
  t.a_bar.resize(s, s);
  t.b.resize(s, s);
  t.b_bar.resize(s, s);
  t.alpha.resize(s);
  t.beta.resize(s);
  for (int i = 0; i < s; ++i) {
    t.alpha[i] = interp[i];
    t.beta[i] = scheme.diffusion_rule.weights[i];
  }
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j) t.a(i, j) = cardinal_integral(nodes, j, nodes[i]);
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j) {
      t.a_bar(i, j) = t.alpha[j] * (t.alpha[i] - t.a(j, i)) / t.alpha[i];
      t.b(i, j) = t.beta[j] * t.a(i, j) / t.alpha[j];
      t.b_bar(i, j) = t.beta[j] * (t.alpha[i] - t.a(j, i)) / t.alpha[i];
    }
  return t;
}

template <typename Scalar>
struct SprkStepResult {
  PhaseState<Scalar> state;
  SolveStats stats;
};

/// One SPRK step: Newton-solve the 2sN stage system, then apply the explicit
/// updates. Solver behavior matches galerkin_step.
template <typename Scalar>
SprkStepResult<Scalar> sprk_step(const SprkTableau<Scalar>& t, const System<Scalar>& sys,
                                 const PhaseState<Scalar>& z_k, Scalar dt,
                                 const VectorX<Scalar>& dw, const SolverConfig& cfg = {}) {
  if (dw.size() != sys.channels)
    throw ArgumentError("sprk_step: dW must carry one increment per noise channel");
  const Eigen::Index n = z_k.dim();
  const int s = t.stages;

  auto stage_q = [&](const VectorX<Scalar>& x, int i) { return x.segment(i * n, n); };
  auto stage_p = [&](const VectorX<Scalar>& x, int i) { return x.segment((s + i) * n, n); };

  auto residual_fn = [&](const VectorX<Scalar>& x) {
    VectorX<Scalar> res((2 * s) * n);
    std::vector<VectorX<Scalar>> hp(s), hq(s);
    for (int j = 0; j < s; ++j) {
      hp[j] = sys.dH_p(stage_q(x, j), stage_p(x, j));
      hq[j] = sys.dH_q(stage_q(x, j), stage_p(x, j));
    }
    for (int i = 0; i < s; ++i) {
      VectorX<Scalar> rq = stage_q(x, i) - z_k.q;
      VectorX<Scalar> rp = stage_p(x, i) - z_k.p;
      for (int j = 0; j < s; ++j) {
        rq -= dt * t.a(i, j) * hp[j];
        rp += dt * t.a_bar(i, j) * hq[j];
      }
      for (int m = 0; m < sys.channels; ++m)
        for (int j = 0; j < s; ++j) {
          if (t.b(i, j) != Scalar(0))
            rq -= dw[m] * t.b(i, j) * sys.dh_p[m](stage_q(x, j), stage_p(x, j));
          if (t.b_bar(i, j) != Scalar(0))
            rp += dw[m] * t.b_bar(i, j) * sys.dh_q[m](stage_q(x, j), stage_p(x, j));
        }
      res.segment(i * n, n) = rq;
      res.segment((s + i) * n, n) = rp;
    }
    return res;
  };

  std::function<MatrixX<Scalar>(const VectorX<Scalar>&)> jac_fn;
  if (cfg.jacobian == JacobianMode::analytic_if_available && sys.has_hessians())
    jac_fn = [&](const VectorX<Scalar>& x) {
      MatrixX<Scalar> jac = MatrixX<Scalar>::Identity(2 * s * n, 2 * s * n);
      for (int j = 0; j < s; ++j) {
        const VectorX<Scalar> qj = stage_q(x, j);
        const VectorX<Scalar> pj = stage_p(x, j);
        const auto h2 = drift_hessians(sys, qj, pj);
        MatrixX<Scalar> hp_q = h2.qp.transpose(), hp_p = h2.pp;  // derivatives of dH_p
        MatrixX<Scalar> hq_q = h2.qq, hq_p = h2.qp;              // derivatives of dH_q
        for (int i = 0; i < s; ++i) {
          jac.block(i * n, j * n, n, n) -= dt * t.a(i, j) * hp_q;
          jac.block(i * n, (s + j) * n, n, n) -= dt * t.a(i, j) * hp_p;
          jac.block((s + i) * n, j * n, n, n) += dt * t.a_bar(i, j) * hq_q;
          jac.block((s + i) * n, (s + j) * n, n, n) += dt * t.a_bar(i, j) * hq_p;
        }
        for (int m = 0; m < sys.channels; ++m) {
          const auto hm = hessian_blocks(sys, m, qj, pj);
          for (int i = 0; i < s; ++i) {
            if (t.b(i, j) != Scalar(0)) {
              jac.block(i * n, j * n, n, n) -= dw[m] * t.b(i, j) * hm.qp.transpose();
              jac.block(i * n, (s + j) * n, n, n) -= dw[m] * t.b(i, j) * hm.pp;
            }
            if (t.b_bar(i, j) != Scalar(0)) {
              jac.block((s + i) * n, j * n, n, n) += dw[m] * t.b_bar(i, j) * hm.qq;
              jac.block((s + i) * n, (s + j) * n, n, n) += dw[m] * t.b_bar(i, j) * hm.qp;
            }
          }
        }
      }
      return jac;
    };

  VectorX<Scalar> start(2 * s * n);
  for (int i = 0; i < s; ++i) {
    start.segment(i * n, n) = z_k.q;
    start.segment((s + i) * n, n) = z_k.p;
  }

  SprkStepResult<Scalar> result;
  const VectorX<Scalar> x = newton_solve<Scalar>(residual_fn, start, cfg, &result.stats, jac_fn);

  VectorX<Scalar> q1 = z_k.q, p1 = z_k.p;
  for (int i = 0; i < s; ++i) {
    const VectorX<Scalar> qi = stage_q(x, i);
    const VectorX<Scalar> pi = stage_p(x, i);
    q1 += dt * t.alpha[i] * sys.dH_p(qi, pi);
    p1 -= dt * t.alpha[i] * sys.dH_q(qi, pi);
    for (int m = 0; m < sys.channels; ++m) {
      if (t.beta[i] != Scalar(0)) {
        q1 += dw[m] * t.beta[i] * sys.dh_p[m](qi, pi);
        p1 -= dw[m] * t.beta[i] * sys.dh_q[m](qi, pi);
      }
    }
  }
  result.state = PhaseState<Scalar>(std::move(q1), std::move(p1));
  return result;
}

/// Coefficients of the extended SPRK family for separable H = T(p) + U(q) and
/// h = h(q), with the diffusion discretized through both dW and dZ/dt:
///
///   Q_i = q_k + dt sum_j a_ij T'(P_j)
///   P_i = p_k - dt sum_j ab_ij U'(Q_j) - sum_j (bb_ij dW + lb_ij dZ/dt) h'(Q_j)
///   q_{k+1} = q_k + dt sum_i alpha_i T'(P_i)
///   p_{k+1} = p_k - dt sum_i alphab_i U'(Q_i) - sum_i (betab_i dW + gammab_i dZ/dt) h'(Q_i)
template <typename Scalar>
struct Sprk32Tableau {
  int stages = 0;
  MatrixX<Scalar> a, a_bar, b_bar, lambda_bar;
  VectorX<Scalar> alpha, alpha_bar, beta_bar, gamma_bar;
};

/// The two-stage coefficient set of Milstein type with mean-square order 3/2.
template <typename Scalar = double>
Sprk32Tableau<Scalar> milstein32_tableau() {
  Sprk32Tableau<Scalar> t;
  t.stages = 2;
  t.alpha.resize(2);
  t.alpha_bar.resize(2);
  t.beta_bar.resize(2);
  t.gamma_bar.resize(2);
  t.alpha << Scalar(2) / 3, Scalar(1) / 3;
  t.alpha_bar << Scalar(1) / 4, Scalar(3) / 4;
  t.beta_bar << Scalar(-1) / 2, Scalar(3) / 2;
  t.gamma_bar << Scalar(3) / 2, Scalar(-3) / 2;
  t.a.resize(2, 2);
  t.a_bar.resize(2, 2);
  t.b_bar.resize(2, 2);
  t.lambda_bar.resize(2, 2);
  t.a << 0, 0, Scalar(2) / 3, 0;
  t.a_bar << Scalar(1) / 4, 0, Scalar(1) / 4, Scalar(3) / 4;
  t.b_bar << Scalar(-1) / 2, 0, Scalar(-1) / 2, Scalar(3) / 2;
  t.lambda_bar << Scalar(3) / 2, 0, Scalar(3) / 2, Scalar(-3) / 2;
  return t;
}

namespace detail {

template <typename Scalar>
bool sprk32_is_explicit(const Sprk32Tableau<Scalar>& t) {
  for (int i = 0; i < t.stages; ++i)
    for (int j = i; j < t.stages; ++j)
      if (t.a(i, j) != Scalar(0)) return false;
  for (int i = 0; i < t.stages; ++i)
    for (int j = i + 1; j < t.stages; ++j)
      if (t.a_bar(i, j) != Scalar(0) || t.b_bar(i, j) != Scalar(0) ||
          t.lambda_bar(i, j) != Scalar(0))
        return false;
  return true;
}

}  // namespace detail

/// One step of the order-3/2 family. Requires a separable system with
/// h = h(q), a single noise channel, and an increment pair carrying dZ.
/// Strictly-lower a with lower-triangular ab/bb/lb makes the sweep explicit
/// (zero Newton iterations); other tableaus fall back to a Newton solve.
template <typename Scalar>
SprkStepResult<Scalar> sprk32_step(const Sprk32Tableau<Scalar>& t, const System<Scalar>& sys,
                                   const PhaseState<Scalar>& z_k, Scalar dt,
                                   const IncrementPair<Scalar>& inc, const SolverConfig& cfg = {}) {
  if (sys.channels != 1)
    throw ConfigError("sprk32_step: exactly one noise channel is supported");
  if (!sys.separable || !sys.h_independent_of_p)
    throw ConfigError("sprk32_step: system must be separable with h = h(q)");
  if (!inc.has_dz) throw ConfigError("sprk32_step: increment pair must carry dZ");

  const Eigen::Index n = z_k.dim();
  const int s = t.stages;
  const Scalar zw = inc.dz / dt;

  // Separable evaluators: T'(P) and U'(Q), h'(Q) take the opposite variable
  // from the current state (its value cannot enter).
  auto tp = [&](const VectorX<Scalar>& p) { return sys.dH_p(z_k.q, p); };
  auto uq = [&](const VectorX<Scalar>& q) { return sys.dH_q(q, z_k.p); };
  auto hq = [&](const VectorX<Scalar>& q) { return sys.dh_q[0](q, z_k.p); };

  std::vector<VectorX<Scalar>> Q(s), P(s);
  SprkStepResult<Scalar> result;

  if (detail::sprk32_is_explicit(t)) {
    std::vector<VectorX<Scalar>> hq_cache(s), tp_cache(s);
    for (int i = 0; i < s; ++i) {
      Q[i] = z_k.q;
      for (int j = 0; j < i; ++j)
        if (t.a(i, j) != Scalar(0)) Q[i] += dt * t.a(i, j) * tp_cache[j];
      hq_cache[i] = hq(Q[i]);
      P[i] = z_k.p;
      for (int j = 0; j <= i; ++j) {
        if (t.a_bar(i, j) != Scalar(0)) P[i] -= dt * t.a_bar(i, j) * uq(Q[j]);
        const Scalar w = t.b_bar(i, j) * inc.dw + t.lambda_bar(i, j) * zw;
        if (w != Scalar(0)) P[i] -= w * hq_cache[j];
      }
      tp_cache[i] = tp(P[i]);
    }
    result.stats.converged = true;
    result.stats.iterations = 0;
    result.stats.residual_norm = 0;
  } else {
    auto residual_fn = [&](const VectorX<Scalar>& x) {
      VectorX<Scalar> res(2 * s * n);
      for (int i = 0; i < s; ++i) {
        VectorX<Scalar> rq = x.segment(i * n, n) - z_k.q;
        VectorX<Scalar> rp = x.segment((s + i) * n, n) - z_k.p;
        for (int j = 0; j < s; ++j) {
          if (t.a(i, j) != Scalar(0)) rq -= dt * t.a(i, j) * tp(x.segment((s + j) * n, n));
          if (t.a_bar(i, j) != Scalar(0)) rp += dt * t.a_bar(i, j) * uq(x.segment(j * n, n));
          const Scalar w = t.b_bar(i, j) * inc.dw + t.lambda_bar(i, j) * zw;
          if (w != Scalar(0)) rp += w * hq(x.segment(j * n, n));
        }
        res.segment(i * n, n) = rq;
        res.segment((s + i) * n, n) = rp;
      }
      return res;
    };
    VectorX<Scalar> start(2 * s * n);
    for (int i = 0; i < s; ++i) {
      start.segment(i * n, n) = z_k.q;
      start.segment((s + i) * n, n) = z_k.p;
    }
    const VectorX<Scalar> x = newton_solve<Scalar>(residual_fn, start, cfg, &result.stats);
    for (int i = 0; i < s; ++i) {
      Q[i] = x.segment(i * n, n);
      P[i] = x.segment((s + i) * n, n);
    }
  }

  VectorX<Scalar> q1 = z_k.q, p1 = z_k.p;
  for (int i = 0; i < s; ++i) {
    q1 += dt * t.alpha[i] * tp(P[i]);
    p1 -= dt * t.alpha_bar[i] * uq(Q[i]);
    const Scalar w = t.beta_bar[i] * inc.dw + t.gamma_bar[i] * zw;
    if (w != Scalar(0)) p1 -= w * hq(Q[i]);
  }
  result.state = PhaseState<Scalar>(std::move(q1), std::move(p1));
  return result;
}

namespace detail {

template <typename Scalar>
void print_matrix(std::ostringstream& out, const std::string& label, const MatrixX<Scalar>& m) {
  out << "  " << label << " =\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out << "    ";
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      out << std::setw(12) << std::setprecision(6) << m(i, j);
    out << "\n";
  }
}

template <typename Scalar>
void print_vector(std::ostringstream& out, const std::string& label, const VectorX<Scalar>& v) {
  out << "  " << label << " =    ";
  for (Eigen::Index j = 0; j < v.size(); ++j)
    out << std::setw(12) << std::setprecision(6) << v[j];
  out << "\n";
}

}  // namespace detail

template <typename Scalar>
std::string to_string(const SprkTableau<Scalar>& t) {
  std::ostringstream out;
  out << "SPRK tableau, " << t.stages << " stage(s)\n";
  detail::print_matrix(out, "a   ", t.a);
  detail::print_matrix(out, "abar", t.a_bar);
  detail::print_matrix(out, "b   ", t.b);
  detail::print_matrix(out, "bbar", t.b_bar);
  detail::print_vector(out, "alpha", t.alpha);
  detail::print_vector(out, "beta ", t.beta);
  out << "  symplectic-condition violation: " << std::setprecision(3) << std::scientific
      << check_symplectic(t) << "\n";
  return out.str();
}

template <typename Scalar>
std::string to_string(const Sprk32Tableau<Scalar>& t) {
  std::ostringstream out;
  out << "order-3/2 SPRK tableau, " << t.stages << " stage(s)\n";
  detail::print_matrix(out, "a     ", t.a);
  detail::print_matrix(out, "abar  ", t.a_bar);
  detail::print_matrix(out, "bbar  ", t.b_bar);
  detail::print_matrix(out, "lbar  ", t.lambda_bar);
  detail::print_vector(out, "alpha ", t.alpha);
  detail::print_vector(out, "alphab", t.alpha_bar);
  detail::print_vector(out, "betab ", t.beta_bar);
  detail::print_vector(out, "gammab", t.gamma_bar);
  return out.str();
}

using SprkTableaud = SprkTableau<double>;
using Sprk32Tableaud = Sprk32Tableau<double>;

}  // namespace svi
