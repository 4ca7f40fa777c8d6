#pragma once

#include "svi/newton.hpp"
#include "svi/quadrature.hpp"
#include "svi/system.hpp"

#include <cmath>
#include <optional>
#include <vector>

namespace svi {

/// One-step stochastic Galerkin variational integrator.
///
/// The position is restricted to a degree-s polynomial q_d through the control
/// values q^0..q^s (q^0 = q_k), the action integral is approximated with the
/// drift rule (c_i, alpha_i) and the noise integral with the diffusion rule
/// (c~_j, beta_j). Momentum stages P_i live at the drift nodes. One step
/// solves, for q^1..q^s and P_1..P_r:
///
///   p_k + sum_i alpha_i [ P_i l0'(c_i) - dt dH_q(Q_i,P_i) l0(c_i) ]
///       - sum_m dW_m sum_j beta_j dh_q^m(Q~_j) l0(c~_j)            = 0
///   sum_i alpha_i [ P_i lmu'(c_i) - dt dH_q(Q_i,P_i) lmu(c_i) ]
///       - sum_m dW_m sum_j beta_j dh_q^m(Q~_j) lmu(c~_j)           = 0   (mu = 1..s-1)
///   alpha_i [ sum_mu q^mu lmu'(c_i) - dt dH_p(Q_i,P_i) ]
///       - sum_m dW_m beta_at(c_i) dh_p^m(Q_i,P_i)                  = 0   (i = 1..r)
///
/// with Q_i = q_d(c_i), Q~_j = q_d(c~_j); afterwards q_{k+1} = q^s and
/// p_{k+1} follows from the explicit momentum update with l_s in place of
/// l_mu. The stage equations above are the dt-scaled form of the
/// extremality conditions of the discrete Hamiltonian, so a zero residual
/// is equivalent to an exact stage solution.
///
/// Diffusion nodes without a matching drift node carry no momentum stage;
/// such schemes (and any scheme constructed from the momentum-free reduced
/// family) require h_m = h_m(q) and set `requires_h_independent_of_p`.
template <typename Scalar>
struct GalerkinScheme {
  LagrangeBasis<Scalar> basis;
  QuadratureRule<Scalar> drift_rule;
  QuadratureRule<Scalar> diffusion_rule;
  bool requires_h_independent_of_p = false;

  int degree() const { return basis.degree(); }
  int drift_stages() const { return drift_rule.size(); }
};

/// Unknowns of one Galerkin step: interior/endpoint position controls
/// q^1..q^s and momentum stages P_1..P_r at the drift nodes.
template <typename Scalar>
struct StageVector {
  std::vector<VectorX<Scalar>> q_controls;
  std::vector<VectorX<Scalar>> p_stages;

  VectorX<Scalar> pack() const {
    Eigen::Index n = 0;
    for (const auto& v : q_controls) n += v.size();
    for (const auto& v : p_stages) n += v.size();
    VectorX<Scalar> x(n);
    Eigen::Index at = 0;
    for (const auto& v : q_controls) {
      x.segment(at, v.size()) = v;
      at += v.size();
    }
    for (const auto& v : p_stages) {
      x.segment(at, v.size()) = v;
      at += v.size();
    }
    return x;
  }

  static StageVector unpack(const VectorX<Scalar>& x, int s, int r, Eigen::Index dim) {
    if (x.size() != (s + r) * dim) throw ArgumentError("StageVector::unpack: size mismatch");
    StageVector sv;
    sv.q_controls.resize(s);
    sv.p_stages.resize(r);
    Eigen::Index at = 0;
    for (int mu = 0; mu < s; ++mu, at += dim) sv.q_controls[mu] = x.segment(at, dim);
    for (int i = 0; i < r; ++i, at += dim) sv.p_stages[i] = x.segment(at, dim);
    return sv;
  }
};

namespace detail {

/// Basis values cached at the quadrature nodes of a scheme.
template <typename Scalar>
struct GalerkinTables {
  int s = 0;      // polynomial degree
  int r = 0;      // drift stages
  int rt = 0;     // diffusion nodes
  MatrixX<Scalar> drift_l, drift_ld;  // (r x s+1): l_mu, l_mu' at drift nodes
  MatrixX<Scalar> diff_l;             // (rt x s+1): l_mu at diffusion nodes
  std::vector<int> diff_drift_index;  // drift node matching each diffusion node, -1 if none
  std::vector<Scalar> beta_at_drift;  // diffusion weight co-located with each drift node
  bool has_free_diffusion_node = false;

  explicit GalerkinTables(const GalerkinScheme<Scalar>& scheme) {
    s = scheme.basis.degree();
    r = scheme.drift_rule.size();
    rt = scheme.diffusion_rule.size();
    drift_l.resize(r, s + 1);
    drift_ld.resize(r, s + 1);
    diff_l.resize(rt, s + 1);
    for (int i = 0; i < r; ++i)
      for (int mu = 0; mu <= s; ++mu) {
        drift_l(i, mu) = scheme.basis.eval(mu, scheme.drift_rule.nodes[i]);
        drift_ld(i, mu) = scheme.basis.deriv(mu, scheme.drift_rule.nodes[i]);
      }
    diff_drift_index.assign(rt, -1);
    beta_at_drift.assign(r, Scalar(0));
    const Scalar match_tol = Scalar(1e-12);
    for (int j = 0; j < rt; ++j) {
      for (int mu = 0; mu <= s; ++mu)
        diff_l(j, mu) = scheme.basis.eval(mu, scheme.diffusion_rule.nodes[j]);
      for (int i = 0; i < r; ++i)
        if (std::abs(scheme.diffusion_rule.nodes[j] - scheme.drift_rule.nodes[i]) <= match_tol) {
          diff_drift_index[j] = i;
          beta_at_drift[i] = scheme.diffusion_rule.weights[j];
          break;
        }
      if (diff_drift_index[j] < 0) has_free_diffusion_node = true;
    }
  }
};

template <typename Scalar>
void check_compatible(const GalerkinScheme<Scalar>& scheme, const System<Scalar>& sys,
                      const GalerkinTables<Scalar>& tables, const VectorX<Scalar>& dw) {
  if (dw.size() != sys.channels)
    throw ArgumentError("galerkin: dW must carry one increment per noise channel");
  if ((scheme.requires_h_independent_of_p || tables.has_free_diffusion_node) &&
      sys.channels > 0 && !sys.h_independent_of_p)
    throw ConfigError("galerkin: scheme requires h = h(q) but system says otherwise");
}

}  // namespace detail

/// Residual of the stage system; zero iff the stages solve the step exactly.
/// Layout: s momentum-balance blocks (the p_k block first), then the r
/// dt-scaled position-slope blocks, each of length N.
template <typename Scalar>
VectorX<Scalar> galerkin_residual(const GalerkinScheme<Scalar>& scheme, const System<Scalar>& sys,
                                  const PhaseState<Scalar>& z_k, const StageVector<Scalar>& stages,
                                  Scalar dt, const VectorX<Scalar>& dw) {
  const detail::GalerkinTables<Scalar> tables(scheme);
  detail::check_compatible(scheme, sys, tables, dw);
  const Eigen::Index n = z_k.dim();
  if (static_cast<int>(stages.q_controls.size()) != tables.s ||
      static_cast<int>(stages.p_stages.size()) != tables.r)
    throw ArgumentError("galerkin_residual: stage count mismatch");

  auto q_at = [&](const MatrixX<Scalar>& l, int row) {
    VectorX<Scalar> q = l(row, 0) * z_k.q;
    for (int mu = 1; mu <= tables.s; ++mu) q += l(row, mu) * stages.q_controls[mu - 1];
    return q;
  };

  VectorX<Scalar> res = VectorX<Scalar>::Zero((tables.s + tables.r) * n);
  res.segment(0, n) = z_k.p;

  for (int i = 0; i < tables.r; ++i) {
    const VectorX<Scalar> qi = q_at(tables.drift_l, i);
    const VectorX<Scalar>& pi = stages.p_stages[i];
    const VectorX<Scalar> hq = sys.dH_q(qi, pi);
    const Scalar alpha = scheme.drift_rule.weights[i];
    for (int mu = 0; mu < tables.s; ++mu)
      res.segment(mu * n, n) +=
          alpha * (tables.drift_ld(i, mu) * pi - dt * tables.drift_l(i, mu) * hq);

    // dt-scaled slope equation at drift node i.
    VectorX<Scalar> slope = VectorX<Scalar>::Zero(n);
    slope += tables.drift_ld(i, 0) * z_k.q;
    for (int mu = 1; mu <= tables.s; ++mu)
      slope += tables.drift_ld(i, mu) * stages.q_controls[mu - 1];
    VectorX<Scalar> block = alpha * (slope - dt * sys.dH_p(qi, pi));
    if (tables.beta_at_drift[i] != Scalar(0))
      for (int m = 0; m < sys.channels; ++m)
        block -= dw[m] * tables.beta_at_drift[i] * sys.dh_p[m](qi, pi);
    res.segment((tables.s + i) * n, n) = block;
  }

  for (int j = 0; j < tables.rt; ++j) {
    const VectorX<Scalar> qj = q_at(tables.diff_l, j);
    const VectorX<Scalar>& pj =
        tables.diff_drift_index[j] >= 0 ? stages.p_stages[tables.diff_drift_index[j]] : z_k.p;
    const Scalar beta = scheme.diffusion_rule.weights[j];
    for (int m = 0; m < sys.channels; ++m) {
      const VectorX<Scalar> hq = sys.dh_q[m](qj, pj);
      for (int mu = 0; mu < tables.s; ++mu)
        res.segment(mu * n, n) -= dw[m] * beta * tables.diff_l(j, mu) * hq;
    }
  }
  return res;
}

template <typename Scalar>
struct GalerkinStepResult {
  PhaseState<Scalar> state;
  StageVector<Scalar> stages;
  SolveStats stats;
};

namespace detail {

template <typename Scalar>
MatrixX<Scalar> galerkin_jacobian(const GalerkinScheme<Scalar>& scheme, const System<Scalar>& sys,
                                  const PhaseState<Scalar>& z_k,
                                  const StageVector<Scalar>& stages, Scalar dt,
                                  const VectorX<Scalar>& dw,
                                  const GalerkinTables<Scalar>& tables) {
  const Eigen::Index n = z_k.dim();
  const int s = tables.s, r = tables.r;
  MatrixX<Scalar> jac = MatrixX<Scalar>::Zero((s + r) * n, (s + r) * n);

  auto q_at = [&](const MatrixX<Scalar>& l, int row) {
    VectorX<Scalar> q = l(row, 0) * z_k.q;
    for (int mu = 1; mu <= s; ++mu) q += l(row, mu) * stages.q_controls[mu - 1];
    return q;
  };
  const MatrixX<Scalar> eye = MatrixX<Scalar>::Identity(n, n);

  for (int i = 0; i < r; ++i) {
    const VectorX<Scalar> qi = q_at(tables.drift_l, i);
    const VectorX<Scalar>& pi = stages.p_stages[i];
    const auto h2 = drift_hessians(sys, qi, pi);
    const Scalar alpha = scheme.drift_rule.weights[i];

    MatrixX<Scalar> dslope_dp = -alpha * dt * h2.pp;  // slope block wrt P_i
    MatrixX<Scalar> hmix_qp = MatrixX<Scalar>::Zero(n, n);
    if (tables.beta_at_drift[i] != Scalar(0)) {
      for (int m = 0; m < sys.channels; ++m) {
        const auto hm = hessian_blocks(sys, m, qi, pi);
        dslope_dp -= dw[m] * tables.beta_at_drift[i] * hm.pp;
        hmix_qp += dw[m] * tables.beta_at_drift[i] * hm.qp;
      }
    }
    jac.block((s + i) * n, (s + i) * n, n, n) = dslope_dp;

    for (int nu = 1; nu <= s; ++nu) {
      jac.block((s + i) * n, (nu - 1) * n, n, n) =
          alpha * (tables.drift_ld(i, nu) * eye - dt * tables.drift_l(i, nu) * h2.qp.transpose()) -
          tables.drift_l(i, nu) * hmix_qp.transpose();
      for (int mu = 0; mu < s; ++mu)
        jac.block(mu * n, (nu - 1) * n, n, n) -=
            alpha * dt * tables.drift_l(i, mu) * tables.drift_l(i, nu) * h2.qq;
    }
    for (int mu = 0; mu < s; ++mu) {
      jac.block(mu * n, (s + i) * n, n, n) +=
          alpha * (tables.drift_ld(i, mu) * eye - dt * tables.drift_l(i, mu) * h2.qp);
    }
  }

  for (int j = 0; j < tables.rt; ++j) {
    const VectorX<Scalar> qj = q_at(tables.diff_l, j);
    const int drift_i = tables.diff_drift_index[j];
    const VectorX<Scalar>& pj = drift_i >= 0 ? stages.p_stages[drift_i] : z_k.p;
    const Scalar beta = scheme.diffusion_rule.weights[j];
    for (int m = 0; m < sys.channels; ++m) {
      const auto hm = hessian_blocks(sys, m, qj, pj);
      for (int mu = 0; mu < s; ++mu) {
        for (int nu = 1; nu <= s; ++nu)
          jac.block(mu * n, (nu - 1) * n, n, n) -=
              dw[m] * beta * tables.diff_l(j, mu) * tables.diff_l(j, nu) * hm.qq;
        if (drift_i >= 0)
          jac.block(mu * n, (s + drift_i) * n, n, n) -=
              dw[m] * beta * tables.diff_l(j, mu) * hm.qp;
      }
    }
  }
  return jac;
}

}  // namespace detail

/// Advance one step. Solves the stage system by Newton iteration (finite
/// difference Jacobian by default, analytic assembly from the system's
/// Hessians when requested and available), then applies the explicit updates
/// q_{k+1} = q^s and the momentum quadrature for p_{k+1}.
template <typename Scalar>
GalerkinStepResult<Scalar> galerkin_step(
    const GalerkinScheme<Scalar>& scheme, const System<Scalar>& sys, const PhaseState<Scalar>& z_k,
    Scalar dt, const VectorX<Scalar>& dw, const SolverConfig& cfg = {},
    const std::optional<StageVector<Scalar>>& warm_start = std::nullopt) {
  const detail::GalerkinTables<Scalar> tables(scheme);
  detail::check_compatible(scheme, sys, tables, dw);
  const Eigen::Index n = z_k.dim();
  if (n != sys.dim) throw ArgumentError("galerkin_step: state/system dimension mismatch");

  StageVector<Scalar> start;
  if (warm_start) {
    start = *warm_start;
  } else {
    start.q_controls.assign(tables.s, z_k.q);
    start.p_stages.assign(tables.r, z_k.p);
  }

  auto residual_fn = [&](const VectorX<Scalar>& x) {
    return galerkin_residual(scheme, sys, z_k,
                             StageVector<Scalar>::unpack(x, tables.s, tables.r, n), dt, dw);
  };
  std::function<MatrixX<Scalar>(const VectorX<Scalar>&)> jac_fn;
  if (cfg.jacobian == JacobianMode::analytic_if_available && sys.has_hessians())
    jac_fn = [&](const VectorX<Scalar>& x) {
      return detail::galerkin_jacobian(scheme, sys, z_k,
                                       StageVector<Scalar>::unpack(x, tables.s, tables.r, n), dt,
                                       dw, tables);
    };

  GalerkinStepResult<Scalar> result;
  const VectorX<Scalar> solution =
      newton_solve<Scalar>(residual_fn, start.pack(), cfg, &result.stats, jac_fn);
  result.stages = StageVector<Scalar>::unpack(solution, tables.s, tables.r, n);

  // Explicit updates: q_{k+1} = q^s, momentum quadrature with the l_s row.
  VectorX<Scalar> p_next = VectorX<Scalar>::Zero(n);
  auto q_at = [&](const MatrixX<Scalar>& l, int row) {
    VectorX<Scalar> q = l(row, 0) * z_k.q;
    for (int mu = 1; mu <= tables.s; ++mu) q += l(row, mu) * result.stages.q_controls[mu - 1];
    return q;
  };
  for (int i = 0; i < tables.r; ++i) {
    const VectorX<Scalar> qi = q_at(tables.drift_l, i);
    const VectorX<Scalar>& pi = result.stages.p_stages[i];
    p_next += scheme.drift_rule.weights[i] *
              (tables.drift_ld(i, tables.s) * pi -
               dt * tables.drift_l(i, tables.s) * sys.dH_q(qi, pi));
  }
  for (int j = 0; j < tables.rt; ++j) {
    if (tables.diff_l(j, tables.s) == Scalar(0)) continue;
    const VectorX<Scalar> qj = q_at(tables.diff_l, j);
    const VectorX<Scalar>& pj =
        tables.diff_drift_index[j] >= 0 ? result.stages.p_stages[tables.diff_drift_index[j]]
                                        : z_k.p;
    for (int m = 0; m < sys.channels; ++m)
      p_next -= dw[m] * scheme.diffusion_rule.weights[j] * tables.diff_l(j, tables.s) *
                sys.dh_q[m](qj, pj);
  }

  result.state = PhaseState<Scalar>(result.stages.q_controls[tables.s - 1], p_next);
  return result;
}

using GalerkinSchemed = GalerkinScheme<double>;
using StageVectord = StageVector<double>;

}  // namespace svi
