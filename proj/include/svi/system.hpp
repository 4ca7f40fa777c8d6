#pragma once

#include "svi/phase.hpp"

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace svi {

/// Hessian blocks of a scalar function f(q,p): qq(a,b) = d2f/dq_a dq_b,
/// qp(a,b) = d2f/dq_a dp_b, pp(a,b) = d2f/dp_a dp_b.
template <typename Scalar>
struct HessianBlocks {
  using Fn = std::function<MatrixX<Scalar>(const VectorX<Scalar>&, const VectorX<Scalar>&)>;
  Fn qq, qp, pp;
};

/// Stochastic Hamiltonian system on R^N x R^N: drift Hamiltonian H and one
/// diffusion Hamiltonian h_m per independent noise channel m = 0..M-1.
///
/// Evaluators must be pure functions; the library shares a System across
/// worker threads without synchronization.
template <typename Scalar>
struct System {
  using ScalarFn = std::function<Scalar(const VectorX<Scalar>&, const VectorX<Scalar>&)>;
  using VectorFn = std::function<VectorX<Scalar>(const VectorX<Scalar>&, const VectorX<Scalar>&)>;

  int dim = 0;
  int channels = 0;

  ScalarFn H;
  VectorFn dH_q, dH_p;
  std::vector<ScalarFn> h;
  std::vector<VectorFn> dh_q, dh_p;

  std::optional<HessianBlocks<Scalar>> d2H;
  std::vector<std::optional<HessianBlocks<Scalar>>> d2h;

  /// H = T0(p) + U0(q) and h_m = T_m(p) + U_m(q) for every channel.
  bool separable = false;
  /// Every dh_p[m] vanishes identically (h_m = h_m(q)).
  bool h_independent_of_p = false;
  /// Every dh_q[m] is constant and dh_p[m] vanishes (additive noise).
  bool additive_noise = false;

  std::string name = "custom";

  bool has_hessians() const {
    if (!d2H) return false;
    for (const auto& d : d2h)
      if (!d) return false;
    return true;
  }
};

namespace detail {

/// Central-difference gradient of a scalar evaluator in its q (axis=0) or
/// p (axis=1) argument.
template <typename Scalar, typename F>
VectorX<Scalar> fd_gradient(const F& f, const VectorX<Scalar>& q, const VectorX<Scalar>& p,
                            int axis, Scalar step) {
  VectorX<Scalar> g(axis == 0 ? q.size() : p.size());
  VectorX<Scalar> qa = q, pa = p;
  auto& arg = axis == 0 ? qa : pa;
  for (Eigen::Index j = 0; j < g.size(); ++j) {
    const Scalar saved = arg[j];
    arg[j] = saved + step;
    const Scalar fp = f(qa, pa);
    arg[j] = saved - step;
    const Scalar fm = f(qa, pa);
    arg[j] = saved;
    g[j] = (fp - fm) / (2 * step);
  }
  return g;
}

/// Central-difference Jacobian of a vector evaluator in its q/p argument;
/// column b holds d(f)/d(arg_b).
template <typename Scalar, typename F>
MatrixX<Scalar> fd_jacobian_arg(const F& f, const VectorX<Scalar>& q, const VectorX<Scalar>& p,
                                int axis, Scalar step) {
  VectorX<Scalar> qa = q, pa = p;
  auto& arg = axis == 0 ? qa : pa;
  MatrixX<Scalar> jac(q.size(), arg.size());
  for (Eigen::Index b = 0; b < arg.size(); ++b) {
    const Scalar saved = arg[b];
    arg[b] = saved + step;
    const VectorX<Scalar> fp = f(qa, pa);
    arg[b] = saved - step;
    const VectorX<Scalar> fm = f(qa, pa);
    arg[b] = saved;
    jac.col(b) = (fp - fm) / (2 * step);
  }
  return jac;
}

template <typename F>
auto guarded(const std::string& evaluator, const F& f) -> decltype(f()) {
  try {
    return f();
  } catch (const EvaluatorError&) {
    throw;
  } catch (const std::exception& e) {
    throw EvaluatorError(evaluator, e.what());
  }
}

}  // namespace detail

/// Hessian blocks of channel m, analytic when supplied, otherwise central
/// finite differences of the gradients with the given step.
template <typename Scalar>
struct ChannelHessians {
  MatrixX<Scalar> qq, qp, pp;
};

template <typename Scalar>
ChannelHessians<Scalar> hessian_blocks(const System<Scalar>& sys, int channel,
                                       const VectorX<Scalar>& q, const VectorX<Scalar>& p,
                                       bool allow_fd = true, Scalar fd_step = Scalar(1e-5)) {
  if (channel < 0 || channel >= sys.channels)
    throw ArgumentError("hessian_blocks: channel out of range");
  if (sys.d2h[channel]) {
    const auto& d2 = *sys.d2h[channel];
    return {d2.qq(q, p), d2.qp(q, p), d2.pp(q, p)};
  }
  if (!allow_fd)
    throw ConfigError("hessian_blocks: no second derivatives for channel " +
                      std::to_string(channel) + " and finite differences disabled");
  return {detail::fd_jacobian_arg<Scalar>(sys.dh_q[channel], q, p, 0, fd_step),
          detail::fd_jacobian_arg<Scalar>(sys.dh_q[channel], q, p, 1, fd_step),
          detail::fd_jacobian_arg<Scalar>(sys.dh_p[channel], q, p, 1, fd_step)};
}

template <typename Scalar>
ChannelHessians<Scalar> drift_hessians(const System<Scalar>& sys, const VectorX<Scalar>& q,
                                       const VectorX<Scalar>& p, bool allow_fd = true,
                                       Scalar fd_step = Scalar(1e-5)) {
  if (sys.d2H) return {sys.d2H->qq(q, p), sys.d2H->qp(q, p), sys.d2H->pp(q, p)};
  if (!allow_fd)
    throw ConfigError("drift_hessians: no second derivatives and finite differences disabled");
  return {detail::fd_jacobian_arg<Scalar>(sys.dH_q, q, p, 0, fd_step),
          detail::fd_jacobian_arg<Scalar>(sys.dH_q, q, p, 1, fd_step),
          detail::fd_jacobian_arg<Scalar>(sys.dH_p, q, p, 1, fd_step)};
}

/// Max relative deviation, per derivative evaluator, between the supplied
/// gradients and central finite differences of the underlying Hamiltonians.
template <typename Scalar>
struct GradientReport {
  struct Entry {
    std::string evaluator;
    Scalar max_rel_error;
  };
  std::vector<Entry> entries;

  Scalar max_error() const {
    Scalar m = 0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_error);
    return m;
  }
};

template <typename Scalar>
GradientReport<Scalar> check_gradients(const System<Scalar>& sys, const PhaseState<Scalar>& point,
                                       Scalar step) {
  if (step <= Scalar(0) || step > Scalar(1e-2))
    throw ArgumentError("check_gradients: step must lie in (0, 1e-2]");

  GradientReport<Scalar> report;
  auto compare = [&](const std::string& tag, const typename System<Scalar>::VectorFn& grad,
                     const typename System<Scalar>::ScalarFn& f, int axis) {
    const VectorX<Scalar> analytic =
        detail::guarded(tag, [&] { return grad(point.q, point.p); });
    const VectorX<Scalar> numeric = detail::guarded(
        tag, [&] { return detail::fd_gradient<Scalar>(f, point.q, point.p, axis, step); });
    Scalar worst = 0;
    for (Eigen::Index j = 0; j < analytic.size(); ++j)
      worst = std::max(worst, std::abs(analytic[j] - numeric[j]) / (1 + std::abs(analytic[j])));
    report.entries.push_back({tag, worst});
  };

  compare("dH_q", sys.dH_q, sys.H, 0);
  compare("dH_p", sys.dH_p, sys.H, 1);
  for (int m = 0; m < sys.channels; ++m) {
    compare("dh_q[" + std::to_string(m) + "]", sys.dh_q[m], sys.h[m], 0);
    compare("dh_p[" + std::to_string(m) + "]", sys.dh_p[m], sys.h[m], 1);
  }
  return report;
}

/// Ito-form coefficients dz = A(z) dt + sum_m B_m(z) dW_m of the Stratonovich
/// system: B_m = (dh_p[m], -dh_q[m]) and A adds to the Stratonovich drift
/// (dH_p, -dH_q) the correction (1/2) sum_m (dB_m/dz) B_m, assembled from the
/// Hessian blocks of each h_m.
template <typename Scalar>
struct ItoCoefficients {
  VectorX<Scalar> drift;                 // length 2N
  std::vector<VectorX<Scalar>> diffusion;  // one length-2N vector per channel
};

template <typename Scalar>
ItoCoefficients<Scalar> ito_coefficients(const System<Scalar>& sys, const PhaseState<Scalar>& z,
                                         bool allow_fd_hessians = true) {
  const Eigen::Index n = z.dim();
  ItoCoefficients<Scalar> out;
  out.drift.resize(2 * n);
  out.drift.head(n) = sys.dH_p(z.q, z.p);
  out.drift.tail(n) = -sys.dH_q(z.q, z.p);

  out.diffusion.reserve(sys.channels);
  for (int m = 0; m < sys.channels; ++m) {
    const VectorX<Scalar> hq = sys.dh_q[m](z.q, z.p);
    const VectorX<Scalar> hp = sys.dh_p[m](z.q, z.p);
    const auto hess = hessian_blocks(sys, m, z.q, z.p, allow_fd_hessians);
    // Correction components: q-row  (1/2)(h_pq h_p - h_pp h_q),
    //                        p-row -(1/2)(h_qq h_p - h_qp h_q).
    out.drift.head(n) += Scalar(0.5) * (hess.qp.transpose() * hp - hess.pp * hq);
    out.drift.tail(n) += Scalar(-0.5) * (hess.qq * hp - hess.qp * hq);

    VectorX<Scalar> b(2 * n);
    b.head(n) = hp;
    b.tail(n) = -hq;
    out.diffusion.push_back(std::move(b));
  }
  return out;
}

using Systemd = System<double>;

}  // namespace svi
