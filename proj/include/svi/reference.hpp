#pragma once

#include "svi/noise.hpp"
#include "svi/system.hpp"

#include <cmath>

namespace svi {

/// Exact flow of the Kubo oscillator: a rotation by the randomized phase
/// t + beta W(t). Conserves H for every realization of W.
template <typename Scalar>
PhaseState<Scalar> kubo_exact(Scalar q0, Scalar p0, Scalar beta, Scalar t, Scalar w_t) {
  const Scalar phase = t + beta * w_t;
  const Scalar s = std::sin(phase), c = std::cos(phase);
  return PhaseState<Scalar>(p0 * s + q0 * c, p0 * c - q0 * s);
}

/// Milstein's scheme in Stratonovich form:
///   z_{k+1} = z_k + A_S(z_k) dt + sum_m B_m dW_m + (1/2) sum_m (dB_m B_m) dW_m^2,
/// with A_S = (dH_p, -dH_q) and the diffusion derivative assembled from the
/// Hessian blocks of each h_m (analytic when supplied, finite differences
/// otherwise). Explicit and non-symplectic; used as a comparison scheme.
template <typename Scalar>
PhaseState<Scalar> milstein_step(const System<Scalar>& sys, const PhaseState<Scalar>& z_k,
                                 Scalar dt, const VectorX<Scalar>& dw) {
  if (dw.size() != sys.channels)
    throw ArgumentError("milstein_step: dW must carry one increment per noise channel");
  const Eigen::Index n = z_k.dim();
  VectorX<Scalar> q1 = z_k.q + dt * sys.dH_p(z_k.q, z_k.p);
  VectorX<Scalar> p1 = z_k.p - dt * sys.dH_q(z_k.q, z_k.p);
  for (int m = 0; m < sys.channels; ++m) {
    const VectorX<Scalar> hp = sys.dh_p[m](z_k.q, z_k.p);
    const VectorX<Scalar> hq = sys.dh_q[m](z_k.q, z_k.p);
    const auto hess = hessian_blocks(sys, m, z_k.q, z_k.p);
    const Scalar w2 = Scalar(0.5) * dw[m] * dw[m];
    q1 += dw[m] * hp + w2 * (hess.qp.transpose() * hp - hess.pp * hq);
    p1 += -dw[m] * hq + w2 * (-(hess.qq * hp) + hess.qp * hq);
  }
  (void)n;
  return PhaseState<Scalar>(std::move(q1), std::move(p1));
}

namespace detail {

/// Drift/diffusion pair of the Ito form at a flat phase point.
template <typename Scalar>
struct ItoPoint {
  VectorX<Scalar> a;
  VectorX<Scalar> b;
};

template <typename Scalar>
ItoPoint<Scalar> ito_point(const System<Scalar>& sys, const VectorX<Scalar>& flat) {
  const auto coef = ito_coefficients(sys, PhaseState<Scalar>::from_flat(flat));
  return {coef.drift, coef.diffusion[0]};
}

}  // namespace detail

/// Strong order-3/2 Taylor scheme for a single noise channel, built from the
/// Ito coefficients A, B and their directional derivatives (evaluated by
/// central differences of A and B along the drift and diffusion directions):
///
///   z_{k+1} = z_k + A dt + B dW + (1/2) L1B (dW^2 - dt) + L1A dZ
///           + L0B (dW dt - dZ) + (1/2) L0A dt^2
///           + (1/2) L1L1B (dW^2/3 - dt) dW
///
/// with L1 f = (B.grad) f and L0 f = (A.grad) f + (1/2) sum_kl B_k B_l d2f.
/// Explicit and non-symplectic; serves as the fine-step reference solver.
template <typename Scalar>
PhaseState<Scalar> taylor32_step(const System<Scalar>& sys, const PhaseState<Scalar>& z_k,
                                 Scalar dt, const IncrementPair<Scalar>& inc) {
  if (sys.channels != 1)
    throw ConfigError("taylor32_step: exactly one noise channel is supported");
  if (!inc.has_dz) throw ConfigError("taylor32_step: increment pair must carry dZ");

  const VectorX<Scalar> z = z_k.flat();
  const Scalar scale = Scalar(1) + z.template lpNorm<Eigen::Infinity>();
  const Scalar eps1 = Scalar(1e-6) * scale;   // first directional derivatives
  const Scalar eps2 = Scalar(2.5e-4) * scale; // second directional derivatives
  const Scalar eps3 = Scalar(1e-4) * scale;   // outer step of the nested derivative

  auto coef = [&](const VectorX<Scalar>& at) { return detail::ito_point(sys, at); };
  const auto c0 = coef(z);

  auto unit = [](const VectorX<Scalar>& v, Scalar& norm) {
    norm = v.template lpNorm<Eigen::Infinity>();
    return norm > Scalar(0) ? VectorX<Scalar>(v / norm) : v;
  };

  Scalar norm_b = 0, norm_a = 0;
  const VectorX<Scalar> ub = unit(c0.b, norm_b);
  const VectorX<Scalar> ua = unit(c0.a, norm_a);
  const Eigen::Index d = z.size();
  const VectorX<Scalar> zero = VectorX<Scalar>::Zero(d);

  VectorX<Scalar> l1b = zero, l1a = zero, bd2b = zero, bd2a = zero, l1l1b = zero;
  if (norm_b > Scalar(0)) {
    const auto plus = coef(VectorX<Scalar>(z + eps1 * ub));
    const auto minus = coef(VectorX<Scalar>(z - eps1 * ub));
    l1b = norm_b * (plus.b - minus.b) / (2 * eps1);
    l1a = norm_b * (plus.a - minus.a) / (2 * eps1);
    const auto plus2 = coef(VectorX<Scalar>(z + eps2 * ub));
    const auto minus2 = coef(VectorX<Scalar>(z - eps2 * ub));
    bd2b = norm_b * norm_b * (plus2.b - 2 * c0.b + minus2.b) / (eps2 * eps2);
    bd2a = norm_b * norm_b * (plus2.a - 2 * c0.a + minus2.a) / (eps2 * eps2);

    // L1L1B: directional derivative along B of y -> (B(y).grad)B(y).
    auto l1b_at = [&](const VectorX<Scalar>& y) {
      const auto cy = coef(y);
      Scalar ny = 0;
      const VectorX<Scalar> uy = unit(cy.b, ny);
      if (ny == Scalar(0)) return zero;
      const auto yp = coef(VectorX<Scalar>(y + eps1 * uy));
      const auto ym = coef(VectorX<Scalar>(y - eps1 * uy));
      return VectorX<Scalar>(ny * (yp.b - ym.b) / (2 * eps1));
    };
    l1l1b = norm_b *
            (l1b_at(VectorX<Scalar>(z + eps3 * ub)) - l1b_at(VectorX<Scalar>(z - eps3 * ub))) /
            (2 * eps3);
  }
  VectorX<Scalar> adb = zero, ada = zero;
  if (norm_a > Scalar(0)) {
    const auto plus = coef(VectorX<Scalar>(z + eps1 * ua));
    const auto minus = coef(VectorX<Scalar>(z - eps1 * ua));
    adb = norm_a * (plus.b - minus.b) / (2 * eps1);
    ada = norm_a * (plus.a - minus.a) / (2 * eps1);
  }

  const VectorX<Scalar> l0a = ada + Scalar(0.5) * bd2a;
  const VectorX<Scalar> l0b = adb + Scalar(0.5) * bd2b;
  const Scalar dw = inc.dw, dz = inc.dz;

  VectorX<Scalar> next = z + c0.a * dt + c0.b * dw +
                         Scalar(0.5) * l1b * (dw * dw - dt) + l1a * dz +
                         l0b * (dw * dt - dz) + Scalar(0.5) * l0a * dt * dt +
                         Scalar(0.5) * l1l1b * (dw * dw / 3 - dt) * dw;
  return PhaseState<Scalar>::from_flat(next);
}

}  // namespace svi
