#pragma once

#include "svi/system.hpp"

#include <functional>
#include <vector>

namespace svi {

/// Deviation of a one-step map from symplecticity: || J^T Omega J - Omega ||
/// in the max norm, where J is the central-difference Jacobian of the map
/// over the 2N phase coordinates at frozen noise increments.
template <typename Scalar>
struct SymplecticReport {
  Scalar defect = 0;
  Scalar fd_step = 0;
};

template <typename Scalar>
SymplecticReport<Scalar> symplectic_defect(
    const std::function<PhaseState<Scalar>(const PhaseState<Scalar>&)>& one_step,
    const PhaseState<Scalar>& z, Scalar fd_step = Scalar(0)) {
  const Eigen::Index n = z.dim();
  const VectorX<Scalar> flat = z.flat();
  const Scalar eps =
      fd_step > Scalar(0) ? fd_step
                          : Scalar(1e-6) * (Scalar(1) + flat.template lpNorm<Eigen::Infinity>());

  MatrixX<Scalar> jac(2 * n, 2 * n);
  for (Eigen::Index j = 0; j < 2 * n; ++j) {
    VectorX<Scalar> zp = flat, zm = flat;
    zp[j] += eps;
    zm[j] -= eps;
    jac.col(j) = (one_step(PhaseState<Scalar>::from_flat(zp)).flat() -
                  one_step(PhaseState<Scalar>::from_flat(zm)).flat()) /
                 (2 * eps);
  }

  // Blockwise J^T Omega J - Omega for the canonical Omega = [[0, I], [-I, 0]].
  const auto A = jac.topLeftCorner(n, n), B = jac.topRightCorner(n, n);
  const auto C = jac.bottomLeftCorner(n, n), D = jac.bottomRightCorner(n, n);
  const MatrixX<Scalar> eye = MatrixX<Scalar>::Identity(n, n);
  Scalar defect = (A.transpose() * C - C.transpose() * A).template lpNorm<Eigen::Infinity>();
  defect = std::max(defect,
                    (A.transpose() * D - C.transpose() * B - eye).template lpNorm<Eigen::Infinity>());
  defect = std::max(defect,
                    (B.transpose() * C - D.transpose() * A + eye).template lpNorm<Eigen::Infinity>());
  defect = std::max(defect,
                    (B.transpose() * D - D.transpose() * B).template lpNorm<Eigen::Infinity>());
  return {defect, eps};
}

/// Infinitesimal generator of a linear group action on configuration space,
/// xi_Q(q) = G q + a (rotations: G skew, a = 0; translations: G = 0).
template <typename Scalar>
struct LinearGenerator {
  MatrixX<Scalar> linear;
  VectorX<Scalar> offset;

  static LinearGenerator planar_rotation() {
    MatrixX<Scalar> g(2, 2);
    g << 0, -1, 1, 0;
    return {g, VectorX<Scalar>::Zero(2)};
  }
  static LinearGenerator translation(const VectorX<Scalar>& direction) {
    return {MatrixX<Scalar>::Zero(direction.size(), direction.size()), direction};
  }
};

/// Momentum map J_xi(q,p) = p . xi_Q(q) along a trajectory; for the planar
/// rotation generator this is the angular momentum q1 p2 - q2 p1.
template <typename Scalar>
std::vector<Scalar> momentum_series(const std::vector<PhaseState<Scalar>>& trajectory,
                                    const LinearGenerator<Scalar>& generator) {
  std::vector<Scalar> series;
  series.reserve(trajectory.size());
  for (const auto& z : trajectory)
    series.push_back(z.p.dot(generator.linear * z.q + generator.offset));
  return series;
}

/// H(q_k, p_k) along a trajectory.
template <typename Scalar>
std::vector<Scalar> energy_series(const std::vector<PhaseState<Scalar>>& trajectory,
                                  const System<Scalar>& sys) {
  std::vector<Scalar> series;
  series.reserve(trajectory.size());
  for (const auto& z : trajectory) series.push_back(sys.H(z.q, z.p));
  return series;
}

/// Cross-channel commutativity data. The order-1.0 guarantee of the
/// integrators extends to multichannel noise exactly when Gamma and Lambda
/// are symmetric in the channel indices:
///   Gamma_ij  = (d2h_j/dpdq) dh_i/dp - (d2h_j/dp2) dh_i/dq
///   Lambda_ij = -(d2h_j/dq2) dh_i/dp + (d2h_j/dqdp) dh_i/dq
template <typename Scalar>
struct CommutativityReport {
  std::vector<std::vector<VectorX<Scalar>>> gamma;   // M x M vectors of length N
  std::vector<std::vector<VectorX<Scalar>>> lambda;  // M x M vectors of length N
  Scalar max_asymmetry = 0;
};

template <typename Scalar>
CommutativityReport<Scalar> commutativity_defect(const System<Scalar>& sys,
                                                 const PhaseState<Scalar>& z) {
  const int m = sys.channels;
  if (m < 2) throw ArgumentError("commutativity_defect: needs at least two noise channels");

  std::vector<VectorX<Scalar>> hq(m), hp(m);
  std::vector<ChannelHessians<Scalar>> hess;
  hess.reserve(m);
  for (int i = 0; i < m; ++i) {
    hq[i] = sys.dh_q[i](z.q, z.p);
    hp[i] = sys.dh_p[i](z.q, z.p);
    hess.push_back(hessian_blocks(sys, i, z.q, z.p));
  }

  CommutativityReport<Scalar> report;
  report.gamma.assign(m, std::vector<VectorX<Scalar>>(m));
  report.lambda.assign(m, std::vector<VectorX<Scalar>>(m));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      report.gamma[i][j] = hess[j].qp.transpose() * hp[i] - hess[j].pp * hq[i];
      report.lambda[i][j] = -(hess[j].qq * hp[i]) + hess[j].qp * hq[i];
    }
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) {
      report.max_asymmetry = std::max(
          report.max_asymmetry,
          (report.gamma[i][j] - report.gamma[j][i]).template lpNorm<Eigen::Infinity>());
      report.max_asymmetry = std::max(
          report.max_asymmetry,
          (report.lambda[i][j] - report.lambda[j][i]).template lpNorm<Eigen::Infinity>());
    }
  return report;
}

}  // namespace svi
