#pragma once

#include "svi/system.hpp"

#include <cmath>
#include <string>

namespace svi {

/// Kubo oscillator: H = p^2/2 + q^2/2, h = beta (p^2/2 + q^2/2).
template <typename Scalar>
System<Scalar> kubo_system(Scalar beta) {
  using V = VectorX<Scalar>;
  using M = MatrixX<Scalar>;
  System<Scalar> sys;
  sys.dim = 1;
  sys.channels = 1;
  sys.name = "kubo";
  sys.H = [](const V& q, const V& p) { return Scalar(0.5) * (p[0] * p[0] + q[0] * q[0]); };
  sys.dH_q = [](const V& q, const V&) { return q; };
  sys.dH_p = [](const V&, const V& p) { return p; };
  sys.h = {[beta](const V& q, const V& p) {
    return beta * Scalar(0.5) * (p[0] * p[0] + q[0] * q[0]);
  }};
  sys.dh_q = {[beta](const V& q, const V&) { return V(beta * q); }};
  sys.dh_p = {[beta](const V&, const V& p) { return V(beta * p); }};
  sys.d2H = HessianBlocks<Scalar>{
      [](const V&, const V&) { return M::Identity(1, 1); },
      [](const V&, const V&) { return M::Zero(1, 1); },
      [](const V&, const V&) { return M::Identity(1, 1); }};
  sys.d2h = {HessianBlocks<Scalar>{
      [beta](const V&, const V&) { return M(M::Identity(1, 1) * beta); },
      [](const V&, const V&) { return M::Zero(1, 1); },
      [beta](const V&, const V&) { return M(M::Identity(1, 1) * beta); }}};
  sys.separable = true;
  sys.h_independent_of_p = false;
  sys.additive_noise = false;
  return sys;
}

/// Synchrotron oscillations: H = p^2/2 - cos q, h = beta sin q.
template <typename Scalar>
System<Scalar> synchrotron_system(Scalar beta) {
  using V = VectorX<Scalar>;
  using M = MatrixX<Scalar>;
  System<Scalar> sys;
  sys.dim = 1;
  sys.channels = 1;
  sys.name = "synchrotron";
  sys.H = [](const V& q, const V& p) {
    return Scalar(0.5) * p[0] * p[0] - std::cos(q[0]);
  };
  sys.dH_q = [](const V& q, const V&) { return V(V::Constant(1, std::sin(q[0]))); };
  sys.dH_p = [](const V&, const V& p) { return p; };
  sys.h = {[beta](const V& q, const V&) { return beta * std::sin(q[0]); }};
  sys.dh_q = {[beta](const V& q, const V&) { return V(V::Constant(1, beta * std::cos(q[0]))); }};
  sys.dh_p = {[](const V&, const V&) { return V(V::Zero(1)); }};
  sys.d2H = HessianBlocks<Scalar>{
      [](const V& q, const V&) { return M(M::Identity(1, 1) * std::cos(q[0])); },
      [](const V&, const V&) { return M::Zero(1, 1); },
      [](const V&, const V&) { return M::Identity(1, 1); }};
  sys.d2h = {HessianBlocks<Scalar>{
      [beta](const V& q, const V&) { return M(M::Identity(1, 1) * (-beta * std::sin(q[0]))); },
      [](const V&, const V&) { return M::Zero(1, 1); },
      [](const V&, const V&) { return M::Zero(1, 1); }}};
  sys.separable = true;
  sys.h_independent_of_p = true;
  sys.additive_noise = false;
  return sys;
}

/// Anharmonic oscillator: H = p^2/2 + gamma q^4, h = beta q (additive noise).
template <typename Scalar>
System<Scalar> anharmonic_system(Scalar gamma, Scalar beta) {
  using V = VectorX<Scalar>;
  using M = MatrixX<Scalar>;
  System<Scalar> sys;
  sys.dim = 1;
  sys.channels = 1;
  sys.name = "anharmonic";
  sys.H = [gamma](const V& q, const V& p) {
    const Scalar q2 = q[0] * q[0];
    return Scalar(0.5) * p[0] * p[0] + gamma * q2 * q2;
  };
  sys.dH_q = [gamma](const V& q, const V&) {
    return V(V::Constant(1, Scalar(4) * gamma * q[0] * q[0] * q[0]));
  };
  sys.dH_p = [](const V&, const V& p) { return p; };
  sys.h = {[beta](const V& q, const V&) { return beta * q[0]; }};
  sys.dh_q = {[beta](const V&, const V&) { return V(V::Constant(1, beta)); }};
  sys.dh_p = {[](const V&, const V&) { return V(V::Zero(1)); }};
  sys.d2H = HessianBlocks<Scalar>{
      [gamma](const V& q, const V&) { return M(M::Identity(1, 1) * (Scalar(12) * gamma * q[0] * q[0])); },
      [](const V&, const V&) { return M::Zero(1, 1); },
      [](const V&, const V&) { return M::Identity(1, 1); }};
  sys.d2h = {HessianBlocks<Scalar>{
      [](const V&, const V&) { return M::Zero(1, 1); },
      [](const V&, const V&) { return M::Zero(1, 1); },
      [](const V&, const V&) { return M::Zero(1, 1); }}};
  sys.separable = true;
  sys.h_independent_of_p = true;
  sys.additive_noise = true;
  return sys;
}

/// Rotationally invariant planar system: H = |p|^2/2 + (|q|^2)^2/4,
/// h = sigma |q|^2/2. Conserves angular momentum q1 p2 - q2 p1.
template <typename Scalar>
System<Scalar> planar_rotational_system(Scalar sigma) {
  using V = VectorX<Scalar>;
  using M = MatrixX<Scalar>;
  System<Scalar> sys;
  sys.dim = 2;
  sys.channels = 1;
  sys.name = "planar-rotational";
  sys.H = [](const V& q, const V& p) {
    const Scalar q2 = q.squaredNorm();
    return Scalar(0.5) * p.squaredNorm() + Scalar(0.25) * q2 * q2;
  };
  sys.dH_q = [](const V& q, const V&) { return V(q.squaredNorm() * q); };
  sys.dH_p = [](const V&, const V& p) { return p; };
  sys.h = {[sigma](const V& q, const V&) { return sigma * Scalar(0.5) * q.squaredNorm(); }};
  sys.dh_q = {[sigma](const V& q, const V&) { return V(sigma * q); }};
  sys.dh_p = {[](const V& q, const V&) { return V(V::Zero(q.size())); }};
  sys.d2H = HessianBlocks<Scalar>{
      [](const V& q, const V&) {
        return M(q.squaredNorm() * M::Identity(2, 2) + Scalar(2) * q * q.transpose());
      },
      [](const V&, const V&) { return M::Zero(2, 2); },
      [](const V&, const V&) { return M::Identity(2, 2); }};
  sys.d2h = {HessianBlocks<Scalar>{
      [sigma](const V&, const V&) { return M(sigma * M::Identity(2, 2)); },
      [](const V&, const V&) { return M::Zero(2, 2); },
      [](const V&, const V&) { return M::Zero(2, 2); }}};
  sys.separable = true;
  sys.h_independent_of_p = true;
  sys.additive_noise = false;
  return sys;
}

template <typename Scalar>
struct SystemParams {
  Scalar beta = Scalar(0.1);
  Scalar gamma = Scalar(0.1);
  Scalar sigma = Scalar(0.1);
};

/// Builtin system by CLI name: "kubo", "synchrotron", "anharmonic",
/// "planar-rotational".
template <typename Scalar>
System<Scalar> builtin_system(const std::string& name, const SystemParams<Scalar>& params = {}) {
  if (name == "kubo") return kubo_system(params.beta);
  if (name == "synchrotron") return synchrotron_system(params.beta);
  if (name == "anharmonic") return anharmonic_system(params.gamma, params.beta);
  if (name == "planar-rotational") return planar_rotational_system(params.sigma);
  throw ArgumentError("builtin_system: unknown system '" + name + "'");
}

}  // namespace svi
