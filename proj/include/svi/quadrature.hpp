#pragma once

#include "svi/phase.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace svi {

/// Lagrange interpolation basis of degree s on [0,1] with control points
/// d_0 = 0 < d_1 < ... < d_s = 1, so that l_mu(d_nu) = delta_{mu,nu}.
template <typename Scalar>
struct LagrangeBasis {
  std::vector<Scalar> points;  // d_0..d_s

  explicit LagrangeBasis(std::vector<Scalar> d) : points(std::move(d)) {
    if (points.size() < 2) throw ArgumentError("LagrangeBasis: need at least two control points");
    if (points.front() != Scalar(0) || points.back() != Scalar(1))
      throw ArgumentError("LagrangeBasis: control points must start at 0 and end at 1");
    if (!std::is_sorted(points.begin(), points.end()) ||
        std::adjacent_find(points.begin(), points.end()) != points.end())
      throw ArgumentError("LagrangeBasis: control points must be strictly increasing");
  }

  static LagrangeBasis equispaced(int degree) {
    if (degree < 1) throw ArgumentError("LagrangeBasis: degree must be >= 1");
    std::vector<Scalar> d(degree + 1);
    for (int nu = 0; nu <= degree; ++nu) d[nu] = Scalar(nu) / Scalar(degree);
    return LagrangeBasis(std::move(d));
  }

  int degree() const { return static_cast<int>(points.size()) - 1; }

  /// l_mu(tau)
  Scalar eval(int mu, Scalar tau) const {
    check_index(mu);
    Scalar v = 1;
    for (int nu = 0; nu <= degree(); ++nu) {
      if (nu == mu) continue;
      v *= (tau - points[nu]) / (points[mu] - points[nu]);
    }
    return v;
  }

  /// d/dtau l_mu(tau)
  Scalar deriv(int mu, Scalar tau) const {
    check_index(mu);
    Scalar sum = 0;
    for (int k = 0; k <= degree(); ++k) {
      if (k == mu) continue;
      Scalar term = Scalar(1) / (points[mu] - points[k]);
      for (int nu = 0; nu <= degree(); ++nu) {
        if (nu == mu || nu == k) continue;
        term *= (tau - points[nu]) / (points[mu] - points[nu]);
      }
      sum += term;
    }
    return sum;
  }

 private:
  void check_index(int mu) const {
    if (mu < 0 || mu > degree()) throw ArgumentError("LagrangeBasis: basis index out of range");
  }
};

/// Quadrature rule (c_i, w_i)_{i=1..r} on [0,1]; `classical_order` u means the
/// rule integrates polynomials of degree <= u-1 exactly.
template <typename Scalar>
struct QuadratureRule {
  std::vector<Scalar> nodes;
  std::vector<Scalar> weights;
  int classical_order = 0;
  std::string name;

  int size() const { return static_cast<int>(nodes.size()); }
};

/// Monomial coefficients (ascending) of the cardinal polynomial through `nodes`
/// that is 1 at nodes[j] and 0 at the others.
template <typename Scalar>
std::vector<Scalar> cardinal_coefficients(const std::vector<Scalar>& nodes, int j) {
  const int s = static_cast<int>(nodes.size());
  if (j < 0 || j >= s) throw ArgumentError("cardinal_coefficients: index out of range");
  for (int a = 0; a < s; ++a)
    for (int b = a + 1; b < s; ++b)
      if (nodes[a] == nodes[b]) throw ArgumentError("cardinal_coefficients: duplicate nodes");

  std::vector<Scalar> coeff{Scalar(1)};
  for (int nu = 0; nu < s; ++nu) {
    if (nu == j) continue;
    const Scalar scale = Scalar(1) / (nodes[j] - nodes[nu]);
    std::vector<Scalar> next(coeff.size() + 1, Scalar(0));
    for (std::size_t k = 0; k < coeff.size(); ++k) {
      next[k] += coeff[k] * (-nodes[nu]) * scale;
      next[k + 1] += coeff[k] * scale;
    }
    coeff = std::move(next);
  }
  return coeff;
}

/// Exact value of the integral of the j-th cardinal polynomial over [0, upper].
template <typename Scalar>
Scalar cardinal_integral(const std::vector<Scalar>& nodes, int j, Scalar upper) {
  const auto coeff = cardinal_coefficients(nodes, j);
  Scalar integral = 0;
  Scalar power = upper;
  for (std::size_t k = 0; k < coeff.size(); ++k) {
    integral += coeff[k] * power / Scalar(k + 1);
    power *= upper;
  }
  return integral;
}

/// Interpolatory weights alpha_i = integral over [0,1] of the cardinal
/// polynomials associated with the given nodes (exact polynomial integration).
template <typename Scalar>
std::vector<Scalar> weights_from_nodes(const std::vector<Scalar>& nodes) {
  std::vector<Scalar> w(nodes.size());
  for (std::size_t j = 0; j < nodes.size(); ++j)
    w[j] = cardinal_integral(nodes, static_cast<int>(j), Scalar(1));
  return w;
}

/// The named low-order rules used to assemble the integrators.
/// Recognized: "midpoint", "trapezoidal", "simpson", "open-trapezoidal",
/// "milne", "rectangle".
template <typename Scalar>
QuadratureRule<Scalar> named_rule(const std::string& name) {
  const Scalar half = Scalar(1) / Scalar(2);
  if (name == "midpoint") return {{half}, {Scalar(1)}, 2, name};
  if (name == "trapezoidal") return {{Scalar(0), Scalar(1)}, {half, half}, 2, name};
  if (name == "simpson")
    return {{Scalar(0), half, Scalar(1)},
            {Scalar(1) / Scalar(6), Scalar(2) / Scalar(3), Scalar(1) / Scalar(6)},
            4,
            name};
  if (name == "open-trapezoidal")
    return {{Scalar(1) / Scalar(3), Scalar(2) / Scalar(3)}, {half, half}, 2, name};
  if (name == "milne")
    return {{Scalar(1) / Scalar(4), half, Scalar(3) / Scalar(4)},
            {Scalar(2) / Scalar(3), -Scalar(1) / Scalar(3), Scalar(2) / Scalar(3)},
            4,
            name};
  if (name == "rectangle") return {{Scalar(1)}, {Scalar(1)}, 1, name};
  throw ArgumentError("named_rule: unknown rule '" + name + "'");
}

using LagrangeBasisd = LagrangeBasis<double>;
using QuadratureRuled = QuadratureRule<double>;

}  // namespace svi
