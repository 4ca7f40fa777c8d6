#pragma once

#include "svi/noise.hpp"
#include "svi/sprk.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <type_traits>
#include <optional>
#include <string>
#include <vector>

namespace svi {

/// Named integrators. PsNrQu = polynomial degree s, r quadrature points of
/// classical order u; a second triple names a separate diffusion rule.
enum class SchemeId {
  P1N1Q2Gau,         // stochastic midpoint
  P2N2Q2Lob,         // stochastic Stormer-Verlet
  P1N2Q2Lob,         // stochastic trapezoidal
  P1N3Q4Lob,         // Simpson
  P1N2Q2Otr,         // open trapezoidal, s=1
  P2N2Q2Otr,         // open trapezoidal, s=2
  P1N3Q4Mil,         // Milne
  P1N1Q1Rec,         // stochastic symplectic Euler (h = h(q))
  P1N1Q1RecN2Q2Lob,  // rectangle drift / trapezoidal diffusion
  P1N1Q1RecN1Q2Gau,  // rectangle drift / midpoint diffusion
  P2N2Q2LobN1Q1Rec,  // Stormer-Verlet drift / rectangle diffusion
  P1N1Q2GauN2Q2Lob,  // midpoint drift / trapezoidal diffusion
  P1N2Q2LobN1Q2Gau,  // trapezoidal drift / midpoint diffusion
  SPRK32Milstein,    // order-3/2 method
};

inline const std::vector<SchemeId>& all_scheme_ids() {
  static const std::vector<SchemeId> ids = {
      SchemeId::P1N1Q2Gau,        SchemeId::P2N2Q2Lob,        SchemeId::P1N2Q2Lob,
      SchemeId::P1N3Q4Lob,        SchemeId::P1N2Q2Otr,        SchemeId::P2N2Q2Otr,
      SchemeId::P1N3Q4Mil,        SchemeId::P1N1Q1Rec,        SchemeId::P1N1Q1RecN2Q2Lob,
      SchemeId::P1N1Q1RecN1Q2Gau, SchemeId::P2N2Q2LobN1Q1Rec, SchemeId::P1N1Q2GauN2Q2Lob,
      SchemeId::P1N2Q2LobN1Q2Gau, SchemeId::SPRK32Milstein};
  return ids;
}

inline std::string to_string(SchemeId id) {
  switch (id) {
    case SchemeId::P1N1Q2Gau: return "P1N1Q2Gau";
    case SchemeId::P2N2Q2Lob: return "P2N2Q2Lob";
    case SchemeId::P1N2Q2Lob: return "P1N2Q2Lob";
    case SchemeId::P1N3Q4Lob: return "P1N3Q4Lob";
    case SchemeId::P1N2Q2Otr: return "P1N2Q2Otr";
    case SchemeId::P2N2Q2Otr: return "P2N2Q2Otr";
    case SchemeId::P1N3Q4Mil: return "P1N3Q4Mil";
    case SchemeId::P1N1Q1Rec: return "P1N1Q1Rec";
    case SchemeId::P1N1Q1RecN2Q2Lob: return "P1N1Q1RecN2Q2Lob";
    case SchemeId::P1N1Q1RecN1Q2Gau: return "P1N1Q1RecN1Q2Gau";
    case SchemeId::P2N2Q2LobN1Q1Rec: return "P2N2Q2LobN1Q1Rec";
    case SchemeId::P1N1Q2GauN2Q2Lob: return "P1N1Q2GauN2Q2Lob";
    case SchemeId::P1N2Q2LobN1Q2Gau: return "P1N2Q2LobN1Q2Gau";
    case SchemeId::SPRK32Milstein: return "SPRK32Milstein";
  }
  throw ArgumentError("to_string: unknown scheme id");
}

/// Case-insensitive lookup of a scheme id by its name.
inline SchemeId parse_scheme(const std::string& name) {
  auto lower = [](std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
  };
  const std::string wanted = lower(name);
  for (SchemeId id : all_scheme_ids())
    if (lower(to_string(id)) == wanted) return id;
  throw ArgumentError("parse_scheme: unknown scheme '" + name + "'");
}

struct SchemeCapabilities {
  /// Zero Newton iterations on separable systems.
  bool explicit_for_separable = false;
  /// Explicitness additionally needs additive noise (constant dh_q).
  bool explicit_needs_additive_noise = false;
  /// Valid only for systems with h_m = h_m(q).
  bool requires_h_independent_of_p = false;
  /// Accepts more than one noise channel.
  bool supports_multichannel = true;
  /// Consumes (dW, dZ) increment pairs.
  bool needs_dz = false;
};

/// A registry entry: either a Galerkin scheme or an order-3/2 tableau, plus
/// the capability flags of its step implementation.
template <typename Scalar>
struct SchemeDescriptor {
  SchemeId id;
  std::optional<GalerkinScheme<Scalar>> galerkin;
  std::optional<Sprk32Tableau<Scalar>> sprk32;
  SchemeCapabilities caps;
};

template <typename Scalar>
SchemeDescriptor<Scalar> build_scheme(SchemeId id) {
  auto galerkin = [&](int degree, const std::string& drift, const std::string& diffusion,
                      bool requires_hq) {
    GalerkinScheme<Scalar> s{LagrangeBasis<Scalar>::equispaced(degree), named_rule<Scalar>(drift),
                             named_rule<Scalar>(diffusion), requires_hq};
    return s;
  };
  SchemeDescriptor<Scalar> d;
  d.id = id;
  switch (id) {
    case SchemeId::P1N1Q2Gau:
      d.galerkin = galerkin(1, "midpoint", "midpoint", false);
      break;
    case SchemeId::P2N2Q2Lob:
      d.galerkin = galerkin(2, "trapezoidal", "trapezoidal", false);
      d.caps.explicit_for_separable = true;
      break;
    case SchemeId::P1N2Q2Lob:
      d.galerkin = galerkin(1, "trapezoidal", "trapezoidal", false);
      d.caps.explicit_for_separable = true;
      break;
    case SchemeId::P1N3Q4Lob:
      d.galerkin = galerkin(1, "simpson", "simpson", false);
      break;
    case SchemeId::P1N2Q2Otr:
      d.galerkin = galerkin(1, "open-trapezoidal", "open-trapezoidal", false);
      break;
    case SchemeId::P2N2Q2Otr:
      d.galerkin = galerkin(2, "open-trapezoidal", "open-trapezoidal", false);
      break;
    case SchemeId::P1N3Q4Mil:
      d.galerkin = galerkin(1, "milne", "milne", false);
      break;
    case SchemeId::P1N1Q1Rec:
      d.galerkin = galerkin(1, "rectangle", "rectangle", true);
      d.caps.explicit_for_separable = true;
      d.caps.requires_h_independent_of_p = true;
      break;
    case SchemeId::P1N1Q1RecN2Q2Lob:
      d.galerkin = galerkin(1, "rectangle", "trapezoidal", true);
      d.caps.explicit_for_separable = true;
      d.caps.requires_h_independent_of_p = true;
      break;
    case SchemeId::P1N1Q1RecN1Q2Gau:
      d.galerkin = galerkin(1, "rectangle", "midpoint", true);
      d.caps.explicit_for_separable = true;
      d.caps.explicit_needs_additive_noise = true;
      d.caps.requires_h_independent_of_p = true;
      break;
    case SchemeId::P2N2Q2LobN1Q1Rec:
      d.galerkin = galerkin(2, "trapezoidal", "rectangle", true);
      d.caps.explicit_for_separable = true;
      d.caps.requires_h_independent_of_p = true;
      break;
    case SchemeId::P1N1Q2GauN2Q2Lob:
      d.galerkin = galerkin(1, "midpoint", "trapezoidal", true);
      d.caps.requires_h_independent_of_p = true;
      break;
    case SchemeId::P1N2Q2LobN1Q2Gau:
      d.galerkin = galerkin(1, "trapezoidal", "midpoint", true);
      d.caps.explicit_for_separable = true;
      d.caps.explicit_needs_additive_noise = true;
      d.caps.requires_h_independent_of_p = true;
      break;
    case SchemeId::SPRK32Milstein:
      d.sprk32 = milstein32_tableau<Scalar>();
      d.caps.explicit_for_separable = true;
      d.caps.requires_h_independent_of_p = true;
      d.caps.supports_multichannel = false;
      d.caps.needs_dz = true;
      break;
  }
  return d;
}

namespace detail {

template <typename Scalar>
struct FastContext {
  const System<Scalar>& sys;
  const PhaseState<Scalar>& z;
  Scalar dt;
  const VectorX<Scalar>& dw;

  Eigen::Index n() const { return z.dim(); }

  VectorX<Scalar> noise_q(const VectorX<Scalar>& q, const VectorX<Scalar>& p) const {
    VectorX<Scalar> acc = VectorX<Scalar>::Zero(q.size());
    for (int m = 0; m < sys.channels; ++m) acc += dw[m] * sys.dh_q[m](q, p);
    return acc;
  }
  VectorX<Scalar> noise_p(const VectorX<Scalar>& q, const VectorX<Scalar>& p) const {
    VectorX<Scalar> acc = VectorX<Scalar>::Zero(p.size());
    for (int m = 0; m < sys.channels; ++m) acc += dw[m] * sys.dh_p[m](q, p);
    return acc;
  }
};

inline SolveStats merge(SolveStats a, const SolveStats& b) {
  a.iterations += b.iterations;
  a.residual_norm = std::max(a.residual_norm, b.residual_norm);
  a.converged = a.converged && b.converged;
  return a;
}

inline SolveStats explicit_stats() { return {0, 0.0, true}; }

/// Stormer-Verlet sequence: half-step momentum solve, position solve, explicit
/// momentum update. Both solves collapse to explicit formulas for separable
/// systems.
template <typename Scalar>
SprkStepResult<Scalar> stormer_verlet_step(const FastContext<Scalar>& c, const SolverConfig& cfg) {
  const auto& sys = c.sys;
  const Scalar half = Scalar(0.5);
  SolveStats stats = explicit_stats();

  VectorX<Scalar> p_half;
  if (sys.separable) {
    p_half = c.z.p - half * c.dt * sys.dH_q(c.z.q, c.z.p) - half * c.noise_q(c.z.q, c.z.p);
  } else {
    SolveStats s1;
    p_half = newton_solve<Scalar>(
        [&](const VectorX<Scalar>& p) {
          return VectorX<Scalar>(p - c.z.p + half * c.dt * sys.dH_q(c.z.q, p) +
                                 half * c.noise_q(c.z.q, p));
        },
        c.z.p, cfg, &s1);
    stats = merge(stats, s1);
  }

  VectorX<Scalar> q_next;
  if (sys.separable) {
    q_next = c.z.q + c.dt * sys.dH_p(c.z.q, p_half) + c.noise_p(c.z.q, p_half);
  } else {
    const VectorX<Scalar> fixed =
        c.z.q + half * c.dt * sys.dH_p(c.z.q, p_half) + half * c.noise_p(c.z.q, p_half);
    SolveStats s2;
    q_next = newton_solve<Scalar>(
        [&](const VectorX<Scalar>& q) {
          return VectorX<Scalar>(q - fixed - half * c.dt * sys.dH_p(q, p_half) -
                                 half * c.noise_p(q, p_half));
        },
        c.z.q, cfg, &s2);
    stats = merge(stats, s2);
  }

  const VectorX<Scalar> p_next =
      p_half - half * c.dt * sys.dH_q(q_next, p_half) - half * c.noise_q(q_next, p_half);
  return {PhaseState<Scalar>(q_next, p_next), stats};
}

template <typename Scalar>
SprkStepResult<Scalar> midpoint_step(const FastContext<Scalar>& c, const SolverConfig& cfg) {
  const auto& sys = c.sys;
  const Scalar half = Scalar(0.5);
  const Eigen::Index n = c.n();
  SolveStats stats;

  if (sys.separable) {
    // p_{k+1} is explicit in q_{k+1}; solve N equations for q_{k+1}.
    auto p_next_of = [&](const VectorX<Scalar>& q_next) {
      const VectorX<Scalar> qm = half * (c.z.q + q_next);
      return VectorX<Scalar>(c.z.p - c.dt * sys.dH_q(qm, c.z.p) - c.noise_q(qm, c.z.p));
    };
    const VectorX<Scalar> q_next = newton_solve<Scalar>(
        [&](const VectorX<Scalar>& q) {
          const VectorX<Scalar> qm = half * (c.z.q + q);
          const VectorX<Scalar> pm = half * (c.z.p + p_next_of(q));
          return VectorX<Scalar>(q - c.z.q - c.dt * sys.dH_p(qm, pm) - c.noise_p(qm, pm));
        },
        c.z.q, cfg, &stats);
    return {PhaseState<Scalar>(q_next, p_next_of(q_next)), stats};
  }

  const VectorX<Scalar> x = newton_solve<Scalar>(
      [&](const VectorX<Scalar>& zn) {
        const VectorX<Scalar> qm = half * (c.z.q + zn.head(n));
        const VectorX<Scalar> pm = half * (c.z.p + zn.tail(n));
        VectorX<Scalar> r(2 * n);
        r.head(n) = zn.head(n) - c.z.q - c.dt * sys.dH_p(qm, pm) - c.noise_p(qm, pm);
        r.tail(n) = zn.tail(n) - c.z.p + c.dt * sys.dH_q(qm, pm) + c.noise_q(qm, pm);
        return r;
      },
      c.z.flat(), cfg, &stats);
  return {PhaseState<Scalar>::from_flat(x), stats};
}

template <typename Scalar>
SprkStepResult<Scalar> trapezoidal_step(const FastContext<Scalar>& c, const SolverConfig& cfg) {
  if (c.sys.separable) return stormer_verlet_step(c, cfg);  // P_1 = P_2 collapses the system
  const auto& sys = c.sys;
  SolveStats stats;
  auto derived = [&](const VectorX<Scalar>& p1) {
    const VectorX<Scalar> q_next =
        c.z.q + c.dt * sys.dH_p(c.z.q, p1) + c.noise_p(c.z.q, p1);
    const VectorX<Scalar> p2 =
        2 * c.z.p - p1 - c.dt * sys.dH_q(c.z.q, p1) - c.noise_q(c.z.q, p1);
    return std::pair{q_next, p2};
  };
  const VectorX<Scalar> p1 = newton_solve<Scalar>(
      [&](const VectorX<Scalar>& p) {
        const auto [q_next, p2] = derived(p);
        return VectorX<Scalar>(q_next - c.z.q - c.dt * sys.dH_p(q_next, p2) -
                               c.noise_p(q_next, p2));
      },
      c.z.p, cfg, &stats);
  const auto [q_next, p2] = derived(p1);
  const VectorX<Scalar> p_next = Scalar(0.5) * (p1 + p2) -
                                 Scalar(0.5) * c.dt * sys.dH_q(q_next, p2) -
                                 Scalar(0.5) * c.noise_q(q_next, p2);
  return {PhaseState<Scalar>(q_next, p_next), stats};
}

/// Shared structure of the Simpson and Milne based s=1 integrators for
/// separable systems: an N-dimensional solve for q_{k+1} with the momentum
/// stage eliminated, then an explicit momentum update. `w_pre` weights the
/// potential terms entering the stage momentum, `w_post` the final update;
/// both run over the interior evaluation points of the rule.
template <typename Scalar>
SprkStepResult<Scalar> separable_s1_three_node_step(const FastContext<Scalar>& c,
                                                    const std::array<Scalar, 3>& frac,
                                                    const std::array<Scalar, 3>& w_pre,
                                                    const std::array<Scalar, 3>& w_post,
                                                    const SolverConfig& cfg) {
  const auto& sys = c.sys;
  SolveStats stats;
  auto eval_points = [&](const VectorX<Scalar>& q_next) {
    std::array<VectorX<Scalar>, 3> pts;
    for (int j = 0; j < 3; ++j) pts[j] = (1 - frac[j]) * c.z.q + frac[j] * q_next;
    return pts;
  };
  auto p_stage_of = [&](const std::array<VectorX<Scalar>, 3>& pts) {
    VectorX<Scalar> p = c.z.p;
    for (int j = 0; j < 3; ++j) {
      if (w_pre[j] == Scalar(0)) continue;
      p -= w_pre[j] * (c.dt * sys.dH_q(pts[j], c.z.p) + c.noise_q(pts[j], c.z.p));
    }
    return p;
  };
  const VectorX<Scalar> q_next = newton_solve<Scalar>(
      [&](const VectorX<Scalar>& q) {
        const auto pts = eval_points(q);
        const VectorX<Scalar> p1 = p_stage_of(pts);
        return VectorX<Scalar>(q - c.z.q - c.dt * sys.dH_p(c.z.q, p1) - c.noise_p(c.z.q, p1));
      },
      c.z.q, cfg, &stats);
  const auto pts = eval_points(q_next);
  VectorX<Scalar> p_next = p_stage_of(pts);
  for (int j = 0; j < 3; ++j) {
    if (w_post[j] == Scalar(0)) continue;
    p_next -= w_post[j] * (c.dt * sys.dH_q(pts[j], c.z.p) + c.noise_q(pts[j], c.z.p));
  }
  return {PhaseState<Scalar>(q_next, p_next), stats};
}

template <typename Scalar>
SprkStepResult<Scalar> open_trapezoidal_s1_step(const FastContext<Scalar>& c,
                                                const SolverConfig& cfg) {
  const auto& sys = c.sys;
  const Scalar third = Scalar(1) / 3, sixth = Scalar(1) / 6;
  const Eigen::Index n = c.n();
  SolveStats stats;
  auto g1 = [&](const VectorX<Scalar>& q_next) {
    return VectorX<Scalar>((q_next + 2 * c.z.q) / 3);
  };
  auto g2 = [&](const VectorX<Scalar>& q_next) {
    return VectorX<Scalar>((2 * q_next + c.z.q) / 3);
  };

  if (sys.separable) {
    // P_1 = P_2, explicit in q_{k+1}; N equations remain.
    auto p_stage = [&](const VectorX<Scalar>& q_next) {
      const VectorX<Scalar> a = g1(q_next), b = g2(q_next);
      return VectorX<Scalar>(c.z.p - third * (c.dt * sys.dH_q(a, c.z.p) + c.noise_q(a, c.z.p)) -
                             sixth * (c.dt * sys.dH_q(b, c.z.p) + c.noise_q(b, c.z.p)));
    };
    const VectorX<Scalar> q_next = newton_solve<Scalar>(
        [&](const VectorX<Scalar>& q) {
          const VectorX<Scalar> p1 = p_stage(q);
          const VectorX<Scalar> a = g1(q);
          return VectorX<Scalar>(q - c.z.q - c.dt * sys.dH_p(a, p1) - c.noise_p(a, p1));
        },
        c.z.q, cfg, &stats);
    const VectorX<Scalar> p1 = p_stage(q_next);
    const VectorX<Scalar> a = g1(q_next), b = g2(q_next);
    const VectorX<Scalar> p_next =
        p1 - sixth * (c.dt * sys.dH_q(a, c.z.p) + c.noise_q(a, c.z.p)) -
        third * (c.dt * sys.dH_q(b, c.z.p) + c.noise_q(b, c.z.p));
    return {PhaseState<Scalar>(q_next, p_next), stats};
  }

  // Unknowns (P_1, P_2, q_{k+1}); then the explicit momentum update.
  VectorX<Scalar> start(3 * n);
  start.segment(0, n) = c.z.p;
  start.segment(n, n) = c.z.p;
  start.segment(2 * n, n) = c.z.q;
  const VectorX<Scalar> x = newton_solve<Scalar>(
      [&](const VectorX<Scalar>& u) {
        const VectorX<Scalar> p1 = u.segment(0, n), p2 = u.segment(n, n),
                              qn = u.segment(2 * n, n);
        const VectorX<Scalar> a = g1(qn), b = g2(qn);
        VectorX<Scalar> r(3 * n);
        r.segment(0, n) = Scalar(0.5) * (p1 + p2) +
                          third * (c.dt * sys.dH_q(a, p1) + c.noise_q(a, p1)) +
                          sixth * (c.dt * sys.dH_q(b, p2) + c.noise_q(b, p2)) - c.z.p;
        r.segment(n, n) = qn - c.z.q - c.dt * sys.dH_p(a, p1) - c.noise_p(a, p1);
        r.segment(2 * n, n) = qn - c.z.q - c.dt * sys.dH_p(b, p2) - c.noise_p(b, p2);
        return r;
      },
      start, cfg, &stats);
  const VectorX<Scalar> p1 = x.segment(0, n), p2 = x.segment(n, n), q_next = x.segment(2 * n, n);
  const VectorX<Scalar> a = g1(q_next), b = g2(q_next);
  const VectorX<Scalar> p_next = Scalar(0.5) * (p1 + p2) -
                                 sixth * (c.dt * sys.dH_q(a, p1) + c.noise_q(a, p1)) -
                                 third * (c.dt * sys.dH_q(b, p2) + c.noise_q(b, p2));
  return {PhaseState<Scalar>(q_next, p_next), stats};
}

template <typename Scalar>
SprkStepResult<Scalar> symplectic_euler_step(const FastContext<Scalar>& c,
                                             const SolverConfig& cfg) {
  const auto& sys = c.sys;
  SolveStats stats = explicit_stats();
  VectorX<Scalar> q_next;
  if (sys.separable) {
    q_next = c.z.q + c.dt * sys.dH_p(c.z.q, c.z.p);
  } else {
    q_next = newton_solve<Scalar>(
        [&](const VectorX<Scalar>& q) {
          return VectorX<Scalar>(q - c.z.q - c.dt * sys.dH_p(q, c.z.p));
        },
        c.z.q, cfg, &stats);
  }
  const VectorX<Scalar> p_next =
      c.z.p - c.dt * sys.dH_q(q_next, c.z.p) - c.noise_q(q_next, c.z.p);
  return {PhaseState<Scalar>(q_next, p_next), stats};
}

template <typename Scalar>
SprkStepResult<Scalar> rect_trapezoidal_step(const FastContext<Scalar>& c,
                                             const SolverConfig& cfg) {
  const auto& sys = c.sys;
  const VectorX<Scalar> p1 = c.z.p - Scalar(0.5) * c.noise_q(c.z.q, c.z.p);
  SolveStats stats = explicit_stats();
  VectorX<Scalar> q_next;
  if (sys.separable) {
    q_next = c.z.q + c.dt * sys.dH_p(c.z.q, p1);
  } else {
    q_next = newton_solve<Scalar>(
        [&](const VectorX<Scalar>& q) {
          return VectorX<Scalar>(q - c.z.q - c.dt * sys.dH_p(q, p1));
        },
        c.z.q, cfg, &stats);
  }
  const VectorX<Scalar> p_next = c.z.p - c.dt * sys.dH_q(q_next, p1) -
                                 Scalar(0.5) * c.noise_q(c.z.q, p1) -
                                 Scalar(0.5) * c.noise_q(q_next, p1);
  return {PhaseState<Scalar>(q_next, p_next), stats};
}

template <typename Scalar>
SprkStepResult<Scalar> rect_midpoint_step(const FastContext<Scalar>& c, const SolverConfig& cfg) {
  const auto& sys = c.sys;
  SolveStats stats = explicit_stats();
  auto p_stage = [&](const VectorX<Scalar>& q_next) {
    const VectorX<Scalar> qm = Scalar(0.5) * (c.z.q + q_next);
    return VectorX<Scalar>(c.z.p - Scalar(0.5) * c.noise_q(qm, c.z.p));
  };
  VectorX<Scalar> q_next;
  if (sys.separable && sys.additive_noise) {
    const VectorX<Scalar> p1 = p_stage(c.z.q);  // dh_q constant: midpoint value is immaterial
    q_next = c.z.q + c.dt * sys.dH_p(c.z.q, p1);
  } else {
    q_next = newton_solve<Scalar>(
        [&](const VectorX<Scalar>& q) {
          return VectorX<Scalar>(q - c.z.q - c.dt * sys.dH_p(q, p_stage(q)));
        },
        c.z.q, cfg, &stats);
  }
  const VectorX<Scalar> p1 = p_stage(q_next);
  const VectorX<Scalar> qm = Scalar(0.5) * (c.z.q + q_next);
  const VectorX<Scalar> p_next = c.z.p - c.dt * sys.dH_q(q_next, p1) - c.noise_q(qm, p1);
  return {PhaseState<Scalar>(q_next, p_next), stats};
}

template <typename Scalar>
SprkStepResult<Scalar> verlet_rectangle_step(const FastContext<Scalar>& c,
                                             const SolverConfig& cfg) {
  const auto& sys = c.sys;
  const Scalar half = Scalar(0.5);
  SolveStats stats = explicit_stats();

  VectorX<Scalar> p1;
  if (sys.separable) {
    p1 = c.z.p - half * c.dt * sys.dH_q(c.z.q, c.z.p);
  } else {
    SolveStats s1;
    p1 = newton_solve<Scalar>(
        [&](const VectorX<Scalar>& p) {
          return VectorX<Scalar>(p - c.z.p + half * c.dt * sys.dH_q(c.z.q, p));
        },
        c.z.p, cfg, &s1);
    stats = merge(stats, s1);
  }
  VectorX<Scalar> q_next;
  if (sys.separable) {
    q_next = c.z.q + c.dt * sys.dH_p(c.z.q, p1);
  } else {
    const VectorX<Scalar> fixed = c.z.q + half * c.dt * sys.dH_p(c.z.q, p1);
    SolveStats s2;
    q_next = newton_solve<Scalar>(
        [&](const VectorX<Scalar>& q) {
          return VectorX<Scalar>(q - fixed - half * c.dt * sys.dH_p(q, p1));
        },
        c.z.q, cfg, &s2);
    stats = merge(stats, s2);
  }
  const VectorX<Scalar> p_next =
      p1 - half * c.dt * sys.dH_q(q_next, p1) - c.noise_q(q_next, p1);
  return {PhaseState<Scalar>(q_next, p_next), stats};
}

template <typename Scalar>
SprkStepResult<Scalar> midpoint_trapezoidal_step(const FastContext<Scalar>& c,
                                                 const SolverConfig& cfg) {
  const auto& sys = c.sys;
  const Scalar half = Scalar(0.5), quarter = Scalar(0.25);
  const Eigen::Index n = c.n();
  SolveStats stats;
  const VectorX<Scalar> noise_at_qk = c.noise_q(c.z.q, c.z.p);

  if (sys.separable) {
    auto pieces = [&](const VectorX<Scalar>& q_next) {
      const VectorX<Scalar> qm = half * (c.z.q + q_next);
      const VectorX<Scalar> noise_at_qn = c.noise_q(q_next, c.z.p);
      const VectorX<Scalar> p_next = c.z.p - c.dt * sys.dH_q(qm, c.z.p) -
                                     half * (noise_at_qk + noise_at_qn);
      const VectorX<Scalar> p1 =
          half * (c.z.p + p_next) + quarter * (noise_at_qn - noise_at_qk);
      return std::pair{p_next, p1};
    };
    const VectorX<Scalar> q_next = newton_solve<Scalar>(
        [&](const VectorX<Scalar>& q) {
          const VectorX<Scalar> qm = half * (c.z.q + q);
          const VectorX<Scalar> p1 = pieces(q).second;
          return VectorX<Scalar>(q - c.z.q - c.dt * sys.dH_p(qm, p1));
        },
        c.z.q, cfg, &stats);
    return {PhaseState<Scalar>(q_next, pieces(q_next).first), stats};
  }

  const VectorX<Scalar> x = newton_solve<Scalar>(
      [&](const VectorX<Scalar>& zn) {
        const VectorX<Scalar> qn = zn.head(n), pn = zn.tail(n);
        const VectorX<Scalar> qm = half * (c.z.q + qn);
        const VectorX<Scalar> noise_at_qn = c.noise_q(qn, pn);
        const VectorX<Scalar> p1 = half * (c.z.p + pn) + quarter * (noise_at_qn - noise_at_qk);
        VectorX<Scalar> r(2 * n);
        r.head(n) = qn - c.z.q - c.dt * sys.dH_p(qm, p1);
        r.tail(n) = pn - c.z.p + c.dt * sys.dH_q(qm, p1) + half * (noise_at_qk + noise_at_qn);
        return r;
      },
      c.z.flat(), cfg, &stats);
  return {PhaseState<Scalar>::from_flat(x), stats};
}

template <typename Scalar>
SprkStepResult<Scalar> trapezoidal_midpoint_step(const FastContext<Scalar>& c,
                                                 const SolverConfig& cfg) {
  const auto& sys = c.sys;
  const Scalar half = Scalar(0.5);
  const Eigen::Index n = c.n();
  SolveStats stats;

  if (sys.separable && sys.additive_noise) {
    // P_1 = P_2 with a constant noise gradient: everything is explicit.
    const VectorX<Scalar> p1 = c.z.p - half * c.dt * sys.dH_q(c.z.q, c.z.p) -
                               half * c.noise_q(c.z.q, c.z.p);
    const VectorX<Scalar> q_next = c.z.q + c.dt * sys.dH_p(c.z.q, p1);
    const VectorX<Scalar> qm = half * (c.z.q + q_next);
    const VectorX<Scalar> p_next =
        p1 - half * c.dt * sys.dH_q(q_next, p1) - half * c.noise_q(qm, p1);
    return {PhaseState<Scalar>(q_next, p_next), explicit_stats()};
  }

  VectorX<Scalar> start(3 * n);
  start.segment(0, n) = c.z.p;
  start.segment(n, n) = c.z.p;
  start.segment(2 * n, n) = c.z.q;
  const VectorX<Scalar> x = newton_solve<Scalar>(
      [&](const VectorX<Scalar>& u) {
        const VectorX<Scalar> p1 = u.segment(0, n), p2 = u.segment(n, n),
                              qn = u.segment(2 * n, n);
        const VectorX<Scalar> qm = half * (c.z.q + qn);
        VectorX<Scalar> r(3 * n);
        r.segment(0, n) = half * (p1 + p2) + half * c.dt * sys.dH_q(c.z.q, p1) +
                          half * c.noise_q(qm, p1) - c.z.p;
        r.segment(n, n) = qn - c.z.q - c.dt * sys.dH_p(c.z.q, p1);
        r.segment(2 * n, n) = qn - c.z.q - c.dt * sys.dH_p(qn, p2);
        return r;
      },
      start, cfg, &stats);
  const VectorX<Scalar> p1 = x.segment(0, n), p2 = x.segment(n, n), q_next = x.segment(2 * n, n);
  const VectorX<Scalar> qm = half * (c.z.q + q_next);
  const VectorX<Scalar> p_next =
      half * (p1 + p2) - half * c.dt * sys.dH_q(q_next, p2) - half * c.noise_q(qm, p2);
  return {PhaseState<Scalar>(q_next, p_next), stats};
}

}  // namespace detail

/// Structure-exploiting step of a registry scheme: the reduced solve sequences
/// where the method decouples, the explicit formulas where it degenerates to
/// one, and the generic stage solve otherwise. Identical (to solver tolerance)
/// to driving the generic Galerkin/SPRK stepper with the built descriptor.
template <typename Scalar>
SprkStepResult<Scalar> fast_step(
    SchemeId id, const System<Scalar>& sys, const PhaseState<Scalar>& z_k, Scalar dt,
    const VectorX<Scalar>& dw, const SolverConfig& cfg = {},
    const std::optional<IncrementPair<std::type_identity_t<Scalar>>>& inc = std::nullopt) {
  const SchemeDescriptor<Scalar> desc = build_scheme<Scalar>(id);
  if (desc.caps.requires_h_independent_of_p && sys.channels > 0 && !sys.h_independent_of_p)
    throw ConfigError("fast_step: " + to_string(id) + " requires h = h(q)");
  if (!desc.caps.supports_multichannel && sys.channels > 1)
    throw ConfigError("fast_step: " + to_string(id) + " supports a single noise channel only");
  if (id == SchemeId::SPRK32Milstein) {
    if (!inc || !inc->has_dz)
      throw ConfigError("fast_step: SPRK32Milstein needs a (dW, dZ) increment pair");
    return sprk32_step(*desc.sprk32, sys, z_k, dt, *inc, cfg);
  }
  if (dw.size() != sys.channels)
    throw ArgumentError("fast_step: dW must carry one increment per noise channel");

  const detail::FastContext<Scalar> c{sys, z_k, dt, dw};
  const Scalar sixth = Scalar(1) / 6, third = Scalar(1) / 3, half = Scalar(0.5);

  switch (id) {
    case SchemeId::P1N1Q2Gau:
      return detail::midpoint_step(c, cfg);
    case SchemeId::P2N2Q2Lob:
      return detail::stormer_verlet_step(c, cfg);
    case SchemeId::P1N2Q2Lob:
      return detail::trapezoidal_step(c, cfg);
    case SchemeId::P1N3Q4Lob:
      if (sys.separable)
        return detail::separable_s1_three_node_step<Scalar>(
            c, {Scalar(0), half, Scalar(1)}, {sixth, third, Scalar(0)},
            {Scalar(0), third, sixth}, cfg);
      break;
    case SchemeId::P1N3Q4Mil:
      if (sys.separable)
        return detail::separable_s1_three_node_step<Scalar>(
            c, {Scalar(0.25), half, Scalar(0.75)}, {half, -sixth, sixth},
            {sixth, -sixth, half}, cfg);
      break;
    case SchemeId::P1N2Q2Otr:
      return detail::open_trapezoidal_s1_step(c, cfg);
    case SchemeId::P2N2Q2Otr: {
      static const SprkTableau<Scalar> tableau =
          galerkin_to_sprk(*build_scheme<Scalar>(SchemeId::P2N2Q2Otr).galerkin);
      return sprk_step(tableau, sys, z_k, dt, dw, cfg);
    }
    case SchemeId::P1N1Q1Rec:
      return detail::symplectic_euler_step(c, cfg);
    case SchemeId::P1N1Q1RecN2Q2Lob:
      return detail::rect_trapezoidal_step(c, cfg);
    case SchemeId::P1N1Q1RecN1Q2Gau:
      return detail::rect_midpoint_step(c, cfg);
    case SchemeId::P2N2Q2LobN1Q1Rec:
      return detail::verlet_rectangle_step(c, cfg);
    case SchemeId::P1N1Q2GauN2Q2Lob:
      return detail::midpoint_trapezoidal_step(c, cfg);
    case SchemeId::P1N2Q2LobN1Q2Gau:
      return detail::trapezoidal_midpoint_step(c, cfg);
    default:
      break;
  }

  // General (non-separable) Simpson/Milne systems: generic stage solve.
  auto result = galerkin_step(*desc.galerkin, sys, z_k, dt, dw, cfg);
  return {result.state, result.stats};
}

}  // namespace svi
