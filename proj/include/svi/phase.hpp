#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace svi {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Invalid argument passed to a library entry point.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A system/scheme combination (or solver setup) that cannot be run as requested.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure inside a user-supplied Hamiltonian evaluator, tagged with its identity.
class EvaluatorError : public std::runtime_error {
 public:
  EvaluatorError(const std::string& evaluator, const std::string& what)
      : std::runtime_error(evaluator + ": " + what), evaluator_(evaluator) {}
  const std::string& evaluator() const { return evaluator_; }

 private:
  std::string evaluator_;
};

template <typename Scalar>
bool all_finite(const VectorX<Scalar>& v) {
  return v.allFinite();
}

/// Point (q, p) of the canonical phase space R^N x R^N.
template <typename Scalar>
struct PhaseState {
  VectorX<Scalar> q;
  VectorX<Scalar> p;

  PhaseState() = default;

  PhaseState(VectorX<Scalar> q_in, VectorX<Scalar> p_in)
      : q(std::move(q_in)), p(std::move(p_in)) {
    if (q.size() == 0 || q.size() != p.size())
      throw ArgumentError("PhaseState: q and p must have equal positive length");
    if (!all_finite(q) || !all_finite(p))
      throw ArgumentError("PhaseState: entries must be finite");
  }

  /// Scalar convenience constructor for one-dimensional systems.
  PhaseState(Scalar q0, Scalar p0)
      : PhaseState(VectorX<Scalar>::Constant(1, q0), VectorX<Scalar>::Constant(1, p0)) {}

  Eigen::Index dim() const { return q.size(); }

  /// Flattened coordinates (q_1..q_N, p_1..p_N).
  VectorX<Scalar> flat() const {
    VectorX<Scalar> z(2 * dim());
    z.head(dim()) = q;
    z.tail(dim()) = p;
    return z;
  }

  static PhaseState from_flat(const VectorX<Scalar>& z) {
    const Eigen::Index n = z.size() / 2;
    if (2 * n != z.size()) throw ArgumentError("PhaseState::from_flat: odd-length vector");
    return PhaseState(z.head(n), z.tail(n));
  }
};

using PhaseStated = PhaseState<double>;

}  // namespace svi
