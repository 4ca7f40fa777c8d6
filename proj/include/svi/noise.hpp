#pragma once

#include "svi/phase.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <optional>
#include <random>
#include <string>

namespace svi {

/// Wiener increment over one step, optionally paired with the time integral
/// dZ = int_{t_k}^{t_{k+1}} (W(t) - W(t_k)) dt of the same step.
template <typename Scalar>
struct IncrementPair {
  Scalar dw = 0;
  Scalar dz = 0;
  bool has_dz = false;
};

/// Joint sample (dW, dZ) over a step of size dt from two independent standard
/// normals: dW = chi sqrt(dt), dZ = (1/2) dt^{3/2} (chi + eta/sqrt(3)).
template <typename Scalar>
IncrementPair<Scalar> increment_from_normals(Scalar chi, Scalar eta, Scalar dt) {
  using std::sqrt;
  IncrementPair<Scalar> inc;
  inc.dw = chi * sqrt(dt);
  inc.dz = Scalar(0.5) * dt * sqrt(dt) * (chi + eta / sqrt(Scalar(3)));
  inc.has_dz = true;
  return inc;
}

/// Clamp an increment to [-bound, bound].
template <typename Scalar>
Scalar truncate_increment(Scalar dw, Scalar bound) {
  if (bound <= Scalar(0)) throw ArgumentError("truncate_increment: bound must be positive");
  if (dw > bound) return bound;
  if (dw < -bound) return -bound;
  return dw;
}

/// Per-step Wiener increments of M independent channels over K uniform steps.
/// Immutable after creation; a single path may be shared across threads.
template <typename Scalar>
struct WienerPath {
  Scalar dt = 0;
  std::uint64_t seed = 0;
  MatrixX<Scalar> dw;                  // K x M
  std::optional<MatrixX<Scalar>> dz;   // K x M when sampled with dZ

  Eigen::Index steps() const { return dw.rows(); }
  Eigen::Index channels() const { return dw.cols(); }
  bool has_dz() const { return dz.has_value(); }

  IncrementPair<Scalar> at(Eigen::Index k, Eigen::Index m = 0) const {
    IncrementPair<Scalar> inc;
    inc.dw = dw(k, m);
    if (dz) {
      inc.dz = (*dz)(k, m);
      inc.has_dz = true;
    }
    return inc;
  }

  /// W(T) per channel (partial sums of dW define the path; W(0) = 0).
  VectorX<Scalar> terminal_value() const { return dw.colwise().sum().transpose(); }
};

/// Sample a path of K steps of size dt with M channels. Identical arguments
/// reproduce bitwise-identical increments. The dZ draws interleave with the
/// dW draws, so `with_dz` changes the stream layout.
template <typename Scalar>
WienerPath<Scalar> sample_path(std::uint64_t seed, Eigen::Index n_steps, Scalar dt,
                               Eigen::Index channels = 1, bool with_dz = false) {
  if (n_steps < 1) throw ArgumentError("sample_path: need at least one step");
  if (!(dt > Scalar(0))) throw ArgumentError("sample_path: dt must be positive");
  if (channels < 1) throw ArgumentError("sample_path: need at least one channel");

  WienerPath<Scalar> path;
  path.dt = dt;
  path.seed = seed;
  path.dw.resize(n_steps, channels);
  if (with_dz) path.dz.emplace(n_steps, channels);

  std::mt19937_64 gen(seed);
  std::normal_distribution<Scalar> normal(Scalar(0), Scalar(1));
  for (Eigen::Index k = 0; k < n_steps; ++k) {
    for (Eigen::Index m = 0; m < channels; ++m) {
      const Scalar chi = normal(gen);
      if (with_dz) {
        const Scalar eta = normal(gen);
        const auto inc = increment_from_normals(chi, eta, dt);
        path.dw(k, m) = inc.dw;
        (*path.dz)(k, m) = inc.dz;
      } else {
        path.dw(k, m) = chi * std::sqrt(dt);
      }
    }
  }
  return path;
}

/// Merge consecutive groups of `factor` steps into single steps of size
/// factor*dt. dW adds; dZ over a merged pair [A][B] is dZ_A + dZ_B + dW_A * dt_B,
/// applied left-associatively across the group.
template <typename Scalar>
WienerPath<Scalar> coarsen(const WienerPath<Scalar>& path, Eigen::Index factor) {
  if (factor < 1 || path.steps() % factor != 0)
    throw ArgumentError("coarsen: factor must divide the number of steps");
  if (factor == 1) return path;

  WienerPath<Scalar> out;
  out.dt = path.dt * Scalar(factor);
  out.seed = path.seed;
  const Eigen::Index merged = path.steps() / factor;
  out.dw.resize(merged, path.channels());
  if (path.dz) out.dz.emplace(merged, path.channels());

  for (Eigen::Index m = 0; m < path.channels(); ++m) {
    for (Eigen::Index block = 0; block < merged; ++block) {
      Scalar w = 0, z = 0;
      for (Eigen::Index i = 0; i < factor; ++i) {
        const Eigen::Index k = block * factor + i;
        if (path.dz) z += (*path.dz)(k, m) + w * path.dt;
        w += path.dw(k, m);
      }
      out.dw(block, m) = w;
      if (out.dz) (*out.dz)(block, m) = z;
    }
  }
  return out;
}

/// Binary path dump: header (seed u64, K u64, dt f64, M u32, with_dz u8),
/// then the dW block and, if present, the dZ block, both row-major 64-bit
/// floats, little-endian.
inline void save_path(const WienerPath<double>& path, const std::string& filename) {
  std::FILE* f = std::fopen(filename.c_str(), "wb");
  if (!f) throw std::runtime_error("save_path: cannot open " + filename);
  const std::uint64_t k = static_cast<std::uint64_t>(path.steps());
  const std::uint32_t m = static_cast<std::uint32_t>(path.channels());
  const std::uint8_t z = path.dz ? 1 : 0;
  bool ok = std::fwrite(&path.seed, sizeof path.seed, 1, f) == 1 &&
            std::fwrite(&k, sizeof k, 1, f) == 1 &&
            std::fwrite(&path.dt, sizeof path.dt, 1, f) == 1 &&
            std::fwrite(&m, sizeof m, 1, f) == 1 && std::fwrite(&z, sizeof z, 1, f) == 1;
  for (Eigen::Index row = 0; ok && row < path.steps(); ++row)
    for (Eigen::Index col = 0; ok && col < path.channels(); ++col)
      ok = std::fwrite(&path.dw(row, col), sizeof(double), 1, f) == 1;
  if (path.dz)
    for (Eigen::Index row = 0; ok && row < path.steps(); ++row)
      for (Eigen::Index col = 0; ok && col < path.channels(); ++col)
        ok = std::fwrite(&(*path.dz)(row, col), sizeof(double), 1, f) == 1;
  std::fclose(f);
  if (!ok) throw std::runtime_error("save_path: short write to " + filename);
}

inline WienerPath<double> load_path(const std::string& filename) {
  std::FILE* f = std::fopen(filename.c_str(), "rb");
  if (!f) throw std::runtime_error("load_path: cannot open " + filename);
  WienerPath<double> path;
  std::uint64_t k = 0;
  std::uint32_t m = 0;
  std::uint8_t z = 0;
  bool ok = std::fread(&path.seed, sizeof path.seed, 1, f) == 1 &&
            std::fread(&k, sizeof k, 1, f) == 1 &&
            std::fread(&path.dt, sizeof path.dt, 1, f) == 1 &&
            std::fread(&m, sizeof m, 1, f) == 1 && std::fread(&z, sizeof z, 1, f) == 1;
  if (ok) {
    path.dw.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
    if (z) path.dz.emplace(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
    for (Eigen::Index row = 0; ok && row < path.steps(); ++row)
      for (Eigen::Index col = 0; ok && col < path.channels(); ++col)
        ok = std::fread(&path.dw(row, col), sizeof(double), 1, f) == 1;
    if (path.dz)
      for (Eigen::Index row = 0; ok && row < path.steps(); ++row)
        for (Eigen::Index col = 0; ok && col < path.channels(); ++col)
          ok = std::fread(&(*path.dz)(row, col), sizeof(double), 1, f) == 1;
  }
  std::fclose(f);
  if (!ok) throw std::runtime_error("load_path: truncated or unreadable file " + filename);
  return path;
}

/// SplitMix64 finalizer; used to derive independent per-trial streams.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Stream seed for trial `index` of a run seeded with `seed`; stable under any
/// parallel scheduling of trials.
inline std::uint64_t trial_seed(std::uint64_t seed, std::uint64_t index) {
  return mix64(mix64(seed) ^ mix64(index + 1));
}

using WienerPathd = WienerPath<double>;
using IncrementPaird = IncrementPair<double>;

}  // namespace svi
