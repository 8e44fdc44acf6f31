#pragma once

#include <cmath>
#include <cstdint>

#include "sbtm/types.hpp"

namespace sbtm {

/// Counter-based random streams. Every draw is a pure function of
/// (seed, purpose, step, lane, counter), so the same configuration produces
/// bit-identical noise no matter how evaluation is ordered or batched.
namespace rng {

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Stream purposes; part of the key so subsystems never share draws.
enum class Stream : std::uint64_t {
  InitSamples = 1,
  WeightInit = 2,
  LossNoise = 3,
  SdeNoise = 4,
  Langevin = 5,
  Divergence = 6,
  FisherSde = 7,
  Scratch = 8,
};

class CounterRng {
 public:
  CounterRng(std::uint64_t seed, Stream purpose, std::uint64_t step = 0,
             std::uint64_t lane = 0) {
    std::uint64_t h = mix64(seed ^ 0x243f6a8885a308d3ULL);
    h = mix64(h ^ static_cast<std::uint64_t>(purpose));
    h = mix64(h ^ step);
    base_ = mix64(h ^ lane);
  }

  /// i-th uniform in (0,1); never returns exactly 0 or 1.
  double uniform(std::uint64_t i) const {
    const std::uint64_t bits = mix64(base_ + i);
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
  }

  /// i-th standard normal (Box-Muller over the (2i, 2i+1) uniforms).
  double normal(std::uint64_t i) const {
    const double u1 = uniform(2 * i);
    const double u2 = uniform(2 * i + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  Vector normal_vector(Index n, std::uint64_t offset = 0) const {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = normal(offset + static_cast<std::uint64_t>(i));
    return v;
  }

  /// rows x cols matrix of standard normals, filled column-major.
  Matrix normal_matrix(Index rows, Index cols, std::uint64_t offset = 0) const {
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i)
        m(i, j) = normal(offset + static_cast<std::uint64_t>(j * rows + i));
    return m;
  }

  /// Derived seed for a decorrelated child stream.
  std::uint64_t fork(std::uint64_t tag) const { return mix64(base_ ^ mix64(tag)); }

  /// Standard normal truncated to [-width, width] sigma by rejection;
  /// the retry chain stays inside this draw's counter slot.
  double truncated_normal(std::uint64_t i, double width = 2.0) const {
    for (std::uint64_t attempt = 0;; ++attempt) {
      const CounterRng sub(base_, Stream::Scratch, i, attempt);
      const double z = sub.normal(0);
      if (std::abs(z) <= width) return z;
    }
  }

 private:
  CounterRng() = default;
  std::uint64_t base_ = 0;
};

}  // namespace rng
}  // namespace sbtm
