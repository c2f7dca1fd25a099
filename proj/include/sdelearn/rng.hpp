#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace sdelearn {

/// splitmix64 mixing step; used to derive independent stream seeds from a
/// master seed. Fully specified arithmetic, so stream derivation is portable.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Stream ids for the documented seed-splitting rule: every consumer of
/// randomness in a run draws from Rng(split_seed(master, stream)).
namespace streams {
inline constexpr std::uint64_t drift_init = 1;
inline constexpr std::uint64_t density_init = 2;
inline constexpr std::uint64_t collocation = 3;
inline constexpr std::uint64_t observation_noise = 4;
inline constexpr std::uint64_t trajectory = 5;
inline constexpr std::uint64_t observation_points = 6;
}  // namespace streams

inline std::uint64_t split_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(master ^ splitmix64(stream));
}

/// Deterministic RNG. Uniforms come straight from mt19937_64 output (exactly
/// 53 mantissa bits), normals from Box-Muller; both avoid the
/// implementation-defined std::*_distribution wrappers so identical seeds give
/// identical streams on any standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform on [0, 1).
  double uniform01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller (pairs cached).
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = 1.0 - uniform01();  // (0, 1]
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  /// Standard normal conditioned on |z| <= cut (rejection).
  double truncated_normal(double cut = 2.0) {
    for (;;) {
      double z = normal();
      if (std::abs(z) <= cut) return z;
    }
  }

 private:
  std::mt19937_64 gen_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace sdelearn
