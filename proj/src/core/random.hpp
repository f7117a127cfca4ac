#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "transform.hpp"

namespace boneforge {

// mt19937_64 with distribution code of our own, so sequences are identical
// across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t next() { return engine_(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n; }

  double normal() {
    // Box-Muller; u1 kept away from 0.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  Vec3 unit_vector() {
    for (;;) {
      Vec3 v(normal(), normal(), normal());
      const double n = v.norm();
      if (n > 1e-12) return v / n;
    }
  }

  Mat3 rotation() {
    const Vec3 axis = unit_vector();
    return Eigen::AngleAxisd(uniform(0.0, std::numbers::pi), axis).toRotationMatrix();
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace boneforge
