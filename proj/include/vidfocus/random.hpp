#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "vidfocus/matrix.hpp"

namespace vidfocus {

// Seeded generator with distribution code written out by hand, so values are
// identical across standard library implementations (std::normal_distribution
// is implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t next_u64() { return engine_(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * n) % n; }

  // Box-Muller, one draw per call.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return mean + stddev * std::sqrt(-2.0 * std::log(u1)) *
                      std::cos(2.0 * std::numbers::pi * u2);
  }

  Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev = 1.0) {
    std::vector<double> data(rows * cols);
    for (double& v : data) v = normal(0.0, stddev);
    return Matrix(rows, cols, std::move(data));
  }

  Matrix uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi) {
    std::vector<double> data(rows * cols);
    for (double& v : data) v = uniform(lo, hi);
    return Matrix(rows, cols, std::move(data));
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace vidfocus
