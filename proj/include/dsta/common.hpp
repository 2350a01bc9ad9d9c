#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsta {

// Shape mismatches between tensors or against a config.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// NaN/Inf escaped an operation, or training diverged.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file or config document.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deterministic RNG. All randomness in the project flows through this so
// that a seed fully determines every artifact. mt19937_64 output is
// standard-specified; the float mappings below are hand-rolled because
// std::uniform_real_distribution is not guaranteed identical across
// library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n). n must be positive.
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(gen_() % n);
  }

  // Box-Muller. Stateless (no cached spare) to keep replay trivial.
  double gaussian(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform01();
    if (u1 < 1e-300) u1 = 1e-300;
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(6.283185307179586477 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

namespace detail {

// Round-trip exact decimal form, used for every double we print to CSV or
// logs so reruns are byte-identical.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

}  // namespace dsta
