#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace vetime {

/// Thrown when an input violates an operation's preconditions.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when an internal invariant is broken (a bug, not a user error).
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

inline void expect(bool cond, const std::string& msg) {
  if (!cond) throw InternalError(msg);
}

constexpr double kPi = 3.14159265358979323846;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic RNG with self-contained distributions. std::mt19937_64 is
/// fully specified by the standard, and the uniform/normal transforms below
/// avoid the implementation-defined behavior of <random> distributions, so
/// streams are reproducible across compilers.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix64(seed)) {}

  std::uint64_t next_bits() {
    state_ = splitmix64(state_ + 0x632be59bd9b4e019ULL);
    return state_;
  }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_bits() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Inclusive integer range.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi <= lo) return lo;
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_bits() % span);
  }

  /// Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  double normal(double mean, double std) { return mean + std * normal(); }

  /// Normal truncated to +/- 2 std, the usual transformer init.
  double truncated_normal(double std) {
    for (;;) {
      const double z = normal();
      if (std::abs(z) <= 2.0) return z * std;
    }
  }

  /// Derive an independent stream, e.g. one per series index.
  Rng fork(std::uint64_t stream) const {
    return Rng(splitmix64(state_ ^ splitmix64(stream + 0x9e3779b97f4a7c15ULL)));
  }

 private:
  std::uint64_t state_;
};

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace vetime
