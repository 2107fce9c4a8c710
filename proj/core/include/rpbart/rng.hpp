#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace rpbart {

/// SplitMix64 finalizer; used to derive independent per-task seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Random source passed explicitly to every stochastic routine.
///
/// Distribution objects are constructed per call so that no cached state
/// (e.g. the spare normal deviate) leaks between draws. Streams are
/// therefore a pure function of the seed and the call sequence.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 1) : engine_(seed) {}

  /// Uniform on [0, 1).
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

  /// Uniform on the open interval (0, 1).
  double uniform_open() {
    double u = uniform();
    while (u <= 0.0) u = uniform();
    return u;
  }

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  double normal(double mean, double sd) { return mean + sd * normal(); }

  double gamma(double shape, double scale = 1.0) {
    return std::gamma_distribution<double>(shape, scale)(engine_);
  }

  double chi_square(double dof) { return gamma(0.5 * dof, 2.0); }

  double beta(double a, double b) {
    const double x = gamma(a);
    const double y = gamma(b);
    return x / (x + y);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace rpbart
