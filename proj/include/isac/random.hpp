// Seeded random draws with a platform-independent sequence.
//
// std::normal_distribution is implementation-defined, so Gaussians are
// generated by explicit Box-Muller over mt19937_64 output; identical seeds
// give bit-identical streams everywhere.
#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>

namespace isac {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Uniform on (0, 1); never returns 0 so log() is safe.
  double uniform() {
    const std::uint64_t u = gen_();
    return (static_cast<double>(u >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller, one value per call (pairs cached).
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    spare_ = mag * std::sin(2.0 * M_PI * u2);
    have_spare_ = true;
    return mag * std::cos(2.0 * M_PI * u2);
  }

  // Circularly symmetric complex Gaussian, unit variance (E|z|^2 = 1).
  std::complex<double> cgaussian() {
    const double s = 1.0 / std::sqrt(2.0);
    const double re = gaussian();
    const double im = gaussian();
    return {s * re, s * im};
  }

  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace isac
