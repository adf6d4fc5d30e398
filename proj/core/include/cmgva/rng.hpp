#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

#include <Eigen/Core>

namespace cmgva {

// Deterministic random source. All draws are explicit conversions of raw
// mt19937_64 output; the <random> distribution classes are avoided because
// their streams are implementation defined and the fitting pipeline promises
// bit-identical output for a fixed seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  // Uniform on (0, 1]. The top 53 bits give a uniform integer in [0, 2^53);
  // adding one before scaling keeps log(uniform()) finite.
  double uniform() {
    return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the sine variate of each pair is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.141592653589793238462643383279502884 * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  Eigen::VectorXd normal_vector(Eigen::Index n) {
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) z[i] = normal();
    return z;
  }

  // Index draw from nonnegative (not necessarily normalised) weights by CDF
  // inversion. Throws if the weights sum to zero.
  int categorical(const Eigen::VectorXd& weights) {
    const double total = weights.sum();
    if (!(total > 0.0)) throw std::domain_error("categorical: weights sum to zero");
    double u = uniform() * total;
    for (Eigen::Index k = 0; k < weights.size(); ++k) {
      u -= weights[k];
      if (u <= 0.0) return static_cast<int>(k);
    }
    return static_cast<int>(weights.size() - 1);
  }

  // Independent substream. The child seed mixes the parent seed with the
  // stream id through splitmix64, so distinct ids give streams that do not
  // overlap in practice. Used to give targets and workers their own sources.
  Rng split(std::uint64_t stream) const {
    std::uint64_t x = seed_ ^ (0x9E3779B97F4A7C15ULL * (stream + 1));
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    x = x ^ (x >> 31);
    return Rng(x);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace cmgva
