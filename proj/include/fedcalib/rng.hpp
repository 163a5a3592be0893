#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace fedcalib {

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Derives an independent stream seed from (base, stream, index). Used so that
// every random decision in the pipeline is tied to an explicit, documented
// seed path instead of a shared global generator.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                                 std::uint64_t index = 0) {
  std::uint64_t s = base;
  std::uint64_t a = splitmix64_next(s);
  s ^= stream * 0xD1B54A32D192ED03ULL;
  std::uint64_t b = splitmix64_next(s);
  s ^= index * 0x8CB92BA72F3D8DD7ULL;
  std::uint64_t c = splitmix64_next(s);
  return a ^ (b + 0x9E3779B97F4A7C15ULL + (c << 6) + (c >> 2));
}

// xoshiro256++ with hand-rolled distributions. The standard library leaves
// normal/gamma sampling implementation-defined, which would break the
// bit-reproducibility contract; everything here is pinned.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& w : state_) w = splitmix64_next(x);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // (0, 1]; safe as a log() argument
  double uniform_pos() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Box-Muller without spare caching; two uniforms per draw.
  double normal() {
    const double u1 = uniform_pos();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
  }

  // Marsaglia-Tsang; alpha < 1 handled via the boosting identity.
  double gamma(double alpha) {
    if (alpha < 1.0) {
      const double u = uniform_pos();
      return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / (3.0 * std::sqrt(d));
    for (;;) {
      double x = 0.0;
      double v = 0.0;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform_pos();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  std::vector<double> dirichlet(double concentration, int k) {
    std::vector<double> out(static_cast<std::size_t>(k));
    double total = 0.0;
    for (auto& g : out) {
      g = gamma(concentration);
      total += g;
    }
    if (total <= 0.0) {
      // Degenerate underflow; fall back to uniform weights.
      for (auto& g : out) g = 1.0 / static_cast<double>(k);
      return out;
    }
    for (auto& g : out) g /= total;
    return out;
  }

  // Inverse-CDF draw over an (approximately) normalized weight vector.
  int categorical(const double* weights, int n) {
    const double u = uniform();
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += weights[i];
      if (u < acc) return i;
    }
    return n - 1;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> state_{};
};

}  // namespace fedcalib
