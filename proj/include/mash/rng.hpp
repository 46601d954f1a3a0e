#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace mash {

/// Portable seeded RNG. std::mt19937_64 output is fixed by the standard;
/// the standard distributions are not, so the helpers below are written out.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

  /// Index drawn proportionally to non-negative weights.
  template <typename W>
  std::size_t categorical(std::span<const W> weights) {
    double total = 0.0;
    for (W w : weights) {
      total += static_cast<double>(w);
    }
    double u = uniform() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      u -= static_cast<double>(weights[i]);
      if (u < 0.0) {
        return i;
      }
    }
    return weights.empty() ? 0 : weights.size() - 1;
  }

  void normal_fill(std::span<float> out, double stddev) {
    for (auto& v : out) {
      double u1 = uniform();
      while (u1 <= 0.0) {
        u1 = uniform();
      }
      const double u2 = uniform();
      v = static_cast<float>(stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2));
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// Stable 64-bit FNV-1a, used to derive per-item seeds and hashed features.
constexpr std::uint64_t fnv1a(std::string_view text, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Mixes a master seed with a stream id (splitmix64 finalizer).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace mash
