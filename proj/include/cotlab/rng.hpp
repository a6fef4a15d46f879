#pragma once

#include "cotlab/types.hpp"

#include <cmath>
#include <cstdint>
#include <string_view>

namespace cotlab {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_str(std::string_view s) {
  // FNV-1a, then scrambled so short ids spread over the key space.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(h);
}

/// Builds a stream key from labeled components. Streams derived from
/// distinct component tuples are independent for practical purposes.
struct StreamKey {
  std::uint64_t key = 0;

  explicit StreamKey(std::uint64_t seed) : key(splitmix64(seed ^ 0x5851f42d4c957f2dULL)) {}

  StreamKey with(std::uint64_t v) const {
    StreamKey k = *this;
    k.key = splitmix64(k.key ^ splitmix64(v + 0x9e3779b97f4a7c15ULL));
    return k;
  }
  StreamKey with(std::string_view label) const { return with(hash_str(label)); }
};

/// Counter-based generator: state is (key, counter), so any draw is a pure
/// function of the stream identity. Safe to create one per rollout.
class CounterRng {
 public:
  explicit CounterRng(StreamKey k) : key_(k.key) {}
  explicit CounterRng(std::uint64_t raw_key) : key_(raw_key) {}

  std::uint64_t next_u64() { return splitmix64(key_ + 0x9e3779b97f4a7c15ULL * (++counter_)); }

  /// Uniform in [0, 1) with 53 bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (both values used).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  /// Index sampled from an unnormalized non-negative weight vector.
  Eigen::Index categorical(const Vec& probs) {
    const double total = probs.sum();
    double u = uniform() * total;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
      u -= probs[i];
      if (u < 0.0) return i;
    }
    return probs.size() - 1;  // rounding fell off the end
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace cotlab
