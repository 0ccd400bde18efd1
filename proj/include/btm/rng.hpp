#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace btm {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seeded random stream. All stochastic operations take an explicit Rng so
/// identical (inputs, seed) always reproduce the same result. Independent
/// substreams are derived with next_seed() + derive_rng().
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)) {}

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double normal(double mean = 0.0, double sd = 1.0) {
    std::normal_distribution<double> d(mean, sd);
    return d(eng_);
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Binomial draw; p outside (0,1) resolved without consuming the engine.
  int binomial(int n, double p) {
    if (n <= 0 || p <= 0.0) return 0;
    if (p >= 1.0) return n;
    std::binomial_distribution<int> d(n, p);
    return d(eng_);
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    std::uint64_t lim = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = eng_();
    } while (v >= lim);
    return v % n;
  }

  /// Fresh salt for deriving substreams; advances this stream.
  std::uint64_t next_seed() { return eng_(); }

 private:
  std::mt19937_64 eng_;
};

/// Independent stream for item `index` under a common salt.
inline Rng derive_rng(std::uint64_t salt, std::uint64_t index) {
  return Rng(splitmix64(salt + 0x9E3779B97F4A7C15ULL * (index + 1)));
}

/// Fisher-Yates shuffle pinned to this Rng (not std::shuffle) so the
/// permutation is a stable function of the seed.
template <class T>
void shuffle_indices(std::vector<T>& xs, Rng& rng) {
  for (std::size_t i = xs.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(xs[i - 1], xs[j]);
  }
}

}  // namespace btm
