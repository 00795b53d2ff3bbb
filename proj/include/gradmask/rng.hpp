#pragma once

#include <cstdint>
#include <vector>

namespace gradmask {

/// SplitMix64 (Steele, Lea & Flood 2014). The whole generator state is one
/// 64-bit word, which checkpoints store verbatim.
///
/// Generator version 1. Any change to next() or the derived draws below must
/// bump kRngVersion, since checkpoints and seeded datasets depend on the
/// exact stream.
inline constexpr int kRngVersion = 1;

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, bound). Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t bound);

  bool bernoulli(double p) { return uniform() < p; }

  /// Derive an independent child stream; the parent advances by one draw.
  SplitMix64 fork() { return SplitMix64(next() ^ 0xD1B54A32D192ED03ULL); }

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

 private:
  std::uint64_t state_;
};

/// Fisher-Yates permutation of [0, n).
std::vector<std::size_t> random_permutation(std::size_t n, SplitMix64& rng);

}  // namespace gradmask
