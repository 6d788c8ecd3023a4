#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace tpsf {

/// Philox4x32-10 block function (Salmon et al., counter-based RNG).
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
  constexpr std::uint64_t kMul0 = 0xD2511F53u, kMul1 = 0xCD9E8D57u;
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += 0x9E3779B9u;
      key[1] += 0xBB67AE85u;
    }
    const std::uint64_t p0 = kMul0 * ctr[0];
    const std::uint64_t p1 = kMul1 * ctr[2];
    ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
  }
  return ctr;
}

/// Counter-based random stream keyed by (seed, stream). Two streams with
/// different keys never share blocks, so per-packet or per-sample streams can
/// be created in any order on any thread and still reproduce exactly.
class CounterRng {
public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (buffered_ == 0)
      refill();
    return buffer_[2 * kBlocks - buffered_--];
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
  /// Uniform in (0, 1].
  double uniform_pos() { return 1.0 - uniform(); }
  /// Standard normal via Box-Muller.
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

private:
  // kBlocks consecutive counters evaluated in lockstep. Each multiply chain is
  // latency bound, so interleaving them multiplies throughput.
  void refill() {
    const auto s0 = static_cast<std::uint32_t>(stream_), s1 = static_cast<std::uint32_t>(stream_ >> 32);
    std::uint32_t x0[kBlocks], x1[kBlocks], x2[kBlocks], x3[kBlocks];
    for (int k = 0; k < kBlocks; ++k) {
      const std::uint64_t c = counter_ + static_cast<std::uint64_t>(k);
      x0[k] = static_cast<std::uint32_t>(c);
      x1[k] = static_cast<std::uint32_t>(c >> 32);
      x2[k] = s0;
      x3[k] = s1;
    }
    std::uint32_t k0 = static_cast<std::uint32_t>(seed_), k1 = static_cast<std::uint32_t>(seed_ >> 32);
    constexpr std::uint64_t kMul0 = 0xD2511F53u, kMul1 = 0xCD9E8D57u;
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        k0 += 0x9E3779B9u;
        k1 += 0xBB67AE85u;
      }
      for (int k = 0; k < kBlocks; ++k) {
        const std::uint64_t p0 = kMul0 * x0[k], p1 = kMul1 * x2[k];
        const std::uint32_t y0 = static_cast<std::uint32_t>(p1 >> 32) ^ x1[k] ^ k0;
        const std::uint32_t y2 = static_cast<std::uint32_t>(p0 >> 32) ^ x3[k] ^ k1;
        x1[k] = static_cast<std::uint32_t>(p1);
        x3[k] = static_cast<std::uint32_t>(p0);
        x0[k] = y0;
        x2[k] = y2;
      }
    }
    counter_ += kBlocks;
    for (int k = 0; k < kBlocks; ++k) {
      buffer_[2 * k] = (static_cast<std::uint64_t>(x1[k]) << 32) | x0[k];
      buffer_[2 * k + 1] = (static_cast<std::uint64_t>(x3[k]) << 32) | x2[k];
    }
    buffered_ = 2 * kBlocks;
  }

  static constexpr int kBlocks = 2;
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint64_t, 2 * kBlocks> buffer_{};
  int buffered_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

/// SplitMix64 finalizer, used to derive independent seeds from structured keys.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return mix64(mix64(mix64(seed) ^ a) ^ (b * 0xD1B54A32D192ED03ULL));
}

/// In-place Fisher-Yates shuffle driven by a CounterRng.
template <typename It> void shuffle(It first, It last, CounterRng &rng) {
  const auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    const auto j = rng.below(i);
    std::swap(first[i - 1], first[j]);
  }
}

} // namespace tpsf
