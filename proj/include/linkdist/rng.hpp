#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>

namespace linkdist {

// Counter-based stream: the n-th draw is a pure function of (key, n), so a
// run is bit-reproducible from its seed regardless of scheduling.
class RngStream {
 public:
  RngStream() = default;
  RngStream(uint64_t seed, uint64_t stream_id)
      : key_(mix(seed ^ mix(stream_id + 0x632BE59BD9B4E019ULL))) {}

  static uint64_t mix(uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  uint64_t next_u64() { return mix(key_ + 0x9E3779B97F4A7C15ULL * counter_++); }

  // [0, 1) with 24 bits of resolution.
  float uniform_float() { return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f; }
  // [0, 1) with 53 bits of resolution.
  double uniform_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Unbiased integer in [0, n), n > 0 (Lemire's multiply-shift with rejection).
  uint64_t uniform_index(uint64_t n) {
    uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto low = static_cast<uint64_t>(m);
    if (low < n) {
      const uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * n;
        low = static_cast<uint64_t>(m);
      }
    }
    return static_cast<uint64_t>(m >> 64);
  }

  double normal() {
    double u1 = uniform_double();
    while (u1 <= 0.0) u1 = uniform_double();
    const double u2 = uniform_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  uint64_t counter() const { return counter_; }

 private:
  uint64_t key_ = 0;
  uint64_t counter_ = 0;
};

// Stream ids used by one training run.
enum class Stream : uint64_t { kInit = 1, kDropout, kShuffle, kNegatives, kSplit, kSbm };

inline RngStream make_stream(uint64_t seed, Stream s) { return RngStream(seed, static_cast<uint64_t>(s)); }

}  // namespace linkdist
