#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace delta {

// splitmix64 finalizer; used to derive independent substreams from keys.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_string(std::string_view s) noexcept;

// A reproducible random stream. mt19937_64's output sequence is fixed by the
// standard, and the conversions below avoid the implementation-defined
// std::*_distribution classes, so streams are identical across platforms.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(mix64(seed)) {}

  // Stream keyed by a seed and an ordered list of keys, e.g.
  // (seed, problem, sample) or (seed, repeat, problem).
  static RandomStream keyed(std::uint64_t seed,
                            std::initializer_list<std::uint64_t> keys) {
    std::uint64_t h = mix64(seed);
    for (std::uint64_t k : keys) h = mix64(h ^ mix64(k));
    return RandomStream(h);
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of resolution.
  double next_unit() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, bound) without modulo bias. bound must be > 0.
  std::uint64_t next_below(std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = engine_();
      if (r >= threshold) return r % bound;
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace delta
