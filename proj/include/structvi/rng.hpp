#pragma once

#include <cstdint>
#include <limits>

namespace structvi {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Key of the substream used for sample `sample` of optimizer step `step`.
constexpr std::uint64_t substream_key(std::uint64_t seed, std::uint64_t step,
                                      std::uint64_t sample) noexcept {
  constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
  std::uint64_t k = mix64(seed + kGolden);
  k = mix64(k ^ (step + 0x632be59bd9b4e019ULL));
  return mix64(k ^ (sample + 0x85157af5ULL * kGolden));
}

/// Counter-based generator: the i-th output is a pure function of (key, i),
/// so any substream can be materialized independently of all others.
/// Satisfies UniformRandomBitGenerator.
class CounterStream {
 public:
  using result_type = std::uint64_t;

  explicit CounterStream(std::uint64_t key) noexcept : key_(key) {}
  CounterStream(std::uint64_t seed, std::uint64_t step, std::uint64_t sample) noexcept
      : key_(substream_key(seed, step, sample)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
  }

  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace structvi
