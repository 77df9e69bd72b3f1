#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace l2g {

// Counter-based SplitMix64. Output k of a stream keyed by `key` is
// mix64(key + k * 0x9E3779B97F4A7C15), with mix64 the SplitMix64 finalizer
// (shifts 30/27/31, multipliers 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB).
// derive(i) keys a child stream with mix64(key ^ mix64(i + 1)), so streams
// can be handed out by index without touching the parent's counter.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : key_(seed) {}

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Unbiased integer in [0, n).
  std::size_t index(std::size_t n);
  // Standard normal via Box-Muller; consumes two outputs per call.
  double normal();

  Rng derive(std::uint64_t stream) const;

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t z);

// First `take` entries of a Fisher-Yates shuffle of 0..n-1.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t take, Rng& rng);

}  // namespace l2g
