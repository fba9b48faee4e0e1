#pragma once

#include <cstdint>
#include <cstddef>

namespace lab::numerics {

// Counter-based pseudo-random generator (SplitMix64 output function over a
// 64-bit counter).  Draw k of stream s depends only on (key, k), so Monte-Carlo
// replicate k can be recomputed in isolation and streams can be split across
// threads without locking or draw-order coupling.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) noexcept;

  /// Independent stream keyed by (this stream's key, index).  Derivation does
  /// not consume or depend on the parent's position.
  SeededRng substream(std::uint64_t index) const noexcept;

  std::uint64_t next_u64() noexcept;

  /// Uniform on [0, 1) with 53 random bits.
  double next_double() noexcept;

  /// Standard normal via Box-Muller; the paired deviate is cached.
  double next_gaussian() noexcept;

  /// Uniform on {0, ..., bound-1}; bound must be >= 1.
  std::size_t next_index(std::size_t bound);

  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_gaussian_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace lab::numerics
