#include "lab/rng.hpp"

#include <cmath>
#include <numbers>

#include "lab/errors.hpp"

namespace lab::numerics {

namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer (Steele, Lea, Flood 2014).
std::uint64_t mix64(std::uint64_t z) noexcept {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

}  // namespace

SeededRng::SeededRng(std::uint64_t seed) noexcept : key_(seed) {}

SeededRng SeededRng::substream(std::uint64_t index) const noexcept {
  return SeededRng(mix64(key_ + kGamma + mix64(index ^ 0xD1B54A32D192ED03ULL)));
}

std::uint64_t SeededRng::next_u64() noexcept {
  counter_ += 1;
  return mix64(key_ + counter_ * kGamma);
}

double SeededRng::next_double() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::next_gaussian() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_gaussian_;
  }
  // u1 in (0, 1] keeps the log finite.
  const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  const double u2 = next_double();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_gaussian_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::size_t SeededRng::next_index(std::size_t bound) {
  if (bound == 0) fail(ErrorKind::InvalidDimension, "next_index requires bound >= 1");
  const unsigned __int128 wide = static_cast<unsigned __int128>(next_u64()) *
                                 static_cast<unsigned __int128>(bound);
  return static_cast<std::size_t>(wide >> 64);
}

}  // namespace lab::numerics
