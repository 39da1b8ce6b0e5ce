#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace acdiff {

/// xoshiro256** seeded through splitmix64.
///
/// Every random draw in the library goes through one of these methods so that
/// any implementation following the same rules reproduces the stream:
///   uniform()     = (next_u64() >> 11) * 2^-53                      in [0, 1)
///   uniform_int() = Lemire multiply-shift with rejection            in [lo, hi]
///   normal()      = sqrt(-2 ln(1 - u1)) * cos(2 pi u2)               (Box-Muller,
///                   two uniforms per draw, the sine half is discarded)
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0);
  /// Independent stream `index` derived from `seed` (used for per-sample streams).
  static Rng stream(std::uint64_t seed, std::uint64_t index);

  std::uint64_t next_u64();
  std::uint64_t operator()() { return next_u64(); }
  static constexpr std::uint64_t min() { return 0; }
  static constexpr std::uint64_t max() { return std::numeric_limits<std::uint64_t>::max(); }

  double uniform();
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal();

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return position_; }
  bool operator==(const Rng& other) const { return state_ == other.state_; }

 private:
  std::array<std::uint64_t, 4> state_{};
  std::uint64_t seed_ = 0;
  std::uint64_t position_ = 0;
};

}  // namespace acdiff
