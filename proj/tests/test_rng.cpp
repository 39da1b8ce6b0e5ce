#include "acdiff/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace acdiff;

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.position(), 1000u);
}

TEST(Rng, StreamsDiffer) {
  Rng a = Rng::stream(7, 0), b = Rng::stream(7, 1);
  EXPECT_NE(a.next_u64(), b.next_u64());
}

// Reference xoshiro256** / splitmix64 written out independently.
TEST(Rng, MatchesReferenceXoshiro) {
  std::uint64_t sm = 12345;
  auto splitmix = [&] {
    std::uint64_t z = (sm += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t s[4] = {splitmix(), splitmix(), splitmix(), splitmix()};
  auto rotl = [](std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
  Rng rng(12345);
  for (int i = 0; i < 100; ++i) {
    const std::uint64_t expected = rotl(s[1] * 5, 7) * 9;
    const std::uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = rotl(s[3], 45);
    ASSERT_EQ(rng.next_u64(), expected);
  }
}

TEST(Rng, UniformIntCoversRangeInclusive) {
  Rng rng(1);
  int seen[6] = {};
  for (int i = 0; i < 6000; ++i) {
    const auto v = rng.uniform_int(1, 6);
    ASSERT_GE(v, 1);
    ASSERT_LE(v, 6);
    ++seen[v - 1];
  }
  for (int c : seen) EXPECT_GT(c, 850);
  EXPECT_EQ(rng.uniform_int(4, 4), 4);
}

TEST(Rng, NormalMoments) {
  Rng rng(99);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    ASSERT_TRUE(std::isfinite(x));
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
}

TEST(Rng, NormalIsBoxMullerCosineBranch) {
  Rng a(5), b(5);
  const double u1 = b.uniform(), u2 = b.uniform();
  EXPECT_EQ(a.normal(), std::sqrt(-2.0 * std::log(1.0 - u1)) * std::cos(2.0 * std::numbers::pi * u2));
}
