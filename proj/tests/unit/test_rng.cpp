#include <doctest.h>

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "kdlab/rng.hpp"

using namespace kdlab;

TEST_CASE("xoshiro256** stream for seed 42 matches the reference implementation") {
  constexpr std::array<std::uint64_t, 8> golden{
      0x15780b2e0c2ec716ULL, 0x6104d9866d113a7eULL, 0xae17533239e499a1ULL,
      0xecb8ad4703b360a1ULL, 0xfde6dc7fe2ec5e64ULL, 0xc50da53101795238ULL,
      0xb82154855a65ddb2ULL, 0xd99a2743ebe60087ULL};
  RngState rng(42);
  for (std::uint64_t expected : golden) CHECK(rng.next_u64() == expected);
}

TEST_CASE("uniform takes the top 53 bits") {
  RngState rng(42);
  CHECK(rng.uniform() == 0.08386297105988216);
  CHECK(rng.uniform() == 0.3789802506626686);
  CHECK(rng.uniform() == 0.6800434110281394);
  CHECK(rng.uniform() == 0.9246929453253876);
}

TEST_CASE("Box-Muller pair, cosine branch first") {
  RngState rng(7);
  CHECK(rng.normal() == doctest::Approx(-0.2790239910251981).epsilon(1e-14));
  CHECK(rng.normal() == doctest::Approx(1.5277231859624536).epsilon(1e-14));
}

TEST_CASE("derived seeds and tag hashes are fixed") {
  CHECK(derive_seed(42, 0) == 0x6585889c2eed1019ULL);
  CHECK(derive_seed(42, 1) == 0x910696e6b68fe4f7ULL);
  CHECK(tag_hash("noise") == 0x6c092771d20768d1ULL);
}

TEST_CASE("fork depends on the seed, not on the position in the stream") {
  RngState a(9);
  RngState b(9);
  for (int i = 0; i < 17; ++i) b.next_u64();
  RngState fa = a.fork("student");
  RngState fb = b.fork("student");
  for (int i = 0; i < 4; ++i) CHECK(fa.next_u64() == fb.next_u64());
  CHECK(a.fork(1).seed() != a.fork(2).seed());
  CHECK(a.fork("x").seed() != a.fork("y").seed());
}

TEST_CASE("uniform_index stays in range and covers every residue") {
  RngState rng(3);
  CHECK_THROWS_AS(rng.uniform_index(0), std::invalid_argument);
  std::array<int, 7> counts{};
  for (int i = 0; i < 70000; ++i) {
    const auto v = rng.uniform_index(7);
    REQUIRE(v < 7);
    ++counts[v];
  }
  // Binomial sd is about 90; 5 sd band.
  for (int c : counts) CHECK(std::abs(c - 10000) < 450);
  CHECK(rng.uniform_index(1) == 0);
}

TEST_CASE("normal draws have unit moments") {
  RngState rng(11);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
  }
  CHECK(std::abs(s / n) < 0.012);
  CHECK(std::abs(s2 / n - 1.0) < 0.016);
}
