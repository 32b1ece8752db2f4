#include "mstack/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace mstack;

TEST_CASE("philox known-answer vectors") {
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) ==
        PhiloxCounter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        PhiloxCounter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        PhiloxCounter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("streams are reproducible and distinct") {
  RandomStream a(42, 3, 1, purpose::kNoise), b(42, 3, 1, purpose::kNoise);
  RandomStream c(42, 3, 2, purpose::kNoise), d(43, 3, 1, purpose::kNoise);
  bool differs_c = false, differs_d = false;
  for (int i = 0; i < 100; ++i) {
    const double x = a.normal();
    CHECK(x == b.normal());
    differs_c |= x != c.normal();
    differs_d |= x != d.normal();
  }
  CHECK(differs_c);
  CHECK(differs_d);
}

TEST_CASE("uniform and normal moments") {
  RandomStream rs(7, 0, 0, purpose::kMisc);
  const int N = 200000;
  double su = 0, su2 = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < N; ++i) {
    const double u = rs.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    su += u;
    su2 += u * u;
    const double z = rs.normal();
    sn += z;
    sn2 += z * z;
  }
  // Five standard errors.
  CHECK(std::abs(su / N - 0.5) < 5 * std::sqrt(1.0 / 12 / N));
  CHECK(std::abs(su2 / N - 1.0 / 3) < 5 * std::sqrt(4.0 / 45 / N));
  CHECK(std::abs(sn / N) < 5 / std::sqrt(double(N)));
  CHECK(std::abs(sn2 / N - 1.0) < 5 * std::sqrt(2.0 / N));
}

TEST_CASE("bounded integers cover the range") {
  RandomStream rs(1, 0, 0, purpose::kMisc);
  std::set<std::uint32_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto v = rs.below(7);
    REQUIRE(v < 7u);
    seen.insert(v);
  }
  CHECK(seen.size() == 7);
  const double x = rs.uniform(-1.0, 1.0);
  CHECK(x >= -1.0);
  CHECK(x < 1.0);
}
