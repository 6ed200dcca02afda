#include <doctest.h>

#include <cmath>
#include <vector>

#include "switchstein/rng.hpp"
#include "test_util.hpp"

using namespace switchstein;

TEST_CASE("philox4x32-10 matches the published test vectors") {
  // Known-answer vectors from the Random123 reference distribution.
  auto r = detail::philox4x32_10({0, 0, 0, 0}, {0, 0});
  CHECK(r[0] == 0x6627e8d5u);
  CHECK(r[1] == 0xe169c58du);
  CHECK(r[2] == 0xbc57ac4cu);
  CHECK(r[3] == 0x9b00dbd8u);

  r = detail::philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                            {0xffffffffu, 0xffffffffu});
  CHECK(r[0] == 0x408f276du);
  CHECK(r[1] == 0x41c83b0eu);
  CHECK(r[2] == 0xa20bc7c6u);
  CHECK(r[3] == 0x6d5451fdu);

  r = detail::philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                            {0xa4093822u, 0x299f31d0u});
  CHECK(r[0] == 0xd16cfe09u);
  CHECK(r[1] == 0x94fdccebu);
  CHECK(r[2] == 0x5001e420u);
  CHECK(r[3] == 0x24126ea1u);
}

TEST_CASE("streams are deterministic and distinct") {
  RandomStream a(7, 3, StreamPurpose::noise);
  RandomStream b(7, 3, StreamPurpose::noise);
  RandomStream c(7, 4, StreamPurpose::noise);
  RandomStream d(7, 3, StreamPurpose::chain);
  bool all_equal_ab = true, any_equal_ac = false, any_equal_ad = false;
  for (int i = 0; i < 64; ++i) {
    const auto va = a.next_u64();
    all_equal_ab = all_equal_ab && (va == b.next_u64());
    any_equal_ac = any_equal_ac || (va == c.next_u64());
    any_equal_ad = any_equal_ad || (va == d.next_u64());
  }
  CHECK(all_equal_ab);
  CHECK_FALSE(any_equal_ac);
  CHECK_FALSE(any_equal_ad);
}

TEST_CASE("uniform draws live in the open unit interval with the right moments") {
  RandomStream s(1234, 0);
  const int n = 100000;
  std::vector<double> xs(n);
  for (auto& x : xs) {
    x = s.uniform();
    REQUIRE(x > 0.0);
    REQUIRE(x < 1.0);
  }
  CHECK(std::abs(test_util::mean(xs) - 0.5) < 5e-3);
  CHECK(std::abs(test_util::sample_variance(xs) - 1.0 / 12.0) < 2e-3);
}

TEST_CASE("normal draws have unit variance and no skew at CLT scale") {
  RandomStream s(99, 1);
  const int n = 100000;
  std::vector<double> xs(n);
  for (auto& x : xs) x = s.normal();
  const double m = test_util::mean(xs);
  const double v = test_util::sample_variance(xs);
  CHECK(std::abs(m) < 4.0 / std::sqrt(double(n)));
  CHECK(std::abs(v - 1.0) < 0.02);
  double m3 = 0.0;
  for (double x : xs) m3 += (x - m) * (x - m) * (x - m);
  m3 /= double(n);
  CHECK(std::abs(m3) < 0.05);
}

TEST_CASE("exponential draws match the requested rate") {
  RandomStream s(5, 0);
  const int n = 100000;
  std::vector<double> xs(n);
  for (auto& x : xs) x = s.exponential(2.5);
  CHECK(test_util::mean(xs) == doctest::Approx(1.0 / 2.5).epsilon(0.02));
  CHECK(s.exponential(0.0) == std::numeric_limits<double>::infinity());
}
