#include <doctest.h>

#include "mgdt/eval.hpp"

using namespace mgdt;

TEST_CASE("iqm conventions") {
  CHECK(iqm({0, 1, 2, 3}) == doctest::Approx(1.5));
  CHECK(iqm({0, 1, 2, 3, 4, 5, 6, 7}) == doctest::Approx(3.5));
  CHECK(iqm({5, 5, 5, 5, 5}) == doctest::Approx(5.0));
  // permutation invariance
  CHECK(iqm({7, 0, 3, 5, 1, 6, 2, 4}) == doctest::Approx(3.5));
  // fractional trimming: n=5 keeps 1.25..3.75 in rank space
  // weights: s[1] 0.75, s[2] 1, s[3] 0.75 -> (0.75*1 + 2 + 0.75*3) / 2.5 = 2
  CHECK(iqm({0, 1, 2, 3, 4}) == doctest::Approx(2.0));
  // monotone in each input
  CHECK(iqm({0, 1, 2, 3, 9}) >= iqm({0, 1, 2, 3, 4}));
  CHECK_THROWS_AS(iqm({1, 2, 3}), InputError);
}

TEST_CASE("median conventions") {
  CHECK(median({1, 2, 3}) == 2.0);
  CHECK(median({1, 2, 3, 4}) == 2.5);
  CHECK(median({42}) == 42.0);
  CHECK_THROWS_AS(median({}), InputError);
}

TEST_CASE("normalized score endpoints and affine invariance") {
  CHECK(normalized_score(1.0, 0.0, 1.0) == 1.0);
  CHECK(normalized_score(0.0, 0.0, 1.0) == 0.0);
  CHECK(normalized_score(0.5, 0.0, 1.0) == 0.5);
  CHECK(normalized_score(7.5, 5.0, 10.0) == doctest::Approx(0.5));
  const double a = 2.5, b = -3.0;
  const double s = 4.2, lo = 1.0, hi = 9.0;
  CHECK(normalized_score(a * s + b, a * lo + b, a * hi + b) ==
        doctest::Approx(normalized_score(s, lo, hi)));
  CHECK_THROWS_AS(normalized_score(1.0, 2.0, 2.0), InputError);
}

TEST_CASE("top-3 improvement") {
  CHECK(top3_improvement({4, 4, 4, 1}, 4.0) == 0.0);
  CHECK(top3_improvement({6, 6, 6}, 4.0) == doctest::Approx(50.0));
  // floor at 0
  CHECK(top3_improvement({1, 1, 1}, 4.0) == 0.0);
  // 0-protected denominator
  CHECK(top3_improvement({2, 2, 2}, 0.0) == doctest::Approx(200.0));
  CHECK(top3_improvement({2, 2, 2}, -0.5) == doctest::Approx(250.0));
  CHECK_THROWS_AS(top3_improvement({1, 2}, 1.0), InputError);
}
