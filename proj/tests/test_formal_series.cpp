// Bigraded truncated series: products against an independently summed
// convolution, closed-form inverses, and the reporting bands.

#include <catch2/catch_amalgamated.hpp>

#include <ppalab/formal_series.hpp>

#include <random>

using ppalab::complexd;
using ppalab::FormalSeries;
using ppalab::SeriesShape;

namespace {

// Entries only where hbar >= -lambda, the sector every physical series lives
// in; the box arithmetic is exact there.
FormalSeries random_graded(SeriesShape shape, std::uint64_t seed, bool unit_head) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  FormalSeries s(shape);
  for (int h = shape.hmin(); h <= shape.hmax(); ++h)
    for (int l = 0; l <= shape.lambda_max; ++l)
      if (h >= -l) s.at(h, l) = complexd{u(rng), u(rng)};
  if (unit_head) s.at(0, 0) = complexd{1.0, 0.0};
  return s;
}

// The product summed the other way round: for every target cell, over all
// in-box splittings.
FormalSeries convolution(const FormalSeries& a, const FormalSeries& b) {
  const SeriesShape s = a.shape();
  FormalSeries r(s);
  for (int h = s.hmin(); h <= s.hmax(); ++h)
    for (int l = 0; l <= s.lambda_max; ++l) {
      complexd acc{0.0, 0.0};
      for (int ha = s.hmin(); ha <= s.hmax(); ++ha)
        for (int la = 0; la <= l; ++la) acc += a.get(ha, la) * b.get(h - ha, l - la);
      r.at(h, l) = acc;
    }
  return r;
}

}  // namespace

TEST_CASE("series product matches the convolution sum cell by cell") {
  const SeriesShape shape{2, 2};
  const FormalSeries a = random_graded(shape, 11, false);
  const FormalSeries b = random_graded(shape, 12, false);
  REQUIRE(((a * b) - convolution(a, b)).max_abs() < 1e-13);
  REQUIRE(((a * b) - (b * a)).max_abs() < 1e-13);
}

TEST_CASE("constant one is the multiplicative unit") {
  const SeriesShape shape{2, 2};
  const FormalSeries one = FormalSeries::constant(shape, complexd{1.0, 0.0});
  const FormalSeries a = random_graded(shape, 21, false);
  REQUIRE(((one * a) - a).max_abs() == 0.0);
  REQUIRE(((a * one) - a).max_abs() == 0.0);
}

TEST_CASE("monomial products add exponents and fall off the box edge") {
  const SeriesShape shape{2, 2};
  const FormalSeries hl = FormalSeries::monomial(shape, 1, 1, complexd{2.0, 0.0});
  const FormalSeries sq = hl * hl;
  REQUIRE(sq.get(2, 2) == complexd{4.0, 0.0});
  REQUIRE((sq - FormalSeries::monomial(shape, 2, 2, complexd{4.0, 0.0})).max_abs() == 0.0);

  // total lambda degree beyond the box is dropped entirely
  const FormalSeries l2 = FormalSeries::monomial(shape, 0, 2, complexd{1.0, 0.0});
  const FormalSeries l1 = FormalSeries::monomial(shape, 0, 1, complexd{1.0, 0.0});
  REQUIRE((l2 * l1).is_zero());
}

TEST_CASE("product is associative on reported layers") {
  const SeriesShape shape{2, 2};
  const FormalSeries a = random_graded(shape, 31, false);
  const FormalSeries b = random_graded(shape, 32, false);
  const FormalSeries c = random_graded(shape, 33, false);
  REQUIRE(ppalab::reported_difference((a * b) * c, a * (b * c)) < 1e-12);
}

TEST_CASE("inverse multiplies back to one") {
  const SeriesShape shape{2, 2};
  const FormalSeries one = FormalSeries::constant(shape, complexd{1.0, 0.0});

  FormalSeries a = random_graded(shape, 41, true);
  REQUIRE(((a * a.inverse()) - one).max_abs() < 1e-12);
  REQUIRE(((a.inverse() * a) - one).max_abs() < 1e-12);

  // non-unit head is divided out
  FormalSeries b = random_graded(shape, 42, false);
  b.at(0, 0) = complexd{2.0, -3.0};
  REQUIRE(((b * b.inverse()) - one).max_abs() < 1e-12);

  const FormalSeries two = FormalSeries::constant(shape, complexd{2.0, 0.0});
  REQUIRE((two.inverse() - FormalSeries::constant(shape, complexd{0.5, 0.0})).max_abs() == 0.0);
}

TEST_CASE("inverse of one minus a monomial is the geometric series") {
  const SeriesShape shape{2, 2};
  const FormalSeries one = FormalSeries::constant(shape, complexd{1.0, 0.0});
  const FormalSeries hl = FormalSeries::monomial(shape, 1, 1, complexd{1.0, 0.0});
  const FormalSeries inv = (one - hl).inverse();
  for (int k = 0; k <= 2; ++k) REQUIRE(inv.get(k, k) == complexd{1.0, 0.0});
  REQUIRE(inv.get(1, 0) == complexd{0.0, 0.0});
  REQUIRE(inv.get(0, 1) == complexd{0.0, 0.0});
  REQUIRE(inv.get(2, 1) == complexd{0.0, 0.0});
}

TEST_CASE("out-of-box access is safe and zero") {
  const SeriesShape shape{1, 1};
  const FormalSeries a = random_graded(shape, 51, false);
  REQUIRE(a.get(shape.hmax() + 1, 0) == complexd{0.0, 0.0});
  REQUIRE(a.get(shape.hmin() - 1, 0) == complexd{0.0, 0.0});
  REQUIRE(a.get(0, shape.lambda_max + 1) == complexd{0.0, 0.0});
  REQUIRE(a.get(0, -1) == complexd{0.0, 0.0});
  REQUIRE(FormalSeries::monomial(shape, 5, 0, complexd{1.0, 0.0}).is_zero());
  REQUIRE(a.in_box(shape.hmin(), 0));
  REQUIRE(a.in_box(shape.hmax(), shape.lambda_max));
  REQUIRE_FALSE(a.in_box(shape.hmax() + 1, 0));
}

TEST_CASE("shifting multiplies by powers of the gradings") {
  const SeriesShape shape{2, 2};
  const FormalSeries m = FormalSeries::monomial(shape, 0, 0, complexd{3.0, 0.0});
  REQUIRE((m.shifted(1, 1) - FormalSeries::monomial(shape, 1, 1, complexd{3.0, 0.0})).max_abs() ==
          0.0);
  // shifts off the top edge drop
  const FormalSeries top = FormalSeries::monomial(shape, shape.hmax(), 0, complexd{1.0, 0.0});
  REQUIRE(top.shifted(1, 0).is_zero());
}

TEST_CASE("conjugation and negation act entrywise") {
  const SeriesShape shape{1, 1};
  const FormalSeries a = random_graded(shape, 61, false);
  REQUIRE((a.conjugated().conjugated() - a).max_abs() == 0.0);
  REQUIRE((a + (-a)).max_abs() == 0.0);
  REQUIRE(a.conjugated().get(1, 1) == std::conj(a.get(1, 1)));
}

TEST_CASE("reported band ignores negative hbar layers") {
  const SeriesShape shape{2, 2};
  const FormalSeries neg = FormalSeries::monomial(shape, -1, 1, complexd{1.0, 0.0});
  REQUIRE(neg.max_abs() == 1.0);
  REQUIRE(neg.max_abs_reported() == 0.0);
  REQUIRE(neg.max_abs_negative_hbar() == 1.0);
  REQUIRE(ppalab::reported_difference(neg, FormalSeries(shape)) == 0.0);
  REQUIRE(neg.max_abs_at_lambda(1) == 1.0);
  REQUIRE(neg.max_abs_at_lambda(0) == 0.0);
}
