// Polynomial observables: Gaussian moments against explicit pairing
// combinatorics, imaginary-time strings against directly continued kernels,
// closed-form kernel deformation, and the evaluation calculus.

#include <catch2/catch_amalgamated.hpp>

#include <ppalab/functionals.hpp>
#include <ppalab/kms.hpp>

#include <cmath>

using ppalab::AlgebraContext;
using ppalab::build_lattice;
using ppalab::complexd;
using ppalab::Field;
using ppalab::FormalSeries;
using ppalab::LatticeSpec;
using ppalab::Matrix;
using ppalab::PolyFunctional;
using ppalab::SeriesShape;

namespace {

const LatticeSpec& lat() {
  static LatticeSpec l = build_lattice(5, 0.2, 1, 3, 0.3);
  return l;
}

const ppalab::ThermalState& state() {
  static ppalab::ThermalState st = ppalab::make_thermal_state(lat(), 1.0, 1.3);
  return st;
}

FormalSeries one(const AlgebraContext& ctx) {
  return FormalSeries::constant(ctx.shape, complexd{1.0, 0.0});
}

}  // namespace

TEST_CASE("gaussian moments follow the pairing combinatorics") {
  AlgebraContext ctx(lat(), SeriesShape{3, 0});
  const ppalab::ThermalState& st = state();
  const Matrix& s = st.smooth_part;
  const Field h = ppalab::random_real_field(lat(), 101);
  const double mu = lat().mu;

  // one contraction of two legs on the same vertex
  complexd m2{0.0, 0.0};
  for (int x = 0; x < lat().sites; ++x) m2 += h[x] * s(x, x) * mu;
  const FormalSeries e2 =
      ppalab::gaussian_expectation(ctx, st, ppalab::local_monomial(ctx, h, 2, one(ctx)));
  REQUIRE(std::abs(e2.get(1, 0) - m2) < 1e-12);
  REQUIRE(std::abs(e2.get(0, 0)) == 0.0);
  REQUIRE(e2.max_abs_negative_hbar() == 0.0);

  // three pairings of four legs
  complexd m4{0.0, 0.0};
  for (int x = 0; x < lat().sites; ++x) m4 += 3.0 * h[x] * s(x, x) * s(x, x) * mu;
  const FormalSeries e4 =
      ppalab::gaussian_expectation(ctx, st, ppalab::local_monomial(ctx, h, 4, one(ctx)));
  REQUIRE(std::abs(e4.get(2, 0) - m4) < 1e-12);
  REQUIRE(std::abs(e4.get(1, 0)) == 0.0);

  // odd moments vanish identically
  const FormalSeries e3 =
      ppalab::gaussian_expectation(ctx, st, ppalab::local_monomial(ctx, h, 3, one(ctx)));
  REQUIRE(e3.max_abs() == 0.0);

  REQUIRE(std::abs(ppalab::gaussian_expectation(ctx, st, ppalab::unit_functional(ctx)).get(0, 0) -
                   complexd{1.0, 0.0}) == 0.0);
}

TEST_CASE("two-factor strings mix within and cross kernels correctly") {
  AlgebraContext ctx(lat(), SeriesShape{3, 0});
  const ppalab::ThermalState& st = state();
  const Matrix& s = st.smooth_part;
  const Matrix& c0 = st.two_point;
  const Field h = ppalab::random_real_field(lat(), 102);
  const Field g = ppalab::random_real_field(lat(), 103);
  const double mu = lat().mu;

  const PolyFunctional f2h = ppalab::local_monomial(ctx, h, 2, one(ctx));
  const PolyFunctional f2g = ppalab::local_monomial(ctx, g, 2, one(ctx), 1);

  complexd within{0.0, 0.0}, cross{0.0, 0.0};
  for (int x = 0; x < lat().sites; ++x)
    for (int y = 0; y < lat().sites; ++y) {
      within += h[x] * s(x, x) * mu * g[y] * s(y, y) * mu;
      cross += 2.0 * h[x] * g[y] * c0(x, y) * c0(x, y) * mu * mu;
    }

  const FormalSeries full =
      ppalab::thermal_string_expectation(ctx, st, {&f2h, &f2g}, {0.0, 0.0}, false);
  const FormalSeries conn =
      ppalab::thermal_string_expectation(ctx, st, {&f2h, &f2g}, {0.0, 0.0}, true);
  REQUIRE(std::abs(full.get(2, 0) - (within + cross)) < 1e-12);
  REQUIRE(std::abs(conn.get(2, 0) - cross) < 1e-12);

  // a cubic factor sends one leg across and closes the rest on itself
  const PolyFunctional f1h = ppalab::linear_functional(ctx, h);
  const PolyFunctional f3g = ppalab::local_monomial(ctx, g, 3, one(ctx), 1);
  complexd mixed{0.0, 0.0};
  for (int x = 0; x < lat().sites; ++x)
    for (int y = 0; y < lat().sites; ++y)
      mixed += 3.0 * h[x] * g[y] * c0(x, y) * s(y, y) * mu * mu;
  const FormalSeries em =
      ppalab::thermal_string_expectation(ctx, st, {&f1h, &f3g}, {0.0, 0.0}, false);
  REQUIRE(std::abs(em.get(2, 0) - mixed) < 1e-12);
}

TEST_CASE("three-factor connected correlator is the closed cycle") {
  AlgebraContext ctx(lat(), SeriesShape{3, 0});
  const ppalab::ThermalState& st = state();
  const Matrix& c0 = st.two_point;
  const Field h = ppalab::random_real_field(lat(), 104);
  const Field g = ppalab::random_real_field(lat(), 105);
  const Field q = ppalab::random_real_field(lat(), 106);
  const double mu = lat().mu;

  const PolyFunctional a = ppalab::local_monomial(ctx, h, 2, one(ctx));
  const PolyFunctional b = ppalab::local_monomial(ctx, g, 2, one(ctx), 1);
  const PolyFunctional c = ppalab::local_monomial(ctx, q, 2, one(ctx), 2);

  // eight leg assignments close the triangle; everything else factorizes
  complexd cycle{0.0, 0.0};
  for (int x = 0; x < lat().sites; ++x)
    for (int y = 0; y < lat().sites; ++y)
      for (int z = 0; z < lat().sites; ++z)
        cycle += 8.0 * h[x] * g[y] * q[z] * c0(x, y) * c0(y, z) * c0(x, z) * mu * mu * mu;

  const FormalSeries conn =
      ppalab::connected_correlator(ctx, st, {&a, &b, &c}, {0.0, 0.0, 0.0});
  REQUIRE(std::abs(conn.get(3, 0) - cycle) < 1e-12);
}

TEST_CASE("connected equals full minus the factorized part") {
  AlgebraContext ctx(lat(), SeriesShape{3, 0});
  const ppalab::ThermalState& st = state();
  const Field h = ppalab::random_real_field(lat(), 107);
  const Field g = ppalab::random_real_field(lat(), 108);
  const PolyFunctional f2h = ppalab::local_monomial(ctx, h, 2, one(ctx));
  const PolyFunctional f2g = ppalab::local_monomial(ctx, g, 2, one(ctx), 1);

  const FormalSeries full =
      ppalab::thermal_string_expectation(ctx, st, {&f2h, &f2g}, {0.0, 0.0}, false);
  const FormalSeries conn =
      ppalab::thermal_string_expectation(ctx, st, {&f2h, &f2g}, {0.0, 0.0}, true);
  const FormalSeries prod = ppalab::gaussian_expectation(ctx, st, f2h) *
                            ppalab::gaussian_expectation(ctx, st, f2g);
  REQUIRE((full - (conn + prod)).max_abs() < 1e-12);
}

TEST_CASE("imaginary-time offsets select the continued cross kernel") {
  AlgebraContext ctx(lat(), SeriesShape{2, 0});
  const ppalab::ThermalState& st = state();
  const Field h = ppalab::random_real_field(lat(), 109);
  const Field g = ppalab::random_real_field(lat(), 110);
  const double u = 0.6 * st.beta;
  const Matrix cu = ppalab::kms_two_point(st.theory, st.beta, u);
  const double mu = lat().mu;

  complexd want{0.0, 0.0};
  for (int x = 0; x < lat().sites; ++x)
    for (int y = 0; y < lat().sites; ++y) want += h[x] * cu(x, y) * g[y] * mu * mu;

  const PolyFunctional fh = ppalab::linear_functional(ctx, h);
  PolyFunctional fg = ppalab::linear_functional(ctx, g);
  fg = ppalab::retag(ctx, fg, 1);
  const FormalSeries e = ppalab::thermal_string_expectation(ctx, st, {&fh, &fg}, {0.0, u}, false);
  REQUIRE(std::abs(e.get(1, 0) - want) < 1e-12);

  // offsets must be ordered and stay inside one period
  REQUIRE_THROWS_AS(ppalab::thermal_string_expectation(ctx, st, {&fh, &fg}, {0.5, 0.2}, false),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(ppalab::thermal_string_expectation(ctx, st, {&fh, &fg}, {-0.1, 0.2}, false),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(
      ppalab::thermal_string_expectation(ctx, st, {&fh, &fg}, {0.0, st.beta + 0.1}, false),
      std::invalid_argument);
  REQUIRE_THROWS_AS(ppalab::thermal_string_expectation(ctx, st, {&fh}, {0.0, 0.1}, false),
                    std::invalid_argument);
}

TEST_CASE("deforming a quartic resums into the closed form") {
  AlgebraContext ctx(lat(), SeriesShape{2, 2});
  const Field h = ppalab::random_real_field(lat(), 111);
  Matrix w = Matrix::Random(lat().sites, lat().sites);
  w = ((w + Matrix(w.transpose())) / 2.0).real().cast<complexd>();

  const int wid = ctx.register_matrix(w);
  const ppalab::GradedKernel kernel{{1, wid, complexd{1.0, 0.0}}};
  const PolyFunctional f4 = ppalab::local_monomial(ctx, h, 4, one(ctx));
  const PolyFunctional d = ppalab::self_pair_deform(ctx, f4, kernel);

  const Field phi = ppalab::random_real_field(lat(), 112);
  const FormalSeries v = ppalab::evaluate(ctx, d, phi);

  complexd c00{0.0, 0.0}, c11{0.0, 0.0}, c22{0.0, 0.0};
  for (int x = 0; x < lat().sites; ++x) {
    const complexd p = phi[x];
    c00 += h[x] * p * p * p * p * lat().mu;
    c11 += 6.0 * h[x] * w(x, x) * p * p * lat().mu;
    c22 += 3.0 * h[x] * w(x, x) * w(x, x) * lat().mu;
  }
  REQUIRE(std::abs(v.get(0, 0) - c00) < 1e-12);
  REQUIRE(std::abs(v.get(1, 1) - c11) < 1e-12);
  REQUIRE(std::abs(v.get(2, 2) - c22) < 1e-12);
  REQUIRE(std::abs(v.get(1, 0)) == 0.0);
  REQUIRE(std::abs(v.get(2, 1)) == 0.0);
}

TEST_CASE("pair product commutator reproduces the commutator kernel") {
  AlgebraContext ctx(lat(), SeriesShape{2, 0});
  const ppalab::FreeTheory th = ppalab::build_free_theory(lat(), 1.0);
  const Field f = ppalab::random_real_field(lat(), 113);
  const Field g = ppalab::random_real_field(lat(), 114);
  const ppalab::GradedKernel star = ctx.plain_kernel(th.delta_plus);

  const PolyFunctional ff = ppalab::linear_functional(ctx, f);
  const PolyFunctional fg = ppalab::linear_functional(ctx, g);
  const PolyFunctional comm = ppalab::sub(ctx, ppalab::pair_product(ctx, ff, fg, star),
                                          ppalab::pair_product(ctx, fg, ff, star));

  complexd pairing{0.0, 0.0};
  for (int x = 0; x < lat().sites; ++x)
    for (int y = 0; y < lat().sites; ++y)
      pairing += f[x] * th.delta(x, y) * g[y] * lat().mu * lat().mu;

  const Field phi = ppalab::random_real_field(lat(), 115);
  const FormalSeries v = ppalab::evaluate(ctx, comm, phi);
  REQUIRE(std::abs(v.get(1, 0) - complexd{0.0, 1.0} * pairing) < 1e-12);
  REQUIRE(std::abs(v.get(0, 0)) < 1e-14);
}

TEST_CASE("evaluation and derivatives match direct sums") {
  AlgebraContext ctx(lat(), SeriesShape{2, 0});
  const Field h = ppalab::random_real_field(lat(), 116);
  const Field phi = ppalab::random_real_field(lat(), 117);
  const Field e = ppalab::random_real_field(lat(), 118);

  const PolyFunctional f3 = ppalab::local_monomial(ctx, h, 3, one(ctx));
  complexd direct{0.0, 0.0};
  for (int x = 0; x < lat().sites; ++x) direct += h[x] * phi[x] * phi[x] * phi[x] * lat().mu;
  REQUIRE(std::abs(ppalab::evaluate(ctx, f3, phi).get(0, 0) - direct) < 1e-13);

  const PolyFunctional f4 = ppalab::local_monomial(ctx, h, 4, one(ctx));
  const PolyFunctional df = ppalab::derivative(ctx, f4, e);
  complexd dwant{0.0, 0.0};
  for (int x = 0; x < lat().sites; ++x)
    dwant += 4.0 * h[x] * phi[x] * phi[x] * phi[x] * e[x] * lat().mu;
  REQUIRE(std::abs(ppalab::evaluate(ctx, df, phi).get(0, 0) - dwant) < 1e-12);

  REQUIRE(ppalab::evaluate_at_zero(ctx, f3).max_abs() == 0.0);
  REQUIRE(ppalab::evaluate(ctx, ppalab::zero_functional(), phi).max_abs() == 0.0);
  REQUIRE(std::abs(ppalab::evaluate(ctx, ppalab::unit_functional(ctx), phi).get(0, 0) -
                   complexd{1.0, 0.0}) == 0.0);
}

TEST_CASE("functional arithmetic is consistent under probing") {
  AlgebraContext ctx(lat(), SeriesShape{2, 0});
  const Field h = ppalab::random_real_field(lat(), 119);
  const PolyFunctional f = ppalab::local_monomial(ctx, h, 2, one(ctx));
  REQUIRE(ppalab::probe_difference(ctx, ppalab::add(ctx, f, f),
                                   ppalab::scale(ctx, f, complexd{2.0, 0.0})) == 0.0);
  REQUIRE(ppalab::probe_difference(ctx, ppalab::sub(ctx, f, f), ppalab::zero_functional()) == 0.0);
}

TEST_CASE("time translation moves sampling points and rejects dressed legs") {
  AlgebraContext ctx(lat(), SeriesShape{2, 0});
  Field d = Field::Zero(lat().sites);
  d[lat().site(1, 0)] = complexd{1.0, 0.0};
  const PolyFunctional f = ppalab::local_monomial(ctx, d, 2, one(ctx));
  const PolyFunctional t2 = ppalab::translate_time(ctx, f, 2);

  const Field phi = ppalab::random_real_field(lat(), 120);
  const complexd at3 = phi[lat().site(3, 0)];
  REQUIRE(std::abs(ppalab::evaluate(ctx, t2, phi).get(0, 0) - at3 * at3 * lat().mu) < 1e-13);

  const ppalab::FreeTheory th = ppalab::build_free_theory(lat(), 1.0);
  const PolyFunctional dressed =
      ppalab::dress_legs(ctx, f, ppalab::GradedKernel{{0, ctx.register_matrix(th.delta_r)}});
  REQUIRE_THROWS_AS(ppalab::translate_time(ctx, dressed, 1), std::invalid_argument);
}

TEST_CASE("conjugation intertwines with conjugation of values") {
  AlgebraContext ctx(lat(), SeriesShape{2, 0});
  const Field h = ppalab::random_real_field(lat(), 121);
  const PolyFunctional f =
      ppalab::scale(ctx, ppalab::local_monomial(ctx, h, 2, one(ctx)), complexd{2.0, 3.0});
  const PolyFunctional fc = ppalab::conjugate(ctx, f);
  const Field phi = ppalab::random_real_field(lat(), 122);
  const complexd a = ppalab::evaluate(ctx, f, phi).get(0, 0);
  const complexd b = ppalab::evaluate(ctx, fc, phi).get(0, 0);
  REQUIRE(std::abs(b - std::conj(a)) < 1e-13);
}
