// Graded interacting maps: coupling-graded matrix algebra against explicit
// convolutions, scattering series inverses, the two independent pipelines
// for the quadratic deformation, and causal factorisation.

#include <catch2/catch_amalgamated.hpp>

#include <ppalab/kms.hpp>
#include <ppalab/moller_quantum.hpp>

#include <cmath>

using ppalab::AlgebraContext;
using ppalab::build_lattice;
using ppalab::complexd;
using ppalab::Field;
using ppalab::FormalSeries;
using ppalab::GradedKernel;
using ppalab::LatticeSpec;
using ppalab::Matrix;
using ppalab::PolyFunctional;
using ppalab::SeriesShape;

namespace {

const LatticeSpec& lat() {
  static LatticeSpec l = build_lattice(6, 0.15, 1, 4, 0.3);
  return l;
}

const ppalab::FreeTheory& theory() {
  static ppalab::FreeTheory th = ppalab::build_free_theory(lat(), 1.0);
  return th;
}

FormalSeries lambda_one(const AlgebraContext& ctx) {
  return FormalSeries::monomial(ctx.shape, 0, 1, complexd{1.0, 0.0});
}

Field slice_density(const LatticeSpec& l, int t) {
  Field d = Field::Zero(l.sites);
  for (int s = 0; s < l.spatial_sites; ++s) d[l.site(t, s)] = complexd{1.0, 0.0};
  return d;
}

}  // namespace

TEST_CASE("graded matrix products convolve order by order") {
  const int n = 5;
  ppalab::GradedMatrix a, b;
  for (int k = 0; k < 3; ++k) {
    a.coef.push_back(Matrix::Random(n, n));
    b.coef.push_back(Matrix::Random(n, n));
  }
  const ppalab::GradedMatrix p = ppalab::graded_product(a, b, 2);
  for (int order = 0; order <= 2; ++order) {
    Matrix want = Matrix::Zero(n, n);
    for (int i = 0; i <= order; ++i) want += a.coef[i] * b.coef[order - i];
    const Matrix* got = ppalab::graded_coef(p, order);
    REQUIRE(got != nullptr);
    REQUIRE((*got - want).cwiseAbs().maxCoeff() < 1e-12);
  }

  // sums, differences, transposes act layerwise
  const ppalab::GradedMatrix s = ppalab::graded_sum(a, b);
  REQUIRE((s.coef[1] - (a.coef[1] + b.coef[1])).cwiseAbs().maxCoeff() == 0.0);
  const ppalab::GradedMatrix t = ppalab::graded_transpose(a);
  REQUIRE((t.coef[2] - a.coef[2].transpose()).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(ppalab::graded_coef(a, 7) == nullptr);
}

TEST_CASE("scattering series inverts under the star product") {
  AlgebraContext ctx(lat(), SeriesShape{2, 2});
  const ppalab::FreeTheory& th = theory();
  const GradedKernel star = ctx.plain_kernel(th.delta_plus);
  const GradedKernel tord = ctx.plain_kernel(th.delta_f);

  const Field ones = Field::Constant(lat().sites, complexd{1.0, 0.0});
  const PolyFunctional v = ppalab::quartic_interaction(ctx, ones, 0.4);
  const PolyFunctional s = ppalab::smatrix(ctx, v, tord);
  const PolyFunctional sinv = ppalab::smatrix_star_inverse(ctx, s, star);

  const PolyFunctional unit = ppalab::unit_functional(ctx);
  REQUIRE(ppalab::probe_difference(ctx, ppalab::pair_product(ctx, sinv, s, star), unit) < 1e-12);
  REQUIRE(ppalab::probe_difference(ctx, ppalab::pair_product(ctx, s, sinv, star), unit) < 1e-12);

  // the series demands one power of the coupling; inverses demand a unit head
  const Field h = ppalab::random_real_field(lat(), 41);
  const PolyFunctional bare =
      ppalab::local_monomial(ctx, h, 4, FormalSeries::constant(ctx.shape, complexd{1.0, 0.0}));
  REQUIRE_THROWS_AS(ppalab::smatrix(ctx, bare, tord), std::invalid_argument);
  REQUIRE_THROWS_AS(
      ppalab::smatrix_star_inverse(ctx, ppalab::scale(ctx, unit, complexd{2.0, 0.0}), star),
      std::invalid_argument);
}

TEST_CASE("direct and recursive interacting maps agree") {
  AlgebraContext ctx(lat(), SeriesShape{2, 2});
  const ppalab::FreeTheory& th = theory();
  const GradedKernel star = ctx.plain_kernel(th.delta_plus);
  const GradedKernel tord = ctx.plain_kernel(th.delta_f);

  const Field ones = Field::Constant(lat().sites, complexd{1.0, 0.0});
  const PolyFunctional v = ppalab::quartic_interaction(ctx, ones, 0.3);
  const Field h = ppalab::random_real_field(lat(), 42);
  const PolyFunctional f = ppalab::local_monomial(
      ctx, h, 2, FormalSeries::constant(ctx.shape, complexd{1.0, 0.0}));

  const PolyFunctional direct = ppalab::quantum_moller(ctx, v, f, star, tord);
  const ppalab::RecursiveMoller rec = ppalab::quantum_moller_recursive(ctx, v, f, star, tord);
  REQUIRE(ppalab::probe_difference(ctx, direct, rec.value) < 1e-11);

  // and the inverse map undoes the direct one
  const PolyFunctional back = ppalab::quantum_moller_inverse(ctx, v, direct, star, tord);
  REQUIRE(ppalab::probe_difference(ctx, back, f) < 1e-11);
}

TEST_CASE("quadratic dressing satisfies the mixed kernel identity") {
  const Eigen::VectorXd shift = Eigen::VectorXd::Constant(lat().sites, 0.8);
  const ppalab::QuadraticDressing qd = ppalab::quadratic_dressing(theory(), shift, 2);
  REQUIRE(ppalab::interacting_kernel_identity_residual(qd) < 1e-12);
}

TEST_CASE("the two deformation pipelines agree and fix linear observables") {
  AlgebraContext ctx(lat(), SeriesShape{2, 2});
  const ppalab::QuadraticPerturbation q =
      ppalab::mass_perturbation(Eigen::VectorXd::Constant(lat().sites, 0.7));
  const ppalab::BetaContext bc = ppalab::make_beta_context(ctx, theory(), q);

  const Field h = ppalab::random_real_field(lat(), 43);
  const PolyFunctional f_lin = ppalab::linear_functional(ctx, h);
  REQUIRE(ppalab::probe_difference(ctx, ppalab::beta_map(ctx, bc, f_lin), f_lin) < 1e-12);
  REQUIRE(ppalab::probe_difference(ctx, ppalab::beta_deformation(ctx, bc, f_lin), f_lin) < 1e-12);

  const PolyFunctional f4 = ppalab::local_monomial(
      ctx, h, 4, FormalSeries::constant(ctx.shape, complexd{1.0, 0.0}));
  REQUIRE(ppalab::deformation_residual(ctx, bc, f4) < 1e-9);

  // inverse deformation composes back to the identity
  const PolyFunctional fwd = ppalab::beta_deformation(ctx, bc, f4);
  REQUIRE(ppalab::probe_difference(ctx, ppalab::beta_inverse(ctx, bc, fwd), f4) < 1e-11);
}

TEST_CASE("scattering series factorises across causally ordered supports") {
  AlgebraContext ctx(lat(), SeriesShape{2, 2});
  const ppalab::FreeTheory& th = theory();
  const GradedKernel star = ctx.plain_kernel(th.delta_plus);
  const GradedKernel tord = ctx.plain_kernel(th.delta_f);

  const PolyFunctional f_late =
      ppalab::local_monomial(ctx, slice_density(lat(), 4), 2, lambda_one(ctx));
  const PolyFunctional v_mid =
      ppalab::local_monomial(ctx, slice_density(lat(), 2), 4, lambda_one(ctx), 1);
  const PolyFunctional g_early =
      ppalab::local_monomial(ctx, slice_density(lat(), 1), 2, lambda_one(ctx), 2);

  REQUIRE(ppalab::causal_factorisation_residual(ctx, f_late, v_mid, g_early, star, tord) < 1e-10);
  REQUIRE(ppalab::moller_causal_product_residual(ctx, v_mid, f_late, g_early, star, tord) < 1e-10);
}
