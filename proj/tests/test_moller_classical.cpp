// Classical intertwiners between two quadratic dynamics: the defining
// algebraic identities, cone support, transported kernels against direct
// builds, the factorial envelope of the series form, and affine shifts.

#include <catch2/catch_amalgamated.hpp>

#include <ppalab/moller_classical.hpp>

#include <cmath>
#include <numbers>

using ppalab::build_lattice;
using ppalab::complexd;
using ppalab::Field;
using ppalab::LatticeSpec;
using ppalab::Matrix;

namespace {

const LatticeSpec& lat() {
  static LatticeSpec l = build_lattice(6, 0.15, 1, 4, 0.3);
  return l;
}

Eigen::VectorXd ramp_mass(const LatticeSpec& l, double amplitude) {
  Eigen::VectorXd m(l.sites);
  for (int i = 0; i < l.sites; ++i)
    m[i] = amplitude * (1.0 + 0.3 * std::sin(0.7 * l.time_of(i)) +
                        0.2 * std::cos(1.3 * l.spatial_of(i)));
  return m;
}

}  // namespace

TEST_CASE("forward and inverse maps compose to the identity") {
  const ppalab::KleinGordonOp op1 = ppalab::build_operator(lat(), 1.0);
  const ppalab::QuadraticPerturbation q = ppalab::mass_perturbation(ramp_mass(lat(), 0.8));
  const ppalab::MollerOperator m = ppalab::classical_moller_exact(op1, q);
  const Matrix eye = Matrix::Identity(lat().sites, lat().sites);
  REQUIRE((m.forward * m.inverse - eye).cwiseAbs().maxCoeff() < 1e-10);
  REQUIRE((m.inverse * m.forward - eye).cwiseAbs().maxCoeff() < 1e-10);

  const Field phi = ppalab::random_real_field(lat(), 31);
  REQUIRE((m.apply_inverse(m.apply(phi)) - phi).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("the map intertwines the two equations of motion") {
  const ppalab::KleinGordonOp op1 = ppalab::build_operator(lat(), 1.0);
  const Eigen::VectorXd shift = ramp_mass(lat(), 0.6);
  const ppalab::QuadraticPerturbation q = ppalab::mass_perturbation(shift);
  const ppalab::MollerOperator m = ppalab::classical_moller_exact(op1, q);
  const ppalab::KleinGordonOp op2 = ppalab::build_operator(lat(), Eigen::VectorXd(op1.msq + shift));

  // P2 (R phi) = P1 phi away from the final slice, where the stencil is open
  const Field phi = ppalab::random_real_field(lat(), 32);
  const Field lhs = op2.apply(m.apply(phi));
  const Field rhs = op1.apply(phi);
  for (int i = 0; i < lat().sites; ++i)
    if (lat().time_of(i) + 1 < lat().n_t) REQUIRE(std::abs(lhs[i] - rhs[i]) < 1e-10);
}

TEST_CASE("the correction to the identity lives in the cone") {
  const ppalab::KleinGordonOp op1 = ppalab::build_operator(lat(), 1.0);
  const ppalab::QuadraticPerturbation q = ppalab::mass_perturbation(ramp_mass(lat(), 0.9));
  const ppalab::MollerOperator m = ppalab::classical_moller_exact(op1, q);
  for (int i = 0; i < lat().sites; ++i)
    for (int j = 0; j < lat().sites; ++j) {
      const complexd e = m.forward(i, j) - (i == j ? complexd{1.0, 0.0} : complexd{0.0, 0.0});
      if (std::abs(e) <= 1e-13) continue;
      REQUIRE(ppalab::in_discrete_cone(lat(), j, i));
    }
}

TEST_CASE("zero perturbation gives the identity map") {
  const ppalab::KleinGordonOp op1 = ppalab::build_operator(lat(), 1.0);
  const ppalab::QuadraticPerturbation q =
      ppalab::mass_perturbation(Eigen::VectorXd::Zero(lat().sites));
  const ppalab::MollerOperator m = ppalab::classical_moller_exact(op1, q);
  const Matrix eye = Matrix::Identity(lat().sites, lat().sites);
  REQUIRE((m.forward - eye).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((m.inverse - eye).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("transported kernels agree with direct builds of the shifted theory") {
  const ppalab::KleinGordonOp op1 = ppalab::build_operator(lat(), 1.0);
  const Eigen::VectorXd shift = ramp_mass(lat(), 0.7);
  const ppalab::QuadraticPerturbation q = ppalab::mass_perturbation(shift);
  const ppalab::MollerOperator m = ppalab::classical_moller_exact(op1, q);

  const ppalab::FreeTheory th1 = ppalab::build_free_theory(lat(), 1.0);
  const ppalab::TransportedKernels t = ppalab::pushforward_propagators(m, th1.delta_plus);

  REQUIRE((t.delta_r2 - m.delta_r2).cwiseAbs().maxCoeff() < 1e-10);
  REQUIRE((t.delta_a2 - m.delta_a2).cwiseAbs().maxCoeff() < 1e-10);
  REQUIRE((t.delta2 - (m.delta_r2 - m.delta_a2)).cwiseAbs().maxCoeff() < 1e-10);

  // the pushed state kernel stays a state for the new dynamics
  REQUIRE((t.delta_plus2 - t.delta_plus2.adjoint()).cwiseAbs().maxCoeff() < 1e-10);
  REQUIRE((t.delta_plus2.imag() - 0.5 * t.delta2.real()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("series form obeys the factorial envelope and converges") {
  const LatticeSpec wide = build_lattice(8, 0.15, 1, 8, 0.25);
  const ppalab::KleinGordonOp op1 = ppalab::build_operator(wide, 1.0);
  const ppalab::QuadraticPerturbation q = ppalab::mass_perturbation(wide, 0.25);

  // an oscillatory single-mode probe, the sector the envelope is proved for
  Field probe(wide.sites);
  for (int i = 0; i < wide.sites; ++i)
    probe[i] = std::cos(2.0 * std::numbers::pi * wide.spatial_of(i) / wide.n_x);

  const ppalab::NeumannScan scan = ppalab::classical_moller_neumann(op1, q, 8, probe);
  REQUIRE(scan.term_norms.size() == scan.bounds.size());
  for (std::size_t n = 0; n < scan.term_norms.size(); ++n)
    REQUIRE(scan.term_norms[n] <= scan.bounds[n] * (1.0 + 1e-12));
  REQUIRE(scan.exact_error < 1e-8);

  REQUIRE_THROWS_AS(ppalab::classical_moller_neumann(op1, q, 0, probe), std::invalid_argument);

  const ppalab::QuadraticPerturbation zero =
      ppalab::mass_perturbation(Eigen::VectorXd::Zero(wide.sites));
  const ppalab::NeumannScan triv = ppalab::classical_moller_neumann(op1, zero, 4, probe);
  for (std::size_t n = 1; n < triv.term_norms.size(); ++n) REQUIRE(triv.term_norms[n] == 0.0);
}

TEST_CASE("size mismatch in the perturbation is rejected") {
  const ppalab::KleinGordonOp op1 = ppalab::build_operator(lat(), 1.0);
  const ppalab::QuadraticPerturbation q = ppalab::mass_perturbation(Eigen::VectorXd::Zero(3));
  REQUIRE_THROWS_AS(ppalab::classical_moller_exact(op1, q), std::invalid_argument);
}

TEST_CASE("field shifts and pullbacks act pointwise on evaluations") {
  ppalab::AlgebraContext ctx(lat(), ppalab::SeriesShape{2, 1});
  const Field h = ppalab::random_real_field(lat(), 33);
  const ppalab::PolyFunctional f = ppalab::local_monomial(
      ctx, h, 3, ppalab::FormalSeries::constant(ctx.shape, complexd{1.0, 0.0}));

  const Field b = ppalab::random_real_field(lat(), 34);
  const Field phi = ppalab::random_real_field(lat(), 35);
  const ppalab::PolyFunctional shifted = ppalab::shift_field(ctx, f, b);
  const Field sum = phi + b;
  REQUIRE(ppalab::reported_difference(ppalab::evaluate(ctx, shifted, phi),
                                      ppalab::evaluate(ctx, f, sum)) < 1e-12);

  const ppalab::KleinGordonOp op1 = ppalab::build_operator(lat(), 1.0);
  const ppalab::QuadraticPerturbation q = ppalab::mass_perturbation(ramp_mass(lat(), 0.5));
  const ppalab::MollerOperator m = ppalab::classical_moller_exact(op1, q);

  // pullback composes the legs with the map: F(R phi) evaluated directly
  const ppalab::PolyFunctional pb = ppalab::pullback(ctx, m, f);
  const Field rphi = m.apply(phi);
  REQUIRE(ppalab::reported_difference(ppalab::evaluate(ctx, pb, phi),
                                      ppalab::evaluate(ctx, f, rphi)) < 1e-12);

  // and the inverse pullback undoes it
  const ppalab::PolyFunctional back = ppalab::pullback_inverse(ctx, m, pb);
  REQUIRE(ppalab::probe_difference(ctx, back, f) < 1e-10);
}
