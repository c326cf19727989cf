// Free-field kernels: the retarded solution against an explicit leapfrog
// recursion, cone support, antisymmetry, positivity, and the per-mode
// dispersion and thermal boundary identities.

#include <catch2/catch_amalgamated.hpp>

#include <ppalab/propagators.hpp>

#include <Eigen/Eigenvalues>
#include <cmath>

using ppalab::build_lattice;
using ppalab::complexd;
using ppalab::Field;
using ppalab::LatticeSpec;
using ppalab::Matrix;

namespace {

// Forward leapfrog integration of a unit kick at (ts, ss), one spatial
// dimension: the column a retarded inverse must produce.
Eigen::MatrixXd kicked_solution(const LatticeSpec& lat, double msq, int ts, int ss) {
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(lat.n_t, lat.n_x);
  const double dt2 = lat.dt * lat.dt;
  const double idx2 = 1.0 / (lat.dx * lat.dx);
  for (int t = ts; t + 1 < lat.n_t; ++t) {
    for (int s = 0; s < lat.n_x; ++s) {
      const double lap =
          (2.0 * u(t, s) - u(t, (s + 1) % lat.n_x) - u(t, (s + lat.n_x - 1) % lat.n_x)) * idx2;
      double next = 2.0 * u(t, s) - dt2 * (lap + msq * u(t, s));
      if (t - 1 >= 0) next -= u(t - 1, s);
      if (t == ts && s == ss) next += dt2;
      u(t + 1, s) = next;
    }
  }
  return u;
}

// Dependence cone of the stencil, restated from the update rule: one spatial
// site of spread per step, first response one step after the kick.
bool cone(const LatticeSpec& lat, int t_src, int s_src, int t_dst, int s_dst) {
  if (t_dst <= t_src) return false;
  const int d = std::abs(s_dst - s_src);
  return std::min(d, lat.n_x - d) + 1 <= t_dst - t_src;
}

}  // namespace

TEST_CASE("retarded kernel reproduces the kicked leapfrog solution") {
  const LatticeSpec lat = build_lattice(6, 0.15, 1, 4, 0.4);
  const double msq = 1.3;
  const ppalab::KleinGordonOp op = ppalab::build_operator(lat, msq);
  const Matrix r = ppalab::retarded(op);
  for (const auto& [ts, ss] : {std::pair{0, 1}, std::pair{2, 3}}) {
    const Eigen::MatrixXd u = kicked_solution(lat, msq, ts, ss);
    const int j = lat.site(ts, ss);
    for (int t = 0; t < lat.n_t; ++t)
      for (int s = 0; s < lat.n_x; ++s)
        REQUIRE(std::abs(r(lat.site(t, s), j) - u(t, s)) < 1e-12);
  }
}

TEST_CASE("retarded support stays inside the discrete cone") {
  const LatticeSpec lat = build_lattice(6, 0.15, 1, 5, 0.4);
  const Matrix r = ppalab::retarded(ppalab::build_operator(lat, 0.7));
  for (int i = 0; i < lat.sites; ++i)
    for (int j = 0; j < lat.sites; ++j) {
      if (std::abs(r(i, j)) <= 1e-13) continue;
      REQUIRE(cone(lat, lat.time_of(j), lat.spatial_of(j), lat.time_of(i), lat.spatial_of(i)));
    }
}

TEST_CASE("commutator kernel is real and antisymmetric") {
  const ppalab::FreeTheory th = ppalab::build_free_theory(build_lattice(6, 0.2, 1, 4, 0.3), 1.0);
  REQUIRE((th.delta + th.delta.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE(th.delta.imag().cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE((th.delta - (th.delta_r - th.delta_a)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("state kernel is positive with the commutator as imaginary part") {
  const ppalab::FreeTheory th = ppalab::build_free_theory(build_lattice(6, 0.2, 1, 4, 0.3), 1.0);
  const Matrix& dp = th.delta_plus;
  REQUIRE((dp - dp.adjoint()).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE((dp.imag() - 0.5 * th.delta.real()).cwiseAbs().maxCoeff() < 1e-12);
  Eigen::SelfAdjointEigenSolver<Matrix> es(dp);
  REQUIRE(es.eigenvalues().minCoeff() > -1e-12);
}

TEST_CASE("feynman kernel is symmetric") {
  const ppalab::FreeTheory th = ppalab::build_free_theory(build_lattice(6, 0.2, 1, 4, 0.3), 1.0);
  REQUIRE((th.delta_f - th.delta_f.transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mode data follows the stencil dispersion") {
  const LatticeSpec lat = build_lattice(6, 0.2, 1, 8, 0.2);
  const double msq = 1.0;
  const std::vector<ppalab::ModeData> modes = ppalab::build_modes(lat, msq);
  for (int k = 0; k < lat.spatial_sites; ++k) {
    const ppalab::ModeData& m = modes[static_cast<std::size_t>(k)];
    REQUIRE(m.omega_sq == Catch::Approx(lat.kappa_sq(k) + msq));
    const double wdt = std::sqrt(m.omega_sq) * lat.dt;
    REQUIRE(m.oscillatory == (wdt < 2.0));
    if (m.oscillatory)
      REQUIRE(m.omega_tilde == Catch::Approx((2.0 / lat.dt) * std::asin(wdt / 2.0)));
  }
  // the band-edge mode of this grid fails the stencil bound and is masked
  const std::vector<bool> mask = ppalab::thermal_mode_mask(lat, msq);
  REQUIRE_FALSE(mask[4]);
  REQUIRE(mask[0]);
  REQUIRE(mask[1]);
}

TEST_CASE("mode kernels are single-frequency and hermitian") {
  const LatticeSpec lat = build_lattice(6, 0.2, 1, 4, 0.3);
  const std::vector<ppalab::ModeData> modes = ppalab::build_modes(lat, 1.0);
  const ppalab::ModeData& m = modes[1];
  REQUIRE(m.oscillatory);
  for (int t = 0; t < lat.n_t; ++t)
    for (int s = 0; s < lat.n_t; ++s) {
      const complexd e = ppalab::mode_vacuum_entry(m, t, s);
      REQUIRE(std::abs(e - std::conj(ppalab::mode_vacuum_entry(m, s, t))) < 1e-14);
      // translation invariance in the time difference
      if (t + 1 < lat.n_t && s + 1 < lat.n_t)
        REQUIRE(std::abs(e - ppalab::mode_vacuum_entry(m, t + 1, s + 1)) < 1e-14);
    }
  // one oscillation frequency: stepping t multiplies by a fixed unit phase
  const complexd ratio = ppalab::mode_vacuum_entry(m, 2, 0) / ppalab::mode_vacuum_entry(m, 1, 0);
  REQUIRE(std::abs(std::abs(ratio) - 1.0) < 1e-13);
  REQUIRE(std::abs(std::abs(std::arg(ratio)) - m.omega_tilde * lat.dt) < 1e-12);
}

TEST_CASE("thermal mode entries satisfy the boundary identity and cool to vacuum") {
  const LatticeSpec lat = build_lattice(6, 0.2, 1, 4, 0.3);
  const std::vector<ppalab::ModeData> modes = ppalab::build_modes(lat, 1.0);
  const double beta = 1.7;
  for (const ppalab::ModeData& m : modes) {
    if (!m.oscillatory) continue;
    for (int t = 0; t < lat.n_t; ++t)
      for (int s = 0; s < lat.n_t; ++s) {
        const complexd a = ppalab::mode_thermal_entry(m, lat.dt, beta, t, s, beta);
        const complexd b = ppalab::mode_thermal_entry(m, lat.dt, beta, s, t, 0.0);
        REQUIRE(std::abs(a - b) < 1e-13);
      }
    const complexd cold = ppalab::mode_thermal_entry(m, lat.dt, 60.0, 3, 1, 0.0);
    REQUIRE(std::abs(cold - ppalab::mode_vacuum_entry(m, 3, 1)) < 1e-10);
  }
}

TEST_CASE("thermal kernels require a positive temperature") {
  const ppalab::FreeTheory th = ppalab::build_free_theory(build_lattice(6, 0.2, 1, 4, 0.3), 1.0);
  REQUIRE_THROWS_AS(ppalab::kms_two_point(th, 0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(ppalab::kms_two_point(th, -1.0), std::invalid_argument);
}
