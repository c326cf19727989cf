// Torus geometry: index round-trips, the measure, pairing against a direct
// sum, and the unitarity and periodicity of the spatial transform.

#include <catch2/catch_amalgamated.hpp>

#include <ppalab/lattice.hpp>

#include <cmath>
#include <numbers>
#include <random>

using ppalab::build_lattice;
using ppalab::complexd;
using ppalab::Field;
using ppalab::LatticeSpec;

namespace {

Field rand_field(const LatticeSpec& lat, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Field f(lat.sites);
  for (int i = 0; i < lat.sites; ++i) f[i] = complexd{u(rng), u(rng)};
  return f;
}

}  // namespace

TEST_CASE("invalid geometry is rejected") {
  REQUIRE_THROWS_AS(build_lattice(2, 0.1, 1, 4, 0.1), std::invalid_argument);
  REQUIRE_THROWS_AS(build_lattice(4, 0.1, 1, 1, 0.1), std::invalid_argument);
  REQUIRE_THROWS_AS(build_lattice(4, 0.1, 0, 4, 0.1), std::invalid_argument);
  REQUIRE_THROWS_AS(build_lattice(4, 0.1, 4, 4, 0.1), std::invalid_argument);
  REQUIRE_THROWS_AS(build_lattice(4, 0.0, 1, 4, 0.1), std::invalid_argument);
  REQUIRE_THROWS_AS(build_lattice(4, 0.1, 1, 4, -0.2), std::invalid_argument);
}

TEST_CASE("site indexing round-trips and the measure is the cell volume") {
  const LatticeSpec lat = build_lattice(5, 0.1, 2, 3, 0.4);
  REQUIRE(lat.spatial_sites == 9);
  REQUIRE(lat.sites == 45);
  REQUIRE(lat.mu == Catch::Approx(0.1 * 0.4 * 0.4));
  for (int i = 0; i < lat.sites; ++i) REQUIRE(lat.site(lat.time_of(i), lat.spatial_of(i)) == i);
  for (int s = 0; s < lat.spatial_sites; ++s)
    REQUIRE(lat.spatial_index(lat.spatial_coords(s)) == s);
}

TEST_CASE("mode frequencies follow the stencil dispersion") {
  const LatticeSpec lat = build_lattice(4, 0.1, 2, 4, 0.3);
  REQUIRE(lat.kappa_sq(0) == 0.0);
  REQUIRE(lat.is_zero_mode(0));
  const double c = 4.0 / (0.3 * 0.3);
  for (int s = 0; s < lat.spatial_sites; ++s) {
    const std::vector<int> k = lat.spatial_coords(s);
    double want = 0.0;
    for (int a = 0; a < lat.dim; ++a) {
      const double sn = std::sin(std::numbers::pi * k[static_cast<std::size_t>(a)] / lat.n_x);
      want += c * sn * sn;
    }
    REQUIRE(lat.kappa_sq(s) == Catch::Approx(want).margin(1e-14));
    REQUIRE(lat.is_zero_mode(s) == (s == 0));
  }
}

TEST_CASE("pairing is the measure-weighted bilinear sum") {
  const LatticeSpec lat = build_lattice(4, 0.2, 1, 4, 0.3);
  const Field f = rand_field(lat, 7);
  const Field h = rand_field(lat, 8);
  complexd direct{0.0, 0.0};
  for (int i = 0; i < lat.sites; ++i) direct += f[i] * h[i] * lat.mu;
  REQUIRE(std::abs(ppalab::pairing(lat, f, h) - direct) < 1e-14);
}

TEST_CASE("spatial transform round-trips and preserves the two-norm") {
  const LatticeSpec lat = build_lattice(4, 0.2, 2, 4, 0.3);
  const Field f = rand_field(lat, 9);
  const Field fhat = ppalab::spatial_fourier(lat, f);
  REQUIRE((ppalab::spatial_fourier_inverse(lat, fhat) - f).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE(fhat.squaredNorm() == Catch::Approx(f.squaredNorm()));
}

TEST_CASE("spatial translation is toroidal, time translation clips") {
  const LatticeSpec lat = build_lattice(5, 0.2, 2, 4, 0.3);
  const Field f = rand_field(lat, 10);

  REQUIRE((ppalab::spatial_translate(lat, f, 1, lat.n_x) - f).cwiseAbs().maxCoeff() == 0.0);
  const Field g = ppalab::spatial_translate(lat, ppalab::spatial_translate(lat, f, 0, 3), 0, -3);
  REQUIRE((g - f).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(ppalab::spatial_translate(lat, f, 0, 3).squaredNorm() == Catch::Approx(f.squaredNorm()));

  // time slices move forward; content pushed past the edge is dropped, not wrapped
  const Field t1 = ppalab::time_translate(lat, f, 1);
  double moved = 0.0, cleared = 0.0;
  for (int s = 0; s < lat.spatial_sites; ++s) {
    moved = std::max(moved, std::abs(t1[lat.site(1, s)] - f[lat.site(0, s)]));
    cleared = std::max(cleared, std::abs(t1[lat.site(0, s)]));
  }
  REQUIRE(moved == 0.0);
  REQUIRE(cleared == 0.0);
  REQUIRE(ppalab::time_translate(lat, f, lat.n_t).cwiseAbs().maxCoeff() == 0.0);
}
