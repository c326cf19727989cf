#pragma once

#include <Eigen/Dense>
#include <array>
#include <cassert>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace ppalab {

using complexd = std::complex<double>;
using Field = Eigen::VectorXcd;            // complex values on lattice sites
using DensityFunction = Eigen::VectorXcd;  // same storage, paired against fields

// Finite Minkowski box: open (zero-padded) time direction of n_t slices,
// periodic spatial torus of n_x sites per dimension, d spatial dimensions.
// Site index = t * n_x^d + spatial, spatial little-endian in the dimensions.
struct LatticeSpec {
  int n_t = 8;
  double dt = 0.2;
  int dim = 1;
  int n_x = 8;
  double dx = 0.2;

  int spatial_sites = 0;  // n_x^d
  int sites = 0;          // n_t * n_x^d
  double mu = 0.0;        // uniform site measure dt * dx^d

  int time_of(int site) const { return site / spatial_sites; }
  int spatial_of(int site) const { return site % spatial_sites; }
  int site(int t, int s) const { return t * spatial_sites + s; }

  std::vector<int> spatial_coords(int s) const {
    std::vector<int> c(static_cast<std::size_t>(dim));
    for (int i = 0; i < dim; ++i) {
      c[static_cast<std::size_t>(i)] = s % n_x;
      s /= n_x;
    }
    return c;
  }

  int spatial_index(const std::vector<int>& c) const {
    int s = 0;
    for (int i = dim - 1; i >= 0; --i) {
      int ci = c[static_cast<std::size_t>(i)] % n_x;
      if (ci < 0) ci += n_x;
      s = s * n_x + ci;
    }
    return s;
  }

  // Discrete spatial Laplacian eigenvalue for mode k (one index per dimension):
  // kappa^2 = sum_i (4/dx^2) sin^2(pi k_i / n_x).
  double kappa_sq(int mode) const {
    double acc = 0.0;
    for (int i = 0; i < dim; ++i) {
      const int ki = mode % n_x;
      mode /= n_x;
      const double s = std::sin(std::numbers::pi * ki / n_x);
      acc += 4.0 / (dx * dx) * s * s;
    }
    return acc;
  }

  bool is_zero_mode(int mode) const {
    for (int i = 0; i < dim; ++i) {
      if (mode % n_x != 0) return false;
      mode /= n_x;
    }
    return true;
  }
};

inline LatticeSpec build_lattice(int n_t, double dt, int dim, int n_x, double dx) {
  if (n_t < 3 || n_x < 2 || dim < 1 || dim > 3 || dt <= 0.0 || dx <= 0.0)
    throw std::invalid_argument("build_lattice: invalid geometry");
  LatticeSpec lat;
  lat.n_t = n_t;
  lat.dt = dt;
  lat.dim = dim;
  lat.n_x = n_x;
  lat.dx = dx;
  lat.spatial_sites = 1;
  for (int i = 0; i < dim; ++i) lat.spatial_sites *= n_x;
  lat.sites = n_t * lat.spatial_sites;
  lat.mu = dt * std::pow(dx, dim);
  return lat;
}

// <f, h> = sum_x mu f(x) h(x); bilinear, no conjugation.
inline complexd pairing(const LatticeSpec& lat, const Field& f, const Field& h) {
  assert(f.size() == lat.sites && h.size() == lat.sites);
  complexd acc{0.0, 0.0};
  for (int i = 0; i < lat.sites; ++i) acc += f[i] * h[i];
  return lat.mu * acc;
}

// Unitary spatial DFT per time slice: fhat(t,k) = n_x^{-d/2} sum_x f(t,x) e^{-i 2pi k.x/n_x}.
// Preserves the weighted norm slice by slice (the measure is uniform).
inline Field spatial_fourier(const LatticeSpec& lat, const Field& f) {
  assert(f.size() == lat.sites);
  const int ns = lat.spatial_sites;
  const complexd i2pi{0.0, -2.0 * std::numbers::pi};
  // One-dimensional DFT applied along each spatial dimension in turn.
  Field cur = f;
  for (int axis = 0; axis < lat.dim; ++axis) {
    int stride = 1;
    for (int i = 0; i < axis; ++i) stride *= lat.n_x;
    Field next(lat.sites);
    for (int t = 0; t < lat.n_t; ++t)
      for (int base = 0; base < ns; ++base) {
        const int along = (base / stride) % lat.n_x;
        const int rest = base - along * stride;
        complexd acc{0.0, 0.0};
        for (int x = 0; x < lat.n_x; ++x) {
          const int src = lat.site(t, rest + x * stride);
          acc += cur[src] * std::exp(i2pi * (static_cast<double>(along) * x / lat.n_x));
        }
        next[lat.site(t, base)] = acc / std::sqrt(static_cast<double>(lat.n_x));
      }
    cur = next;
  }
  return cur;
}

inline Field spatial_fourier_inverse(const LatticeSpec& lat, const Field& fhat) {
  assert(fhat.size() == lat.sites);
  const int ns = lat.spatial_sites;
  const complexd i2pi{0.0, 2.0 * std::numbers::pi};
  Field cur = fhat;
  for (int axis = 0; axis < lat.dim; ++axis) {
    int stride = 1;
    for (int i = 0; i < axis; ++i) stride *= lat.n_x;
    Field next(lat.sites);
    for (int t = 0; t < lat.n_t; ++t)
      for (int base = 0; base < ns; ++base) {
        const int along = (base / stride) % lat.n_x;
        const int rest = base - along * stride;
        complexd acc{0.0, 0.0};
        for (int k = 0; k < lat.n_x; ++k) {
          const int src = lat.site(t, rest + k * stride);
          acc += cur[src] * std::exp(i2pi * (static_cast<double>(along) * k / lat.n_x));
        }
        next[lat.site(t, base)] = acc / std::sqrt(static_cast<double>(lat.n_x));
      }
    cur = next;
  }
  return cur;
}

// Shift forward in time by `steps` grid units; sites shifted out of the open
// time window are dropped, vacated sites are zero.
inline Field time_translate(const LatticeSpec& lat, const Field& f, int steps) {
  assert(f.size() == lat.sites);
  Field out = Field::Zero(lat.sites);
  for (int t = 0; t < lat.n_t; ++t) {
    const int src = t - steps;
    if (src < 0 || src >= lat.n_t) continue;
    for (int s = 0; s < lat.spatial_sites; ++s) out[lat.site(t, s)] = f[lat.site(src, s)];
  }
  return out;
}

// Toroidal shift in one spatial dimension.
inline Field spatial_translate(const LatticeSpec& lat, const Field& f, int axis, int steps) {
  assert(axis >= 0 && axis < lat.dim);
  Field out(lat.sites);
  int stride = 1;
  for (int i = 0; i < axis; ++i) stride *= lat.n_x;
  for (int t = 0; t < lat.n_t; ++t)
    for (int s = 0; s < lat.spatial_sites; ++s) {
      const int along = (s / stride) % lat.n_x;
      int from = (along - steps) % lat.n_x;
      if (from < 0) from += lat.n_x;
      const int src_s = s + (from - along) * stride;
      out[lat.site(t, s)] = f[lat.site(t, src_s)];
    }
  return out;
}

}  // namespace ppalab
