#pragma once

#include <Eigen/Dense>
#include <cassert>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "ppalab/lattice.hpp"

namespace ppalab {

using BiKernel = Eigen::MatrixXcd;  // kernel K(x,y); acts with one measure factor per sum

// Kernel algebra: sums over sites always carry the measure.
inline BiKernel kernel_compose(const LatticeSpec& lat, const BiKernel& a, const BiKernel& b) {
  return a * (lat.mu * b);
}
inline Field kernel_apply(const LatticeSpec& lat, const BiKernel& k, const Field& f) {
  return lat.mu * (k * f);
}
inline complexd kernel_pair(const LatticeSpec& lat, const Field& f, const BiKernel& k,
                            const Field& g) {
  return lat.mu * lat.mu * (f.transpose() * (k * g))(0, 0);
}
inline BiKernel kernel_identity(const LatticeSpec& lat) {
  return BiKernel::Identity(lat.sites, lat.sites) / lat.mu;
}
// Adjoint with respect to the measure-weighted pairing (uniform measure: conjugate transpose).
inline BiKernel kernel_adjoint(const BiKernel& k) { return k.adjoint(); }

// Discrete Klein-Gordon operator P = D2_t - Lap_x + msq(x), zero padding in
// time, periodic in space. Per spatial mode this is the central second
// difference in t plus omega_k^2, omega_k^2 = kappa^2(k) + m^2, whose
// oscillatory solutions have the discrete frequency
// omega_tilde = (2/dt) asin(omega dt / 2), defined while omega dt < 2.
struct KleinGordonOp {
  LatticeSpec lat;
  Eigen::VectorXd msq;  // per-site mass-squared profile

  Field apply(const Field& phi) const {
    assert(phi.size() == lat.sites);
    Field out(lat.sites);
    const double idt2 = 1.0 / (lat.dt * lat.dt);
    const double idx2 = 1.0 / (lat.dx * lat.dx);
    for (int t = 0; t < lat.n_t; ++t)
      for (int s = 0; s < lat.spatial_sites; ++s) {
        const int i = lat.site(t, s);
        complexd acc = -2.0 * phi[i] * idt2;
        if (t + 1 < lat.n_t) acc += phi[lat.site(t + 1, s)] * idt2;
        if (t - 1 >= 0) acc += phi[lat.site(t - 1, s)] * idt2;
        // -Lap_x: (2 phi(x) - phi(x+e) - phi(x-e)) / dx^2 per dimension
        complexd lap{0.0, 0.0};
        int stride = 1;
        for (int dim = 0; dim < lat.dim; ++dim) {
          const int along = (s / stride) % lat.n_x;
          const int up = s + (((along + 1) % lat.n_x) - along) * stride;
          const int dn = s + (((along - 1 + lat.n_x) % lat.n_x) - along) * stride;
          lap += (2.0 * phi[i] - phi[lat.site(t, up)] - phi[lat.site(t, dn)]) * idx2;
          stride *= lat.n_x;
        }
        out[i] = acc + lap + msq[i] * phi[i];
      }
    return out;
  }

  Eigen::MatrixXd dense() const {
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(lat.sites, lat.sites);
    const double idt2 = 1.0 / (lat.dt * lat.dt);
    const double idx2 = 1.0 / (lat.dx * lat.dx);
    for (int t = 0; t < lat.n_t; ++t)
      for (int s = 0; s < lat.spatial_sites; ++s) {
        const int i = lat.site(t, s);
        p(i, i) += -2.0 * idt2 + msq[i];
        if (t + 1 < lat.n_t) p(i, lat.site(t + 1, s)) += idt2;
        if (t - 1 >= 0) p(i, lat.site(t - 1, s)) += idt2;
        int stride = 1;
        for (int dim = 0; dim < lat.dim; ++dim) {
          const int along = (s / stride) % lat.n_x;
          const int up = s + (((along + 1) % lat.n_x) - along) * stride;
          const int dn = s + (((along - 1 + lat.n_x) % lat.n_x) - along) * stride;
          p(i, i) += 2.0 * idx2;
          p(i, lat.site(t, up)) -= idx2;
          p(i, lat.site(t, dn)) -= idx2;
          stride *= lat.n_x;
        }
      }
    return p;
  }
};

inline KleinGordonOp build_operator(const LatticeSpec& lat, const Eigen::VectorXd& msq_profile) {
  assert(msq_profile.size() == lat.sites);
  return KleinGordonOp{lat, msq_profile};
}
inline KleinGordonOp build_operator(const LatticeSpec& lat, double msq) {
  return KleinGordonOp{lat, Eigen::VectorXd::Constant(lat.sites, msq)};
}

// Retarded Green kernel by forward substitution in time:
// column (s,y): X(t,.) = 0 for t <= s, X(s+1,x) = (dt^2/mu) delta_xy, then
// X(r+1) = 2 X(r) - X(r-1) - dt^2 (-Lap + msq(r)) X(r).
// P o Delta^R = 1/mu-identity holds exactly on every row except the final time
// slice, whose stencil row is the open-boundary closure (mirrored first slice
// for Delta^A).
inline BiKernel retarded(const KleinGordonOp& op) {
  const LatticeSpec& lat = op.lat;
  const int ns = lat.spatial_sites;
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(lat.sites, lat.sites);
  const double dt2 = lat.dt * lat.dt;
  const double idx2 = 1.0 / (lat.dx * lat.dx);
  for (int src = 0; src < lat.sites; ++src) {
    const int s_t = lat.time_of(src);
    if (s_t + 1 >= lat.n_t) continue;
    x(lat.site(s_t + 1, lat.spatial_of(src)), src) = dt2 / lat.mu;
    for (int r = s_t + 1; r + 1 < lat.n_t; ++r) {
      for (int sp = 0; sp < ns; ++sp) {
        const int i = lat.site(r, sp);
        double lap = 0.0;
        int stride = 1;
        for (int dim = 0; dim < lat.dim; ++dim) {
          const int along = (sp / stride) % lat.n_x;
          const int up = sp + (((along + 1) % lat.n_x) - along) * stride;
          const int dn = sp + (((along - 1 + lat.n_x) % lat.n_x) - along) * stride;
          lap += (2.0 * x(i, src) - x(lat.site(r, up), src) - x(lat.site(r, dn), src)) * idx2;
          stride *= lat.n_x;
        }
        x(lat.site(r + 1, sp), src) = 2.0 * x(i, src) - x(lat.site(r - 1, sp), src) -
                                      dt2 * (lap + op.msq[i] * x(i, src));
      }
    }
  }
  return x.cast<complexd>();
}

inline BiKernel advanced(const KleinGordonOp& op) { return retarded(op).transpose(); }
inline BiKernel causal(const KleinGordonOp& op) {
  const BiKernel r = retarded(op);
  return r - BiKernel(r.transpose());
}

// Per-spatial-mode solution data for a constant-mass operator.
struct ModeData {
  double kappa_sq = 0.0;
  double omega_sq = 0.0;      // kappa^2 + m^2
  double omega = 0.0;         // sqrt(omega_sq)
  double omega_tilde = 0.0;   // (2/dt) asin(omega dt/2) when oscillatory
  bool oscillatory = false;   // 0 < omega dt < 2
  bool has_vacuum = false;    // omega > 0 (z-construction defined)
  Eigen::VectorXd a;          // cos-like solution, a(0)=1, a(1)=1-dt^2 w^2/2
  Eigen::VectorXd b;          // sin-like solution, b(0)=0, b(1)=b1
  double b1 = 0.0;            // discrete Wronskian of (a,b)
  double gamma_sq = 0.0;      // dt^2 / (2 mu b1)
};

// Mode decomposition of the free theory at constant mass^2. The vacuum-type
// kernel per mode is z(t) conj(z(s)) ... realized as
//   Delta^+_k(t,s) = gamma^2 [ a(t)a(s) + b(t)b(s) + i (b(t)a(s) - a(t)b(s)) ],
// which has Im = Delta_k/2 exactly and is positive (rank one) for every mode
// with omega > 0, including modes past the oscillatory edge. For oscillatory
// modes b1 = sin(omega_tilde dt) makes this the standard positive-frequency
// choice gamma^2 e^{i omega_tilde dt (t - s)}.
struct ModeBasis {
  LatticeSpec lat;
  double msq = 0.0;
  std::vector<ModeData> modes;

  const ModeData& operator[](int k) const { return modes[static_cast<std::size_t>(k)]; }
  int count() const { return static_cast<int>(modes.size()); }
};

inline ModeBasis build_modes(const LatticeSpec& lat, double msq) {
  ModeBasis mb{lat, msq, {}};
  mb.modes.resize(static_cast<std::size_t>(lat.spatial_sites));
  for (int k = 0; k < lat.spatial_sites; ++k) {
    ModeData& m = mb.modes[static_cast<std::size_t>(k)];
    m.kappa_sq = lat.kappa_sq(k);
    m.omega_sq = m.kappa_sq + msq;
    if (m.omega_sq < 0.0) throw std::invalid_argument("build_modes: tachyonic mode");
    m.omega = std::sqrt(m.omega_sq);
    const double edge = m.omega * lat.dt / 2.0;
    m.oscillatory = (m.omega > 0.0) && (edge < 1.0);
    m.has_vacuum = m.omega > 0.0;
    if (m.oscillatory) {
      m.omega_tilde = (2.0 / lat.dt) * std::asin(edge);
      m.b1 = lat.dt * m.omega * std::sqrt(1.0 - edge * edge);
    } else if (m.has_vacuum) {
      m.b1 = lat.dt * m.omega;  // squeezing scale for non-oscillatory modes
    } else {
      m.b1 = lat.dt;  // massless zero mode; causal part only
    }
    m.gamma_sq = lat.dt * lat.dt / (2.0 * lat.mu * m.b1);
    // Leapfrog solutions of the mode equation.
    const double c = 2.0 - lat.dt * lat.dt * m.omega_sq;
    m.a.resize(lat.n_t);
    m.b.resize(lat.n_t);
    m.a[0] = 1.0;
    m.b[0] = 0.0;
    if (lat.n_t > 1) {
      m.a[1] = c / 2.0;  // = 1 - dt^2 omega^2 / 2 = cos(omega_tilde dt) when oscillatory
      m.b[1] = m.b1;
    }
    for (int t = 2; t < lat.n_t; ++t) {
      m.a[t] = c * m.a[t - 1] - m.a[t - 2];
      m.b[t] = c * m.b[t - 1] - m.b[t - 2];
    }
  }
  return mb;
}

inline complexd mode_vacuum_entry(const ModeData& m, int t, int s) {
  const double re = m.a[t] * m.a[s] + m.b[t] * m.b[s];
  const double im = m.b[t] * m.a[s] - m.a[t] * m.b[s];
  return m.gamma_sq * complexd{re, im};
}

// Thermal entry with imaginary-time separation du in [0, beta] between the two
// arguments (first argument earlier in product order):
//   gamma^2 [ (1+n) e^{i wt dt (t-s)} e^{-wt du} + n e^{-i wt dt (t-s)} e^{+wt du} ],
// n = 1/(e^{beta wt} - 1). At du = beta this is the du = 0 entry transposed
// (the KMS boundary identity). Requires an oscillatory mode.
inline complexd mode_thermal_entry(const ModeData& m, double dt, double beta, int t, int s,
                                   double du = 0.0) {
  assert(m.oscillatory);
  const double wt = m.omega_tilde;
  const double n = 1.0 / std::expm1(beta * wt);
  const double phase = wt * dt * (t - s);
  const complexd plus = std::polar(1.0, phase);
  return m.gamma_sq * ((1.0 + n) * std::exp(-wt * du) * plus +
                       n * std::exp(wt * du) * std::conj(plus));
}

// Free theory bundle: kernels of the constant-mass operator, optionally
// restricted to a spatial-mode subset (all kernels assembled from the same
// modes, so the bundle is internally consistent on its subspace).
struct FreeTheory {
  LatticeSpec lat;
  double msq = 0.0;
  ModeBasis modes;
  std::vector<char> enabled;  // per-mode mask

  BiKernel delta_r;      // retarded
  BiKernel delta_a;      // advanced
  BiKernel delta;        // causal = retarded - advanced
  BiKernel delta_plus;   // vacuum-type two-point kernel
  BiKernel delta_f;      // Feynman = delta_plus + i delta_a

  bool restricted() const {
    for (char e : enabled)
      if (!e) return true;
    return false;
  }
};

namespace detail {

// Assemble a position kernel from per-mode time kernels:
// K(x,y) = (1/n_s) sum_k e^{i 2pi k.(x-y)/n_x} Khat_k(t_x, t_y).
template <typename ModeEntry>
inline BiKernel assemble(const LatticeSpec& lat, const std::vector<char>& enabled,
                         ModeEntry&& entry) {
  const int ns = lat.spatial_sites;
  BiKernel out = BiKernel::Zero(lat.sites, lat.sites);
  // Precompute spatial phases e^{i 2pi k.r/n_x} for all modes and separations.
  Eigen::MatrixXcd phase(ns, ns);  // (k, r)
  for (int k = 0; k < ns; ++k)
    for (int r = 0; r < ns; ++r) {
      double arg = 0.0;
      int kk = k, rr = r;
      for (int d = 0; d < lat.dim; ++d) {
        arg += 2.0 * std::numbers::pi * (kk % lat.n_x) * (rr % lat.n_x) / lat.n_x;
        kk /= lat.n_x;
        rr /= lat.n_x;
      }
      phase(k, r) = std::polar(1.0 / ns, arg);
    }
  for (int k = 0; k < ns; ++k) {
    if (!enabled[static_cast<std::size_t>(k)]) continue;
    Eigen::MatrixXcd tk(lat.n_t, lat.n_t);
    for (int t = 0; t < lat.n_t; ++t)
      for (int s = 0; s < lat.n_t; ++s) tk(t, s) = entry(k, t, s);
    for (int xs = 0; xs < ns; ++xs)
      for (int ys = 0; ys < ns; ++ys) {
        // separation phase: e^{i k.(x-y)} = phase(k,x) * conj(phase(k,y)) * ns
        const complexd ph = phase(k, xs) * std::conj(phase(k, ys)) * static_cast<double>(ns);
        for (int t = 0; t < lat.n_t; ++t)
          for (int s = 0; s < lat.n_t; ++s)
            out(lat.site(t, xs), lat.site(s, ys)) += ph * tk(t, s);
      }
  }
  return out;
}

inline complexd mode_causal_entry(const LatticeSpec& lat, const ModeData& m, int t, int s) {
  const double v = (m.b[t] * m.a[s] - m.a[t] * m.b[s]) / m.b1;
  return complexd{lat.dt * lat.dt / lat.mu * v, 0.0};
}

inline complexd mode_retarded_entry(const LatticeSpec& lat, const ModeData& m, int t, int s) {
  if (t <= s) return complexd{0.0, 0.0};
  return mode_causal_entry(lat, m, t, s);
}

}  // namespace detail

// Build the free-theory kernel bundle. `mask` selects the spatial modes kept
// (empty = all modes). The massless spatial zero mode never contributes a
// vacuum kernel: it is excluded from delta_plus (and must be excluded from the
// field content by callers doing massless state constructions).
inline FreeTheory build_free_theory(const LatticeSpec& lat, double msq,
                                    std::vector<char> mask = {}) {
  FreeTheory th;
  th.lat = lat;
  th.msq = msq;
  th.modes = build_modes(lat, msq);
  if (mask.empty()) mask.assign(static_cast<std::size_t>(lat.spatial_sites), 1);
  th.enabled = std::move(mask);

  const auto& mb = th.modes;
  th.delta_r = detail::assemble(lat, th.enabled, [&](int k, int t, int s) {
    return detail::mode_retarded_entry(lat, mb[k], t, s);
  });
  th.delta_a = th.delta_r.transpose();
  th.delta = detail::assemble(lat, th.enabled, [&](int k, int t, int s) {
    return detail::mode_causal_entry(lat, mb[k], t, s);
  });
  std::vector<char> vac = th.enabled;
  for (int k = 0; k < lat.spatial_sites; ++k)
    if (!mb[k].has_vacuum) vac[static_cast<std::size_t>(k)] = 0;
  th.delta_plus = detail::assemble(lat, vac, [&](int k, int t, int s) {
    return mode_vacuum_entry(mb[k], t, s);
  });
  th.delta_f = th.delta_plus + complexd{0.0, 1.0} * th.delta_a;
  return th;
}

// Mask of modes admitting a thermal (KMS) kernel: oscillatory, hence nonzero
// frequency. Massless lattices drop the spatial zero mode here.
inline std::vector<char> thermal_mode_mask(const LatticeSpec& lat, double msq) {
  ModeBasis mb = build_modes(lat, msq);
  std::vector<char> mask(static_cast<std::size_t>(lat.spatial_sites), 0);
  for (int k = 0; k < lat.spatial_sites; ++k)
    if (mb[k].oscillatory) mask[static_cast<std::size_t>(k)] = 1;
  return mask;
}

inline BiKernel vacuum_two_point(const FreeTheory& th) { return th.delta_plus; }

// KMS two-point kernel at inverse temperature beta, with optional imaginary
// time separation du (continue_imaginary composed with the thermal kernel).
inline BiKernel kms_two_point(const FreeTheory& th, double beta, double du = 0.0) {
  if (!(beta > 0.0)) throw std::invalid_argument("kms_two_point: beta must be positive");
  std::vector<char> mask = th.enabled;
  for (int k = 0; k < th.lat.spatial_sites; ++k)
    if (!th.modes[k].oscillatory) mask[static_cast<std::size_t>(k)] = 0;
  return detail::assemble(th.lat, mask, [&](int k, int t, int s) {
    return mode_thermal_entry(th.modes[k], th.lat.dt, beta, t, s, du);
  });
}

inline BiKernel feynman(const FreeTheory& th) { return th.delta_f; }

}  // namespace ppalab
