#pragma once

// Thermal Wick calculus on the spatial torus: the quasifree state at inverse
// temperature beta, product strings with imaginary-time offsets, connected
// correlators, the interacting state through its cocycle (both as a ratio of
// full correlators and as a signed sum of connected simplex integrals),
// cutoff-independence measurements, thermal-mass extraction, and the spatial
// clustering of the thermal kernel.
//
// Pairing rules: legs of distinct factors contract with the thermal kernel
// continued by the offset difference; legs of one factor contract with the
// smooth part (thermal minus vacuum). A factor at offset u carries all of its
// legs at that offset, so equal-offset internal pairs never see the offset.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ppalab/formal_series.hpp"
#include "ppalab/functionals.hpp"
#include "ppalab/lattice.hpp"
#include "ppalab/moller_quantum.hpp"
#include "ppalab/propagators.hpp"
#include "ppalab/quadrature.hpp"

namespace ppalab {

// ---------------------------------------------------------------------------
// The quasifree thermal state.

struct ThermalState {
  FreeTheory theory;  // mode set restricted to oscillatory modes
  double beta = 0.0;
  Matrix two_point;    // thermal kernel at equal offset
  Matrix smooth_part;  // thermal minus vacuum kernel; real, symmetric, smooth
};

inline ThermalState make_thermal_state(const LatticeSpec& lat, double msq, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("make_thermal_state: beta must be positive");
  ThermalState st;
  st.theory = build_free_theory(lat, msq, thermal_mode_mask(lat, msq));
  st.beta = beta;
  st.two_point = kms_two_point(st.theory, beta);
  st.smooth_part = st.two_point - vacuum_two_point(st.theory);
  return st;
}

// Largest per-mode violation of the boundary identity: continuing the second
// argument by the full period beta must swap the kernel's arguments.
inline double kms_boundary_residual(const ThermalState& st) {
  const LatticeSpec& lat = st.theory.lat;
  double worst = 0.0;
  for (int k = 0; k < lat.spatial_sites; ++k) {
    if (!st.theory.enabled[static_cast<std::size_t>(k)]) continue;
    const ModeData& m = st.theory.modes[k];
    if (!m.oscillatory) continue;
    for (int t = 0; t < lat.n_t; ++t)
      for (int s = 0; s < lat.n_t; ++s) {
        const complexd a = mode_thermal_entry(m, lat.dt, st.beta, t, s, st.beta);
        const complexd b = mode_thermal_entry(m, lat.dt, st.beta, s, t, 0.0);
        worst = std::max(worst, std::abs(a - b));
      }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Product strings at ordered imaginary-time offsets.

class ThermalPairing {
 public:
  ThermalPairing(AlgebraContext& ctx, const ThermalState& st, const std::vector<double>& offsets)
      : n_(static_cast<int>(offsets.size())) {
    for (std::size_t i = 0; i < offsets.size(); ++i) {
      if (offsets[i] < 0.0 || offsets[i] > st.beta)
        throw std::invalid_argument("thermal offsets must lie in [0, beta]");
      if (i > 0 && offsets[i] < offsets[i - 1])
        throw std::invalid_argument("thermal offsets must be non-decreasing");
    }
    within_ = {{0, ctx.register_matrix(st.smooth_part), complexd{1.0, 0.0}}};
    cross_.resize(static_cast<std::size_t>(n_ * n_));
    for (int a = 0; a < n_; ++a)
      for (int b = a + 1; b < n_; ++b) {
        const double du = offsets[static_cast<std::size_t>(b)] - offsets[static_cast<std::size_t>(a)];
        cross_[static_cast<std::size_t>(a * n_ + b)] = {
            {0, ctx.register_matrix(kms_two_point(st.theory, st.beta, du)), complexd{1.0, 0.0}}};
      }
  }

  const GradedKernel& operator()(int a, int b) const {
    if (a == b) return within_;
    return cross_[static_cast<std::size_t>(a * n_ + b)];
  }

  std::function<const GradedKernel&(int, int)> rule() const {
    return [this](int a, int b) -> const GradedKernel& { return (*this)(a, b); };
  }

 private:
  int n_;
  GradedKernel within_;
  std::vector<GradedKernel> cross_;
};

inline FormalSeries thermal_string_expectation(AlgebraContext& ctx, const ThermalState& st,
                                               const std::vector<const PolyFunctional*>& groups,
                                               const std::vector<double>& offsets,
                                               bool connected_only) {
  if (groups.size() != offsets.size())
    throw std::invalid_argument("thermal_string_expectation: one offset per factor");
  if (groups.empty()) return FormalSeries::constant(ctx.shape, complexd{1.0, 0.0});
  const ThermalPairing pairing(ctx, st, offsets);
  return paired_expectation(ctx, groups, static_cast<int>(groups.size()), pairing.rule(),
                            connected_only);
}

inline FormalSeries gaussian_expectation(AlgebraContext& ctx, const ThermalState& st,
                                         const PolyFunctional& f) {
  return thermal_string_expectation(ctx, st, {&f}, {0.0}, false);
}

inline FormalSeries connected_correlator(AlgebraContext& ctx, const ThermalState& st,
                                         const std::vector<const PolyFunctional*>& groups,
                                         const std::vector<double>& offsets) {
  return thermal_string_expectation(ctx, st, groups, offsets, true);
}

// ---------------------------------------------------------------------------
// Temporal cutoffs: piecewise-linear ramp from 0 to 1, then a plateau at 1
// through the end of the grid. The rate is a one-sided difference quotient
// supported on the ramp; its time integral is one by telescoping.

struct TemporalCutoff {
  int ramp_start = 0;     // last slice where the profile is zero
  int plateau_start = 0;  // first slice where the profile is one
};

inline void validate_cutoff(const LatticeSpec& lat, const TemporalCutoff& c) {
  if (c.ramp_start < 0 || c.plateau_start <= c.ramp_start || c.plateau_start > lat.n_t - 1)
    throw std::invalid_argument("temporal cutoff: need 0 <= ramp_start < plateau_start <= n_t-1");
}

inline Eigen::VectorXd cutoff_profile(const LatticeSpec& lat, const TemporalCutoff& c) {
  validate_cutoff(lat, c);
  Eigen::VectorXd chi = Eigen::VectorXd::Zero(lat.n_t);
  const double span = static_cast<double>(c.plateau_start - c.ramp_start);
  for (int t = 0; t < lat.n_t; ++t) {
    if (t <= c.ramp_start)
      chi[t] = 0.0;
    else if (t >= c.plateau_start)
      chi[t] = 1.0;
    else
      chi[t] = static_cast<double>(t - c.ramp_start) / span;
  }
  return chi;
}

// One-sided difference quotient of the ramp, taken forward so the support
// stays on the ramp slices; no wrap-around term, the late-time profile is
// flat by construction.
inline Eigen::VectorXd cutoff_rate(const LatticeSpec& lat, const TemporalCutoff& c) {
  const Eigen::VectorXd chi = cutoff_profile(lat, c);
  Eigen::VectorXd rate = Eigen::VectorXd::Zero(lat.n_t);
  for (int t = 0; t + 1 < lat.n_t; ++t) rate[t] = (chi[t + 1] - chi[t]) / lat.dt;
  return rate;
}

inline Field slice_site_field(const LatticeSpec& lat, const Eigen::VectorXd& per_slice) {
  if (per_slice.size() != lat.n_t)
    throw std::invalid_argument("slice_site_field: one value per time slice");
  Field f(lat.sites);
  for (int i = 0; i < lat.sites; ++i) f[i] = complexd{per_slice[lat.time_of(i)], 0.0};
  return f;
}

// ---------------------------------------------------------------------------
// Interaction and cocycle generator.

// coupling * sum_x density(x) phi(x)^4 mu, carrying one coupling power.
inline PolyFunctional quartic_interaction(AlgebraContext& ctx, const Field& density,
                                          double coupling) {
  return local_monomial(ctx, density, 4,
                        FormalSeries::monomial(ctx.shape, 0, 1, complexd{coupling, 0.0}));
}

struct CocycleGenerator {
  TemporalCutoff cutoff;
  PolyFunctional interaction;  // density = cutoff profile
  PolyFunctional boundary;     // density = cutoff rate (ramp only)
  PolyFunctional k;            // interaction-dressed boundary term
};

inline CocycleGenerator cocycle_generator(AlgebraContext& ctx, const ThermalState& st,
                                          const TemporalCutoff& c, double coupling) {
  validate_cutoff(ctx.lat, c);
  CocycleGenerator g;
  g.cutoff = c;
  const GradedKernel star = ctx.plain_kernel(st.theory.delta_plus);
  const GradedKernel tord = ctx.plain_kernel(st.theory.delta_f);
  g.interaction = quartic_interaction(ctx, slice_site_field(ctx.lat, cutoff_profile(ctx.lat, c)),
                                      coupling);
  g.boundary = quartic_interaction(ctx, slice_site_field(ctx.lat, cutoff_rate(ctx.lat, c)),
                                   coupling);
  g.k = quantum_moller(ctx, g.interaction, g.boundary, star, tord);
  return g;
}

// ---------------------------------------------------------------------------
// Real-time cocycle: ordered products of translated generators summed over
// the discrete simplex with trapezoid endpoint weights and 1/g! coincidence
// factors. With these weights the composition law holds exactly at kept
// orders, because both sides enumerate the same weighted tuples.

inline PolyFunctional cocycle_unitary(AlgebraContext& ctx, const ThermalState& st,
                                      const CocycleGenerator& gen, int steps) {
  if (steps < 0 || gen.cutoff.plateau_start + steps > ctx.lat.n_t - 1)
    throw std::invalid_argument("cocycle_unitary: step count beyond the lattice span");
  PolyFunctional u = unit_functional(ctx);
  if (steps == 0) return u;
  const GradedKernel star = ctx.plain_kernel(st.theory.delta_plus);
  std::vector<PolyFunctional> shifted;
  shifted.reserve(static_cast<std::size_t>(steps) + 1);
  for (int l = 0; l <= steps; ++l) shifted.push_back(translate_time(ctx, gen.k, l));
  const auto endpoint_weight = [&](int l) { return (l == 0 || l == steps) ? 0.5 : 1.0; };
  const complexd idt{0.0, ctx.lat.dt};

  std::function<void(int, int, int, complexd, const PolyFunctional&)> extend =
      [&](int order, int last, int run, complexd pref, const PolyFunctional& prod) {
        if (order > 0) u = add(ctx, u, scale(ctx, prod, pref));
        if (order == ctx.shape.lambda_max) return;
        for (int l = last; l <= steps; ++l) {
          const PolyFunctional next =
              pair_product(ctx, prod, shifted[static_cast<std::size_t>(l)], star);
          if (next.terms.empty()) continue;
          const int nrun = (order > 0 && l == last) ? run + 1 : 1;
          extend(order + 1, l, nrun, pref * idt * (endpoint_weight(l) / nrun), next);
        }
      };
  extend(0, 0, 0, complexd{1.0, 0.0}, u);
  return u;
}

// ---------------------------------------------------------------------------
// Interacting thermal expectation. Primary pipeline: signed sum of connected
// correlators over the ordered simplex in imaginary time, quadratured by
// mapped Gauss-Legendre nodes. Secondary pipeline: ratio of full-correlator
// series, same nodes. The two agree order by order.

struct InteractingKms {
  FormalSeries simplex_form;  // primary value
  FormalSeries ratio_form;
};

// Divide a series by hbar^n. Each cocycle insertion carries a 1/hbar from the
// time-ordered exponential it derives from, and each of its contractions puts
// at least one power back, so rows below n hold nothing and the shift is a
// plain row move. Content above the working shape is lost, which is why
// callers keep n_max rows of headroom and compare through the trusted band.
inline FormalSeries lower_hbar(const FormalSeries& s, int n) {
  if (n == 0) return s;
  FormalSeries out(s.shape());
  const SeriesShape& sh = s.shape();
  for (int h = 0; h <= sh.hbar_max; ++h)
    for (int l = 0; l <= sh.lambda_max; ++l) out.at(h, l) = s.get(h + n, l);
  return out;
}

inline InteractingKms interacting_kms_expectation(AlgebraContext& ctx, const ThermalState& st,
                                                  const PolyFunctional& f, const PolyFunctional& k,
                                                  int n_max, int n_nodes = 16) {
  if (n_nodes < 2) throw std::invalid_argument("interacting_kms_expectation: quadrature order < 2");
  if (n_max < 0 || n_max > ctx.shape.lambda_max)
    throw std::invalid_argument("interacting_kms_expectation: term count beyond kept orders");
  const Quadrature q = gauss_legendre_01(n_nodes);

  FormalSeries zero_term = thermal_string_expectation(ctx, st, {&f}, {0.0}, false);
  InteractingKms out{zero_term, FormalSeries(ctx.shape)};
  FormalSeries num = zero_term;
  FormalSeries den = FormalSeries::constant(ctx.shape, complexd{1.0, 0.0});

  for (int n = 1; n <= n_max; ++n) {
    const double sign = (n % 2) ? -1.0 : 1.0;
    std::vector<int> idx(static_cast<std::size_t>(n), 0);
    while (true) {
      // chained substitution maps the cube to the ordered simplex
      std::vector<double> u(static_cast<std::size_t>(n));
      double jac = st.beta;
      u[static_cast<std::size_t>(n - 1)] = st.beta * q.x[static_cast<std::size_t>(idx[static_cast<std::size_t>(n - 1)])];
      for (int j = n - 2; j >= 0; --j)
        u[static_cast<std::size_t>(j)] =
            u[static_cast<std::size_t>(j + 1)] * q.x[static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])];
      for (int j = 1; j < n; ++j) jac *= u[static_cast<std::size_t>(j)];
      double weight = sign * jac;
      for (int j = 0; j < n; ++j) weight *= q.w[static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])];

      std::vector<const PolyFunctional*> with_f{&f};
      std::vector<double> offs_f{0.0};
      std::vector<const PolyFunctional*> only_k;
      std::vector<double> offs_k;
      for (int j = 0; j < n; ++j) {
        with_f.push_back(&k);
        offs_f.push_back(u[static_cast<std::size_t>(j)]);
        only_k.push_back(&k);
        offs_k.push_back(u[static_cast<std::size_t>(j)]);
      }
      {
        const ThermalPairing pairing(ctx, st, offs_f);
        const auto rule = pairing.rule();
        FormalSeries conn = lower_hbar(paired_expectation(ctx, with_f, n + 1, rule, true), n);
        FormalSeries full = lower_hbar(paired_expectation(ctx, with_f, n + 1, rule, false), n);
        conn *= complexd{weight, 0.0};
        full *= complexd{weight, 0.0};
        out.simplex_form += conn;
        num += full;
      }
      {
        const ThermalPairing pairing(ctx, st, offs_k);
        FormalSeries full = lower_hbar(paired_expectation(ctx, only_k, n, pairing.rule(), false), n);
        full *= complexd{weight, 0.0};
        den += full;
      }

      int j = 0;
      for (; j < n; ++j) {
        if (++idx[static_cast<std::size_t>(j)] < n_nodes) break;
        idx[static_cast<std::size_t>(j)] = 0;
      }
      if (j == n) break;
    }
  }
  out.ratio_form = num * den.inverse();
  return out;
}

inline InteractingKms interacting_kms_expectation(AlgebraContext& ctx, const ThermalState& st,
                                                  const CocycleGenerator& gen,
                                                  const PolyFunctional& f, int n_max,
                                                  int n_nodes = 16) {
  return interacting_kms_expectation(ctx, st, f, gen.k, n_max, n_nodes);
}

// Max difference of the reported coefficients through coupling order lmax and,
// when hmax is non-negative, through that contraction order only. The series
// built by the simplex expansion are complete only below the top rows of the
// working shape, so comparisons restrict to the trusted band.
inline double reported_difference_through(const FormalSeries& a, const FormalSeries& b, int lmax,
                                          int hmax = -1) {
  const FormalSeries d = a - b;
  const SeriesShape& sh = d.shape();
  const int htop = (hmax < 0) ? sh.hbar_max : std::min(hmax, sh.hbar_max);
  double m = 0.0;
  for (int h = 0; h <= htop; ++h)
    for (int l = 0; l <= std::min(lmax, sh.lambda_max); ++l)
      m = std::max(m, std::abs(d.at(h, l)));
  return m;
}

// ---------------------------------------------------------------------------
// Cutoff independence: the interacting expectation of an interacting
// observable, built once per cutoff, must not depend on the cutoff shape.
// Complete only through the simplex truncation, so the residual is reported
// through that coupling order.

inline double chi_independence_check(AlgebraContext& ctx, const ThermalState& st,
                                     const TemporalCutoff& ca, const TemporalCutoff& cb,
                                     const PolyFunctional& f, double coupling, int n_max = 1,
                                     int n_nodes = 16) {
  const GradedKernel star = ctx.plain_kernel(st.theory.delta_plus);
  const GradedKernel tord = ctx.plain_kernel(st.theory.delta_f);
  const CocycleGenerator ga = cocycle_generator(ctx, st, ca, coupling);
  const CocycleGenerator gb = cocycle_generator(ctx, st, cb, coupling);
  const PolyFunctional fa = quantum_moller(ctx, ga.interaction, f, star, tord);
  const PolyFunctional fb = quantum_moller(ctx, gb.interaction, f, star, tord);
  const InteractingKms ea = interacting_kms_expectation(ctx, st, fa, ga.k, n_max, n_nodes);
  const InteractingKms eb = interacting_kms_expectation(ctx, st, fb, gb.k, n_max, n_nodes);
  return reported_difference_through(ea.simplex_form, eb.simplex_form, n_max,
                                     ctx.shape.hbar_max - n_max);
}

// ---------------------------------------------------------------------------
// Thermal mass: contracting the quartic interaction with the smooth part of
// the thermal kernel yields quartic + quadratic + constant pieces; the
// quadratic piece defines the mass shift through its second derivative.

struct ThermalMass {
  Eigen::VectorXd d_coincidence;  // diagonal of the smooth part
  PolyFunctional quadratic_part;
  PolyFunctional constant_part;
  FormalSeries m2;           // uniform mass-square series
  double uniformity = 0.0;   // max site-to-site deviation of the extraction
};

namespace detail {

inline int total_legs(const Term& t) {
  int n = 0;
  for (const Cluster& c : t.clusters)
    for (const Vertex& v : c.verts) n += static_cast<int>(v.legs.size());
  return n;
}

}  // namespace detail

inline ThermalMass thermal_mass(AlgebraContext& ctx, const ThermalState& st, double coupling) {
  ThermalMass out;
  out.d_coincidence = st.smooth_part.diagonal().real();
  const Field ones = Field::Constant(ctx.lat.sites, complexd{1.0, 0.0});
  const PolyFunctional v = quartic_interaction(ctx, ones, coupling);
  const PolyFunctional deformed =
      self_pair_deform(ctx, v, ctx.plain_kernel(st.smooth_part));
  for (const Term& t : deformed.terms) {
    const int legs = detail::total_legs(t);
    if (legs == 2)
      out.quadratic_part.terms.push_back(t);
    else if (legs == 0)
      out.constant_part.terms.push_back(t);
  }
  normalize(ctx, out.quadratic_part);
  normalize(ctx, out.constant_part);

  // second derivative at zero: 1/2 m2(x) phi(x)^2 mu picks up m2(x) mu
  FormalSeries first(ctx.shape);
  for (int x = 0; x < ctx.lat.sites; ++x) {
    Field e = Field::Zero(ctx.lat.sites);
    e[x] = complexd{1.0, 0.0};
    const PolyFunctional d1 = derivative(ctx, out.quadratic_part, e);
    FormalSeries d2 = evaluate_at_zero(ctx, derivative(ctx, d1, e));
    d2 *= complexd{1.0 / ctx.lat.mu, 0.0};
    if (x == 0)
      first = d2;
    else
      out.uniformity = std::max(out.uniformity, reported_difference(first, d2));
  }
  out.m2 = first;
  return out;
}

// Continuum coincidence value of the smooth thermal part in three spatial
// dimensions: (1/(2 pi^2)) \int_0^inf k^2 / (omega (e^{beta omega} - 1)) dk
// with omega = sqrt(k^2 + mass^2). Rational map of [0,1) onto the half line.
inline double continuum_thermal_coincidence(double beta, double mass, int n_nodes = 64) {
  if (!(beta > 0.0)) throw std::invalid_argument("continuum_thermal_coincidence: beta must be positive");
  const Quadrature q = gauss_legendre_01(n_nodes);
  const double scale = 4.0 / beta;
  double acc = 0.0;
  for (int i = 0; i < n_nodes; ++i) {
    const double s = q.x[static_cast<std::size_t>(i)];
    const double k = scale * s / (1.0 - s);
    const double jac = scale / ((1.0 - s) * (1.0 - s));
    const double omega = std::sqrt(k * k + mass * mass);
    if (omega == 0.0) continue;
    const double bose = std::expm1(beta * omega);
    const double g = k * k / (omega * bose);
    acc += q.w[static_cast<std::size_t>(i)] * jac * g;
  }
  return acc / (2.0 * std::numbers::pi * std::numbers::pi);
}

// ---------------------------------------------------------------------------
// Virtual-mass split: regularize the interaction by adding and subtracting a
// quadratic term with mass m_Q carried at one coupling power, transport the
// observable and the generator through the massive picture, and evaluate in
// the fixed thermal state. The transported chain collapses by the agreement
// identity, so kept orders cannot depend on m_Q.

struct VirtualMassScan {
  std::vector<double> mq_values;
  std::vector<FormalSeries> values;  // simplex-form expectation per mass
  FormalSeries reference;            // direct evaluation without the split
  double max_residual = 0.0;         // across masses and against the reference
};

inline VirtualMassScan virtual_mass_independence(AlgebraContext& ctx, const ThermalState& st,
                                                 const TemporalCutoff& cutoff,
                                                 const PolyFunctional& f, double coupling,
                                                 const std::vector<double>& mq_values,
                                                 int n_max = 1, int n_nodes = 16) {
  const GradedKernel star = ctx.plain_kernel(st.theory.delta_plus);
  const GradedKernel tord = ctx.plain_kernel(st.theory.delta_f);
  const CocycleGenerator gen = cocycle_generator(ctx, st, cutoff, coupling);

  VirtualMassScan scan;
  scan.mq_values = mq_values;
  const PolyFunctional f_direct = quantum_moller(ctx, gen.interaction, f, star, tord);
  scan.reference =
      interacting_kms_expectation(ctx, st, f_direct, gen.k, n_max, n_nodes).simplex_form;

  const Eigen::VectorXd chi = cutoff_profile(ctx.lat, cutoff);
  for (double mq : mq_values) {
    QuadraticPerturbation qp;
    qp.mass_shift = Eigen::VectorXd(ctx.lat.sites);
    for (int i = 0; i < ctx.lat.sites; ++i)
      qp.mass_shift[i] = mq * mq * chi[ctx.lat.time_of(i)];
    const BetaContext bc = make_beta_context(ctx, st.theory, qp);
    const PolyFunctional reduced = sub(ctx, gen.interaction, bc.vq);
    const PolyFunctional v2 = beta_map(ctx, bc, reduced);
    const PolyFunctional g_f = transported_observable(ctx, bc, v2, f);
    const PolyFunctional g_k = transported_observable(ctx, bc, v2, gen.boundary);
    scan.values.push_back(
        interacting_kms_expectation(ctx, st, g_f, g_k, n_max, n_nodes).simplex_form);
    scan.max_residual =
        std::max(scan.max_residual, reported_difference_through(scan.values.back(), scan.reference,
                                                                n_max, ctx.shape.hbar_max - n_max));
  }
  for (std::size_t i = 0; i + 1 < scan.values.size(); ++i)
    scan.max_residual =
        std::max(scan.max_residual, reported_difference_through(scan.values[i], scan.values.back(),
                                                                n_max, ctx.shape.hbar_max - n_max));
  return scan;
}

// ---------------------------------------------------------------------------
// Spatial clustering of the equal-time thermal kernel on a wide torus.

struct ClusterDecayFit {
  double fitted_rate = 0.0;
  double expected_rate = 0.0;
  std::vector<std::pair<double, double>> samples;  // (separation, |kernel|)
};

inline ClusterDecayFit cluster_decay_fit(const ThermalState& st) {
  const LatticeSpec& lat = st.theory.lat;
  if (lat.dim != 1) throw std::invalid_argument("cluster_decay_fit: one spatial dimension");
  const double m = std::sqrt(st.theory.msq);
  if (!(m > 0.0)) throw std::invalid_argument("cluster_decay_fit: needs a positive mass");

  ClusterDecayFit fit;
  fit.expected_rate = (2.0 / lat.dx) * std::asinh(m * lat.dx / 2.0);
  const int half = lat.n_x / 2;
  const int row = lat.site(0, 0);
  // fit window: past the near zone, short of the wrap-dominated half-width,
  // and above the relative noise floor
  const double r_lo = 2.0 / m;
  const double r_hi = 0.5 * lat.n_x * lat.dx - 2.0 / m;
  std::vector<double> xs, ys;
  double first_kept = 0.0;
  for (int x = 1; x <= half; ++x) {
    const double r = x * lat.dx;
    const double v = std::abs(st.two_point(row, lat.site(0, x)));
    fit.samples.push_back({r, v});
    if (r < r_lo || r > r_hi || !(v > 0.0)) continue;
    if (first_kept == 0.0) first_kept = v;
    if (v < first_kept * 1e-8) continue;
    xs.push_back(r);
    ys.push_back(std::log(v));
  }
  if (xs.size() < 3) throw std::invalid_argument("cluster_decay_fit: torus too small for the fit");
  if (!(std::exp(ys.front() - ys.back()) >= 30.0))
    throw std::invalid_argument("cluster_decay_fit: dynamic range too small for a rate fit");

  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double n = static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  fit.fitted_rate = -slope;
  return fit;
}

}  // namespace ppalab
