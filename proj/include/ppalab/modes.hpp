#pragma once

// Continuum-time mode analysis for a spatially homogeneous mass ramp: the
// time-dependent-frequency oscillator per momentum, Wronskian-normalized
// solutions, adiabatic comparison modes with their potential, the retarded
// iteration that connects the two, energy monotonicity, the adiabatic-limit
// convergence scan, and radial kernel assembly by momentum quadrature.
//
// The fine time grids here are independent of the lattice grid; contact with
// the lattice modules happens only through assembled kernel values.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ppalab/lattice.hpp"
#include "ppalab/moller_classical.hpp"
#include "ppalab/propagators.hpp"
#include "ppalab/quadrature.hpp"

namespace ppalab {

// ---------------------------------------------------------------------------
// Frequency profile: omega^2(t) = k^2 + m1^2 + (m2^2 - m1^2) f(t) with
// f the cumulative of the normalized bump chi_mu(t) = chi(t/mu)/mu supported
// on [-mu, mu].

struct FrequencyProfile {
  double k = 0.0;
  double m1sq = 0.0;
  double m2sq = 0.0;
  double mu = 1.0;  // ramp half-width
};

// chi(tau) = (315/256)(1 - tau^2)^4 on [-1, 1]: non-negative, unit integral,
// three continuous derivatives at the endpoints. That finite smoothness is
// deliberate: endpoint transients in the deviation from the comparison mode
// then fall several powers of mu faster than the leading 1/mu term, which
// already dominates at the smallest scanned ramp, so the convergence scan
// fits a stable slope.
inline double bump_chi(double tau) {
  const double r = 1.0 - tau * tau;
  return r > 0.0 ? (315.0 / 256.0) * r * r * r * r : 0.0;
}

inline double bump_chi_prime(double tau) {
  const double r = 1.0 - tau * tau;
  return r > 0.0 ? -(315.0 / 32.0) * tau * r * r * r : 0.0;
}

// f as a function of tau = t/mu: monotone from 0 to 1 across [-1, 1].
inline double bump_cumulative(double tau) {
  if (tau <= -1.0) return 0.0;
  if (tau >= 1.0) return 1.0;
  const double t3 = tau * tau * tau;
  const double t5 = t3 * tau * tau;
  const double t7 = t5 * tau * tau;
  const double t9 = t7 * tau * tau;
  return 0.5 + (315.0 / 256.0) *
                   (tau - (4.0 / 3.0) * t3 + 1.2 * t5 - (4.0 / 7.0) * t7 + t9 / 9.0);
}

inline void validate_profile(const FrequencyProfile& p) {
  if (p.k < 0.0 || p.m1sq < 0.0 || p.m2sq < 0.0 || !(p.mu > 0.0))
    throw std::invalid_argument("frequency profile: masses must be non-negative, mu positive");
}

inline double profile_f(const FrequencyProfile& p, double t) { return bump_cumulative(t / p.mu); }

inline double omega_sq(const FrequencyProfile& p, double t) {
  return p.k * p.k + p.m1sq + (p.m2sq - p.m1sq) * profile_f(p, t);
}

inline double omega_of(const FrequencyProfile& p, double t) {
  const double w = omega_sq(p, t);
  if (!(w > 0.0)) throw std::domain_error("frequency profile: non-positive squared frequency");
  return std::sqrt(w);
}

// d/dt omega^2 = (m2^2 - m1^2) chi_mu(t)
inline double omega_sq_rate(const FrequencyProfile& p, double t) {
  return (p.m2sq - p.m1sq) * bump_chi(t / p.mu) / p.mu;
}

inline double omega_sq_curv(const FrequencyProfile& p, double t) {
  return (p.m2sq - p.m1sq) * bump_chi_prime(t / p.mu) / (p.mu * p.mu);
}

// lambda = (1/2) wdd/w - (3/4) (wd/w)^2 in terms of w = omega
inline double adiabatic_potential(const FrequencyProfile& p, double t) {
  const double w = omega_of(p, t);
  const double wsd = omega_sq_rate(p, t);
  const double wsc = omega_sq_curv(p, t);
  const double wd = wsd / (2.0 * w);
  const double wdd = wsc / (2.0 * w) - wsd * wsd / (4.0 * w * w * w);
  return 0.5 * wdd / w - 0.75 * (wd / w) * (wd / w);
}

inline double omega_extreme(const FrequencyProfile& p) {
  return std::sqrt(p.k * p.k + std::max(p.m1sq, p.m2sq));
}

// ---------------------------------------------------------------------------
// Integration grid: fixed step bounded by forty steps per period of the
// largest frequency and by a fixed fraction of the ramp width.

struct ModeGrid {
  double t0 = 0.0;
  double h = 0.0;
  int n = 0;  // steps; samples n + 1
  double time(int i) const { return t0 + h * i; }
};

inline ModeGrid mode_grid(const FrequencyProfile& p, double t0, double t1, int refine = 1) {
  validate_profile(p);
  if (!(t1 > t0)) throw std::invalid_argument("mode_grid: empty time span");
  if (refine < 1) throw std::invalid_argument("mode_grid: refine must be positive");
  const double target =
      std::min(2.0 * std::numbers::pi / (40.0 * omega_extreme(p)), p.mu / 200.0) / refine;
  ModeGrid g;
  g.t0 = t0;
  g.n = std::max(1, static_cast<int>(std::ceil((t1 - t0) / target - 1e-12)));
  g.h = (t1 - t0) / g.n;
  return g;
}

struct ModeTrajectory {
  ModeGrid grid;
  std::vector<complexd> T, Tdot;
  std::vector<complexd> W;  // conj(Tdot) T - conj(T) Tdot, target value i
  double max_wronskian_drift = 0.0;
};

namespace detail {

// One fixed step of the fourth-order commutator-corrected exponential scheme
// for (T, Tdot)' = A(t) (T, Tdot), A = [[0,1],[-omega^2,0]], with omega^2
// sampled at the two interior Gauss nodes. The step matrix has unit
// determinant in exact arithmetic, so the Wronskian is preserved.
inline void mode_step(const FrequencyProfile& p, double t, double h, complexd& T, complexd& Td) {
  const double c1 = 0.5 - std::numbers::sqrt3 / 6.0;
  const double c2 = 0.5 + std::numbers::sqrt3 / 6.0;
  const double w1 = omega_sq(p, t + c1 * h);
  const double w2 = omega_sq(p, t + c2 * h);
  if (!(w1 > 0.0) || !(w2 > 0.0))
    throw std::domain_error("integrate_mode: non-positive squared frequency");
  const double diag = std::numbers::sqrt3 * h * h / 12.0 * (w2 - w1);
  const double upper = h;
  const double lower = -0.5 * h * (w1 + w2);
  const double disc = diag * diag + upper * lower;
  double ca, sa;  // cos, sinc of the eigenphase (cosh branch kept for safety)
  if (disc < 0.0) {
    const double th = std::sqrt(-disc);
    ca = std::cos(th);
    sa = th > 0.0 ? std::sin(th) / th : 1.0;
  } else {
    const double th = std::sqrt(disc);
    ca = std::cosh(th);
    sa = th > 0.0 ? std::sinh(th) / th : 1.0;
  }
  const complexd nT = (ca + sa * diag) * T + (sa * upper) * Td;
  const complexd nTd = (sa * lower) * T + (ca - sa * diag) * Td;
  T = nT;
  Td = nTd;
}

inline complexd wronskian(complexd T, complexd Td) {
  return std::conj(Td) * T - std::conj(T) * Td;
}

}  // namespace detail

// Integrate from the initial-mass vacuum data T(t0) = e^{-i omega1 t0} /
// sqrt(2 omega1). The caller should start before the ramp so the data is the
// actual early-time solution.
inline ModeTrajectory integrate_mode(const FrequencyProfile& p, const ModeGrid& g) {
  validate_profile(p);
  if (!(g.h > 0.0) || g.n < 1) throw std::invalid_argument("integrate_mode: empty grid");
  if (g.h > 2.0 * std::numbers::pi / (40.0 * omega_extreme(p)) * (1.0 + 1e-9))
    throw std::invalid_argument("integrate_mode: resolution too coarse");
  ModeTrajectory tr;
  tr.grid = g;
  tr.T.reserve(static_cast<std::size_t>(g.n) + 1);
  tr.Tdot.reserve(static_cast<std::size_t>(g.n) + 1);
  tr.W.reserve(static_cast<std::size_t>(g.n) + 1);
  const double om1 = omega_of(p, g.t0);
  complexd T = std::exp(complexd{0.0, -om1 * g.t0}) / std::sqrt(2.0 * om1);
  complexd Td = complexd{0.0, -om1} * T;
  for (int i = 0;; ++i) {
    tr.T.push_back(T);
    tr.Tdot.push_back(Td);
    const complexd w = detail::wronskian(T, Td);
    tr.W.push_back(w);
    tr.max_wronskian_drift = std::max(tr.max_wronskian_drift, std::abs(w - complexd{0.0, 1.0}));
    if (tr.max_wronskian_drift > 1e-8)
      throw std::runtime_error("integrate_mode: Wronskian drift beyond 1e-8, resolution too coarse");
    if (i == g.n) break;
    detail::mode_step(p, g.time(i), g.h, T, Td);
  }
  return tr;
}

// Values of (T, Tdot) at selected times, marching with uniform substeps per
// segment so every requested time is hit exactly.
inline std::vector<std::pair<complexd, complexd>> mode_values(const FrequencyProfile& p, double t0,
                                                              const std::vector<double>& times,
                                                              int refine = 1) {
  validate_profile(p);
  const double target =
      std::min(2.0 * std::numbers::pi / (40.0 * omega_extreme(p)), p.mu / 200.0) /
      std::max(1, refine);
  const double om1 = omega_of(p, t0);
  complexd T = std::exp(complexd{0.0, -om1 * t0}) / std::sqrt(2.0 * om1);
  complexd Td = complexd{0.0, -om1} * T;
  std::vector<std::pair<complexd, complexd>> out;
  double prev = t0;
  for (double t : times) {
    if (t < prev) throw std::invalid_argument("mode_values: times must be sorted and after t0");
    if (t > prev) {
      const int steps = std::max(1, static_cast<int>(std::ceil((t - prev) / target - 1e-12)));
      const double h = (t - prev) / steps;
      for (int i = 0; i < steps; ++i) detail::mode_step(p, prev + i * h, h, T, Td);
    }
    out.push_back({T, Td});
    prev = t;
  }
  return out;
}

// Decompose onto e^{-i omega t} and e^{+i omega t} waves at frequency omega.
inline std::pair<complexd, complexd> wave_split(double omega_f, double t, complexd T, complexd Td) {
  const complexd phase = std::exp(complexd{0.0, omega_f * t});
  const complexd fwd = 0.5 * (T + complexd{0.0, 1.0} * Td / omega_f) * phase;
  const complexd bwd = 0.5 * (T - complexd{0.0, 1.0} * Td / omega_f) / phase;
  return {fwd, bwd};
}

// ---------------------------------------------------------------------------
// Adiabatic comparison mode T_a = e^{-i theta} / sqrt(2 omega) with theta the
// phase integral matched to the initial vacuum phase; satisfies the shifted
// equation with the adiabatic potential exactly.

struct AdiabaticMode {
  ModeTrajectory traj;
  std::vector<double> theta, omega_s, lambda_s;
};

inline AdiabaticMode adiabatic_mode(const FrequencyProfile& p, const ModeGrid& g) {
  validate_profile(p);
  if (!(g.h > 0.0) || g.n < 1) throw std::invalid_argument("adiabatic_mode: empty grid");
  AdiabaticMode am;
  am.traj.grid = g;
  const double c1 = 0.5 - std::numbers::sqrt3 / 6.0;
  const double c2 = 0.5 + std::numbers::sqrt3 / 6.0;
  double theta = omega_of(p, g.t0) * g.t0;
  for (int i = 0; i <= g.n; ++i) {
    const double t = g.time(i);
    const double w = omega_of(p, t);
    const complexd T = std::exp(complexd{0.0, -theta}) / std::sqrt(2.0 * w);
    const complexd Td = complexd{0.0, -w} * T - (omega_sq_rate(p, t) / (4.0 * w * w)) * T;
    am.traj.T.push_back(T);
    am.traj.Tdot.push_back(Td);
    const complexd wr = detail::wronskian(T, Td);
    am.traj.W.push_back(wr);
    am.traj.max_wronskian_drift =
        std::max(am.traj.max_wronskian_drift, std::abs(wr - complexd{0.0, 1.0}));
    am.theta.push_back(theta);
    am.omega_s.push_back(w);
    am.lambda_s.push_back(adiabatic_potential(p, t));
    if (i < g.n) theta += 0.5 * g.h * (omega_of(p, t + c1 * g.h) + omega_of(p, t + c2 * g.h));
  }
  return am;
}

// Residual of the defining equation (d^2/dt^2 + omega^2 + lambda) T_a, with
// the second derivative taken analytically through the log-derivative.
inline double adiabatic_equation_residual(const FrequencyProfile& p, const AdiabaticMode& am) {
  double worst = 0.0;
  for (int i = 0; i <= am.traj.grid.n; ++i) {
    const double t = am.traj.grid.time(i);
    const double w = omega_sq(p, t);
    const double om = am.omega_s[static_cast<std::size_t>(i)];
    const double wsd = omega_sq_rate(p, t);
    const double wsc = omega_sq_curv(p, t);
    const double a = wsd / (4.0 * w);
    const double ap = wsc / (4.0 * w) - wsd * wsd / (4.0 * w * w);
    const complexd g{-a, -om};
    const complexd gp{-ap, -wsd / (2.0 * om)};
    const complexd second = (gp + g * g) * am.traj.T[static_cast<std::size_t>(i)];
    worst = std::max(worst, std::abs(second + (w + am.lambda_s[static_cast<std::size_t>(i)]) *
                                                  am.traj.T[static_cast<std::size_t>(i)]));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Retarded iteration: R(h)(t) = int_{t0}^t sin(theta(t)-theta(s)) /
// sqrt(omega(t) omega(s)) lambda(s) h(s) ds. The sine separates, so each
// application is two cumulative integrals; the coincident endpoint carries
// half weight (the integrand vanishes there anyway).

struct RLambdaSeries {
  std::vector<std::vector<complexd>> terms;  // terms[n] sampled on the grid
  std::vector<double> term_norms;            // sup norm per term
  std::vector<double> term_bounds;           // Lambda^n / (n! sqrt(2 omega_min))
  std::vector<complexd> partial;             // full partial sum samples
  double lambda_integral = 0.0;              // int |lambda| / omega over the grid
  double omega_min = 0.0;
};

inline RLambdaSeries r_lambda_iterate(const FrequencyProfile& p, const AdiabaticMode& base,
                                      int n_terms) {
  validate_profile(p);
  if (n_terms < 0) throw std::invalid_argument("r_lambda_iterate: negative term count");
  const ModeGrid& g = base.traj.grid;
  const std::size_t m = static_cast<std::size_t>(g.n) + 1;

  RLambdaSeries out;
  out.omega_min = *std::min_element(base.omega_s.begin(), base.omega_s.end());
  for (std::size_t i = 0; i + 1 < m; ++i) {
    const double f0 = std::abs(base.lambda_s[i]) / base.omega_s[i];
    const double f1 = std::abs(base.lambda_s[i + 1]) / base.omega_s[i + 1];
    out.lambda_integral += 0.5 * g.h * (f0 + f1);
  }

  const double amp = 1.0 / std::sqrt(2.0 * out.omega_min);
  out.terms.push_back(base.traj.T);
  double norm0 = 0.0;
  for (const complexd& v : base.traj.T) norm0 = std::max(norm0, std::abs(v));
  out.term_norms.push_back(norm0);
  out.term_bounds.push_back(amp);
  out.partial = base.traj.T;

  for (int n = 1; n <= n_terms; ++n) {
    const std::vector<complexd>& cur = out.terms.back();
    std::vector<complexd> integrand_c(m), integrand_s(m);
    for (std::size_t i = 0; i < m; ++i) {
      const complexd a = base.lambda_s[i] * cur[i] / std::sqrt(base.omega_s[i]);
      integrand_c[i] = std::cos(base.theta[i]) * a;
      integrand_s[i] = std::sin(base.theta[i]) * a;
    }
    std::vector<complexd> next(m);
    complexd cum_c{0.0, 0.0}, cum_s{0.0, 0.0};
    next[0] = complexd{0.0, 0.0};
    double norm = 0.0;
    for (std::size_t i = 1; i < m; ++i) {
      cum_c += 0.5 * g.h * (integrand_c[i - 1] + integrand_c[i]);
      cum_s += 0.5 * g.h * (integrand_s[i - 1] + integrand_s[i]);
      next[i] = (std::sin(base.theta[i]) * cum_c - std::cos(base.theta[i]) * cum_s) /
                std::sqrt(base.omega_s[i]);
      norm = std::max(norm, std::abs(next[i]));
    }
    for (std::size_t i = 0; i < m; ++i) out.partial[i] += next[i];
    out.terms.push_back(std::move(next));
    out.term_norms.push_back(norm);
    out.term_bounds.push_back(out.term_bounds.back() * out.lambda_integral / n);
  }
  return out;
}

struct RLambdaComparison {
  RLambdaSeries series;
  ModeTrajectory ode;
  std::vector<double> errors;            // sup |partial_n - T| per truncation order
  std::vector<double> remainder_bounds;  // tail of the exponential envelope
};

inline RLambdaComparison r_lambda_vs_ode(const FrequencyProfile& p, const ModeGrid& g,
                                         int n_terms) {
  RLambdaComparison cmp;
  const AdiabaticMode base = adiabatic_mode(p, g);
  cmp.series = r_lambda_iterate(p, base, n_terms);
  cmp.ode = integrate_mode(p, g);
  const std::size_t m = static_cast<std::size_t>(g.n) + 1;
  std::vector<complexd> run(m, complexd{0.0, 0.0});
  for (int n = 0; n <= n_terms; ++n) {
    double err = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      run[i] += cmp.series.terms[static_cast<std::size_t>(n)][i];
      err = std::max(err, std::abs(run[i] - cmp.ode.T[i]));
    }
    cmp.errors.push_back(err);
    // sum_{j > n} Lambda^j / j!, summed until negligible
    double tail = 0.0;
    double term = 1.0;
    for (int j = 1; j <= n + 1; ++j) term *= cmp.series.lambda_integral / j;
    for (int j = n + 1; j < n + 200; ++j) {
      tail += term;
      term *= cmp.series.lambda_integral / (j + 1);
      if (term < 1e-30) {
        tail += term;
        break;
      }
    }
    cmp.remainder_bounds.push_back(tail / std::sqrt(2.0 * cmp.series.omega_min));
  }
  return cmp;
}

// ---------------------------------------------------------------------------
// Energy per mode: E = |Tdot|^2 + omega^2 |T|^2; E/omega^2 is non-increasing
// for a monotone ramp and constant for constant frequency.

inline double energy_max_increment(const FrequencyProfile& p, const ModeTrajectory& tr) {
  double prev = 0.0, worst = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= tr.grid.n; ++i) {
    const double w = omega_sq(p, tr.grid.time(i));
    const double e = std::norm(tr.Tdot[static_cast<std::size_t>(i)]) +
                     w * std::norm(tr.T[static_cast<std::size_t>(i)]);
    const double q = e / w;
    if (i > 0) worst = std::max(worst, q - prev);
    prev = q;
  }
  return worst;
}

// Max excess of |T|^2 over 1/k; non-positive along massless-start runs.
inline double infrared_excess(const ModeTrajectory& tr, double k) {
  if (!(k > 0.0)) throw std::invalid_argument("infrared_excess: momentum must be positive");
  double worst = -std::numeric_limits<double>::infinity();
  for (const complexd& v : tr.T) worst = std::max(worst, std::norm(v) - 1.0 / k);
  return worst;
}

// ---------------------------------------------------------------------------
// Adiabatic-limit convergence: distance at the end of the ramp between the
// integrated mode and the adiabatic continuation of the final vacuum mode,
// sup over momenta, fitted log-log against mu. Phases are compared in the
// adiabatic convention; kernel-level statements only ever use phase
// differences, which that convention reproduces.

struct AdiabaticScanRow {
  double mu = 0.0, k = 0.0, error = 0.0;
};

struct AdiabaticScan {
  std::vector<AdiabaticScanRow> rows;
  std::vector<double> mu_values, sup_errors;
  double slope = 0.0;  // d log error / d log mu
};

inline AdiabaticScan adiabatic_convergence_scan(double m1sq, double m2sq,
                                                const std::vector<double>& mus,
                                                const std::vector<double>& ks, int refine = 1) {
  if (mus.size() < 2 || ks.empty())
    throw std::invalid_argument("adiabatic_convergence_scan: need several mu and k values");
  const double lo = *std::min_element(mus.begin(), mus.end());
  const double hi = *std::max_element(mus.begin(), mus.end());
  if (!(lo > 0.0) || hi / lo < 8.0)
    throw std::invalid_argument("adiabatic_convergence_scan: mu list must span a factor of eight");

  AdiabaticScan scan;
  for (double mu : mus) {
    double sup = 0.0;
    for (double k : ks) {
      FrequencyProfile p{k, m1sq, m2sq, mu};
      const ModeGrid g = mode_grid(p, -1.25 * mu, 1.25 * mu, refine);
      const ModeTrajectory tr = integrate_mode(p, g);
      const AdiabaticMode am = adiabatic_mode(p, g);
      const double err = std::abs(tr.T.back() - am.traj.T.back());
      scan.rows.push_back({mu, k, err});
      sup = std::max(sup, err);
    }
    scan.mu_values.push_back(mu);
    scan.sup_errors.push_back(sup);
  }
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double n = static_cast<double>(scan.mu_values.size());
  for (std::size_t i = 0; i < scan.mu_values.size(); ++i) {
    const double x = std::log(scan.mu_values[i]);
    const double y = std::log(scan.sup_errors[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  scan.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return scan;
}

// ---------------------------------------------------------------------------
// Factorial-envelope table for the retarded Neumann iteration on the lattice,
// in the per-slice Fourier norm. The envelope is proved for spatially
// constant mass profiles and probes supported on oscillatory modes.

struct NeumannBoundRow {
  int n = 0;
  double norm = 0.0, bound = 0.0;
};

inline Field project_oscillatory(const FreeTheory& th, const Field& f) {
  const LatticeSpec& lat = th.lat;
  Field hat = spatial_fourier(lat, f);
  for (int t = 0; t < lat.n_t; ++t)
    for (int s = 0; s < lat.spatial_sites; ++s)
      if (!th.modes[s].oscillatory) hat[lat.site(t, s)] = complexd{0.0, 0.0};
  return spatial_fourier_inverse(lat, hat);
}

inline std::vector<NeumannBoundRow> neumann_bound_scan(const KleinGordonOp& op1,
                                                       const QuadraticPerturbation& q,
                                                       const Field& probe, int n_max) {
  const NeumannScan scan = classical_moller_neumann(op1, q, n_max, probe);
  std::vector<NeumannBoundRow> rows;
  for (std::size_t i = 0; i < scan.term_norms.size(); ++i)
    rows.push_back({static_cast<int>(i), scan.term_norms[i], scan.bounds[i]});
  return rows;
}

// ---------------------------------------------------------------------------
// Radial kernel assembly: K(t1, t2, r) = (1/(2 pi^2 r)) int k sin(kr)
// conj(T_k(t1)) T_k(t2) e^{-eps k} dk, with the r -> 0 limit k^2 and a linear
// extrapolation of the regulator pair to eps = 0. Normalization fixed by the
// continuum vacuum kernel.

struct KernelQuadrature {
  double k_min = 1e-3;
  double k_max = 40.0;
  int n_nodes = 256;
  double eps_a = 0.1;   // coarser regulator
  double eps_b = 0.05;  // finer regulator
};

struct RadialKernelSample {
  complexd extrapolated;
  complexd at_eps_a, at_eps_b;
};

inline void validate_kernel_quadrature(const KernelQuadrature& kq) {
  if (!(kq.k_min > 0.0) || !(kq.k_max > kq.k_min) || kq.n_nodes < 2 || !(kq.eps_a > kq.eps_b) ||
      kq.eps_b < 0.0)
    throw std::invalid_argument("kernel quadrature: need 0 < k_min < k_max and eps_a > eps_b >= 0");
}

namespace detail {

inline RadialKernelSample extrapolate_pair(complexd va, complexd vb, double ea, double eb) {
  RadialKernelSample s;
  s.at_eps_a = va;
  s.at_eps_b = vb;
  s.extrapolated = vb + (vb - va) * (eb / (ea - eb));
  return s;
}

}  // namespace detail

// One mode integration per node; all radii and both regulators share it.
inline std::vector<RadialKernelSample> pushforward_samples(
    const std::function<FrequencyProfile(double)>& family, double t0, double t1, double t2,
    const std::vector<double>& radii, const KernelQuadrature& kq, int refine = 1) {
  validate_kernel_quadrature(kq);
  const Quadrature q = gauss_legendre_ab(kq.n_nodes, kq.k_min, kq.k_max);
  const double pref = 1.0 / (2.0 * std::numbers::pi * std::numbers::pi);
  std::vector<complexd> acc_a(radii.size(), complexd{0.0, 0.0});
  std::vector<complexd> acc_b(radii.size(), complexd{0.0, 0.0});
  std::vector<double> times{std::min(t1, t2), std::max(t1, t2)};
  for (int j = 0; j < kq.n_nodes; ++j) {
    const double k = q.x[static_cast<std::size_t>(j)];
    const FrequencyProfile p = family(k);
    const auto vals = mode_values(p, t0, times, refine);
    const complexd Ta = t1 <= t2 ? vals[0].first : vals[1].first;
    const complexd Tb = t1 <= t2 ? vals[1].first : vals[0].first;
    const complexd pair = std::conj(Ta) * Tb;
    for (std::size_t ri = 0; ri < radii.size(); ++ri) {
      const double r = radii[ri];
      const double radial = r > 0.0 ? k * std::sin(k * r) / r : k * k;
      const complexd base = pref * q.w[static_cast<std::size_t>(j)] * radial * pair;
      acc_a[ri] += base * std::exp(-kq.eps_a * k);
      acc_b[ri] += base * std::exp(-kq.eps_b * k);
    }
  }
  std::vector<RadialKernelSample> out;
  for (std::size_t ri = 0; ri < radii.size(); ++ri)
    out.push_back(detail::extrapolate_pair(acc_a[ri], acc_b[ri], kq.eps_a, kq.eps_b));
  return out;
}

// Same assembly with analytic static vacuum modes of mass^2 = msq.
inline std::vector<RadialKernelSample> vacuum_radial_samples(double msq, double t1, double t2,
                                                             const std::vector<double>& radii,
                                                             const KernelQuadrature& kq) {
  validate_kernel_quadrature(kq);
  const Quadrature q = gauss_legendre_ab(kq.n_nodes, kq.k_min, kq.k_max);
  const double pref = 1.0 / (2.0 * std::numbers::pi * std::numbers::pi);
  std::vector<complexd> acc_a(radii.size(), complexd{0.0, 0.0});
  std::vector<complexd> acc_b(radii.size(), complexd{0.0, 0.0});
  for (int j = 0; j < kq.n_nodes; ++j) {
    const double k = q.x[static_cast<std::size_t>(j)];
    const double om = std::sqrt(k * k + msq);
    const complexd pair = std::exp(complexd{0.0, om * (t1 - t2)}) / (2.0 * om);
    for (std::size_t ri = 0; ri < radii.size(); ++ri) {
      const double r = radii[ri];
      const double radial = r > 0.0 ? k * std::sin(k * r) / r : k * k;
      const complexd base = pref * q.w[static_cast<std::size_t>(j)] * radial * pair;
      acc_a[ri] += base * std::exp(-kq.eps_a * k);
      acc_b[ri] += base * std::exp(-kq.eps_b * k);
    }
  }
  std::vector<RadialKernelSample> out;
  for (std::size_t ri = 0; ri < radii.size(); ++ri)
    out.push_back(detail::extrapolate_pair(acc_a[ri], acc_b[ri], kq.eps_a, kq.eps_b));
  return out;
}

// Equal-point thermal-minus-vacuum value assembled on the same momentum
// interval; the Bose factor makes the regulator unnecessary.
inline double mode_thermal_coincidence_difference(double msq, double beta,
                                                  const KernelQuadrature& kq) {
  validate_kernel_quadrature(kq);
  if (!(beta > 0.0))
    throw std::invalid_argument("mode_thermal_coincidence_difference: beta must be positive");
  const Quadrature q = gauss_legendre_ab(kq.n_nodes, kq.k_min, kq.k_max);
  double acc = 0.0;
  for (int j = 0; j < kq.n_nodes; ++j) {
    const double k = q.x[static_cast<std::size_t>(j)];
    const double om = std::sqrt(k * k + msq);
    acc += q.w[static_cast<std::size_t>(j)] * k * k / (om * std::expm1(beta * om));
  }
  return acc / (2.0 * std::numbers::pi * std::numbers::pi);
}

}  // namespace ppalab
