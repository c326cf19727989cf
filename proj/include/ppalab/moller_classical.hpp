#pragma once

// Classical Moller operator for quadratic perturbations of the lattice
// Klein-Gordon dynamics: exact dense build, Neumann series with factorial
// envelope, transported propagator kernels, and pullbacks on functionals.

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "ppalab/formal_series.hpp"
#include "ppalab/functionals.hpp"
#include "ppalab/lattice.hpp"
#include "ppalab/propagators.hpp"

namespace ppalab {

// Q(phi) = 1/2 sum_x mu (M phi^2 - 2 j phi).  M and j are plain per-site
// values; the measure enters only through evaluation and kernel composition.
// The Euler-Lagrange derivative Q^(1) is phi -> M.phi - j.
struct QuadraticPerturbation {
  Eigen::VectorXd mass_shift;  // M
  Eigen::VectorXd source;      // j; empty when absent

  bool has_source() const { return source.size() != 0; }
};

inline QuadraticPerturbation mass_perturbation(const Eigen::VectorXd& m) {
  QuadraticPerturbation q;
  q.mass_shift = m;
  return q;
}

inline QuadraticPerturbation mass_perturbation(const LatticeSpec& lat, double amplitude) {
  return mass_perturbation(Eigen::VectorXd::Constant(lat.sites, amplitude));
}

inline complexd quadratic_value(const LatticeSpec& lat, const QuadraticPerturbation& q,
                                const Field& phi) {
  complexd acc{0.0, 0.0};
  for (int x = 0; x < lat.sites; ++x) {
    complexd v = 0.5 * q.mass_shift[x] * phi[x] * phi[x];
    if (q.has_source()) v -= q.source[x] * phi[x];
    acc += v;
  }
  return lat.mu * acc;
}

// Q as a polynomial functional. lambda_weight grades the perturbation when it
// doubles as an interaction term of the series machinery. Vanishing pieces
// are omitted so that a trivial perturbation yields the empty functional.
inline PolyFunctional quadratic_functional(AlgebraContext& ctx, const QuadraticPerturbation& q,
                                           int lambda_weight = 0, int tag = 0) {
  const FormalSeries unit = FormalSeries::monomial(ctx.shape, 0, lambda_weight, {1.0, 0.0});
  PolyFunctional f = zero_functional();
  if (!q.mass_shift.isZero(0.0))
    f = local_functional(ctx, (0.5 * q.mass_shift).cast<complexd>(),
                         {ctx.identity, ctx.identity}, unit, tag);
  if (q.has_source() && !q.source.isZero(0.0))
    f = add(ctx, f,
            local_functional(ctx, (-q.source).cast<complexd>(), {ctx.identity}, unit, tag));
  return f;
}

// Forward map R = 1 - mu Dr2 M with affine part from the source; the inverse
// is 1 + mu Dr1 M.  `forward` and `inverse` are plain matrices acting on
// configurations; the adjoint for the uniform measure is the transpose.
struct MollerOperator {
  LatticeSpec lat;
  QuadraticPerturbation q;
  Matrix forward;
  Matrix inverse;
  Field forward_offset;  // R(phi) = forward * phi + forward_offset
  Field inverse_offset;
  BiKernel delta_r1, delta_a1;  // unperturbed kernels
  BiKernel delta_r2, delta_a2;  // direct builds for the shifted operator

  Matrix adjoint() const { return forward.transpose(); }

  Field apply(const Field& phi) const { return forward * phi + forward_offset; }
  Field apply_inverse(const Field& phi) const { return inverse * phi + inverse_offset; }
};

// Dependence cone of the leapfrog stencil: a source at `src` can influence
// `dst` only if it lies strictly earlier in time and the toroidal L1 distance
// is at most the time separation minus one.
inline bool in_discrete_cone(const LatticeSpec& lat, int src, int dst) {
  const int ts = lat.time_of(src), td = lat.time_of(dst);
  if (td <= ts) return false;
  const std::vector<int> cs = lat.spatial_coords(lat.spatial_of(src));
  const std::vector<int> cd = lat.spatial_coords(lat.spatial_of(dst));
  int dist = 0;
  for (std::size_t a = 0; a < cs.size(); ++a) {
    const int d = std::abs(cs[a] - cd[a]);
    dist += std::min(d, lat.n_x - d);
  }
  return dist + 1 <= td - ts;
}

inline MollerOperator classical_moller_exact(const KleinGordonOp& op1,
                                             const QuadraticPerturbation& q) {
  const LatticeSpec& lat = op1.lat;
  if (q.mass_shift.size() != lat.sites) throw std::invalid_argument("perturbation size mismatch");

  MollerOperator m;
  m.lat = lat;
  m.q = q;
  m.delta_r1 = retarded(op1);
  m.delta_a1 = m.delta_r1.transpose();

  KleinGordonOp op2 = build_operator(lat, Eigen::VectorXd(op1.msq + q.mass_shift));
  m.delta_r2 = retarded(op2);
  m.delta_a2 = m.delta_r2.transpose();

  const Matrix eye = Matrix::Identity(lat.sites, lat.sites);
  const Eigen::VectorXcd mdiag = q.mass_shift.cast<complexd>();
  m.forward = eye - lat.mu * (m.delta_r2 * mdiag.asDiagonal());
  m.inverse = eye + lat.mu * (m.delta_r1 * mdiag.asDiagonal());

  m.forward_offset = Field::Zero(lat.sites);
  m.inverse_offset = Field::Zero(lat.sites);
  if (q.has_source()) {
    const Field j = q.source.cast<complexd>();
    m.forward_offset = lat.mu * (m.delta_r2 * j);
    m.inverse_offset = -lat.mu * (m.delta_r1 * j);
  }
  return m;
}

// Per-slice l1 norm of the unitary spatial transform, sup over slices.
// Submultiplicative under pointwise products, which is what the factorial
// envelope rests on.
inline double mixed_fourier_norm(const LatticeSpec& lat, const Field& f) {
  const Field hat = spatial_fourier(lat, f);
  const double scale = 1.0 / std::sqrt(static_cast<double>(lat.spatial_sites));
  double best = 0.0;
  for (int t = 0; t < lat.n_t; ++t) {
    double acc = 0.0;
    for (int s = 0; s < lat.spatial_sites; ++s) acc += std::abs(hat[lat.site(t, s)]);
    best = std::max(best, scale * acc);
  }
  return best;
}

struct NeumannScan {
  MollerOperator op;               // forward replaced by the partial sum
  std::vector<double> term_norms;  // n-th series term applied to the probe
  std::vector<double> bounds;      // T^{2n} |M|^n / n! envelope times |probe|
  double exact_error = 0.0;        // partial sum vs exact forward, on the probe
};

// Neumann series R = sum r^n with r = -mu Dr1 M.  Term norms are measured on
// `probe` in the mixed norm and compared against the factorial envelope with
// T the full time span.  The envelope is proved for spatially constant M and
// probes supported on oscillatory modes; outside that sector it is only an
// estimate.
inline NeumannScan classical_moller_neumann(const KleinGordonOp& op1,
                                            const QuadraticPerturbation& q, int n_terms,
                                            const Field& probe) {
  if (n_terms < 1) throw std::invalid_argument("n_terms must be positive");
  const LatticeSpec& lat = op1.lat;

  NeumannScan scan;
  scan.op = classical_moller_exact(op1, q);
  const Matrix exact_forward = scan.op.forward;

  const Eigen::VectorXcd mdiag = q.mass_shift.cast<complexd>();
  const Matrix r = -lat.mu * (scan.op.delta_r1 * mdiag.asDiagonal());

  const double span = lat.dt * (lat.n_t - 1);
  const double m_norm = mixed_fourier_norm(lat, q.mass_shift.cast<complexd>());
  const double probe_norm = mixed_fourier_norm(lat, probe);

  Matrix partial = Matrix::Identity(lat.sites, lat.sites);
  Matrix power = Matrix::Identity(lat.sites, lat.sites);
  double log_fact = 0.0;
  scan.term_norms.push_back(probe_norm);
  scan.bounds.push_back(probe_norm);
  for (int k = 1; k <= n_terms; ++k) {
    power = r * power;
    partial += power;
    log_fact += std::log(static_cast<double>(k));
    scan.term_norms.push_back(mixed_fourier_norm(lat, power * probe));
    scan.bounds.push_back(
        std::exp(2.0 * k * std::log(span) + k * std::log(m_norm) - log_fact) * probe_norm);
  }
  scan.op.forward = partial;
  scan.exact_error = mixed_fourier_norm(lat, (partial - exact_forward) * probe);
  return scan;
}

struct TransportedKernels {
  BiKernel delta_r2;     // R Dr1
  BiKernel delta_a2;     // Da1 R^T
  BiKernel delta2;       // R (Dr1 - Da1) R^T
  BiKernel delta_plus2;  // R Dp1 R^T
};

// R acts as a plain operator on both kernel slots, leaving the measure
// bookkeeping of the kernels untouched.
inline TransportedKernels pushforward_propagators(const MollerOperator& m,
                                                  const BiKernel& delta_plus1) {
  TransportedKernels t;
  t.delta_r2 = m.forward * m.delta_r1;
  t.delta_a2 = m.delta_a1 * m.forward.transpose();
  t.delta2 = m.forward * (m.delta_r1 - m.delta_a1) * m.forward.transpose();
  t.delta_plus2 = m.forward * delta_plus1 * m.forward.transpose();
  return t;
}

// One graded component of an affine field shift: absorbing a leg against
// `shift` costs `lambda_weight` powers of the coupling.
struct AffineShiftLayer {
  int lambda_weight = 0;
  Field shift;
};

// F(phi + b) with b = sum of graded layers: expand each vertex over the ways
// its legs absorb a layer; absorbed legs fold (D b) into the density and
// accumulate the layer's coupling weight on the coefficient.
inline PolyFunctional shift_field(AlgebraContext& ctx, const PolyFunctional& f,
                                  const std::vector<AffineShiftLayer>& layers) {
  struct Variant {
    Cluster cluster;
    int lambda_used = 0;
  };
  PolyFunctional out;
  for (const Term& term : f.terms) {
    int minl = 0, minh = 0;
    detail::min_degrees(term.coeff, ctx.shape, minh, minl);
    if (minl > ctx.shape.lambda_max) continue;
    const int l_budget = ctx.shape.lambda_max - minl;

    std::vector<std::pair<Term, int>> expanded{{Term{term.coeff, {}}, 0}};
    for (const Cluster& c : term.clusters) {
      std::vector<Variant> variants{{Cluster{{}, c.edges}, 0}};
      for (const Vertex& v : c.verts) {
        std::vector<Variant> grown;
        for (const Variant& base : variants) {
          const std::size_t deg = v.legs.size();
          // choice per leg: 0 = keep, 1..layers.size() = absorb with layer
          std::vector<std::size_t> choice(deg, 0);
          for (;;) {
            int l_extra = 0;
            for (std::size_t i = 0; i < deg; ++i)
              if (choice[i] > 0) l_extra += layers[choice[i] - 1].lambda_weight;
            if (base.lambda_used + l_extra <= l_budget) {
              Eigen::VectorXcd density = ctx.density(v.density);
              Vertex nv;
              nv.tag = v.tag;
              for (std::size_t i = 0; i < deg; ++i) {
                if (choice[i] > 0)
                  density = density.cwiseProduct(
                      Field(ctx.mat(v.legs[i]) * layers[choice[i] - 1].shift));
                else
                  nv.legs.push_back(v.legs[i]);
              }
              nv.density = ctx.register_density(density);
              Variant nvar;
              nvar.cluster = base.cluster;
              nvar.cluster.verts.push_back(std::move(nv));
              nvar.lambda_used = base.lambda_used + l_extra;
              grown.push_back(std::move(nvar));
            }
            // advance the mixed-radix choice vector
            std::size_t i = 0;
            for (; i < deg; ++i) {
              if (++choice[i] <= layers.size()) break;
              choice[i] = 0;
            }
            if (i == deg) break;
          }
        }
        variants = std::move(grown);
      }
      std::vector<std::pair<Term, int>> next;
      for (const auto& pre : expanded)
        for (const Variant& var : variants) {
          Term t2 = pre.first;
          t2.clusters.push_back(var.cluster);
          next.emplace_back(std::move(t2), pre.second + var.lambda_used);
        }
      expanded = std::move(next);
    }
    for (auto& [t2, l_used] : expanded) {
      t2.coeff = t2.coeff.shifted(0, l_used);
      if (!t2.coeff.is_zero()) out.terms.push_back(std::move(t2));
    }
  }
  normalize(ctx, out);
  return out;
}

inline PolyFunctional shift_field(AlgebraContext& ctx, const PolyFunctional& f, const Field& b) {
  return shift_field(ctx, f, std::vector<AffineShiftLayer>{{0, b}});
}

// Pullback F -> F(R phi): compose every leg with the forward matrix, after
// shifting by the affine part.
inline PolyFunctional pullback(AlgebraContext& ctx, const MollerOperator& m,
                               const PolyFunctional& f) {
  const PolyFunctional base = m.q.has_source() ? shift_field(ctx, f, m.forward_offset) : f;
  return dress_legs(ctx, base, GradedKernel{{0, ctx.register_matrix(m.forward)}});
}

inline PolyFunctional pullback_inverse(AlgebraContext& ctx, const MollerOperator& m,
                                       const PolyFunctional& f) {
  const PolyFunctional base = m.q.has_source() ? shift_field(ctx, f, m.inverse_offset) : f;
  return dress_legs(ctx, base, GradedKernel{{0, ctx.register_matrix(m.inverse)}});
}

}  // namespace ppalab
