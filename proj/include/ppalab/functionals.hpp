#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cassert>
#include <cstdint>
#include <cstring>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ppalab/formal_series.hpp"
#include "ppalab/lattice.hpp"

namespace ppalab {

using Matrix = Eigen::MatrixXcd;

// A contraction kernel graded by coupling order: using a layer in a pairing
// contributes one power of hbar and `lambda_weight` powers of lambda.
struct GradedKernelLayer {
  int lambda_weight = 0;
  int mat = -1;                // matrix registry id
  complexd weight{1.0, 0.0};   // scalar folded into the term coefficient
};
using GradedKernel = std::vector<GradedKernelLayer>;

// Shared registries for one algebra instance. Functionals store integer ids
// into these tables; mixing functionals across contexts is invalid.
class AlgebraContext {
 public:
  LatticeSpec lat;
  SeriesShape shape;

  AlgebraContext(const LatticeSpec& l, const SeriesShape& s) : lat(l), shape(s) {
    identity = register_matrix(Matrix::Identity(lat.sites, lat.sites));
  }

  int register_density(const Eigen::VectorXcd& v) {
    assert(v.size() == lat.sites);
    std::string key(reinterpret_cast<const char*>(v.data()),
                    static_cast<std::size_t>(v.size()) * sizeof(complexd));
    auto it = density_index_.find(key);
    if (it != density_index_.end()) return it->second;
    const int id = static_cast<int>(densities_.size());
    densities_.push_back(v);
    density_index_.emplace(std::move(key), id);
    return id;
  }

  int register_matrix(const Matrix& m) {
    assert(m.rows() == lat.sites && m.cols() == lat.sites);
    std::string key(reinterpret_cast<const char*>(m.data()),
                    static_cast<std::size_t>(m.size()) * sizeof(complexd));
    auto it = matrix_index_.find(key);
    if (it != matrix_index_.end()) return it->second;
    const int id = static_cast<int>(matrices_.size());
    matrices_.push_back(m);
    matrix_index_.emplace(std::move(key), id);
    return id;
  }

  const Eigen::VectorXcd& density(int id) const {
    return densities_[static_cast<std::size_t>(id)];
  }
  const Matrix& mat(int id) const { return matrices_[static_cast<std::size_t>(id)]; }

  int transpose_id(int m) {
    auto it = transpose_.find(m);
    if (it != transpose_.end()) return it->second;
    const int t = register_matrix(mat(m).transpose());
    transpose_[m] = t;
    transpose_[t] = m;
    return t;
  }

  int conj_id(int m) {
    auto it = conj_.find(m);
    if (it != conj_.end()) return it->second;
    const int c = register_matrix(mat(m).conjugate());
    conj_[m] = c;
    conj_[c] = m;
    return c;
  }

  int conj_density_id(int d) {
    return register_density(density(d).conjugate());
  }

  int diag_part_id(int m) {
    auto it = diag_.find(m);
    if (it != diag_.end()) return it->second;
    const int d = register_matrix(Matrix(mat(m).diagonal().asDiagonal()));
    diag_[m] = d;
    return d;
  }

  // Edge matrix for a pairing of a leg dressed by dl with a leg dressed by dr
  // through kernel k: dl * k * dr^T.
  int edge_matrix(int dl, int k, int dr) {
    const auto key = std::make_tuple(dl, k, dr);
    auto it = edge_.find(key);
    if (it != edge_.end()) return it->second;
    int result;
    if (dl == identity && dr == identity) {
      result = k;
    } else if (dl == identity) {
      result = register_matrix(mat(k) * mat(dr).transpose());
    } else if (dr == identity) {
      result = register_matrix(mat(dl) * mat(k));
    } else {
      result = register_matrix(mat(dl) * mat(k) * mat(dr).transpose());
    }
    edge_[key] = result;
    return result;
  }

  // Composition a * b of two operators (used when dressing legs). Results
  // are canonicalized to left-folded chains: when b itself was produced by
  // compose, a*(b1*b2) is rewritten to (a*b1)*b2, so iterated and one-shot
  // dressings of one operator family land on identical registry ids and
  // their contributions can cancel exactly under term merging.
  int compose(int a, int b) {
    if (a == identity) return b;
    if (b == identity) return a;
    const auto key = std::make_pair(a, b);
    auto it = compose_.find(key);
    if (it != compose_.end()) return it->second;
    int c;
    auto pv = provenance_.find(b);
    if (pv != provenance_.end()) {
      const auto split = pv->second;
      c = compose(compose(a, split.first), split.second);
    } else {
      const auto before = matrices_.size();
      c = register_matrix(mat(a) * mat(b));
      if (static_cast<std::size_t>(c) == before) provenance_.emplace(c, key);
    }
    compose_[key] = c;
    return c;
  }

  // Build the id of a left-folded power chain atom^n (n >= 1).
  int power_chain(int atom, int n) {
    int c = atom;
    for (int i = 1; i < n; ++i) c = compose(c, atom);
    return c;
  }

  GradedKernel plain_kernel(const Matrix& m) { return {{0, register_matrix(m)}}; }

  int identity = -1;

 private:
  std::vector<Eigen::VectorXcd> densities_;
  std::map<std::string, int> density_index_;
  std::vector<Matrix> matrices_;
  std::map<std::string, int> matrix_index_;
  std::map<int, int> transpose_;
  std::map<int, int> conj_;
  std::map<int, int> diag_;
  std::map<std::tuple<int, int, int>, int> edge_;
  std::map<std::pair<int, int>, int> compose_;
  std::map<int, std::pair<int, int>> provenance_;
};

// One field insertion point: a density, a group tag for state bookkeeping,
// and one dressing id per remaining (uncontracted) leg. Legs kept sorted.
struct Vertex {
  int density = -1;
  int tag = 0;
  std::vector<int> legs;
};

// Contraction between legs of vertices a and b; `mat` is the edge matrix id.
// Self edges (a == b) store only the diagonal part of their matrix.
struct Edge {
  int a = 0;
  int b = 0;
  int mat = -1;
};

// Connected multigraph of vertices and contraction edges.
struct Cluster {
  std::vector<Vertex> verts;
  std::vector<Edge> edges;
};

// coeff * product over clusters. Clusters with no open legs are folded into
// the coefficient during normalization.
struct Term {
  FormalSeries coeff;
  std::vector<Cluster> clusters;
};

struct PolyFunctional {
  std::vector<Term> terms;
};

namespace detail {

inline void append_int(std::string& s, int v) {
  char buf[sizeof(int)];
  std::memcpy(buf, &v, sizeof(int));
  s.append(buf, sizeof(int));
}

// Canonical byte string of a cluster: minimum over admissible vertex orders of
// the serialized (vertices, oriented sorted edges) form. Vertices are first
// bucketed by their local signature so only ties are permuted.
inline std::string canonical_cluster_key(AlgebraContext& ctx, const Cluster& c) {
  const int n = static_cast<int>(c.verts.size());
  std::vector<std::string> sig(static_cast<std::size_t>(n));
  for (int v = 0; v < n; ++v) {
    std::string& s = sig[static_cast<std::size_t>(v)];
    append_int(s, c.verts[static_cast<std::size_t>(v)].density);
    append_int(s, c.verts[static_cast<std::size_t>(v)].tag);
    for (int leg : c.verts[static_cast<std::size_t>(v)].legs) append_int(s, leg);
  }
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int x, int y) {
    const std::string& a = sig[static_cast<std::size_t>(x)];
    const std::string& b = sig[static_cast<std::size_t>(y)];
    if (a != b) return a < b;
    return x < y;
  });

  auto serialize = [&](const std::vector<int>& ord) {
    // pos[old vertex] = new position
    std::vector<int> pos(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pos[static_cast<std::size_t>(ord[static_cast<std::size_t>(i)])] = i;
    std::string out;
    for (int i = 0; i < n; ++i) {
      const Vertex& v = c.verts[static_cast<std::size_t>(ord[static_cast<std::size_t>(i)])];
      append_int(out, v.density);
      append_int(out, v.tag);
      append_int(out, static_cast<int>(v.legs.size()));
      for (int leg : v.legs) append_int(out, leg);
    }
    std::vector<std::tuple<int, int, int>> es;
    es.reserve(c.edges.size());
    for (const Edge& e : c.edges) {
      int a = pos[static_cast<std::size_t>(e.a)];
      int b = pos[static_cast<std::size_t>(e.b)];
      int m = e.mat;
      if (a > b) {
        std::swap(a, b);
        m = ctx.transpose_id(m);
      }
      es.emplace_back(a, b, m);
    }
    std::sort(es.begin(), es.end());
    for (const auto& [a, b, m] : es) {
      append_int(out, a);
      append_int(out, b);
      append_int(out, m);
    }
    return out;
  };

  // Enumerate permutations within equal-signature buckets only.
  std::string best = serialize(order);
  std::vector<std::pair<int, int>> buckets;  // [begin, end) in `order`
  int start = 0;
  for (int i = 1; i <= n; ++i) {
    if (i == n || sig[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] !=
                      sig[static_cast<std::size_t>(order[static_cast<std::size_t>(start)])]) {
      if (i - start > 1) buckets.emplace_back(start, i);
      start = i;
    }
  }
  if (!buckets.empty()) {
    std::function<void(std::size_t)> rec = [&](std::size_t bi) {
      if (bi == buckets.size()) {
        std::string s = serialize(order);
        if (s < best) best = std::move(s);
        return;
      }
      auto [b0, b1] = buckets[bi];
      std::sort(order.begin() + b0, order.begin() + b1);
      do {
        rec(bi + 1);
      } while (std::next_permutation(order.begin() + b0, order.begin() + b1));
    };
    rec(0);
  }
  return best;
}

}  // namespace detail

// Scalar value of a cluster with no open legs and no field dependence, or of
// any cluster at a given field. `dressed_field[d]` caches (dressing d) * phi.
inline complexd contract_cluster(AlgebraContext& ctx, const Cluster& c, const Field* phi,
                                 std::map<int, Field>* dressed_cache = nullptr) {
  const int n = static_cast<int>(c.verts.size());
  std::vector<Eigen::VectorXcd> w(static_cast<std::size_t>(n));
  for (int v = 0; v < n; ++v) {
    const Vertex& vx = c.verts[static_cast<std::size_t>(v)];
    Eigen::VectorXcd wv = ctx.lat.mu * ctx.density(vx.density);
    for (int leg : vx.legs) {
      if (phi == nullptr) return complexd{0.0, 0.0};
      const Field* dphi;
      if (leg == ctx.identity) {
        dphi = phi;
      } else {
        auto it = dressed_cache->find(leg);
        if (it == dressed_cache->end())
          it = dressed_cache->emplace(leg, Field(ctx.mat(leg) * (*phi))).first;
        dphi = &it->second;
      }
      wv = wv.cwiseProduct(*dphi);
    }
    w[static_cast<std::size_t>(v)] = std::move(wv);
  }

  // Working copy of edges with parallel edges merged (Hadamard product) and
  // self loops folded into the vertex weights.
  std::map<std::pair<int, int>, Matrix> edges;
  for (const Edge& e : c.edges) {
    if (e.a == e.b) {
      w[static_cast<std::size_t>(e.a)] =
          w[static_cast<std::size_t>(e.a)].cwiseProduct(ctx.mat(e.mat).diagonal());
      continue;
    }
    int a = e.a, b = e.b;
    Matrix m = ctx.mat(e.mat);
    if (a > b) {
      std::swap(a, b);
      m = m.transpose().eval();
    }
    auto it = edges.find({a, b});
    if (it == edges.end())
      edges.emplace(std::make_pair(a, b), std::move(m));
    else
      it->second = it->second.cwiseProduct(m);
  }

  std::vector<char> alive(static_cast<std::size_t>(n), 1);
  complexd scalar{1.0, 0.0};
  int remaining = n;
  auto degree = [&](int v) {
    int d = 0;
    for (const auto& [key, m] : edges)
      if (key.first == v || key.second == v) ++d;
    return d;
  };
  while (remaining > 0) {
    // pick an alive vertex of minimal degree (<= 2 always holds here)
    int pick = -1, pick_deg = 1 << 30;
    for (int v = 0; v < n; ++v)
      if (alive[static_cast<std::size_t>(v)]) {
        const int d = degree(v);
        if (d < pick_deg) {
          pick = v;
          pick_deg = d;
        }
      }
    assert(pick >= 0);
    if (pick_deg == 0) {
      scalar *= w[static_cast<std::size_t>(pick)].sum();
      alive[static_cast<std::size_t>(pick)] = 0;
      --remaining;
      continue;
    }
    if (pick_deg == 1) {
      auto it = std::find_if(edges.begin(), edges.end(), [&](const auto& kv) {
        return kv.first.first == pick || kv.first.second == pick;
      });
      const auto [a, b] = it->first;
      if (a == pick) {
        // factor E(x_pick, x_b): fold sum_x w_pick(x) E(x, .) into w_b
        w[static_cast<std::size_t>(b)] = w[static_cast<std::size_t>(b)].cwiseProduct(
            (it->second.transpose() * w[static_cast<std::size_t>(pick)]).eval());
      } else {
        w[static_cast<std::size_t>(a)] = w[static_cast<std::size_t>(a)].cwiseProduct(
            (it->second * w[static_cast<std::size_t>(pick)]).eval());
      }
      edges.erase(it);
      alive[static_cast<std::size_t>(pick)] = 0;
      --remaining;
      continue;
    }
    if (pick_deg == 2) {
      // two distinct neighbor edges (parallels were merged, self loops folded)
      std::array<std::map<std::pair<int, int>, Matrix>::iterator, 2> inc;
      int found = 0;
      for (auto it = edges.begin(); it != edges.end() && found < 2; ++it)
        if (it->first.first == pick || it->first.second == pick) inc[found++] = it;
      auto orient_from_pick = [&](const std::map<std::pair<int, int>, Matrix>::iterator& it,
                                  int& other) -> Matrix {
        if (it->first.first == pick) {
          other = it->first.second;
          return it->second;  // E(x_pick, x_other)
        }
        other = it->first.first;
        return it->second.transpose();
      };
      int u = -1, v2 = -1;
      Matrix e1 = orient_from_pick(inc[0], u);   // E1(x_pick, x_u)
      Matrix e2 = orient_from_pick(inc[1], v2);  // E2(x_pick, x_v2)
      edges.erase(inc[0]);
      edges.erase(inc[1]);
      const Eigen::VectorXcd& wp = w[static_cast<std::size_t>(pick)];
      if (u == v2) {
        // cycle through pick: diagonal contribution onto u
        Eigen::VectorXcd dvec =
            (e1.transpose() * wp.asDiagonal() * e2).diagonal();
        w[static_cast<std::size_t>(u)] = w[static_cast<std::size_t>(u)].cwiseProduct(dvec);
      } else {
        // new edge between u and v2: M(x_u, x_v2) = sum_x E1(x,x_u) w(x) E2(x,x_v2)
        Matrix m = e1.transpose() * wp.asDiagonal() * e2;
        int a = u, b = v2;
        if (a > b) {
          std::swap(a, b);
          m = m.transpose().eval();
        }
        auto it = edges.find({a, b});
        if (it == edges.end())
          edges.emplace(std::make_pair(a, b), std::move(m));
        else
          it->second = it->second.cwiseProduct(m);
      }
      alive[static_cast<std::size_t>(pick)] = 0;
      --remaining;
      continue;
    }
    throw std::logic_error("contract_cluster: graph with min degree > 2");
  }
  assert(edges.empty());
  return scalar;
}

// Canonicalize: split disconnected pieces, fold closed clusters into the
// coefficient, merge structurally identical terms, drop zeros, sort.
inline void normalize(AlgebraContext& ctx, PolyFunctional& f) {
  std::map<std::string, Term> merged;
  for (Term& t : f.terms) {
    if (t.coeff.is_zero()) continue;
    // split every cluster into connected components
    std::vector<Cluster> pieces;
    for (const Cluster& c : t.clusters) {
      const int n = static_cast<int>(c.verts.size());
      std::vector<int> parent(static_cast<std::size_t>(n));
      std::iota(parent.begin(), parent.end(), 0);
      std::function<int(int)> find = [&](int x) {
        while (parent[static_cast<std::size_t>(x)] != x) {
          parent[static_cast<std::size_t>(x)] =
              parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
          x = parent[static_cast<std::size_t>(x)];
        }
        return x;
      };
      for (const Edge& e : c.edges) {
        const int ra = find(e.a), rb = find(e.b);
        if (ra != rb) parent[static_cast<std::size_t>(ra)] = rb;
      }
      std::map<int, int> comp_of_root;
      std::vector<Cluster> comps;
      std::vector<int> vmap(static_cast<std::size_t>(n));
      for (int v = 0; v < n; ++v) {
        const int r = find(v);
        auto it = comp_of_root.find(r);
        if (it == comp_of_root.end()) {
          it = comp_of_root.emplace(r, static_cast<int>(comps.size())).first;
          comps.emplace_back();
        }
        vmap[static_cast<std::size_t>(v)] =
            static_cast<int>(comps[static_cast<std::size_t>(it->second)].verts.size());
        comps[static_cast<std::size_t>(it->second)].verts.push_back(c.verts[static_cast<std::size_t>(v)]);
      }
      for (const Edge& e : c.edges) {
        const int ci = comp_of_root.at(find(e.a));
        comps[static_cast<std::size_t>(ci)].edges.push_back(
            Edge{vmap[static_cast<std::size_t>(e.a)], vmap[static_cast<std::size_t>(e.b)], e.mat});
      }
      for (Cluster& comp : comps) pieces.push_back(std::move(comp));
    }
    // fold closed pieces (no open legs) into the coefficient
    Term out;
    out.coeff = t.coeff;
    for (Cluster& c : pieces) {
      bool open = false;
      for (const Vertex& v : c.verts)
        if (!v.legs.empty()) {
          open = true;
          break;
        }
      if (open) {
        for (Vertex& v : c.verts) std::sort(v.legs.begin(), v.legs.end());
        out.clusters.push_back(std::move(c));
      } else {
        out.coeff *= contract_cluster(ctx, c, nullptr);
      }
    }
    if (out.coeff.is_zero()) continue;
    std::vector<std::string> keys;
    keys.reserve(out.clusters.size());
    for (const Cluster& c : out.clusters) keys.push_back(detail::canonical_cluster_key(ctx, c));
    std::vector<int> ord(out.clusters.size());
    std::iota(ord.begin(), ord.end(), 0);
    std::sort(ord.begin(), ord.end(),
              [&](int a, int b) { return keys[static_cast<std::size_t>(a)] < keys[static_cast<std::size_t>(b)]; });
    std::string term_key;
    std::vector<Cluster> sorted;
    sorted.reserve(out.clusters.size());
    for (int i : ord) {
      term_key += keys[static_cast<std::size_t>(i)];
      term_key.push_back('|');
      sorted.push_back(std::move(out.clusters[static_cast<std::size_t>(i)]));
    }
    out.clusters = std::move(sorted);
    auto it = merged.find(term_key);
    if (it == merged.end())
      merged.emplace(std::move(term_key), std::move(out));
    else
      it->second.coeff += out.coeff;
  }
  f.terms.clear();
  for (auto& [key, term] : merged)
    if (!term.coeff.is_zero()) f.terms.push_back(std::move(term));
}

// ---- constructors ----

inline PolyFunctional zero_functional() { return {}; }

inline PolyFunctional unit_functional(const AlgebraContext& ctx) {
  Term t;
  t.coeff = FormalSeries::constant(ctx.shape, complexd{1.0, 0.0});
  return PolyFunctional{{t}};
}

// integral of h(x) * prod_i (dressing_i phi)(x) over the lattice (with measure),
// times coeff.
inline PolyFunctional local_functional(AlgebraContext& ctx, const Eigen::VectorXcd& h,
                                       const std::vector<int>& leg_dressings,
                                       const FormalSeries& coeff, int tag = 0) {
  Term t;
  t.coeff = coeff;
  Cluster c;
  Vertex v;
  v.density = ctx.register_density(h);
  v.tag = tag;
  v.legs = leg_dressings;
  std::sort(v.legs.begin(), v.legs.end());
  c.verts.push_back(std::move(v));
  t.clusters.push_back(std::move(c));
  PolyFunctional f{{std::move(t)}};
  normalize(ctx, f);
  return f;
}

inline PolyFunctional local_monomial(AlgebraContext& ctx, const Eigen::VectorXcd& h, int power,
                                     const FormalSeries& coeff, int tag = 0) {
  return local_functional(ctx, h, std::vector<int>(static_cast<std::size_t>(power), ctx.identity),
                          coeff, tag);
}

inline PolyFunctional linear_functional(AlgebraContext& ctx, const Eigen::VectorXcd& f) {
  return local_monomial(ctx, f, 1, FormalSeries::constant(ctx.shape, complexd{1.0, 0.0}));
}

// ---- linear structure ----

inline PolyFunctional add(AlgebraContext& ctx, const PolyFunctional& a, const PolyFunctional& b) {
  PolyFunctional out;
  out.terms = a.terms;
  out.terms.insert(out.terms.end(), b.terms.begin(), b.terms.end());
  normalize(ctx, out);
  return out;
}

inline PolyFunctional scale(AlgebraContext& ctx, const PolyFunctional& a, const FormalSeries& s) {
  PolyFunctional out = a;
  for (Term& t : out.terms) t.coeff *= s;
  normalize(ctx, out);
  return out;
}

inline PolyFunctional scale(AlgebraContext& ctx, const PolyFunctional& a, complexd z) {
  return scale(ctx, a, FormalSeries::constant(ctx.shape, z));
}

inline PolyFunctional sub(AlgebraContext& ctx, const PolyFunctional& a, const PolyFunctional& b) {
  return add(ctx, a, scale(ctx, b, complexd{-1.0, 0.0}));
}

namespace detail {

struct FlatLeg {
  int vert = 0;      // index into flattened vertex list
  int pos = 0;       // index into that vertex's leg list
  int dressing = 0;
};

struct FlatTerm {
  FormalSeries coeff;
  std::vector<Vertex> verts;
  std::vector<Edge> edges;
  std::vector<FlatLeg> legs;
};

inline FlatTerm flatten(const AlgebraContext&, const Term& t) {
  FlatTerm out;
  out.coeff = t.coeff;
  int base = 0;
  for (const Cluster& c : t.clusters) {
    for (const Vertex& v : c.verts) out.verts.push_back(v);
    for (const Edge& e : c.edges) out.edges.push_back(Edge{e.a + base, e.b + base, e.mat});
    base += static_cast<int>(c.verts.size());
  }
  for (int v = 0; v < static_cast<int>(out.verts.size()); ++v)
    for (int p = 0; p < static_cast<int>(out.verts[static_cast<std::size_t>(v)].legs.size()); ++p)
      out.legs.push_back(FlatLeg{v, p, out.verts[static_cast<std::size_t>(v)].legs[static_cast<std::size_t>(p)]});
  return out;
}

inline void min_degrees(const FormalSeries& s, const SeriesShape& sh, int& minh, int& minl) {
  minh = sh.hmax() + 1;
  minl = sh.lambda_max + 1;
  for (int h = sh.hmin(); h <= sh.hmax(); ++h)
    for (int l = 0; l <= sh.lambda_max; ++l)
      if (s.get(h, l) != complexd{0.0, 0.0}) {
        minh = std::min(minh, h);
        minl = std::min(minl, l);
      }
}

// Append to `out` the term built from a flattened pair/self matching.
inline void emit_matched_term(AlgebraContext&, const FlatTerm& ft,
                              const std::vector<Edge>& new_edges,
                              const std::vector<std::vector<char>>& used_legs, int hbar_shift,
                              int lambda_shift, complexd weight, PolyFunctional& out) {
  Term t;
  t.coeff = ft.coeff.shifted(hbar_shift, lambda_shift);
  t.coeff *= weight;
  if (t.coeff.is_zero()) return;
  Cluster all;
  all.verts.reserve(ft.verts.size());
  for (int v = 0; v < static_cast<int>(ft.verts.size()); ++v) {
    Vertex nv;
    nv.density = ft.verts[static_cast<std::size_t>(v)].density;
    nv.tag = ft.verts[static_cast<std::size_t>(v)].tag;
    for (int p = 0; p < static_cast<int>(ft.verts[static_cast<std::size_t>(v)].legs.size()); ++p)
      if (!used_legs[static_cast<std::size_t>(v)][static_cast<std::size_t>(p)])
        nv.legs.push_back(ft.verts[static_cast<std::size_t>(v)].legs[static_cast<std::size_t>(p)]);
    all.verts.push_back(std::move(nv));
  }
  all.edges = ft.edges;
  all.edges.insert(all.edges.end(), new_edges.begin(), new_edges.end());
  t.clusters.push_back(std::move(all));
  out.terms.push_back(std::move(t));
}

}  // namespace detail

// Generic pairing product: sums over sets of disjoint kernel contractions
// between the legs of `a` and the legs of `b`, one power of hbar (and the
// layer's lambda weight) per contraction. With the vacuum two-point kernel
// this is the star product; with the Feynman kernel the time-ordered product.
inline PolyFunctional pair_product(AlgebraContext& ctx, const PolyFunctional& a,
                                   const PolyFunctional& b, const GradedKernel& kernel) {
  PolyFunctional out;
  for (const Term& ta : a.terms) {
    for (const Term& tb : b.terms) {
      detail::FlatTerm fa = detail::flatten(ctx, ta);
      detail::FlatTerm fb = detail::flatten(ctx, tb);
      detail::FlatTerm ft;
      ft.coeff = ta.coeff * tb.coeff;
      if (ft.coeff.is_zero()) continue;
      int minh = 0, minl = 0;
      detail::min_degrees(ft.coeff, ctx.shape, minh, minl);
      const int h_budget = ctx.shape.hmax() - minh;
      const int l_budget = ctx.shape.lambda_max - minl;
      if (h_budget < 0 || l_budget < 0) continue;
      ft.verts = fa.verts;
      ft.verts.insert(ft.verts.end(), fb.verts.begin(), fb.verts.end());
      ft.edges = fa.edges;
      const int base = static_cast<int>(fa.verts.size());
      for (const Edge& e : fb.edges) ft.edges.push_back(Edge{e.a + base, e.b + base, e.mat});

      std::vector<std::vector<char>> used(ft.verts.size());
      for (std::size_t v = 0; v < ft.verts.size(); ++v)
        used[v].assign(ft.verts[v].legs.size(), 0);
      std::vector<char> used_b(fb.legs.size(), 0);
      std::vector<Edge> new_edges;

      std::function<void(std::size_t, int, int, complexd)> rec = [&](std::size_t ai, int h_used,
                                                                     int l_used, complexd w) {
        if (ai == fa.legs.size()) {
          detail::emit_matched_term(ctx, ft, new_edges, used, h_used, l_used, w, out);
          return;
        }
        const detail::FlatLeg& la = fa.legs[ai];
        // leave leg ai open
        rec(ai + 1, h_used, l_used, w);
        if (h_used + 1 > h_budget) return;
        for (std::size_t bj = 0; bj < fb.legs.size(); ++bj) {
          if (used_b[bj]) continue;
          const detail::FlatLeg& lb = fb.legs[bj];
          for (const GradedKernelLayer& layer : kernel) {
            if (l_used + layer.lambda_weight > l_budget) continue;
            const int va = la.vert;
            const int vb = lb.vert + base;
            int em = ctx.edge_matrix(la.dressing, layer.mat, lb.dressing);
            if (va == vb) em = ctx.diag_part_id(em);
            new_edges.push_back(Edge{va, vb, em});
            used[static_cast<std::size_t>(va)][static_cast<std::size_t>(la.pos)] = 1;
            used[static_cast<std::size_t>(vb)]
                [static_cast<std::size_t>(lb.pos)] = 1;
            used_b[bj] = 1;
            rec(ai + 1, h_used + 1, l_used + layer.lambda_weight, w * layer.weight);
            used_b[bj] = 0;
            used[static_cast<std::size_t>(va)][static_cast<std::size_t>(la.pos)] = 0;
            used[static_cast<std::size_t>(vb)]
                [static_cast<std::size_t>(lb.pos)] = 0;
            new_edges.pop_back();
          }
        }
      };
      rec(0, 0, 0, complexd{1.0, 0.0});
    }
  }
  normalize(ctx, out);
  return out;
}

// Exponential-type deformation: sums over sets of disjoint contractions among
// the legs of each term of `a` itself, one hbar per contraction. The kernel
// layers must be symmetric matrices.
inline PolyFunctional self_pair_deform(AlgebraContext& ctx, const PolyFunctional& a,
                                       const GradedKernel& kernel) {
  PolyFunctional out;
  for (const Term& ta : a.terms) {
    detail::FlatTerm ft = detail::flatten(ctx, ta);
    int minh = 0, minl = 0;
    detail::min_degrees(ft.coeff, ctx.shape, minh, minl);
    const int h_budget = ctx.shape.hmax() - minh;
    const int l_budget = ctx.shape.lambda_max - minl;
    if (h_budget < 0 || l_budget < 0) continue;

    std::vector<std::vector<char>> used(ft.verts.size());
    for (std::size_t v = 0; v < ft.verts.size(); ++v) used[v].assign(ft.verts[v].legs.size(), 0);
    std::vector<char> taken(ft.legs.size(), 0);
    std::vector<Edge> new_edges;

    std::function<void(std::size_t, int, int, complexd)> rec = [&](std::size_t i, int h_used,
                                                                   int l_used, complexd w) {
      // advance to first unconsidered leg
      std::size_t k = i;
      while (k < ft.legs.size() && taken[k]) ++k;
      if (k == ft.legs.size()) {
        detail::emit_matched_term(ctx, ft, new_edges, used, h_used, l_used, w, out);
        return;
      }
      // leave leg k unpaired
      taken[k] = 1;
      rec(k + 1, h_used, l_used, w);
      taken[k] = 0;
      if (h_used + 1 > h_budget) return;
      const detail::FlatLeg& lk = ft.legs[k];
      for (std::size_t j = k + 1; j < ft.legs.size(); ++j) {
        if (taken[j]) continue;
        const detail::FlatLeg& lj = ft.legs[j];
        for (const GradedKernelLayer& layer : kernel) {
          if (l_used + layer.lambda_weight > l_budget) continue;
          int em = ctx.edge_matrix(lk.dressing, layer.mat, lj.dressing);
          if (lk.vert == lj.vert) em = ctx.diag_part_id(em);
          new_edges.push_back(Edge{lk.vert, lj.vert, em});
          used[static_cast<std::size_t>(lk.vert)][static_cast<std::size_t>(lk.pos)] = 1;
          used[static_cast<std::size_t>(lj.vert)][static_cast<std::size_t>(lj.pos)] = 1;
          taken[k] = 1;
          taken[j] = 1;
          rec(k + 1, h_used + 1, l_used + layer.lambda_weight, w * layer.weight);
          taken[j] = 0;
          taken[k] = 0;
          used[static_cast<std::size_t>(lj.vert)][static_cast<std::size_t>(lj.pos)] = 0;
          used[static_cast<std::size_t>(lk.vert)][static_cast<std::size_t>(lk.pos)] = 0;
          new_edges.pop_back();
        }
      }
    };
    rec(0, 0, 0, complexd{1.0, 0.0});
  }
  normalize(ctx, out);
  return out;
}

// ---- evaluation and derivatives ----

inline FormalSeries evaluate(AlgebraContext& ctx, const PolyFunctional& f, const Field& phi) {
  FormalSeries acc(ctx.shape);
  std::map<int, Field> cache;
  for (const Term& t : f.terms) {
    complexd v{1.0, 0.0};
    for (const Cluster& c : t.clusters) {
      v *= contract_cluster(ctx, c, &phi, &cache);
      if (v == complexd{0.0, 0.0}) break;
    }
    acc += t.coeff * v;
  }
  return acc;
}

inline FormalSeries evaluate_at_zero(AlgebraContext& ctx, const PolyFunctional& f) {
  FormalSeries acc(ctx.shape);
  for (const Term& t : f.terms) {
    bool open = false;
    for (const Cluster& c : t.clusters)
      for (const Vertex& v : c.verts)
        if (!v.legs.empty()) open = true;
    if (!open && t.clusters.empty()) acc += t.coeff;
    // normalized functionals fold closed clusters, so open clusters mean 0
  }
  return acc;
}

// Directional derivative along g (one leg removed in all possible ways, the
// leg's dressing applied to g and multiplied into the vertex density).
inline PolyFunctional derivative(AlgebraContext& ctx, const PolyFunctional& f, const Field& g) {
  PolyFunctional out;
  std::map<int, Field> cache;
  for (const Term& t : f.terms) {
    for (std::size_t ci = 0; ci < t.clusters.size(); ++ci) {
      const Cluster& c = t.clusters[ci];
      for (std::size_t vi = 0; vi < c.verts.size(); ++vi) {
        const Vertex& v = c.verts[vi];
        // identical dressings on one vertex give identical contributions
        std::map<int, int> mult;
        for (int leg : v.legs) ++mult[leg];
        for (const auto& [dress, count] : mult) {
          const Field* dg;
          if (dress == ctx.identity) {
            dg = &g;
          } else {
            auto it = cache.find(dress);
            if (it == cache.end()) it = cache.emplace(dress, Field(ctx.mat(dress) * g)).first;
            dg = &it->second;
          }
          Term nt;
          nt.coeff = t.coeff * static_cast<double>(count);
          nt.clusters = t.clusters;
          Vertex& nv = nt.clusters[ci].verts[vi];
          auto pos = std::find(nv.legs.begin(), nv.legs.end(), dress);
          nv.legs.erase(pos);
          nt.clusters[ci].verts[vi].density =
              ctx.register_density(ctx.density(v.density).cwiseProduct(*dg));
          out.terms.push_back(std::move(nt));
        }
      }
    }
  }
  normalize(ctx, out);
  return out;
}

// Complex conjugate functional: F*(phi) = conj(F(conj(phi))).
inline PolyFunctional conjugate(AlgebraContext& ctx, const PolyFunctional& f) {
  PolyFunctional out = f;
  for (Term& t : out.terms) {
    t.coeff = t.coeff.conjugated();
    for (Cluster& c : t.clusters) {
      for (Vertex& v : c.verts) {
        v.density = ctx.conj_density_id(v.density);
        for (int& leg : v.legs) leg = (leg == ctx.identity) ? leg : ctx.conj_id(leg);
        std::sort(v.legs.begin(), v.legs.end());
      }
      for (Edge& e : c.edges) e.mat = ctx.conj_id(e.mat);
    }
  }
  normalize(ctx, out);
  return out;
}

// Replace every leg dressing D by D * (sum_n lambda^n op_n); each leg picks a
// layer independently. Used to pull functionals back along field-space maps.
inline PolyFunctional dress_legs(AlgebraContext& ctx, const PolyFunctional& f,
                                 const GradedKernel& op_layers) {
  PolyFunctional out;
  for (const Term& t : f.terms) {
    // enumerate layer choices leg by leg over the whole term
    struct LegRef {
      std::size_t cluster, vert, pos;
    };
    std::vector<LegRef> legs;
    for (std::size_t ci = 0; ci < t.clusters.size(); ++ci)
      for (std::size_t vi = 0; vi < t.clusters[ci].verts.size(); ++vi)
        for (std::size_t p = 0; p < t.clusters[ci].verts[vi].legs.size(); ++p)
          legs.push_back(LegRef{ci, vi, p});
    int minh = 0, minl = 0;
    detail::min_degrees(t.coeff, ctx.shape, minh, minl);
    if (minl > ctx.shape.lambda_max) continue;
    const int l_budget = ctx.shape.lambda_max - minl;

    Term work = t;
    std::function<void(std::size_t, int, complexd)> rec = [&](std::size_t i, int l_used,
                                                              complexd w) {
      if (i == legs.size()) {
        Term emit = work;
        emit.coeff = t.coeff.shifted(0, l_used);
        emit.coeff *= w;
        if (!emit.coeff.is_zero()) out.terms.push_back(std::move(emit));
        return;
      }
      const LegRef& r = legs[i];
      const int orig = t.clusters[r.cluster].verts[r.vert].legs[r.pos];
      for (const GradedKernelLayer& layer : op_layers) {
        if (l_used + layer.lambda_weight > l_budget) continue;
        work.clusters[r.cluster].verts[r.vert].legs[r.pos] = ctx.compose(orig, layer.mat);
        rec(i + 1, l_used + layer.lambda_weight, w * layer.weight);
      }
      work.clusters[r.cluster].verts[r.vert].legs[r.pos] = orig;
    };
    rec(0, 0, complexd{1.0, 0.0});
  }
  normalize(ctx, out);
  return out;
}

// Time translation by an integer number of steps (support must stay inside
// the time window; content shifted past the boundary is cut off). Legs must
// be undressed; densities shift, edge matrices shift in both arguments.
inline PolyFunctional translate_time(AlgebraContext& ctx, const PolyFunctional& f, int steps) {
  Eigen::MatrixXd shift = Eigen::MatrixXd::Zero(ctx.lat.sites, ctx.lat.sites);
  for (int t = 0; t < ctx.lat.n_t; ++t) {
    if (t + steps < 0 || t + steps >= ctx.lat.n_t) continue;
    for (int s = 0; s < ctx.lat.spatial_sites; ++s)
      shift(ctx.lat.site(t + steps, s), ctx.lat.site(t, s)) = 1.0;
  }
  const Matrix sh = shift.cast<complexd>();
  PolyFunctional out = f;
  for (Term& t : out.terms)
    for (Cluster& c : t.clusters) {
      for (Vertex& v : c.verts) {
        for (int leg : v.legs)
          if (leg != ctx.identity)
            throw std::invalid_argument("translate_time: dressed legs not translatable");
        v.density = ctx.register_density(sh * ctx.density(v.density));
      }
      for (Edge& e : c.edges)
        e.mat = ctx.register_matrix(sh * ctx.mat(e.mat) * sh.transpose());
    }
  normalize(ctx, out);
  return out;
}

// Retag all vertices (group bookkeeping for state evaluations).
inline PolyFunctional retag(AlgebraContext& ctx, const PolyFunctional& f, int tag) {
  PolyFunctional out = f;
  for (Term& t : out.terms)
    for (Cluster& c : t.clusters)
      for (Vertex& v : c.verts) v.tag = tag;
  normalize(ctx, out);
  return out;
}

// ---- quasi-free state evaluation ----

// Gaussian (quasi-free) expectation of a product string of functionals.
// Sums over complete pairings of all legs; the kernel for each pair is chosen
// by `rule(tag_a, tag_b)` with tag_a <= tag_b the group tags of the two legs
// (within-group pairs use rule(g, g)). Each pair contributes one hbar. When
// `connected_only` is set, only pairings whose pairing graph connects all
// `n_groups` groups are kept.
inline FormalSeries paired_expectation(
    AlgebraContext& ctx, const std::vector<const PolyFunctional*>& groups, int n_groups,
    const std::function<const GradedKernel&(int, int)>& rule, bool connected_only) {
  FormalSeries acc(ctx.shape);
  std::vector<std::size_t> idx(groups.size(), 0);
  // iterate over the cartesian product of term choices
  while (true) {
    // assemble flattened string for this tuple of terms
    bool skip = false;
    FormalSeries coeff = FormalSeries::constant(ctx.shape, complexd{1.0, 0.0});
    for (std::size_t g = 0; g < groups.size(); ++g) {
      if (groups[g]->terms.empty()) {
        skip = true;
        break;
      }
      coeff *= groups[g]->terms[idx[g]].coeff;
    }
    if (groups.empty()) break;
    if (skip) break;
    if (!coeff.is_zero()) {
      detail::FlatTerm ft;
      ft.coeff = coeff;
      std::vector<int> vert_group;
      for (std::size_t g = 0; g < groups.size(); ++g) {
        const Term& t = groups[g]->terms[idx[g]];
        int off = static_cast<int>(ft.verts.size());
        for (const Cluster& c : t.clusters) {
          for (const Vertex& v : c.verts) {
            ft.verts.push_back(v);
            vert_group.push_back(static_cast<int>(g));
          }
          for (const Edge& e : c.edges) ft.edges.push_back(Edge{e.a + off, e.b + off, e.mat});
          off += static_cast<int>(c.verts.size());
        }
      }
      for (int v = 0; v < static_cast<int>(ft.verts.size()); ++v)
        for (int p = 0; p < static_cast<int>(ft.verts[static_cast<std::size_t>(v)].legs.size()); ++p)
          ft.legs.push_back(detail::FlatLeg{
              v, p, ft.verts[static_cast<std::size_t>(v)].legs[static_cast<std::size_t>(p)]});

      int minh = 0, minl = 0;
      detail::min_degrees(ft.coeff, ctx.shape, minh, minl);
      const int h_budget = ctx.shape.hmax() - minh;
      const int l_budget = ctx.shape.lambda_max - minl;
      const int need = static_cast<int>(ft.legs.size()) / 2;
      if ((static_cast<int>(ft.legs.size()) % 2) == 0 && need <= h_budget && l_budget >= 0) {
        std::vector<char> taken(ft.legs.size(), 0);
        std::vector<Edge> new_edges;
        std::function<void(int, int, complexd)> rec = [&](int h_used, int l_used, complexd w) {
          std::size_t k = 0;
          while (k < ft.legs.size() && taken[k]) ++k;
          if (k == ft.legs.size()) {
            // complete pairing: connectivity filter, then evaluate
            if (connected_only && n_groups > 1) {
              std::vector<int> parent(static_cast<std::size_t>(n_groups));
              std::iota(parent.begin(), parent.end(), 0);
              std::function<int(int)> find = [&](int x) {
                while (parent[static_cast<std::size_t>(x)] != x)
                  x = parent[static_cast<std::size_t>(x)] =
                      parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
                return x;
              };
              for (const Edge& e : new_edges) {
                const int ga = vert_group[static_cast<std::size_t>(e.a)];
                const int gb = vert_group[static_cast<std::size_t>(e.b)];
                const int ra = find(ga), rb = find(gb);
                if (ra != rb) parent[static_cast<std::size_t>(ra)] = rb;
              }
              // clusters with several vertices also tie their groups together
              // (vertices of one cluster always share a group here)
              int root0 = find(0);
              bool conn = true;
              for (int g = 1; g < n_groups; ++g)
                if (find(g) != root0) conn = false;
              if (!conn) return;
            }
            Cluster all;
            all.verts.reserve(ft.verts.size());
            for (const Vertex& v : ft.verts) {
              Vertex nv = v;
              nv.legs.clear();
              all.verts.push_back(std::move(nv));
            }
            all.edges = ft.edges;
            all.edges.insert(all.edges.end(), new_edges.begin(), new_edges.end());
            const complexd val = contract_cluster(ctx, all, nullptr);
            acc += ft.coeff.shifted(h_used, l_used) * (w * val);
            return;
          }
          if (h_used + 1 > h_budget) return;
          const detail::FlatLeg& lk = ft.legs[k];
          for (std::size_t j = k + 1; j < ft.legs.size(); ++j) {
            if (taken[j]) continue;
            const detail::FlatLeg& lj = ft.legs[j];
            const int ga = vert_group[static_cast<std::size_t>(lk.vert)];
            const int gb = vert_group[static_cast<std::size_t>(lj.vert)];
            const GradedKernel& kern = rule(std::min(ga, gb), std::max(ga, gb));
            for (const GradedKernelLayer& layer : kern) {
              if (l_used + layer.lambda_weight > l_budget) continue;
              // orient the kernel with the earlier group on the left
              int em;
              if (ga <= gb)
                em = ctx.edge_matrix(lk.dressing, layer.mat, lj.dressing);
              else
                em = ctx.transpose_id(ctx.edge_matrix(lj.dressing, layer.mat, lk.dressing));
              if (lk.vert == lj.vert) em = ctx.diag_part_id(em);
              new_edges.push_back(Edge{lk.vert, lj.vert, em});
              taken[k] = 1;
              taken[j] = 1;
              rec(h_used + 1, l_used + layer.lambda_weight, w * layer.weight);
              taken[j] = 0;
              taken[k] = 0;
              new_edges.pop_back();
            }
          }
        };
        rec(0, 0, complexd{1.0, 0.0});
      }
    }
    // advance tuple
    std::size_t g = 0;
    for (; g < groups.size(); ++g) {
      if (++idx[g] < groups[g]->terms.size()) break;
      idx[g] = 0;
    }
    if (g == groups.size()) break;
  }
  return acc;
}

// ---- comparison helpers ----

inline Field random_real_field(const LatticeSpec& lat, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Field f(lat.sites);
  for (int i = 0; i < lat.sites; ++i) f[i] = complexd{dist(rng), 0.0};
  return f;
}

// Max difference of the reported layers of evaluate(a) and evaluate(b) over a
// deterministic set of probe fields.
inline double probe_difference(AlgebraContext& ctx, const PolyFunctional& a,
                               const PolyFunctional& b, int n_probes = 3,
                               std::uint64_t seed = 12345) {
  double worst = 0.0;
  for (int p = 0; p < n_probes; ++p) {
    const Field phi = random_real_field(ctx.lat, seed + static_cast<std::uint64_t>(p));
    const FormalSeries va = evaluate(ctx, a, phi);
    const FormalSeries vb = evaluate(ctx, b, phi);
    worst = std::max(worst, reported_difference(va, vb));
  }
  return worst;
}

}  // namespace ppalab
