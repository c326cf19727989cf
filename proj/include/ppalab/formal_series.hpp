#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

namespace ppalab {

using complexd = std::complex<double>;

// Truncation box for bigraded series in (hbar, lambda).
//
// Reported layers are hbar in [0, hbar_max], lambda in [0, lambda_max].
// Interaction exponentials carry one 1/hbar per coupling, so intermediates
// need hbar down to -lambda_max; symmetrically, a factor still to come can
// lower hbar by at most the remaining lambda budget, so keeping hbar up to
// hbar_max + lambda_max makes truncated products exact on reported layers.
struct SeriesShape {
  int hbar_max = 2;
  int lambda_max = 2;

  int hmin() const { return -lambda_max; }
  int hmax() const { return hbar_max + lambda_max; }
  int rows() const { return hmax() - hmin() + 1; }
  int cols() const { return lambda_max + 1; }
  int size() const { return rows() * cols(); }
  bool operator==(const SeriesShape&) const = default;
};

class FormalSeries {
 public:
  FormalSeries() : shape_{}, c_(shape_.size(), complexd{0.0, 0.0}) {}

  explicit FormalSeries(SeriesShape shape)
      : shape_(shape), c_(shape.size(), complexd{0.0, 0.0}) {}

  static FormalSeries constant(SeriesShape shape, complexd value) {
    FormalSeries s(shape);
    s.at(0, 0) = value;
    return s;
  }

  // value * hbar^h * lambda^l
  static FormalSeries monomial(SeriesShape shape, int h, int l, complexd value) {
    FormalSeries s(shape);
    if (s.in_box(h, l)) s.at(h, l) = value;
    return s;
  }

  const SeriesShape& shape() const { return shape_; }

  bool in_box(int h, int l) const {
    return h >= shape_.hmin() && h <= shape_.hmax() && l >= 0 && l <= shape_.lambda_max;
  }

  complexd& at(int h, int l) {
    assert(in_box(h, l));
    return c_[static_cast<std::size_t>((h - shape_.hmin()) * shape_.cols() + l)];
  }
  complexd at(int h, int l) const {
    assert(in_box(h, l));
    return c_[static_cast<std::size_t>((h - shape_.hmin()) * shape_.cols() + l)];
  }
  complexd get(int h, int l) const { return in_box(h, l) ? at(h, l) : complexd{0.0, 0.0}; }

  bool is_zero() const {
    for (const auto& z : c_)
      if (z != complexd{0.0, 0.0}) return false;
    return true;
  }

  FormalSeries& operator+=(const FormalSeries& o) {
    assert(shape_ == o.shape_);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
    return *this;
  }
  FormalSeries& operator-=(const FormalSeries& o) {
    assert(shape_ == o.shape_);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
    return *this;
  }
  FormalSeries& operator*=(complexd z) {
    for (auto& v : c_) v *= z;
    return *this;
  }

  FormalSeries& operator*=(const FormalSeries& o) { return *this = *this * o; }

  friend FormalSeries operator+(FormalSeries a, const FormalSeries& b) { return a += b; }
  friend FormalSeries operator-(FormalSeries a, const FormalSeries& b) { return a -= b; }
  friend FormalSeries operator*(FormalSeries a, complexd z) { return a *= z; }
  friend FormalSeries operator*(complexd z, FormalSeries a) { return a *= z; }

  FormalSeries operator-() const {
    FormalSeries r(*this);
    for (auto& v : r.c_) v = -v;
    return r;
  }

  // Truncated Cauchy product; coefficients landing outside the box are dropped,
  // which cannot affect reported layers (see SeriesShape).
  friend FormalSeries operator*(const FormalSeries& a, const FormalSeries& b) {
    assert(a.shape_ == b.shape_);
    FormalSeries r(a.shape_);
    const SeriesShape& s = a.shape_;
    for (int ha = s.hmin(); ha <= s.hmax(); ++ha)
      for (int la = 0; la <= s.lambda_max; ++la) {
        const complexd ca = a.at(ha, la);
        if (ca == complexd{0.0, 0.0}) continue;
        for (int hb = s.hmin(); hb <= s.hmax(); ++hb)
          for (int lb = 0; lb + la <= s.lambda_max; ++lb) {
            const complexd cb = b.at(hb, lb);
            if (cb == complexd{0.0, 0.0}) continue;
            const int h = ha + hb;
            if (h < s.hmin() || h > s.hmax()) continue;
            r.at(h, la + lb) += ca * cb;
          }
      }
    return r;
  }

  // Multiply by hbar^dh * lambda^dl.
  FormalSeries shifted(int dh, int dl) const {
    FormalSeries r(shape_);
    for (int h = shape_.hmin(); h <= shape_.hmax(); ++h)
      for (int l = 0; l <= shape_.lambda_max; ++l) {
        const complexd v = at(h, l);
        if (v == complexd{0.0, 0.0}) continue;
        const int nh = h + dh, nl = l + dl;
        if (r.in_box(nh, nl)) r.at(nh, nl) += v;
      }
    return r;
  }

  FormalSeries conjugated() const {
    FormalSeries r(shape_);
    for (std::size_t i = 0; i < c_.size(); ++i) r.c_[i] = std::conj(c_[i]);
    return r;
  }

  // Multiplicative inverse; requires an invertible (0,0) coefficient.
  // 1/A = (1/a)(1 + N + N^2 + ...) with N = 1 - A/a strictly grading-raising
  // inside the box, so the sum terminates.
  FormalSeries inverse() const {
    const complexd a = at(0, 0);
    assert(std::abs(a) > 0.0);
    FormalSeries n = constant(shape_, 1.0) - (*this) * (complexd{1.0, 0.0} / a);
    FormalSeries acc = constant(shape_, 1.0);
    FormalSeries pow = constant(shape_, 1.0);
    const int steps = shape_.rows() + shape_.cols();
    for (int k = 0; k < steps; ++k) {
      pow = pow * n;
      if (pow.is_zero()) break;
      acc += pow;
    }
    return acc * (complexd{1.0, 0.0} / a);
  }

  // Sup over all stored layers.
  double max_abs() const {
    double m = 0.0;
    for (const auto& z : c_) m = std::max(m, std::abs(z));
    return m;
  }

  // Sup over reported layers only: hbar in [0, hbar_max], lambda in [0, lambda_max].
  double max_abs_reported() const {
    double m = 0.0;
    for (int h = 0; h <= shape_.hbar_max; ++h)
      for (int l = 0; l <= shape_.lambda_max; ++l) m = std::max(m, std::abs(at(h, l)));
    return m;
  }

  // Sup over negative-hbar layers; physical results must vanish here.
  double max_abs_negative_hbar() const {
    double m = 0.0;
    for (int h = shape_.hmin(); h < 0; ++h)
      for (int l = 0; l <= shape_.lambda_max; ++l) m = std::max(m, std::abs(at(h, l)));
    return m;
  }

  double max_abs_at_lambda(int l) const {
    double m = 0.0;
    for (int h = shape_.hmin(); h <= shape_.hmax(); ++h) m = std::max(m, std::abs(at(h, l)));
    return m;
  }

 private:
  SeriesShape shape_;
  std::vector<complexd> c_;
};

inline double reported_difference(const FormalSeries& a, const FormalSeries& b) {
  return (a - b).max_abs_reported();
}

}  // namespace ppalab
