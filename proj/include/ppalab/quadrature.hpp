#pragma once

// Gauss-Legendre nodes and weights. Used for ordered-simplex integrals over
// imaginary time, momentum integrals, and phase integrals; the integrands are
// analytic, so a few dozen nodes reach near machine accuracy.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace ppalab {

struct Quadrature {
  std::vector<double> x;
  std::vector<double> w;
};

// Nodes and weights on [-1, 1].
inline Quadrature gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: need at least one node");
  Quadrature q;
  q.x.resize(static_cast<std::size_t>(n));
  q.w.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < (n + 1) / 2; ++i) {
    // Newton iteration from the Chebyshev-based root estimate.
    double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 64; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / static_cast<double>(k);
        p0 = p1;
        p1 = p2;
      }
      dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
      const double step = p1 / dp;
      x -= step;
      if (std::abs(step) < 1e-15) break;
    }
    q.x[static_cast<std::size_t>(i)] = -x;
    q.x[static_cast<std::size_t>(n - 1 - i)] = x;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    q.w[static_cast<std::size_t>(i)] = w;
    q.w[static_cast<std::size_t>(n - 1 - i)] = w;
  }
  return q;
}

// Nodes and weights on [0, 1].
inline Quadrature gauss_legendre_01(int n) {
  Quadrature q = gauss_legendre(n);
  for (double& x : q.x) x = 0.5 * (x + 1.0);
  for (double& w : q.w) w *= 0.5;
  return q;
}

// Nodes and weights on [a, b].
inline Quadrature gauss_legendre_ab(int n, double a, double b) {
  Quadrature q = gauss_legendre(n);
  for (double& x : q.x) x = 0.5 * ((b - a) * x + (b + a));
  for (double& w : q.w) w *= 0.5 * (b - a);
  return q;
}

}  // namespace ppalab
