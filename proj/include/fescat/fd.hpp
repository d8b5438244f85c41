#pragma once

// Central finite-difference helpers shared by the verification checks and
// the test oracles.  Richardson refinement (halving h once and comparing)
// is exposed so callers can both estimate and report the FD error.

#include "fescat/core.hpp"

#include <functional>

namespace fescat {

/// Central first derivative of a scalar function of one double.
template <typename F>
double fd_derivative(F&& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// Central gradient of a scalar field.
template <int N, typename F>
Vec<N> fd_gradient(F&& f, const Vec<N>& x, double h) {
  Vec<N> g;
  for (int i = 0; i < N; ++i) {
    Vec<N> xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

/// Central Jacobian of a vector field (rows: components, cols: derivatives).
template <int N, typename F>
Mat<N> fd_jacobian(F&& f, const Vec<N>& x, double h) {
  Mat<N> j;
  for (int i = 0; i < N; ++i) {
    Vec<N> xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    j.col(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return j;
}

/// Central second-derivative matrix of a scalar field (diagonal by repeated
/// first differences, off-diagonal by the four-point mixed stencil).
template <int N, typename F>
Mat<N> fd_hessian(F&& f, const Vec<N>& x, double h) {
  Mat<N> hess;
  const double f0 = f(x);
  for (int i = 0; i < N; ++i) {
    Vec<N> xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    hess(i, i) = (f(xp) - 2.0 * f0 + f(xm)) / (h * h);
    for (int k = i + 1; k < N; ++k) {
      Vec<N> xpp = x, xpm = x, xmp = x, xmm = x;
      xpp[i] += h; xpp[k] += h;
      xpm[i] += h; xpm[k] -= h;
      xmp[i] -= h; xmp[k] += h;
      xmm[i] -= h; xmm[k] -= h;
      hess(i, k) = (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (4.0 * h * h);
      hess(k, i) = hess(i, k);
    }
  }
  return hess;
}

/// Richardson-refined central derivative: evaluates at h and h/2 and returns
/// the extrapolated value together with the disagreement as an error proxy.
template <typename F>
std::pair<double, double> fd_derivative_richardson(F&& f, double x, double h) {
  const double d1 = fd_derivative(f, x, h);
  const double d2 = fd_derivative(f, x, 0.5 * h);
  return {(4.0 * d2 - d1) / 3.0, std::abs(d2 - d1)};
}

}  // namespace fescat
