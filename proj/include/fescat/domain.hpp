#pragma once

// Strictly convex bounded domains D = { chi < 0 } with C^2 defining
// function, boundary charts, dilation, and robust line intersection.
//
// chi is negative inside, zero on the boundary, positive outside, with
// nonvanishing gradient on the boundary (outward normal direction) and
// positive-definite Hessian in the cases shipped here (ball, axis-aligned
// ellipsoid, and their dilations).

#include "fescat/core.hpp"
#include "fescat/rootfind.hpp"

#include <array>
#include <functional>
#include <string>
#include <vector>

namespace fescat {

template <int N>
using ChartAngles = std::array<double, N - 1>;

template <int N>
struct ConvexDomain {
  std::function<double(const Vec<N>&)> chi;
  std::function<Vec<N>(const Vec<N>&)> grad_chi;
  std::function<Mat<N>(const Vec<N>&)> hess_chi;

  /// Boundary chart angles -> point.  N = 2: theta in [0, 2pi).
  /// N = 3: (theta, phi), polar theta in [0, pi], azimuth phi in [0, 2pi).
  std::function<Vec<N>(const ChartAngles<N>&)> chart;
  /// d(chart)/d(theta_j); needed for boundary-form pullbacks and FD checks.
  std::function<Vec<N>(const ChartAngles<N>&, int)> chart_tangent;
  /// Inverse chart for points on (or numerically near) the boundary.
  std::function<ChartAngles<N>(const Vec<N>&)> chart_inverse;

  Vec<N> center = Vec<N>::Zero();
  double bound_radius = 0.0;  // max |b - center| over boundary points b
  double delta = 0.0;         // sup_{x in D} |x| (distance from the origin)
  double diameter = 0.0;      // sup |x - y| over D

  std::string name = "domain";

  bool contains(const Vec<N>& x, double tol = 0.0) const { return chi(x) <= tol; }

  /// Outward unit normal at a boundary point.
  Vec<N> normal(const Vec<N>& x) const {
    const Vec<N> g = grad_chi(x);
    return Vec<N>(g / g.norm());
  }
};

namespace detail {

/// Axis-aligned ellipsoid chi = sum((x_i - c_i)^2 / a_i^2) - 1; the ball is
/// the special case of equal semi-axes.
template <int N>
ConvexDomain<N> make_quadric(const Vec<N>& c, const Vec<N>& semi_axes,
                             const std::string& name) {
  for (int i = 0; i < N; ++i)
    if (semi_axes[i] <= 0.0)
      throw std::invalid_argument("domain: semi-axes must be positive");
  ConvexDomain<N> d;
  d.name = name;
  d.center = c;
  Vec<N> inv2;
  for (int i = 0; i < N; ++i) inv2[i] = 1.0 / sqr(semi_axes[i]);
  d.chi = [c, inv2](const Vec<N>& x) {
    double s = -1.0;
    for (int i = 0; i < N; ++i) s += sqr(x[i] - c[i]) * inv2[i];
    return s;
  };
  d.grad_chi = [c, inv2](const Vec<N>& x) {
    Vec<N> g;
    for (int i = 0; i < N; ++i) g[i] = 2.0 * (x[i] - c[i]) * inv2[i];
    return g;
  };
  d.hess_chi = [inv2](const Vec<N>&) {
    Mat<N> h = Mat<N>::Zero();
    for (int i = 0; i < N; ++i) h(i, i) = 2.0 * inv2[i];
    return h;
  };
  const Vec<N> a = semi_axes;
  if constexpr (N == 2) {
    d.chart = [c, a](const ChartAngles<2>& t) {
      return Vec<2>(c + Vec<2>(a[0] * std::cos(t[0]), a[1] * std::sin(t[0])));
    };
    d.chart_tangent = [c, a](const ChartAngles<2>& t, int) {
      return Vec<2>(-a[0] * std::sin(t[0]), a[1] * std::cos(t[0]));
    };
    d.chart_inverse = [c, a](const Vec<2>& x) {
      double th = std::atan2((x[1] - c[1]) / a[1], (x[0] - c[0]) / a[0]);
      if (th < 0.0) th += 2.0 * M_PI;
      return ChartAngles<2>{th};
    };
  } else {
    d.chart = [c, a](const ChartAngles<3>& t) {
      const double st = std::sin(t[0]), ct = std::cos(t[0]);
      return Vec<3>(c + Vec<3>(a[0] * st * std::cos(t[1]), a[1] * st * std::sin(t[1]),
                               a[2] * ct));
    };
    d.chart_tangent = [c, a](const ChartAngles<3>& t, int j) {
      const double st = std::sin(t[0]), ct = std::cos(t[0]);
      const double cp = std::cos(t[1]), sp = std::sin(t[1]);
      if (j == 0) return Vec<3>(a[0] * ct * cp, a[1] * ct * sp, -a[2] * st);
      return Vec<3>(-a[0] * st * sp, a[1] * st * cp, 0.0);
    };
    d.chart_inverse = [c, a](const Vec<3>& x) {
      const double z = (x[2] - c[2]) / a[2];
      double th = std::acos(std::min(1.0, std::max(-1.0, z)));
      double ph = std::atan2((x[1] - c[1]) / a[1], (x[0] - c[0]) / a[0]);
      if (ph < 0.0) ph += 2.0 * M_PI;
      return ChartAngles<3>{th, ph};
    };
  }
  d.bound_radius = a.maxCoeff();
  d.diameter = 2.0 * a.maxCoeff();
  // sup |x| over the closed domain: scan the boundary (the sup of a convex
  // function over a compact convex set is attained on the boundary).
  double delta = 0.0;
  if constexpr (N == 2) {
    for (int i = 0; i < 2048; ++i) {
      const double th = 2.0 * M_PI * i / 2048.0;
      delta = std::max(delta, d.chart(ChartAngles<2>{th}).norm());
    }
  } else {
    for (int i = 0; i <= 96; ++i)
      for (int j = 0; j < 192; ++j) {
        const double th = M_PI * i / 96.0;
        const double ph = 2.0 * M_PI * j / 192.0;
        delta = std::max(delta, d.chart(ChartAngles<3>{th, ph}).norm());
      }
  }
  d.delta = std::max(delta, c.norm());
  return d;
}

}  // namespace detail

template <int N>
ConvexDomain<N> make_ball(const Vec<N>& center, double radius) {
  Vec<N> a;
  a.setConstant(radius);
  ConvexDomain<N> d = detail::make_quadric<N>(center, a, "ball");
  d.delta = center.norm() + radius;  // exact for the ball
  return d;
}

template <int N>
ConvexDomain<N> make_ellipsoid(const Vec<N>& center, const Vec<N>& semi_axes) {
  return detail::make_quadric<N>(center, semi_axes, "ellipsoid");
}

/// Dilation about x0 by factor (1 + eps):
///   D_eps = { x0 + (1 + eps)(y - x0) : y in D },
/// realized by chi_eps(x) = chi(x0 + (x - x0)/(1 + eps)).  eps > -1.
template <int N>
ConvexDomain<N> dilate_domain(const ConvexDomain<N>& d, const NoDeduce<Vec<N>>& x0,
                              double eps) {
  if (eps <= -1.0) throw std::invalid_argument("dilate_domain: need eps > -1");
  const double s = 1.0 + eps;
  ConvexDomain<N> out;
  out.name = d.name + "_dilated";
  auto chi = d.chi;
  auto grad = d.grad_chi;
  auto hess = d.hess_chi;
  auto pull = [x0, s](const Vec<N>& x) { return Vec<N>(x0 + (x - x0) / s); };
  out.chi = [chi, pull](const Vec<N>& x) { return chi(pull(x)); };
  out.grad_chi = [grad, pull, s](const Vec<N>& x) { return Vec<N>(grad(pull(x)) / s); };
  out.hess_chi = [hess, pull, s](const Vec<N>& x) { return Mat<N>(hess(pull(x)) / (s * s)); };
  auto chart = d.chart;
  auto tangent = d.chart_tangent;
  auto inv = d.chart_inverse;
  out.chart = [chart, x0, s](const ChartAngles<N>& t) {
    return Vec<N>(x0 + s * (chart(t) - x0));
  };
  out.chart_tangent = [tangent, s](const ChartAngles<N>& t, int j) {
    return Vec<N>(s * tangent(t, j));
  };
  out.chart_inverse = [inv, x0, s](const Vec<N>& x) {
    return inv(Vec<N>(x0 + (x - x0) / s));
  };
  out.center = x0 + s * (d.center - x0);
  out.bound_radius = s * d.bound_radius;
  out.diameter = s * d.diameter;
  // Rescan sup |x| through the dilated chart.
  double delta = out.center.norm();
  if constexpr (N == 2) {
    for (int i = 0; i < 2048; ++i)
      delta = std::max(delta, out.chart(ChartAngles<2>{2.0 * M_PI * i / 2048.0}).norm());
  } else {
    for (int i = 0; i <= 96; ++i)
      for (int j = 0; j < 192; ++j)
        delta = std::max(delta, out.chart(ChartAngles<3>{M_PI * i / 96.0,
                                                         2.0 * M_PI * j / 192.0}).norm());
  }
  out.delta = delta;
  return out;
}

/// Intersections of the line { x + t v } with the boundary { chi = 0 }.
/// For a strictly convex domain there are 0, 1 (tangency) or 2 of them.
struct LineHits {
  int count = 0;
  double t[2] = {0.0, 0.0};  // sorted ascending when count == 2
};

template <int N>
LineHits intersect_line(const ConvexDomain<N>& d, const NoDeduce<Vec<N>>& x,
                        const NoDeduce<Vec<N>>& v,
                        double chi_tol = 1e-13) {
  LineHits hits;
  const double vn = v.norm();
  if (vn < 1e-300) throw std::invalid_argument("intersect_line: zero direction");
  // Bracket within the bounding ball |y - center| <= R + 1.
  const double R = d.bound_radius + 1.0;
  const Vec<N> w = x - d.center;
  const double b = w.dot(v) / (vn * vn);
  const double cterm = (w.squaredNorm() - R * R) / (vn * vn);
  const double disc = b * b - cterm;
  if (disc <= 0.0) return hits;  // line misses even the bounding ball
  const double sq = std::sqrt(disc);
  const double tlo = -b - sq, thi = -b + sq;
  auto g = [&](double t) { return d.chi(Vec<N>(x + t * v)); };
  // chi is convex along the line for the quadric-based domains used here,
  // so g is unimodal: locate its minimum, then bracket each root.
  const double tmin = golden_min(g, tlo, thi, 1e-13 * (thi - tlo));
  const double gmin = g(tmin);
  if (gmin > chi_tol) return hits;
  if (gmin > -chi_tol) {  // tangency
    hits.count = 1;
    hits.t[0] = tmin;
    return hits;
  }
  hits.count = 2;
  hits.t[0] = brent_root(g, tlo, tmin, 1e-14 * std::max(1.0, std::abs(tmin - tlo)), chi_tol);
  hits.t[1] = brent_root(g, tmin, thi, 1e-14 * std::max(1.0, std::abs(thi - tmin)), chi_tol);
  return hits;
}

/// Axis-aligned grid over the bounding box, filtered to the closed domain.
template <int N>
std::vector<Vec<N>> interior_grid(const ConvexDomain<N>& d, int per_axis) {
  if (per_axis < 2) throw std::invalid_argument("interior_grid: need >= 2 per axis");
  std::vector<Vec<N>> pts;
  const double R = d.bound_radius;
  std::array<int, N> idx{};
  const int total = [&] {
    int t = 1;
    for (int i = 0; i < N; ++i) t *= per_axis;
    return t;
  }();
  for (int flat = 0; flat < total; ++flat) {
    int rem = flat;
    Vec<N> x;
    for (int i = 0; i < N; ++i) {
      idx[static_cast<std::size_t>(i)] = rem % per_axis;
      rem /= per_axis;
      x[i] = d.center[i] - R + 2.0 * R * idx[static_cast<std::size_t>(i)] / (per_axis - 1);
    }
    if (d.contains(x)) pts.push_back(x);
  }
  return pts;
}

/// Uniformly spaced boundary chart samples.  N = 2: `per_angle` thetas.
/// N = 3: per_angle interior polar values x 2*per_angle azimuths (poles
/// excluded to keep the chart nondegenerate).
template <int N>
std::vector<ChartAngles<N>> boundary_angle_grid(int per_angle) {
  std::vector<ChartAngles<N>> out;
  if constexpr (N == 2) {
    for (int i = 0; i < per_angle; ++i)
      out.push_back(ChartAngles<2>{2.0 * M_PI * i / per_angle});
  } else {
    for (int i = 1; i <= per_angle; ++i)
      for (int j = 0; j < 2 * per_angle; ++j)
        out.push_back(ChartAngles<3>{M_PI * i / (per_angle + 1),
                                     M_PI * j / per_angle});
  }
  return out;
}

template <int N>
std::vector<Vec<N>> boundary_grid(const ConvexDomain<N>& d, int per_angle) {
  std::vector<Vec<N>> pts;
  for (const auto& t : boundary_angle_grid<N>(per_angle)) pts.push_back(d.chart(t));
  return pts;
}

/// Deterministic uniform sample from the interior (rejection from the
/// bounding box).
template <int N>
Vec<N> sample_interior(const ConvexDomain<N>& d, Rng& rng, double margin = 0.0) {
  for (int attempt = 0; attempt < 100000; ++attempt) {
    Vec<N> x;
    for (int i = 0; i < N; ++i)
      x[i] = d.center[i] + rng.uniform(-d.bound_radius, d.bound_radius);
    if (d.chi(x) <= -margin) return x;
  }
  throw std::runtime_error("sample_interior: rejection sampling failed");
}

}  // namespace fescat
