#pragma once

// Electromagnetic field models (V, B) with analytic first and second
// derivatives, a small library of built-in profiles, and the operations the
// rest of the toolkit needs: Lorentz-type force evaluation, the magnetic
// closedness residual, reconstruction of a magnetic potential A from B, and
// grid norms of the field data.
//
// Conventions:
//   * B(x) is stored as an antisymmetric N x N matrix acting on velocities.
//   * relativistic force   F(x, v) = -grad V(x) + (1/c) B(x) v
//   * nonrelativistic      F(x, v) = -grad V(x) +       B(x) v
//   * dB[l](i,k) = d/dx_l B_{i,k}.

#include "fescat/core.hpp"
#include "fescat/quadrature.hpp"

#include <algorithm>

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>

namespace fescat {

enum class Mode { relativistic, nonrelativistic };

inline const char* mode_name(Mode m) {
  return m == Mode::relativistic ? "relativistic" : "nonrelativistic";
}

/// A static external field (V, B) together with kinematic conventions.
/// Closures carry the analytic derivatives; built-in factories fill them in.
template <int N>
struct FieldModel {
  Mode mode = Mode::relativistic;
  double c = 1.0;  // speed of light; ignored by nonrelativistic kinematics

  std::function<double(const Vec<N>&)> V;
  std::function<Vec<N>(const Vec<N>&)> grad_V;
  std::function<Mat<N>(const Vec<N>&)> hess_V;
  std::function<Mat<N>(const Vec<N>&)> B;
  std::function<DTensor<N>(const Vec<N>&)> dB;

  /// Optional magnetic potential with dA = B; null for models that do not
  /// carry one natively (use potential_from_B to manufacture one).
  std::function<Vec<N>(const Vec<N>&)> A;

  /// Compact support ball, when the fields vanish outside one (required by
  /// the scattering solver).
  bool has_support = false;
  Vec<N> support_center = Vec<N>::Zero();
  double support_radius = 0.0;

  /// Smallest spatial scale over which the fields vary (bump radius, gaussian
  /// width, plateau transition band).  The flow integrator uses it to bound
  /// the step size for compactly supported models: outside the support the
  /// force vanishes identically, so without a cap the step controller grows
  /// the step until a thin support sliver can pass between stage evaluations
  /// unnoticed.  Zero means "no finite scale" (constant or empty fields).
  double feature_scale = 0.0;

  std::string name = "unnamed";

  /// Coefficient multiplying B v in the force law.
  double b_coupling() const { return mode == Mode::relativistic ? 1.0 / c : 1.0; }
};

/// Force entering the second-order equation of motion, evaluated from the
/// velocity: F(x, v) = -grad V(x) + (1/c) B(x) v (the 1/c only in the
/// relativistic convention).
template <int N>
Vec<N> eval_force(const FieldModel<N>& model, const NoDeduce<Vec<N>>& x,
                  const NoDeduce<Vec<N>>& v) {
  return Vec<N>(-model.grad_V(x) + model.b_coupling() * (model.B(x) * v));
}

// ---------------------------------------------------------------------------
// Built-in profiles.  Scalar radial pieces share one chain rule:
//   V(x) = f(u),  u = |x - x0|^2 / rho^2
//   grad V = (2/rho^2) f'(u) (x - x0)
//   Hess V = (2/rho^2) f'(u) I + (4/rho^4) f''(u) (x - x0)(x - x0)^T
// ---------------------------------------------------------------------------

namespace detail {

/// Radial profile f(u), u = |x-x0|^2/rho^2, with two derivatives in u.
struct RadialProfile {
  std::function<double(double)> f, df, d2f;
};

/// Cubic polynomial bump (1 - u)^3 on u < 1, zero outside; C^2 everywhere.
inline RadialProfile bump_profile(double amplitude) {
  return {
      [amplitude](double u) { return u < 1.0 ? amplitude * std::pow(1.0 - u, 3) : 0.0; },
      [amplitude](double u) { return u < 1.0 ? -3.0 * amplitude * sqr(1.0 - u) : 0.0; },
      [amplitude](double u) { return u < 1.0 ? 6.0 * amplitude * (1.0 - u) : 0.0; },
  };
}

/// C^2 plateau: 1 on u <= u0, (1 - s^3)^3 with s = (u-u0)/(1-u0) on
/// u0 < u < 1, and 0 beyond.  Used to truncate fields that do not vanish
/// on their own.
inline RadialProfile plateau_profile(double u0) {
  const double span = 1.0 - u0;
  auto q = [u0, span](double u) {
    if (u <= u0) return 1.0;
    if (u >= 1.0) return 0.0;
    const double s = (u - u0) / span;
    return std::pow(1.0 - s * s * s, 3);
  };
  auto dq = [u0, span](double u) {
    if (u <= u0 || u >= 1.0) return 0.0;
    const double s = (u - u0) / span;
    return -9.0 * s * s * sqr(1.0 - s * s * s) / span;
  };
  auto d2q = [u0, span](double u) {
    if (u <= u0 || u >= 1.0) return 0.0;
    const double s = (u - u0) / span;
    const double w = 1.0 - s * s * s;
    return (-18.0 * s * w * w + 54.0 * s * s * s * s * w) / (span * span);
  };
  return {q, dq, d2q};
}

/// Install V(x) = f(|x - x0|^2 / rho^2) with analytic derivatives.
template <int N>
void set_radial_potential(FieldModel<N>& model, const Vec<N>& x0, double rho,
                          RadialProfile prof) {
  const double inv_r2 = 1.0 / (rho * rho);
  auto p = std::make_shared<RadialProfile>(std::move(prof));
  model.V = [x0, inv_r2, p](const Vec<N>& x) {
    return p->f((x - x0).squaredNorm() * inv_r2);
  };
  model.grad_V = [x0, inv_r2, p](const Vec<N>& x) {
    const Vec<N> d = x - x0;
    return Vec<N>(2.0 * inv_r2 * p->df(d.squaredNorm() * inv_r2) * d);
  };
  model.hess_V = [x0, inv_r2, p](const Vec<N>& x) {
    const Vec<N> d = x - x0;
    const double u = d.squaredNorm() * inv_r2;
    Mat<N> h = 2.0 * inv_r2 * p->df(u) * Mat<N>::Identity();
    h += 4.0 * inv_r2 * inv_r2 * p->d2f(u) * (d * d.transpose());
    return h;
  };
}

template <int N>
void set_zero_potential(FieldModel<N>& model) {
  model.V = [](const Vec<N>&) { return 0.0; };
  model.grad_V = [](const Vec<N>&) { return Vec<N>(Vec<N>::Zero()); };
  model.hess_V = [](const Vec<N>&) { return Mat<N>(Mat<N>::Zero()); };
}

template <int N>
void set_zero_magnetic(FieldModel<N>& model) {
  model.B = [](const Vec<N>&) { return Mat<N>(Mat<N>::Zero()); };
  model.dB = [](const Vec<N>&) {
    DTensor<N> t;
    for (int l = 0; l < N; ++l) t[l].setZero();
    return t;
  };
  model.A = [](const Vec<N>&) { return Vec<N>(Vec<N>::Zero()); };
}

}  // namespace detail

/// V = 0, B = 0.
template <int N>
FieldModel<N> make_zero_field(Mode mode = Mode::relativistic, double c = 1.0) {
  FieldModel<N> model;
  model.mode = mode;
  model.c = c;
  model.name = "zero";
  detail::set_zero_potential(model);
  detail::set_zero_magnetic(model);
  model.has_support = true;  // vacuously compact support
  model.support_radius = 0.0;
  return model;
}

/// Constant antisymmetric B, V = 0.  Carries the linear potential
/// A(x) = -(1/2) B x, which satisfies d_i A_k - d_k A_i = B_{i,k}.
template <int N>
FieldModel<N> make_constant_b(const Mat<N>& B0, Mode mode = Mode::relativistic,
                              double c = 1.0) {
  if (!B0.isApprox(-B0.transpose().eval(), 1e-13))
    throw std::invalid_argument("make_constant_b: B must be antisymmetric");
  FieldModel<N> model;
  model.mode = mode;
  model.c = c;
  model.name = "constant_b";
  detail::set_zero_potential(model);
  model.B = [B0](const Vec<N>&) { return B0; };
  model.dB = [](const Vec<N>&) {
    DTensor<N> t;
    for (int l = 0; l < N; ++l) t[l].setZero();
    return t;
  };
  model.A = [B0](const Vec<N>& x) { return Vec<N>(-0.5 * (B0 * x)); };
  return model;
}

/// Planar shortcut: constant B_{12} = b.
inline FieldModel<2> make_constant_b2(double b, Mode mode = Mode::relativistic,
                                      double c = 1.0) {
  Mat<2> B0;
  B0 << 0.0, b, -b, 0.0;
  return make_constant_b<2>(B0, mode, c);
}

/// Compactly supported potential bump
///   V(x) = a (1 - |x-x0|^2/rho^2)^3  on |x-x0| < rho, zero outside.
template <int N>
FieldModel<N> make_bump_v(double amplitude, const Vec<N>& x0, double rho,
                          Mode mode = Mode::relativistic, double c = 1.0) {
  if (rho <= 0.0) throw std::invalid_argument("make_bump_v: rho must be positive");
  FieldModel<N> model;
  model.mode = mode;
  model.c = c;
  model.name = "bump_v";
  detail::set_radial_potential(model, x0, rho, detail::bump_profile(amplitude));
  detail::set_zero_magnetic(model);
  model.has_support = true;
  model.support_center = x0;
  model.support_radius = rho;
  model.feature_scale = rho;
  return model;
}

/// Planar magnetic bump: B_12(x) = a (1 - |x-x0|^2/rho^2)^3 clipped at zero.
/// Closedness is automatic for N = 2 by antisymmetry.
inline FieldModel<2> make_bump_b2(double amplitude, const Vec<2>& x0, double rho,
                                  Mode mode = Mode::relativistic, double c = 1.0) {
  if (rho <= 0.0) throw std::invalid_argument("make_bump_b2: rho must be positive");
  FieldModel<2> model;
  model.mode = mode;
  model.c = c;
  model.name = "bump_b2";
  detail::set_zero_potential(model);
  const double inv_r2 = 1.0 / (rho * rho);
  auto prof = std::make_shared<detail::RadialProfile>(detail::bump_profile(amplitude));
  Mat<2> J;
  J << 0.0, 1.0, -1.0, 0.0;
  model.B = [x0, inv_r2, prof, J](const Vec<2>& x) {
    return Mat<2>(prof->f((x - x0).squaredNorm() * inv_r2) * J);
  };
  model.dB = [x0, inv_r2, prof, J](const Vec<2>& x) {
    const Vec<2> d = x - x0;
    const Vec<2> grad = 2.0 * inv_r2 * prof->df(d.squaredNorm() * inv_r2) * d;
    DTensor<2> t;
    for (int l = 0; l < 2; ++l) t[l] = grad[l] * J;
    return t;
  };
  model.A = {};  // available through potential_from_B
  model.has_support = true;
  model.support_center = x0;
  model.support_radius = rho;
  model.feature_scale = rho;
  return model;
}

/// Magnetic bump built from the vector potential A(x) = beta(x) m with the
/// cubic bump profile beta; then B_{i,k} = d_i beta m_k - d_k beta m_i is
/// exactly closed, compactly supported and C^1.  Works in any dimension.
template <int N>
FieldModel<N> make_bump_b_potential(double amplitude, const Vec<N>& x0, double rho,
                                    const Vec<N>& m, Mode mode = Mode::relativistic,
                                    double c = 1.0) {
  if (rho <= 0.0)
    throw std::invalid_argument("make_bump_b_potential: rho must be positive");
  FieldModel<N> model;
  model.mode = mode;
  model.c = c;
  model.name = "bump_b_potential";
  detail::set_zero_potential(model);
  const double inv_r2 = 1.0 / (rho * rho);
  auto prof = std::make_shared<detail::RadialProfile>(detail::bump_profile(amplitude));
  auto grad_beta = [x0, inv_r2, prof](const Vec<N>& x) {
    const Vec<N> d = x - x0;
    return Vec<N>(2.0 * inv_r2 * prof->df(d.squaredNorm() * inv_r2) * d);
  };
  auto hess_beta = [x0, inv_r2, prof](const Vec<N>& x) {
    const Vec<N> d = x - x0;
    const double u = d.squaredNorm() * inv_r2;
    Mat<N> h = 2.0 * inv_r2 * prof->df(u) * Mat<N>::Identity();
    h += 4.0 * inv_r2 * inv_r2 * prof->d2f(u) * (d * d.transpose());
    return h;
  };
  model.A = [x0, inv_r2, prof, m](const Vec<N>& x) {
    return Vec<N>(prof->f((x - x0).squaredNorm() * inv_r2) * m);
  };
  model.B = [grad_beta, m](const Vec<N>& x) {
    const Vec<N> g = grad_beta(x);
    return Mat<N>(g * m.transpose() - m * g.transpose());
  };
  model.dB = [hess_beta, m](const Vec<N>& x) {
    const Mat<N> h = hess_beta(x);
    DTensor<N> t;
    for (int l = 0; l < N; ++l) {
      const Vec<N> hl = h.col(l);
      t[l] = hl * m.transpose() - m * hl.transpose();
    }
    return t;
  };
  model.has_support = true;
  model.support_center = x0;
  model.support_radius = rho;
  model.feature_scale = rho;
  return model;
}

/// Harmonic well (omega^2/2) |x - x0|^2 truncated to zero outside |x-x0| = rho
/// by a C^2 plateau; exactly harmonic on |x-x0| <= rho/2.
template <int N>
FieldModel<N> make_truncated_harmonic_v(double omega, const Vec<N>& x0, double rho,
                                        Mode mode = Mode::relativistic, double c = 1.0) {
  if (rho <= 0.0)
    throw std::invalid_argument("make_truncated_harmonic_v: rho must be positive");
  FieldModel<N> model;
  model.mode = mode;
  model.c = c;
  model.name = "truncated_harmonic_v";
  const double k = 0.5 * omega * omega * rho * rho;  // V = k u q(u)
  detail::RadialProfile plateau = detail::plateau_profile(0.25);
  detail::RadialProfile prof{
      [k, plateau](double u) { return k * u * plateau.f(u); },
      [k, plateau](double u) { return k * (plateau.f(u) + u * plateau.df(u)); },
      [k, plateau](double u) { return k * (2.0 * plateau.df(u) + u * plateau.d2f(u)); },
  };
  detail::set_radial_potential(model, x0, rho, std::move(prof));
  detail::set_zero_magnetic(model);
  model.has_support = true;
  model.support_center = x0;
  model.support_radius = rho;
  model.feature_scale = 0.5 * rho;  // width of the plateau's falloff band
  return model;
}

/// Gaussian potential a exp(-|x-x0|^2 / (2 sigma^2)).  Not compactly
/// supported; intended for boundary-problem fixtures with nonzero boundary
/// trace.
template <int N>
FieldModel<N> make_gaussian_v(double amplitude, const Vec<N>& x0, double sigma,
                              Mode mode = Mode::relativistic, double c = 1.0) {
  if (sigma <= 0.0)
    throw std::invalid_argument("make_gaussian_v: sigma must be positive");
  FieldModel<N> model;
  model.mode = mode;
  model.c = c;
  model.name = "gaussian_v";
  detail::RadialProfile prof{
      [amplitude](double u) { return amplitude * std::exp(-0.5 * u); },
      [amplitude](double u) { return -0.5 * amplitude * std::exp(-0.5 * u); },
      [amplitude](double u) { return 0.25 * amplitude * std::exp(-0.5 * u); },
  };
  detail::set_radial_potential(model, x0, sigma, std::move(prof));
  detail::set_zero_magnetic(model);
  model.feature_scale = sigma;
  return model;
}

/// Pointwise sum of two models sharing mode and c.  Supports are merged into
/// the smallest ball containing both.
template <int N>
FieldModel<N> combine_fields(const FieldModel<N>& a, const FieldModel<N>& b) {
  if (a.mode != b.mode || a.c != b.c)
    throw std::invalid_argument("combine_fields: kinematic conventions differ");
  FieldModel<N> model;
  model.mode = a.mode;
  model.c = a.c;
  model.name = a.name + "+" + b.name;
  model.V = [=](const Vec<N>& x) { return a.V(x) + b.V(x); };
  model.grad_V = [=](const Vec<N>& x) { return Vec<N>(a.grad_V(x) + b.grad_V(x)); };
  model.hess_V = [=](const Vec<N>& x) { return Mat<N>(a.hess_V(x) + b.hess_V(x)); };
  model.B = [=](const Vec<N>& x) { return Mat<N>(a.B(x) + b.B(x)); };
  model.dB = [=](const Vec<N>& x) {
    DTensor<N> ta = a.dB(x), tb = b.dB(x);
    for (int l = 0; l < N; ++l) ta[l] += tb[l];
    return ta;
  };
  if (a.A && b.A) {
    auto aa = a.A, ba = b.A;
    model.A = [aa, ba](const Vec<N>& x) { return Vec<N>(aa(x) + ba(x)); };
  }
  if (a.feature_scale > 0.0 && b.feature_scale > 0.0) {
    model.feature_scale = std::min(a.feature_scale, b.feature_scale);
  } else {
    model.feature_scale = std::max(a.feature_scale, b.feature_scale);
  }
  if (a.has_support && b.has_support) {
    // Smallest ball containing both support balls.
    const Vec<N> d = b.support_center - a.support_center;
    const double dist = d.norm();
    if (dist + b.support_radius <= a.support_radius) {
      model.has_support = true;
      model.support_center = a.support_center;
      model.support_radius = a.support_radius;
    } else if (dist + a.support_radius <= b.support_radius) {
      model.has_support = true;
      model.support_center = b.support_center;
      model.support_radius = b.support_radius;
    } else {
      model.has_support = true;
      model.support_radius = 0.5 * (dist + a.support_radius + b.support_radius);
      model.support_center =
          dist > 0.0
              ? Vec<N>(a.support_center +
                       (model.support_radius - a.support_radius) * (d / dist))
              : a.support_center;
    }
  }
  return model;
}

/// Reverse the magnetic field (V, B) -> (V, -B); used by the reciprocity
/// relations and time reversal.
template <int N>
FieldModel<N> reverse_b(const FieldModel<N>& model) {
  FieldModel<N> out = model;
  auto B = model.B;
  auto dB = model.dB;
  out.B = [B](const Vec<N>& x) { return Mat<N>(-B(x)); };
  out.dB = [dB](const Vec<N>& x) {
    DTensor<N> t = dB(x);
    for (auto& m : t) m = -m;
    return t;
  };
  if (model.A) {
    auto A = model.A;
    out.A = [A](const Vec<N>& x) { return Vec<N>(-A(x)); };
  }
  out.name = model.name + "(-B)";
  return out;
}

// ---------------------------------------------------------------------------
// Operations.
// ---------------------------------------------------------------------------

/// Maximum over the given points and index triples (i,k,l) of the cyclic sum
///   d_i B_{k,l} + d_l B_{i,k} + d_k B_{l,i},
/// which must vanish for B to admit a potential.
template <int N>
double check_magnetic_closedness(const FieldModel<N>& model,
                                 const std::vector<Vec<N>>& points) {
  double worst = 0.0;
  for (const Vec<N>& x : points) {
    const DTensor<N> t = model.dB(x);
    for (int i = 0; i < N; ++i)
      for (int k = 0; k < N; ++k)
        for (int l = 0; l < N; ++l) {
          const double r = t[i](k, l) + t[l](i, k) + t[k](l, i);
          worst = std::max(worst, std::abs(r));
        }
  }
  return worst;
}

/// Magnetic potential reconstructed from B by the line-integral formula
///   A(x) = -int_0^1 s B(x0 + s (x - x0)) (x - x0) ds,
/// which satisfies d_i A_k - d_k A_i = B_{i,k} whenever B is closed.
/// Gauss-Legendre in s; when the model has a compact support ball the
/// integral is split at the support-sphere crossings, where the integrand is
/// only piecewise smooth, making the rule exact for the polynomial bumps.
template <int N>
std::function<Vec<N>(const Vec<N>&)> potential_from_B(const FieldModel<N>& model,
                                                      const NoDeduce<Vec<N>>& x0,
                                                      int quad_order = 24) {
  auto B = model.B;
  auto rule = std::make_shared<QuadRule>(gauss_legendre(quad_order));
  const bool has_support = model.has_support && model.support_radius > 0.0;
  const Vec<N> sc = model.support_center;
  const double sr = model.support_radius;
  return [B, x0, rule, has_support, sc, sr](const Vec<N>& x) {
    const Vec<N> d = x - x0;
    // Breakpoints where the segment x0 + s d, s in [0,1], crosses the
    // support sphere.
    std::vector<double> cuts{0.0, 1.0};
    if (has_support && d.squaredNorm() > 0.0) {
      const Vec<N> w = x0 - sc;
      const double a = d.squaredNorm();
      const double b = 2.0 * w.dot(d);
      const double c0 = w.squaredNorm() - sr * sr;
      const double disc = b * b - 4.0 * a * c0;
      if (disc > 0.0) {
        const double sq = std::sqrt(disc);
        for (double s : {(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)})
          if (s > 1e-14 && s < 1.0 - 1e-14) cuts.push_back(s);
        std::sort(cuts.begin(), cuts.end());
      }
    }
    Vec<N> acc = Vec<N>::Zero();
    for (std::size_t seg = 0; seg + 1 < cuts.size(); ++seg) {
      const double mid = 0.5 * (cuts[seg] + cuts[seg + 1]);
      const double half = 0.5 * (cuts[seg + 1] - cuts[seg]);
      for (std::size_t q = 0; q < rule->nodes.size(); ++q) {
        const double s = mid + half * rule->nodes[q];
        acc += half * rule->weights[q] * s * (B(Vec<N>(x0 + s * d)) * d);
      }
    }
    return Vec<N>(-acc);
  };
}

/// Grid suprema of the field data over a point cloud.  `beta` is the largest
/// of all of them: max(sup |d^a V| for |a| <= 2, sup |d^a B_{ij}| for |a| <= 1).
struct FieldNorms {
  double sup_V = 0.0;        // sup |V|
  double sup_grad_V = 0.0;   // sup max_i |d_i V|
  double sup_hess_V = 0.0;   // sup max_{ij} |d_i d_j V|
  double sup_B = 0.0;        // sup max_{ij} |B_{ij}|
  double sup_dB = 0.0;       // sup max_{l,ij} |d_l B_{ij}|
  double sup_V_signed = 0.0; // sup V (no absolute value); feeds thresholds
  double beta = 0.0;
};

template <int N>
FieldNorms field_norms(const FieldModel<N>& model, const std::vector<Vec<N>>& points) {
  if (points.empty()) throw std::invalid_argument("field_norms: empty point set");
  FieldNorms norms;
  norms.sup_V_signed = -std::numeric_limits<double>::infinity();
  for (const Vec<N>& x : points) {
    const double v = model.V(x);
    norms.sup_V = std::max(norms.sup_V, std::abs(v));
    norms.sup_V_signed = std::max(norms.sup_V_signed, v);
    norms.sup_grad_V =
        std::max(norms.sup_grad_V, model.grad_V(x).template lpNorm<Eigen::Infinity>());
    const Mat<N> h = model.hess_V(x);
    const Mat<N> b = model.B(x);
    const DTensor<N> db = model.dB(x);
    for (int i = 0; i < N; ++i)
      for (int k = 0; k < N; ++k) {
        norms.sup_hess_V = std::max(norms.sup_hess_V, std::abs(h(i, k)));
        norms.sup_B = std::max(norms.sup_B, std::abs(b(i, k)));
        for (int l = 0; l < N; ++l)
          norms.sup_dB = std::max(norms.sup_dB, std::abs(db[l](i, k)));
      }
  }
  norms.beta = std::max({norms.sup_V, norms.sup_grad_V, norms.sup_hess_V,
                         norms.sup_B, norms.sup_dB});
  return norms;
}

}  // namespace fescat
