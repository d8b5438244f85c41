#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Eigenvalues>

#include "fescat/domain.hpp"
#include "fescat/fields.hpp"

namespace fescat {

// Scalar inputs shared by every pointwise regime constant: the C^2/C^1 field
// bound beta, the domain radius delta = sup_{x in Omega} |x|, the speed of
// light and the space dimension.
struct ThresholdContext {
  double beta = 0.0;
  double delta = 0.0;
  double c = 1.0;
  int n = 0;
};

namespace detail {

inline void require_gap(double gap, double c) {
  if (!(gap > c * c)) {
    throw std::invalid_argument(
        "threshold constants need energy above the rest threshold at every "
        "point (E - V(x) > c^2)");
  }
}

}  // namespace detail

// Pointwise constants; `gap` is E - V(x) at the evaluation point.  Every term
// below is monotone in the gap, so suprema/infima over the domain land at the
// potential's extremum, but callers scan the whole grid anyway.
inline double c4_pointwise(const ThresholdContext& ctx, double gap) {
  detail::require_gap(gap, ctx.c);
  const double n32 = std::pow(static_cast<double>(ctx.n), 1.5);
  const double sqn = std::sqrt(static_cast<double>(ctx.n));
  const double sqrt2 = std::sqrt(2.0);
  const double bd = ctx.beta * ctx.delta;
  const double a = 10.0 * sqrt2 * n32 * bd / gap;
  const double ea = std::exp(a);
  const double c2 = ctx.c * ctx.c;
  const double term1 = (1.0 + a * ea) *
                       (10.0 * n32 * ctx.delta * ctx.delta * ctx.beta / gap) *
                       (5.0 + 600.0 * n32 * bd / gap + 24.0 * sqn);
  const double term2 = (20.0 * sqrt2 * ctx.n * ctx.n * bd / gap) * ea;
  const double term3 =
      40.0 * n32 * bd / (c2 * std::sqrt(sqr(gap / c2) - 1.0));
  return term1 + term2 + term3;
}

inline double c5_pointwise(const ThresholdContext& ctx, double gap) {
  detail::require_gap(gap, ctx.c);
  const double n32 = std::pow(static_cast<double>(ctx.n), 1.5);
  const double sqrt2 = std::sqrt(2.0);
  const double bd = ctx.beta * ctx.delta;
  const double a = 10.0 * sqrt2 * n32 * bd / gap;
  return (1.0 + a * std::exp(a)) * (20.0 * n32 * bd / gap) *
         (1.0 + 120.0 * n32 * bd / gap);
}

inline double c3_pointwise(const ThresholdContext& ctx, double gap) {
  const double c4 = c4_pointwise(ctx, gap);
  const double c5 = c5_pointwise(ctx, gap);
  const double arg = 5.0 * ctx.delta * c5;
  return c4 * (1.0 + arg * std::exp(arg));
}

inline double c6_pointwise(const ThresholdContext& ctx, double gap) {
  detail::require_gap(gap, ctx.c);
  const double c2 = ctx.c * ctx.c;
  return std::sqrt(1.0 - sqr(c2 / gap)) -
         20.0 * ctx.n * ctx.n * ctx.beta * ctx.delta / gap;
}

inline double c7_pointwise(const ThresholdContext& ctx, double gap) {
  detail::require_gap(gap, ctx.c);
  const double n32 = std::pow(static_cast<double>(ctx.n), 1.5);
  const double sqn = std::sqrt(static_cast<double>(ctx.n));
  const double c2 = ctx.c * ctx.c;
  const double bd = ctx.beta * ctx.delta;
  const double d = 10.0 * n32 * bd / gap;
  const double outer = std::exp(d * (1.0 + 2.0 * ctx.c * sqn * std::exp(d)));
  const double r = ctx.c * std::sqrt(sqr(gap / c2) - 1.0);
  const double loss = (5.0 * ctx.c * std::sqrt(ctx.n + 1.0) * ctx.n * ctx.n *
                       ctx.delta * ctx.beta / gap) *
                      outer * (ctx.c * r / gap) *
                      (12.0 * sqn + 1.0 + 10.0 * sqn * ctx.delta);
  return ctx.c * std::sqrt(1.0 - sqr(c2 / gap)) - loss;
}

// Everything the energy-regime report exposes at one energy.  `c2_strict`
// carries the 800 n^2 b^2 d^2 coefficient from the constant's definition and
// `c2_relaxed` the 400 variant that the diffeomorphism conditions restate;
// both are reported and the operational gate uses the strict one.
struct ThresholdReport {
  int dimension = 0;
  double c = 0.0;
  double energy = 0.0;
  double beta = 0.0;
  double delta = 0.0;
  double sup_v = 0.0;
  double c1 = 0.0;
  double c2_strict = 0.0;
  double c2_relaxed = 0.0;
  double c3_sup = 0.0;
  double c4_sup = 0.0;
  double c5_sup = 0.0;
  double c6 = 0.0;
  double c7 = 0.0;
  double c8 = 0.0;
  double c9 = 0.0;
  double c10 = 0.0;
  double max_exit_time = 0.0;  // 5 delta / c living-time bound
  bool meets_energy_bound = false;  // E >= max(c1, c2_strict)
  bool meets_local_diffeo = false;  // E >= c1, E >= c2_relaxed, min(c6,c7) > 0
  bool meets_surjectivity = false;  // local diffeo and c8 > 0
  bool meets_operational = false;   // E > max(c1, c2_strict), c3_sup < 1,
                                    // min(c6, c7, c8) > 0
};

// Precomputes the energy-independent data (field norms on a scan grid, the
// boundary constants c9/c10, the constant c1) so that reports at many
// energies — ladder scans in particular — stay cheap.
template <int N>
class ThresholdEvaluator {
 public:
  ThresholdEvaluator(const FieldModel<N>& model, const ConvexDomain<N>& domain,
                     int per_axis = 0, int per_angle = 0)
      : model_(&model) {
    if (model.mode != Mode::relativistic) {
      throw std::invalid_argument(
          "threshold constants are defined for the relativistic dynamics");
    }
    if (per_axis <= 0) per_axis = (N == 2) ? 64 : 32;
    if (per_angle <= 0) per_angle = (N == 2) ? 256 : 48;

    std::vector<Vec<N>> points = interior_grid(domain, per_axis);
    const std::vector<Vec<N>> boundary = boundary_grid(domain, per_angle);
    points.insert(points.end(), boundary.begin(), boundary.end());
    if (points.size() < 8) {
      throw std::invalid_argument("threshold scan grid is degenerate");
    }

    const FieldNorms norms = field_norms(model, points);
    ctx_.beta = norms.beta;
    ctx_.delta = domain.delta;
    ctx_.c = model.c;
    ctx_.n = N;
    sup_v_ = norms.sup_V_signed;

    double c1_sup = 0.0;
    v_values_.reserve(points.size());
    for (const Vec<N>& x : points) {
      const double v = model.V(x);
      v_values_.push_back(v);
      double b_abs_sum = 0.0;
      const Mat<N> b = model.B(x);
      for (int i = 0; i < N; ++i) {
        for (int j = 0; j < N; ++j) b_abs_sum += std::abs(b(i, j));
      }
      const double cand =
          v + 8.0 * x.norm() * (model.grad_V(x).norm() + b_abs_sum);
      c1_sup = std::max(c1_sup, cand);
    }
    c1_ = 2.0 * model.c * model.c + c1_sup;

    c9_ = 0.0;
    c10_ = std::numeric_limits<double>::infinity();
    for (const Vec<N>& x : boundary) {
      c9_ = std::max(c9_, domain.grad_chi(x).norm());
      Eigen::SelfAdjointEigenSolver<Mat<N>> eig(domain.hess_chi(x));
      c10_ = std::min(c10_, eig.eigenvalues().minCoeff());
    }
  }

  const ThresholdContext& context() const { return ctx_; }
  double sup_v() const { return sup_v_; }

  // Lowest energy at which any report is even defined.
  double rest_threshold() const { return ctx_.c * ctx_.c + sup_v_; }

  double c3_at(double energy, NoDeduce<const Vec<N>&> x) const {
    return c3_pointwise(ctx_, energy - model_->V(x));
  }

  ThresholdReport report(double energy) const {
    if (!(energy > rest_threshold())) {
      throw std::invalid_argument(
          "energy must exceed c^2 + sup V for the regime constants");
    }
    ThresholdReport rep;
    rep.dimension = N;
    rep.c = ctx_.c;
    rep.energy = energy;
    rep.beta = ctx_.beta;
    rep.delta = ctx_.delta;
    rep.sup_v = sup_v_;
    rep.c1 = c1_;
    const double c2sq = ctx_.c * ctx_.c;
    const double nbd2 =
        sqr(ctx_.n * ctx_.beta * ctx_.delta) / (c2sq * c2sq);
    rep.c2_strict = c2sq * std::sqrt(1.0 + 800.0 * nbd2) + sup_v_;
    rep.c2_relaxed = c2sq * std::sqrt(1.0 + 400.0 * nbd2) + sup_v_;

    rep.c3_sup = 0.0;
    rep.c4_sup = 0.0;
    rep.c5_sup = 0.0;
    rep.c6 = std::numeric_limits<double>::infinity();
    rep.c7 = std::numeric_limits<double>::infinity();
    for (const double v : v_values_) {
      const double gap = energy - v;
      rep.c3_sup = std::max(rep.c3_sup, c3_pointwise(ctx_, gap));
      rep.c4_sup = std::max(rep.c4_sup, c4_pointwise(ctx_, gap));
      rep.c5_sup = std::max(rep.c5_sup, c5_pointwise(ctx_, gap));
      rep.c6 = std::min(rep.c6, c6_pointwise(ctx_, gap));
      rep.c7 = std::min(rep.c7, c7_pointwise(ctx_, gap));
    }
    rep.c9 = c9_;
    rep.c10 = c10_;
    const double top_gap = energy - sup_v_;
    rep.c8 = c10_ * (1.0 - sqr(c2sq / top_gap)) -
             4.0 * ctx_.n * c9_ * ctx_.beta / top_gap;
    rep.max_exit_time = 5.0 * ctx_.delta / ctx_.c;

    rep.meets_energy_bound = energy >= std::max(rep.c1, rep.c2_strict);
    rep.meets_local_diffeo = energy >= rep.c1 && energy >= rep.c2_relaxed &&
                             std::min(rep.c6, rep.c7) > 0.0;
    rep.meets_surjectivity = rep.meets_local_diffeo && rep.c8 > 0.0;
    rep.meets_operational = energy > std::max(rep.c1, rep.c2_strict) &&
                            rep.c3_sup < 1.0 &&
                            std::min({rep.c6, rep.c7, rep.c8}) > 0.0;
    return rep;
  }

  // First ladder energy whose report clears the operational gate.  Entries at
  // or below the rest threshold are skipped rather than rejected so callers
  // can pass blind geometric ladders.
  double operational_threshold(const std::vector<double>& ladder) const {
    for (const double e : ladder) {
      if (!(e > rest_threshold())) continue;
      if (report(e).meets_operational) return e;
    }
    throw std::runtime_error(
        "no ladder energy satisfies the operational threshold conditions");
  }

 private:
  const FieldModel<N>* model_;
  ThresholdContext ctx_;
  double sup_v_ = 0.0;
  double c1_ = 0.0;
  double c9_ = 0.0;
  double c10_ = 0.0;
  std::vector<double> v_values_;
};

template <int N>
ThresholdReport compute_thresholds(const FieldModel<N>& model,
                                   const ConvexDomain<N>& domain,
                                   double energy, int per_axis = 0,
                                   int per_angle = 0) {
  return ThresholdEvaluator<N>(model, domain, per_axis, per_angle)
      .report(energy);
}

// Geometric energy grid: `per_octave` points per doubling, starting at
// `start`, spanning `octaves` doublings inclusive of both ends.
inline std::vector<double> energy_ladder(double start, int octaves,
                                         int per_octave) {
  if (!(start > 0.0) || octaves <= 0 || per_octave <= 0) {
    throw std::invalid_argument("energy_ladder needs positive arguments");
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(octaves) * per_octave + 1);
  const int total = octaves * per_octave;
  for (int k = 0; k <= total; ++k) {
    out.push_back(start * std::pow(2.0, static_cast<double>(k) / per_octave));
  }
  return out;
}

}  // namespace fescat
