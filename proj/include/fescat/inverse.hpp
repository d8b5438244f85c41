#pragma once

// Field recovery.  Three layers, in decreasing order of directness:
//
//  * recover_v_boundary inverts the speed law pointwise on exit data — no
//    model, no solver, just the data.
//  * recover_fields_interior evaluates the display formulas (impulse radius
//    for V, antisymmetrized impulse derivatives for B) on simulated interior
//    impulse fields.  Boundary measurements alone do not provide these
//    fields; this path exists to realize the formulas, not the data model.
//  * reconstruct_least_squares fits a small parametric family to boundary
//    data by derivative-free minimization of a gauge-free misfit.

#include "fescat/identities.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace fescat {

// --------------------------------------------------------------------------
// Potential on the boundary from exit speeds.

// One recovered boundary value.  Sweeps hit each boundary point many times
// (once per partner), so the spread across contributions is a free
// consistency check on the data.
template <int N>
struct BoundaryVSample {
  Vec<N> q = Vec<N>::Zero();
  double v_hat = 0.0;
  int contributions = 0;
  double spread = 0.0;  // max - min across contributions
};

// Inverts the speed law at both endpoints of every converged datum:
// relativistically V = E - c^2 (1 - |k|^2/c^2)^{-1/2}, otherwise
// V = E - |k|^2/2.  Entries are grouped by endpoint (coordinates quantized
// at 1e-9) and averaged.
template <int N>
std::vector<BoundaryVSample<N>> recover_v_boundary(
    const BoundaryDataSet<N>& data, Mode mode = Mode::relativistic,
    double c = 1.0) {
  struct Accum {
    Vec<N> q;
    double sum = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    int n = 0;
  };
  std::map<std::array<long long, N>, Accum> groups;

  auto invert = [&](double speed) {
    if (mode == Mode::relativistic) {
      const double u = 1.0 - sqr(speed / c);
      if (!(u > 0.0)) {
        throw std::invalid_argument(
            "recover_v_boundary: exit speed at or above c (corrupt sample)");
      }
      return data.energy - sqr(c) / std::sqrt(u);
    }
    return data.energy - 0.5 * sqr(speed);
  };
  auto add = [&](const Vec<N>& q, double value) {
    std::array<long long, N> key;
    for (int i = 0; i < N; ++i) key[i] = std::llround(q[i] * 1e9);
    Accum& a = groups[key];
    if (a.n == 0) a.q = q;
    a.sum += value;
    a.lo = std::min(a.lo, value);
    a.hi = std::max(a.hi, value);
    ++a.n;
  };

  for (const BoundaryDatum<N>& d : data.entries) {
    if ((d.q0 - d.q).squaredNorm() == 0.0) continue;  // untouched diagonal
    if (!d.converged) continue;
    add(d.q0, invert(d.k0.norm()));
    add(d.q, invert(d.k.norm()));
  }

  std::vector<BoundaryVSample<N>> out;
  out.reserve(groups.size());
  for (const auto& [key, a] : groups) {
    BoundaryVSample<N> s;
    s.q = a.q;
    s.v_hat = a.sum / a.n;
    s.contributions = a.n;
    s.spread = a.hi - a.lo;
    out.push_back(s);
  }
  return out;
}

// --------------------------------------------------------------------------
// Interior recovery on a point grid.

template <int N>
struct InteriorRecovery {
  std::vector<Vec<N>> points;
  std::vector<double> v_hat;       // NaN where no source was usable
  std::vector<Mat<N>> b_hat;
  std::vector<int> sources_used;   // per point
  int skipped = 0;                 // points with no usable source
};

// V from the impulse radius |k_bar| of the arrival impulse, B from central
// finite differences of the impulse field, aggregated over the given
// boundary sources.  Sources closer than a quarter bound-radius to a point
// are skipped for that point (the impulse field degenerates towards its
// source).
//
// V uses the mean over sources: the impulse radius depends only on the local
// potential, never on which trajectory delivered it, so every source agrees
// up to solver noise.  B uses a componentwise median: below the
// no-conjugate-point threshold the impulse field of a single source can fold,
// and a difference stencil straddling a fold yields an O(1e-2) outlier from
// perfectly converged solves; the median discards it as long as most sources
// see the point from a fold-free side.
template <int N>
InteriorRecovery<N> recover_fields_interior(
    const FieldModel<N>& model, const ConvexDomain<N>& domain, double energy,
    const std::vector<Vec<N>>& sources, const std::vector<Vec<N>>& points,
    double step = 0.0, const ShootOptions<N>& opts = tight_shoot_options<N>()) {
  if (sources.empty() || points.empty()) {
    throw std::invalid_argument("recover_fields_interior: empty grid");
  }
  const double h = step > 0.0 ? step : 1e-4 * domain.diameter;
  const double factor = 1.0 / model.b_coupling();
  const double c2 = sqr(model.c);

  const std::size_t np = points.size();
  std::vector<double> v_sum(np, 0.0);
  std::vector<std::vector<Mat<N>>> b_samples(np);
  std::vector<int> used(np, 0);

  for (const Vec<N>& zeta : sources) {
    ShootOptions<N> warm = opts;
    for (std::size_t pi = 0; pi < np; ++pi) {
      const Vec<N>& x = points[pi];
      if ((x - zeta).norm() < 0.25 * domain.bound_radius) continue;

      const BoundaryDatum<N> center =
          solve_boundary(model, domain, energy, zeta, x, warm);
      if (!center.converged) {
        warm.warm_dir.reset();
        warm.warm_s.reset();
        continue;
      }
      warm.warm_dir = center.k0.normalized();
      warm.warm_s = center.s;

      ShootOptions<N> local = warm;
      bool ok = true;
      Mat<N> jac = Mat<N>::Zero();  // jac(i, j) = d k_bar^j / d x_i
      for (int i = 0; i < N && ok; ++i) {
        const Vec<N> e = Vec<N>::Unit(i);
        const BoundaryDatum<N> plus =
            solve_boundary(model, domain, energy, zeta, Vec<N>(x + h * e), local);
        const BoundaryDatum<N> minus =
            solve_boundary(model, domain, energy, zeta, Vec<N>(x - h * e), local);
        if (!plus.converged || !minus.converged) {
          ok = false;
          break;
        }
        jac.row(i) = ((plus.k_bar - minus.k_bar) / (2.0 * h)).transpose();
      }
      if (!ok) continue;

      const double r = center.k_bar.norm();
      v_sum[pi] += model.mode == Mode::relativistic
                       ? energy - c2 * std::sqrt(1.0 + sqr(r) / c2)
                       : energy - 0.5 * sqr(r);
      Mat<N> b = Mat<N>::Zero();
      for (int i = 0; i < N; ++i) {
        for (int j = 0; j < N; ++j) {
          if (i != j) b(i, j) = -factor * (jac(i, j) - jac(j, i));
        }
      }
      b_samples[pi].push_back(b);
      ++used[pi];
    }
  }

  InteriorRecovery<N> out;
  out.points = points;
  out.v_hat.resize(np);
  out.b_hat.resize(np);
  out.sources_used = used;
  for (std::size_t pi = 0; pi < np; ++pi) {
    if (used[pi] == 0) {
      out.v_hat[pi] = std::numeric_limits<double>::quiet_NaN();
      out.b_hat[pi] = Mat<N>::Constant(std::numeric_limits<double>::quiet_NaN());
      ++out.skipped;
      continue;
    }
    out.v_hat[pi] = v_sum[pi] / used[pi];
    Mat<N> b = Mat<N>::Zero();
    std::vector<double> vals(b_samples[pi].size());
    for (int i = 0; i < N; ++i) {
      for (int j = i + 1; j < N; ++j) {
        for (std::size_t s = 0; s < vals.size(); ++s) {
          vals[s] = b_samples[pi][s](i, j);
        }
        std::sort(vals.begin(), vals.end());
        const std::size_t h2 = vals.size() / 2;
        const double med = vals.size() % 2 == 1
                               ? vals[h2]
                               : 0.5 * (vals[h2 - 1] + vals[h2]);
        b(i, j) = med;
        b(j, i) = -med;
      }
    }
    out.b_hat[pi] = b;
  }
  return out;
}

// --------------------------------------------------------------------------
// L2 gap of the impulse radii of two models over the domain.

// Polar product quadrature about the domain center through the boundary
// chart; the determinant factor handles non-spherical domains.
template <int N>
double radius_gap_l2(const FieldModel<N>& m1, const FieldModel<N>& m2,
                     const ConvexDomain<N>& domain, double energy,
                     int radial_nodes = 16, int angular_nodes = 48) {
  const QuadRule radial = gauss_legendre(radial_nodes, 0.0, 1.0);

  double total = 0.0;
  auto accumulate = [&](const ChartAngles<N>& angles, double w_ang) {
    const Vec<N> e = domain.chart(angles) - domain.center;
    Eigen::Matrix<double, N, N> frame;
    frame.col(0) = e;
    for (int l = 0; l + 1 < N; ++l) {
      frame.col(l + 1) = domain.chart_tangent(angles, l);
    }
    const double jac = std::abs(frame.determinant());
    for (int k = 0; k < radial_nodes; ++k) {
      const double rho = radial.nodes[k];
      const Vec<N> x = domain.center + rho * e;
      const double w =
          w_ang * radial.weights[k] * std::pow(rho, N - 1) * jac;
      total += w * sqr(impulse_radius(m1, energy, x) -
                       impulse_radius(m2, energy, x));
    }
  };

  if constexpr (N == 2) {
    const double w = 2.0 * M_PI / angular_nodes;
    for (int a = 0; a < angular_nodes; ++a) {
      accumulate({2.0 * M_PI * a / angular_nodes}, w);
    }
  } else {
    static_assert(N == 3, "radius_gap_l2 covers the planar and spatial cases");
    const QuadRule polar = gauss_legendre(angular_nodes, 0.0, M_PI);
    const double w_phi = 2.0 * M_PI / angular_nodes;
    for (int i = 0; i < angular_nodes; ++i) {
      for (int j = 0; j < angular_nodes; ++j) {
        accumulate({polar.nodes[i], 2.0 * M_PI * j / angular_nodes},
                   polar.weights[i] * w_phi);
      }
    }
  }
  return total;
}

// --------------------------------------------------------------------------
// Derivative-free minimization (Nelder-Mead).

struct NelderMeadOptions {
  int max_iterations = 500;   // per run
  int restarts = 1;           // extra runs re-seeded at the incumbent best
  double initial_step = 0.1;  // simplex edge relative to parameter scale
  double f_tol = 1e-14;       // simplex value spread target
  double x_tol = 1e-10;       // simplex size target
};

struct OptimizerTrace {
  std::vector<double> best;  // best objective after each iteration
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

// Classic simplex method (reflection 1, expansion 2, contraction 1/2,
// shrink 1/2).  Restart runs rebuild the simplex around the incumbent with a
// shrinking edge, which is what pushes parameter accuracy into the 1e-5
// range the reconstruction tests want.
inline std::pair<Eigen::VectorXd, OptimizerTrace> nelder_mead(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x0, const NelderMeadOptions& opts = {}) {
  const int n = static_cast<int>(x0.size());
  if (n == 0) throw std::invalid_argument("nelder_mead: empty start point");

  OptimizerTrace trace;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++trace.evaluations;
    return f(x);
  };

  Eigen::VectorXd best_x = x0;
  double best_f = eval(best_x);

  for (int run = 0; run <= opts.restarts; ++run) {
    const double edge = opts.initial_step * std::pow(0.2, run);
    std::vector<Eigen::VectorXd> xs(n + 1, best_x);
    std::vector<double> fs(n + 1);
    fs[0] = best_f;
    for (int i = 0; i < n; ++i) {
      const double scale = std::max(1.0, std::abs(best_x[i]));
      xs[i + 1][i] += edge * scale;
      fs[i + 1] = eval(xs[i + 1]);
    }

    for (int it = 0; it < opts.max_iterations; ++it) {
      std::vector<int> order(n + 1);
      for (int i = 0; i <= n; ++i) order[i] = i;
      std::sort(order.begin(), order.end(),
                [&](int a, int b) { return fs[a] < fs[b]; });
      const int lo = order[0], hi = order[n], second_hi = order[n - 1];

      if (fs[lo] < best_f) {
        best_f = fs[lo];
        best_x = xs[lo];
      }
      trace.best.push_back(best_f);
      ++trace.iterations;

      double size = 0.0;
      for (int i = 0; i <= n; ++i) size = std::max(size, (xs[i] - xs[lo]).norm());
      if (fs[hi] - fs[lo] <= opts.f_tol * (1.0 + std::abs(fs[lo])) &&
          size <= opts.x_tol * (1.0 + xs[lo].norm())) {
        trace.converged = true;
        break;
      }

      Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
      for (int i = 0; i <= n; ++i) {
        if (i != hi) centroid += xs[i];
      }
      centroid /= n;

      const Eigen::VectorXd reflected = centroid + (centroid - xs[hi]);
      const double f_ref = eval(reflected);
      if (f_ref < fs[lo]) {
        const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - xs[hi]);
        const double f_exp = eval(expanded);
        if (f_exp < f_ref) {
          xs[hi] = expanded;
          fs[hi] = f_exp;
        } else {
          xs[hi] = reflected;
          fs[hi] = f_ref;
        }
      } else if (f_ref < fs[second_hi]) {
        xs[hi] = reflected;
        fs[hi] = f_ref;
      } else {
        const Eigen::VectorXd contracted =
            centroid + 0.5 * ((f_ref < fs[hi] ? reflected : xs[hi]) - centroid);
        const double f_con = eval(contracted);
        if (f_con < std::min(f_ref, fs[hi])) {
          xs[hi] = contracted;
          fs[hi] = f_con;
        } else {
          for (int i = 0; i <= n; ++i) {
            if (i == lo) continue;
            xs[i] = xs[lo] + 0.5 * (xs[i] - xs[lo]);
            fs[i] = eval(xs[i]);
          }
        }
      }
    }
    // The budget may run out right after an improving step; sweep once more.
    for (int i = 0; i <= n; ++i) {
      if (fs[i] < best_f) {
        best_f = fs[i];
        best_x = xs[i];
      }
    }
  }
  if (trace.best.empty() || trace.best.back() > best_f) {
    trace.best.push_back(best_f);
  }
  return {best_x, trace};
}

// --------------------------------------------------------------------------
// Boundary-data misfit and parametric reconstruction.

template <int N>
struct ParametricFamily {
  int parameter_count = 0;
  std::function<FieldModel<N>(const Eigen::VectorXd&)> build;
  std::vector<std::string> names;
};

// Six parameters: electric bump (amplitude, center) plus planar magnetic
// bump (amplitude, center), radii fixed.  The workhorse family of the
// reconstruction tests.
inline ParametricFamily<2> bump_pair_family(double v_rho = 0.55,
                                            double b_rho = 0.5,
                                            Mode mode = Mode::relativistic,
                                            double c = 1.0) {
  ParametricFamily<2> fam;
  fam.parameter_count = 6;
  fam.names = {"v_amp", "v_cx", "v_cy", "b_amp", "b_cx", "b_cy"};
  fam.build = [v_rho, b_rho, mode, c](const Eigen::VectorXd& t) {
    return combine_fields(
        make_bump_v<2>(t[0], Vec<2>(t[1], t[2]), v_rho, mode, c),
        make_bump_b2(t[3], Vec<2>(t[4], t[5]), b_rho, mode, c));
  };
  return fam;
}

template <int N>
struct MisfitOptions {
  double w_k = 1.0;    // exit velocity weight
  double w_k0 = 1.0;   // entry velocity weight
  double w_s = 0.0;    // time of flight weight (off by default)
  double failure_penalty = 1e6;  // charged per unconverged trial solve
  ShootOptions<N> shoot{};
};

// Mean squared boundary-data mismatch of a trial model against observations.
// Only gauge-free quantities enter (velocities and the flight time), so the
// value is independent of any vector-potential choice.
template <int N>
double boundary_misfit(const FieldModel<N>& trial, const ConvexDomain<N>& domain,
                       const BoundaryDataSet<N>& observed,
                       const MisfitOptions<N>& mo = {}) {
  double total = 0.0;
  int used = 0;
  ShootOptions<N> warm = mo.shoot;
  const Vec<N>* last_q0 = nullptr;
  for (const BoundaryDatum<N>& d : observed.entries) {
    if ((d.q0 - d.q).squaredNorm() == 0.0) continue;
    if (!d.converged) continue;
    if (last_q0 == nullptr || (*last_q0 - d.q0).squaredNorm() != 0.0) {
      // New source: the previous chord is no longer a useful warm start.
      warm.warm_dir.reset();
      warm.warm_s.reset();
    }
    const BoundaryDatum<N> t =
        solve_boundary(trial, domain, observed.energy, d.q0, d.q, warm);
    ++used;
    if (!t.converged) {
      total += mo.failure_penalty;
      warm.warm_dir.reset();
      warm.warm_s.reset();
      last_q0 = nullptr;
      continue;
    }
    warm.warm_dir = t.k0.normalized();
    warm.warm_s = t.s;
    last_q0 = &d.q0;
    total += mo.w_k * (t.k - d.k).squaredNorm() +
             mo.w_k0 * (t.k0 - d.k0).squaredNorm() + mo.w_s * sqr(t.s - d.s);
  }
  if (used == 0) {
    throw std::invalid_argument("boundary_misfit: no usable observations");
  }
  return total / used;
}

struct ReconstructionResult {
  Eigen::VectorXd theta;
  double misfit = std::numeric_limits<double>::infinity();
  std::vector<double> trace;  // best misfit per iteration, non-increasing
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

// Fits the family to the observed dataset starting from theta0.  A build or
// wholesale solve failure of a trial point is charged the failure penalty
// rather than aborting the search.
template <int N>
ReconstructionResult reconstruct_least_squares(
    const ParametricFamily<N>& family, const ConvexDomain<N>& domain,
    const BoundaryDataSet<N>& observed, const Eigen::VectorXd& theta0,
    const NelderMeadOptions& nm = {}, const MisfitOptions<N>& mo = {}) {
  if (family.parameter_count > 20) {
    throw std::invalid_argument(
        "reconstruct_least_squares: family too large (at most 20 parameters)");
  }
  if (theta0.size() != family.parameter_count) {
    throw std::invalid_argument(
        "reconstruct_least_squares: start point size mismatch");
  }

  auto objective = [&](const Eigen::VectorXd& t) {
    try {
      return boundary_misfit(family.build(t), domain, observed, mo);
    } catch (const std::exception&) {
      return mo.failure_penalty * (1.0 + t.squaredNorm());
    }
  };
  const auto [theta, trace] = nelder_mead(objective, theta0, nm);

  ReconstructionResult out;
  out.theta = theta;
  out.misfit = trace.best.empty() ? objective(theta) : trace.best.back();
  out.trace = trace.best;
  out.iterations = trace.iterations;
  out.evaluations = trace.evaluations;
  out.converged = trace.converged;
  return out;
}

// --------------------------------------------------------------------------
// Boundary-data separation of two models.

struct SeparationReport {
  double sup_k = 0.0;   // sup over the pair grid of |k_1 - k_2|
  double l2_k = 0.0;    // root mean square of the same
  double sup_k0 = 0.0;
  double l2_k0 = 0.0;
  double radius_gap = 0.0;  // integral of (r_1 - r_2)^2 over the domain
  int pairs = 0;
};

// Sweeps both models over one boundary grid and reports how far apart their
// data are; distinct fields must separate (and do, already at modest grids).
template <int N>
SeparationReport uniqueness_probe(const FieldModel<N>& m1,
                                  const FieldModel<N>& m2,
                                  const ConvexDomain<N>& domain, double energy,
                                  int per_angle = 16,
                                  const ShootOptions<N>& opts = {}) {
  if (m1.mode != m2.mode || m1.c != m2.c) {
    throw std::invalid_argument("uniqueness_probe: kinematic conventions differ");
  }
  const BoundaryDataSet<N> d1 =
      boundary_sweep(m1, domain, energy, per_angle, opts);
  const BoundaryDataSet<N> d2 =
      boundary_sweep(m2, domain, energy, per_angle, opts);

  SeparationReport rep;
  double sum_k = 0.0, sum_k0 = 0.0;
  for (std::size_t i = 0; i < d1.entries.size(); ++i) {
    const BoundaryDatum<N>& a = d1.entries[i];
    const BoundaryDatum<N>& b = d2.entries[i];
    if ((a.q0 - a.q).squaredNorm() == 0.0) continue;
    if (!a.converged || !b.converged) continue;
    const double dk = (a.k - b.k).norm();
    const double dk0 = (a.k0 - b.k0).norm();
    rep.sup_k = std::max(rep.sup_k, dk);
    rep.sup_k0 = std::max(rep.sup_k0, dk0);
    sum_k += sqr(dk);
    sum_k0 += sqr(dk0);
    ++rep.pairs;
  }
  if (rep.pairs > 0) {
    rep.l2_k = std::sqrt(sum_k / rep.pairs);
    rep.l2_k0 = std::sqrt(sum_k0 / rep.pairs);
  }
  rep.radius_gap = radius_gap_l2(m1, m2, domain, energy);
  return rep;
}

}  // namespace fescat
