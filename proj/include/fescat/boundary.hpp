#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "fescat/domain.hpp"
#include "fescat/dynamics.hpp"
#include "fescat/fields.hpp"
#include "fescat/quadrature.hpp"

namespace fescat {

// Attach the canonical line-gauge vector potential (anchored at x0) when the
// model doesn't already carry one.  The action and its gradient identities are
// gauge-coherent, so any potential with the right curl works as long as the
// same one is used throughout a dataset.
template <int N>
FieldModel<N> with_canonical_potential(FieldModel<N> model,
                                       NoDeduce<const Vec<N>&> x0) {
  if (!model.A) model.A = potential_from_B(model, x0);
  return model;
}

template <int N>
struct ShootOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  double residual_tol = 1e-11;  // absolute |x(s) - q| target
  int max_newton = 40;
  int max_restarts = 12;
  double fd_step = 1e-6;          // direction-chart finite-difference step
  double max_time_factor = 60.0;  // cap on s, in units of the chord time
  std::optional<Vec<N>> warm_dir;
  std::optional<double> warm_s;
};

template <int N>
struct ShootResult {
  bool converged = false;
  double s = 0.0;      // time of flight
  Vec<N> dir;          // unit direction of the initial impulse
  Vec<N> k_bar0;       // initial impulse, |k_bar0| = r_{V,E}(q0)
  FlowResult<N> flow;  // trajectory over [0, s] for the accepted solve
  double residual = std::numeric_limits<double>::infinity();
  double energy_drift = 0.0;
  int newton_iters = 0;
  int restarts = 0;
};

namespace detail {

// Orthonormal basis of the plane orthogonal to the unit vector d.
template <int N>
std::array<Vec<N>, N - 1> transverse_frame(const Vec<N>& d) {
  std::array<Vec<N>, N - 1> frame;
  if constexpr (N == 2) {
    frame[0] = Vec<2>(-d.y(), d.x());
  } else {
    int least = 0;
    for (int i = 1; i < N; ++i) {
      if (std::abs(d[i]) < std::abs(d[least])) least = i;
    }
    Vec<N> e1 = Vec<N>::Unit(least) - d[least] * d;
    e1.normalize();
    frame[0] = e1;
    if constexpr (N == 3) {
      frame[1] = d.cross(e1);
    }
  }
  return frame;
}

}  // namespace detail

// Solve the fixed-energy two-point problem: find an impulse direction and a
// time of flight so the trajectory launched at q0 with |impulse| = r_{V,E}(q0)
// lands on q.  Damped Newton over (direction chart, time) with a straight
// chord as the initial guess and a deterministic multi-start fallback.  The
// trajectory is integrated without boundary stopping; whether it stayed inside
// a domain is the caller's postcondition to check.
template <int N>
ShootResult<N> shoot(const FieldModel<N>& model, double energy,
                     NoDeduce<const Vec<N>&> q0, NoDeduce<const Vec<N>&> q,
                     const ShootOptions<N>& opts = {}) {
  const Vec<N> chord = q - q0;
  const double chord_len = chord.norm();
  if (chord_len < 1e-14) {
    throw std::invalid_argument("shoot: coincident endpoints");
  }
  const double speed0 = speed_from_energy(model, energy, q0);
  const double speed1 = speed_from_energy(model, energy, q);
  const double t_chord = chord_len / (0.5 * (speed0 + speed1));
  const double s_min = 1e-3 * t_chord;
  const double s_max = opts.max_time_factor * t_chord;

  FlowOptions flow_opts;
  flow_opts.rtol = opts.rtol;
  flow_opts.atol = opts.atol;

  const auto integrate_to = [&](const Vec<N>& dir, double s) {
    const PhaseState<N> start{q0, impulse_on_sphere(model, energy, q0, dir)};
    return integrate_flow(model, static_cast<const ConvexDomain<N>*>(nullptr),
                          start, s, flow_opts);
  };

  // Deterministic restart schedule: rotations of the chord direction by
  // growing angles, paired with time-of-flight rescalings.
  const double angles[] = {0.0, 0.2,  -0.2, 0.45, -0.45, 0.8, -0.8,
                           1.3, -1.3, 2.1,  -2.1, 3.0,   -3.0};
  const double scales[] = {1.0, 1.2, 0.85, 1.45, 0.7, 1.0, 1.3,
                           0.6, 1.0, 1.7,  0.5,  1.0, 1.0};
  Rng restart_rng(9001);

  ShootResult<N> best;
  const Vec<N> chord_dir = chord / chord_len;

  const int total_attempts = std::min<int>(opts.max_restarts + 1, 13);
  for (int attempt = 0; attempt < total_attempts; ++attempt) {
    Vec<N> dir;
    double s;
    if (attempt == 0 && opts.warm_dir && opts.warm_s) {
      dir = opts.warm_dir->normalized();
      s = std::clamp(*opts.warm_s, s_min, s_max);
    } else {
      const int sched = (attempt == 0 || !(opts.warm_dir && opts.warm_s))
                            ? attempt
                            : attempt - 1;
      if constexpr (N == 2) {
        const double a = angles[sched];
        dir = Vec<2>(std::cos(a) * chord_dir.x() - std::sin(a) * chord_dir.y(),
                     std::sin(a) * chord_dir.x() + std::cos(a) * chord_dir.y());
      } else {
        dir = chord_dir;
        if (sched > 0) {
          const auto frame = detail::transverse_frame<N>(chord_dir);
          Vec<N> tilt = Vec<N>::Zero();
          for (const Vec<N>& e : frame) {
            tilt += restart_rng.normal() * e;
          }
          if (tilt.norm() > 1e-12) {
            dir = (chord_dir + std::abs(angles[sched]) * tilt.normalized())
                      .normalized();
          }
        }
      }
      s = std::clamp(scales[sched] * t_chord, s_min, s_max);
    }

    FlowResult<N> flow = integrate_to(dir, s);
    Vec<N> f = flow.final_state.x - q;
    double fnorm = f.norm();
    int iters = 0;
    bool ok = false;

    while (iters < opts.max_newton) {
      if (fnorm <= opts.residual_tol) {
        ok = true;
        break;
      }
      ++iters;

      // Jacobian of the landing point w.r.t. (transverse chart, time).  The
      // time column is the exact final velocity; chart columns are forward
      // differences (Newton's fixed point doesn't depend on Jacobian error).
      const auto frame = detail::transverse_frame<N>(dir);
      Mat<N> jac;
      for (int j = 0; j < N - 1; ++j) {
        const Vec<N> dir_j = (dir + opts.fd_step * frame[j]).normalized();
        const FlowResult<N> pert = integrate_to(dir_j, s);
        jac.col(j) = (pert.final_state.x - flow.final_state.x) / opts.fd_step;
      }
      jac.col(N - 1) = g_map(model, flow.final_state.p);

      const Vec<N> delta = jac.fullPivLu().solve(-f);
      if (!delta.allFinite()) break;

      double alpha = 1.0;
      bool improved = false;
      Vec<N> dir_new;
      double s_new = s;
      FlowResult<N> flow_new;
      for (int bt = 0; bt < 8; ++bt) {
        Vec<N> tangent = Vec<N>::Zero();
        for (int j = 0; j < N - 1; ++j) tangent += delta[j] * frame[j];
        dir_new = (dir + alpha * tangent).normalized();
        s_new = std::clamp(s + alpha * delta[N - 1], s_min, s_max);
        flow_new = integrate_to(dir_new, s_new);
        const double fnew = (flow_new.final_state.x - q).norm();
        if (fnew < fnorm * (1.0 - 1e-4 * alpha) || fnew <= opts.residual_tol) {
          dir = dir_new;
          s = s_new;
          flow = std::move(flow_new);
          f = flow.final_state.x - q;
          fnorm = f.norm();
          improved = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!improved) break;
    }

    if (fnorm < best.residual) {
      best.converged = ok;
      best.s = s;
      best.dir = dir;
      best.k_bar0 = impulse_on_sphere(model, energy, q0, dir);
      best.flow = std::move(flow);
      best.residual = fnorm;
      best.energy_drift = best.flow.energy_drift;
      best.newton_iters = iters;
      best.restarts = attempt;
    }
    if (best.converged) break;
  }
  return best;
}

// Reduced action along a stored trajectory: the integral of P . xdot with
// P = p + A(x)/c (relativistic) or p + A(x) (nonrelativistic).  Integrated
// per accepted step with a 5-point Gauss rule on the dense interpolant, which
// matches the interpolant's own accuracy.
template <int N>
double reduced_action(const FieldModel<N>& model, const OdeSolution<2 * N>& sol) {
  if (!model.A) {
    throw std::invalid_argument(
        "reduced_action: model carries no vector potential (attach the "
        "canonical gauge first)");
  }
  static const QuadRule gauss = gauss_legendre(5);
  const double coupling = model.b_coupling();
  const double lo = std::min(sol.t_begin, sol.t_end);
  const double hi = std::max(sol.t_begin, sol.t_end);
  double total = 0.0;
  for (const OdeStep<2 * N>& step : sol.steps) {
    const double a = std::max(lo, std::min(step.t0, step.t0 + step.h));
    const double b = std::min(hi, std::max(step.t0, step.t0 + step.h));
    if (!(b > a)) continue;
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    double acc = 0.0;
    for (std::size_t i = 0; i < gauss.nodes.size(); ++i) {
      const auto y = step.eval(mid + half * gauss.nodes[i]);
      Vec<N> x, p;
      for (int d = 0; d < N; ++d) {
        x[d] = y[d];
        p[d] = y[N + d];
      }
      const Vec<N> velocity = g_map(model, p);
      const Vec<N> big_p = p + coupling * model.A(x);
      acc += gauss.weights[i] * big_p.dot(velocity);
    }
    total += half * acc;
  }
  return (sol.t_end >= sol.t_begin) ? total : -total;
}

// One solved boundary-value record: endpoints, time of flight, entry/exit
// velocities and impulses, and the reduced action.
template <int N>
struct BoundaryDatum {
  Vec<N> q0 = Vec<N>::Zero();
  Vec<N> q = Vec<N>::Zero();
  double energy = 0.0;
  double s = 0.0;
  Vec<N> k0 = Vec<N>::Zero();      // velocity leaving q0
  Vec<N> k = Vec<N>::Zero();       // velocity arriving at q
  Vec<N> k_bar0 = Vec<N>::Zero();  // impulse leaving q0
  Vec<N> k_bar = Vec<N>::Zero();   // impulse arriving at q
  double s0 = 0.0;                 // reduced action
  double residual = std::numeric_limits<double>::infinity();
  double energy_drift = 0.0;
  bool converged = false;
  bool stayed_inside = false;
};

namespace detail {

template <int N>
bool trajectory_stayed_inside(const ConvexDomain<N>& domain,
                              const FlowResult<N>& flow, double tol) {
  const int samples = 96;
  for (int i = 0; i <= samples; ++i) {
    const double t = flow.sol.t_begin +
                     (flow.sol.t_end - flow.sol.t_begin) * i / samples;
    if (domain.chi(flow.state_at(t).x) > tol) return false;
  }
  return true;
}

}  // namespace detail

// Solve the two-point problem from a boundary point q0 to a target q (on the
// boundary or in the interior) and package the full record, including the
// reduced action when the model carries a vector potential.
template <int N>
BoundaryDatum<N> solve_boundary(const FieldModel<N>& model,
                                const ConvexDomain<N>& domain, double energy,
                                NoDeduce<const Vec<N>&> q0,
                                NoDeduce<const Vec<N>&> q,
                                const ShootOptions<N>& opts = {}) {
  const ShootResult<N> res = shoot(model, energy, q0, q, opts);
  BoundaryDatum<N> out;
  out.q0 = q0;
  out.q = q;
  out.energy = energy;
  out.s = res.s;
  out.k_bar0 = res.k_bar0;
  out.k0 = g_map(model, res.k_bar0);
  out.k_bar = res.flow.final_state.p;
  out.k = g_map(model, res.flow.final_state.p);
  out.residual = res.residual;
  out.energy_drift = res.energy_drift;
  out.converged = res.converged;
  if (res.converged) {
    out.stayed_inside =
        detail::trajectory_stayed_inside(domain, res.flow, 1e-9);
    if (model.A) out.s0 = reduced_action(model, res.flow.sol);
  }
  return out;
}

// Boundary dataset over a grid of m boundary points: entries for every
// ordered pair (i, j), i != j, solved with warm starts along each row.
template <int N>
struct BoundaryDataSet {
  std::vector<Vec<N>> points;
  std::vector<BoundaryDatum<N>> entries;  // row-major m x m, diagonal invalid
  double energy = 0.0;

  int size() const { return static_cast<int>(points.size()); }
  const BoundaryDatum<N>& at(int i, int j) const {
    return entries[static_cast<std::size_t>(i) * points.size() + j];
  }
  BoundaryDatum<N>& at(int i, int j) {
    return entries[static_cast<std::size_t>(i) * points.size() + j];
  }
};

// Arrival impulse sampled at interior points for a fixed boundary source:
// each sample solves the two-point problem zeta -> x and records the impulse
// of arrival k_bar and its (negated) unit direction nu.
template <int N>
struct InteriorKSample {
  Vec<N> x = Vec<N>::Zero();
  Vec<N> k_bar = Vec<N>::Zero();
  Vec<N> nu = Vec<N>::Zero();  // -k_bar / |k_bar|
  double residual = std::numeric_limits<double>::infinity();
  bool converged = false;
};

template <int N>
std::vector<InteriorKSample<N>> interior_k_field(
    const FieldModel<N>& model, const ConvexDomain<N>& domain, double energy,
    NoDeduce<const Vec<N>&> zeta, const std::vector<Vec<N>>& points,
    const ShootOptions<N>& base_opts = {}) {
  std::vector<InteriorKSample<N>> out;
  out.reserve(points.size());
  std::optional<Vec<N>> warm_dir;
  std::optional<double> warm_s;
  for (const Vec<N>& x : points) {
    ShootOptions<N> opts = base_opts;
    opts.warm_dir = warm_dir;
    opts.warm_s = warm_s;
    ShootResult<N> res = shoot(model, energy, zeta, x, opts);
    if (!res.converged && base_opts.warm_dir == std::nullopt) {
      res = shoot(model, energy, zeta, x, base_opts);  // retry cold
    }
    InteriorKSample<N> sample;
    sample.x = x;
    sample.residual = res.residual;
    sample.converged = res.converged;
    if (res.converged) {
      sample.k_bar = res.flow.final_state.p;
      sample.nu = Vec<N>(-sample.k_bar.normalized());
      warm_dir = res.dir;
      warm_s = res.s;
    } else {
      warm_dir.reset();
      warm_s.reset();
    }
    out.push_back(std::move(sample));
  }
  return out;
}

template <int N>
BoundaryDataSet<N> boundary_sweep(const FieldModel<N>& model,
                                  const ConvexDomain<N>& domain, double energy,
                                  int per_angle,
                                  const ShootOptions<N>& base_opts = {}) {
  BoundaryDataSet<N> set;
  set.points = boundary_grid(domain, per_angle);
  set.energy = energy;
  const int m = set.size();
  set.entries.assign(static_cast<std::size_t>(m) * m, BoundaryDatum<N>{});

  for (int i = 0; i < m; ++i) {
    std::optional<Vec<N>> warm_dir;
    std::optional<double> warm_s;
    for (int off = 1; off < m; ++off) {
      const int j = (i + off) % m;
      ShootOptions<N> opts = base_opts;
      opts.warm_dir = warm_dir;
      opts.warm_s = warm_s;
      BoundaryDatum<N> datum = solve_boundary(model, domain, energy,
                                              set.points[i], set.points[j],
                                              opts);
      if (datum.converged) {
        warm_dir = datum.k0.normalized();
        warm_s = datum.s;
      } else {
        warm_dir.reset();
        warm_s.reset();
      }
      set.at(i, j) = std::move(datum);
    }
  }
  return set;
}

}  // namespace fescat
