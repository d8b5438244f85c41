#pragma once

// Verification suites: every identity, inequality, and structural property
// the library claims is checked here numerically and reported as a
// CheckResult.  These are the workhorses behind `fescat verify` and the
// acceptance harness.

#include "fescat/boundary.hpp"
#include "fescat/quadrature.hpp"
#include "fescat/rootfind.hpp"
#include "fescat/scattering.hpp"
#include "fescat/thresholds.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace fescat {

// One executed check.  Convention: max_residual is the worst observed value
// of the check's metric and the check passes iff max_residual <= tolerance.
// Bound-type checks (living time, injectivity, ...) fold their margins into
// the same convention: the metric is (observed - allowed), tolerance 0.
struct CheckResult {
  std::string name;
  double max_residual = std::numeric_limits<double>::infinity();
  double tolerance = 0.0;
  int sample_count = 0;
  bool passed = false;
  std::string details;

  CheckResult& finalize() {
    passed = max_residual <= tolerance;
    return *this;
  }
};

// Shooting preset for checks that differentiate solver output (finite
// differences of the reduced action or of impulse fields).  Central
// differences divide the integrator's smooth error field by the step; at the
// default 1e-10/1e-12 tolerances that floor sits near 1e-6, so derivative
// checks run the solver harder.
template <int N>
ShootOptions<N> tight_shoot_options() {
  ShootOptions<N> o;
  o.rtol = 1e-12;
  o.atol = 1e-14;
  o.residual_tol = 1e-12;
  return o;
}

namespace detail {

template <int N>
std::function<Vec<N>(const Vec<N>&)> potential_or_zero(
    const FieldModel<N>& model) {
  if (model.A) return model.A;
  return [](const Vec<N>&) { return Vec<N>::Zero(); };
}

inline std::string describe_worst(const char* what, double value) {
  std::ostringstream os;
  os << what << " = " << value;
  return os.str();
}

}  // namespace detail

// --------------------------------------------------------------------------
// Conservation along flights.

// Flow from random interior states and track the energy along the dense
// output; the metric is max |E(t) - E(0)| over all sampled times.
template <int N>
CheckResult check_energy_conservation(const FieldModel<N>& model,
                                      const ConvexDomain<N>& domain,
                                      double energy, int count,
                                      std::uint64_t seed, double tol,
                                      const FlowOptions& flow = {}) {
  CheckResult out;
  out.name = "energy-conservation";
  out.tolerance = tol;
  out.sample_count = count;
  Rng rng(seed);
  double worst = 0.0;
  for (int i = 0; i < count; ++i) {
    const Vec<N> x = sample_interior(domain, rng, 0.05);
    const Vec<N> dir = rng.template unit_vector<N>();
    const PhaseState<N> s0{x, impulse_on_sphere(model, energy, x, dir)};
    const double speed = speed_from_energy(model, energy, x);
    const double budget = 80.0 * domain.diameter / speed;
    const FlowResult<N> fr = integrate_flow(model, &domain, s0, budget, flow);
    const double e0 = fescat::energy(model, s0);
    const int probes = 32;
    for (int k = 0; k <= probes; ++k) {
      const double t = fr.sol.t_begin +
                       (fr.sol.t_end - fr.sol.t_begin) * k / probes;
      worst = std::max(worst, std::abs(fescat::energy(model, fr.state_at(t)) - e0));
    }
  }
  out.max_residual = worst;
  return out.finalize();
}

// --------------------------------------------------------------------------
// Speed law over a boundary dataset.

// |k0| and |k| of every converged datum must equal the local speed
// determined by the energy and the potential at the respective endpoint.
template <int N>
CheckResult check_speed_law(const FieldModel<N>& model,
                            const BoundaryDataSet<N>& dataset, double tol) {
  CheckResult out;
  out.name = "speed-law";
  out.tolerance = tol;
  if (dataset.entries.empty()) {
    throw std::invalid_argument("check_speed_law: empty dataset");
  }
  double worst = 0.0;
  int used = 0;
  int failed = 0;
  for (const BoundaryDatum<N>& d : dataset.entries) {
    if ((d.q0 - d.q).squaredNorm() == 0.0) continue;  // untouched diagonal slots
    if (!d.converged) {
      ++failed;
      continue;
    }
    ++used;
    const double v0 = speed_from_energy(model, dataset.energy, d.q0);
    const double v1 = speed_from_energy(model, dataset.energy, d.q);
    worst = std::max(worst, std::abs(d.k0.norm() - v0));
    worst = std::max(worst, std::abs(d.k.norm() - v1));
  }
  out.sample_count = used;
  out.max_residual = failed > 0 ? std::numeric_limits<double>::infinity() : worst;
  if (failed > 0) out.details = detail::describe_worst("unconverged pairs", failed);
  return out.finalize();
}

// --------------------------------------------------------------------------
// Reciprocity: reversing the magnetic field swaps entry and exit data.

// For random boundary pairs: k0 of (V,B) from q0 to q equals -k of (V,-B)
// from q to q0, and symmetrically; the times of flight agree.
template <int N>
CheckResult check_reciprocity(const FieldModel<N>& model,
                              const ConvexDomain<N>& domain, double energy,
                              int count, std::uint64_t seed, double tol,
                              const ShootOptions<N>& opts = {}) {
  CheckResult out;
  out.name = "reciprocity";
  out.tolerance = tol;
  out.sample_count = count;
  const FieldModel<N> reversed = reverse_b(model);
  Rng rng(seed);
  double worst = 0.0;
  for (int i = 0; i < count; ++i) {
    ChartAngles<N> ta{};
    ChartAngles<N> tb{};
    // Resample until the endpoints are well separated.
    Vec<N> q0, q;
    do {
      for (auto& v : ta) v = rng.uniform(0.0, 2.0 * M_PI);
      for (auto& v : tb) v = rng.uniform(0.0, 2.0 * M_PI);
      if constexpr (N == 3) {
        ta[0] = std::acos(rng.uniform(-1.0, 1.0));
        tb[0] = std::acos(rng.uniform(-1.0, 1.0));
      }
      q0 = domain.chart(ta);
      q = domain.chart(tb);
    } while ((q - q0).norm() < 0.2 * domain.bound_radius);

    const BoundaryDatum<N> fwd =
        solve_boundary(model, domain, energy, q0, q, opts);
    const BoundaryDatum<N> rev =
        solve_boundary(reversed, domain, energy, q, q0, opts);
    if (!fwd.converged || !rev.converged) {
      worst = std::numeric_limits<double>::infinity();
      out.details = "solver failure";
      break;
    }
    worst = std::max(worst, (fwd.k0 + rev.k).norm());
    worst = std::max(worst, (fwd.k + rev.k0).norm());
    worst = std::max(worst, std::abs(fwd.s - rev.s));
  }
  out.max_residual = worst;
  return out.finalize();
}

// --------------------------------------------------------------------------
// Scattering <-> boundary dictionary.

// Purely geometric roundtrip: asymptotes -> bridge -> asymptotes.
template <int N>
CheckResult check_conversion_roundtrip(const FieldModel<N>& model,
                                       const ConvexDomain<N>& domain,
                                       double energy, int count,
                                       std::uint64_t seed, double tol,
                                       const ScatterOptions& opts = {}) {
  CheckResult out;
  out.name = "conversion-roundtrip";
  out.tolerance = tol;
  out.sample_count = count;
  Rng rng(seed);
  const auto states =
      sample_scattering_states(model, domain, energy, count, rng);
  double worst = 0.0;
  for (const auto& st : states) {
    const ScatteringDatum<N> sd =
        scatter(model, domain, energy, st.v_minus, st.x_minus, opts);
    if (!sd.completed) {
      worst = std::numeric_limits<double>::infinity();
      out.details = "trapped trajectory";
      break;
    }
    const BoundaryBridge<N> bridge = scattering_to_boundary(
        domain, sd.v_minus, sd.x_minus, sd.v_plus, sd.x_plus);
    const ScatteringDatum<N> back =
        boundary_to_scattering(domain, bridge, energy);
    worst = std::max(worst, (back.v_minus - sd.v_minus).norm());
    worst = std::max(worst, (back.x_minus - sd.x_minus).norm());
    worst = std::max(worst, (back.v_plus - sd.v_plus).norm());
    worst = std::max(worst, (back.x_plus - sd.x_plus).norm());
  }
  out.max_residual = worst;
  return out.finalize();
}

// The boundary bridge read off the integrated trajectory agrees with the one
// built geometrically from the asymptotes alone.
template <int N>
CheckResult check_scatter_vs_boundary(const FieldModel<N>& model,
                                      const ConvexDomain<N>& domain,
                                      double energy, int count,
                                      std::uint64_t seed, double tol,
                                      const ScatterOptions& opts = {}) {
  CheckResult out;
  out.name = "scatter-vs-dictionary";
  out.tolerance = tol;
  out.sample_count = count;
  Rng rng(seed);
  const auto states =
      sample_scattering_states(model, domain, energy, count, rng);
  double worst = 0.0;
  for (const auto& st : states) {
    const ScatteringDatum<N> sd =
        scatter(model, domain, energy, st.v_minus, st.x_minus, opts);
    if (!sd.completed) {
      worst = std::numeric_limits<double>::infinity();
      out.details = "trapped trajectory";
      break;
    }
    const BoundaryBridge<N> bridge = scattering_to_boundary(
        domain, sd.v_minus, sd.x_minus, sd.v_plus, sd.x_plus);
    worst = std::max(worst, (bridge.q0 - sd.q0).norm());
    worst = std::max(worst, (bridge.q - sd.q).norm());
    worst = std::max(worst, std::abs(bridge.s - sd.s));
    worst = std::max(worst, (bridge.k0 - sd.k0).norm());
    worst = std::max(worst, (bridge.k - sd.k).norm());
  }
  out.max_residual = worst;
  return out.finalize();
}

// --------------------------------------------------------------------------
// Endpoint gradients of the reduced action.

// Central differences of S0 in both endpoints against the impulse formulas:
// dS0/dx = k_bar + coupling * A(x), dS0/dzeta = -k_bar0 - coupling * A(zeta).
// Pairs are interior so both displaced endpoints stay in the domain.
template <int N>
CheckResult check_action_gradients(
    const FieldModel<N>& model, const ConvexDomain<N>& domain, double energy,
    int pair_count, std::uint64_t seed, double tol, double step = 0.0,
    const ShootOptions<N>& opts = tight_shoot_options<N>()) {
  CheckResult out;
  out.name = "action-gradients";
  out.tolerance = tol;
  out.sample_count = pair_count;

  // The identity needs a genuine vector potential of B; models that carry
  // none get the canonical one (zero for electric-only models).
  const FieldModel<N> m = with_canonical_potential(model, domain.center);
  const double coupling = m.b_coupling();
  const double h = step > 0.0 ? step : 1e-4 * domain.diameter;

  Rng rng(seed);
  double worst = 0.0;
  for (int i = 0; i < pair_count; ++i) {
    Vec<N> zeta, x;
    do {
      zeta = sample_interior(domain, rng, 0.08);
      x = sample_interior(domain, rng, 0.08);
    } while ((x - zeta).norm() < 0.3 * domain.bound_radius);

    const BoundaryDatum<N> center =
        solve_boundary(m, domain, energy, zeta, x, opts);
    if (!center.converged) {
      worst = std::numeric_limits<double>::infinity();
      out.details = "solver failure";
      break;
    }
    ShootOptions<N> warm = opts;
    warm.warm_dir = center.k0.normalized();
    warm.warm_s = center.s;

    auto action = [&](const Vec<N>& a, const Vec<N>& b) {
      const BoundaryDatum<N> d = solve_boundary(m, domain, energy, a, b, warm);
      if (!d.converged) {
        throw std::runtime_error("check_action_gradients: solve failed");
      }
      return d.s0;
    };

    const Vec<N> ax = m.A(x);
    const Vec<N> az = m.A(zeta);
    for (int c = 0; c < N; ++c) {
      const Vec<N> e = Vec<N>::Unit(c);
      const double dxc =
          (action(zeta, Vec<N>(x + h * e)) - action(zeta, Vec<N>(x - h * e))) /
          (2.0 * h);
      const double dzc =
          (action(Vec<N>(zeta + h * e), x) - action(Vec<N>(zeta - h * e), x)) /
          (2.0 * h);
      worst = std::max(worst, std::abs(dxc - (center.k_bar[c] + coupling * ax[c])));
      worst = std::max(worst,
                       std::abs(dzc - (-center.k_bar0[c] - coupling * az[c])));
    }
  }
  out.max_residual = worst;
  return out.finalize();
}

// --------------------------------------------------------------------------
// Magnetic field from the antisymmetrized derivative of the impulse field.

// B_{i,j}(x) = -(1/coupling) (d k_bar^j / dx_i - d k_bar^i / dx_j) for the
// arrival impulse with a fixed source; the departure variant differentiates
// k_bar0 in its launch point with a fixed target instead.
template <int N>
CheckResult check_curl_formula(
    const FieldModel<N>& model, const ConvexDomain<N>& domain, double energy,
    NoDeduce<const Vec<N>&> zeta, const std::vector<Vec<N>>& points,
    double tol, double step = 0.0, bool departure_variant = false,
    const ShootOptions<N>& opts = tight_shoot_options<N>()) {
  CheckResult out;
  out.name = departure_variant ? "curl-formula-departure" : "curl-formula";
  out.tolerance = tol;
  out.sample_count = static_cast<int>(points.size());
  const double h = step > 0.0 ? step : 1e-4 * domain.diameter;
  const double factor = 1.0 / model.b_coupling();

  double worst = 0.0;
  for (const Vec<N>& x : points) {
    if ((x - Vec<N>(zeta)).norm() < 0.25 * domain.bound_radius) {
      throw std::invalid_argument("check_curl_formula: point too close to source");
    }
    const BoundaryDatum<N> center =
        solve_boundary(model, domain, energy, departure_variant ? x : zeta,
                       departure_variant ? Vec<N>(zeta) : x, opts);
    if (!center.converged) {
      worst = std::numeric_limits<double>::infinity();
      out.details = "solver failure";
      break;
    }
    ShootOptions<N> warm = opts;
    warm.warm_dir = center.k0.normalized();
    warm.warm_s = center.s;

    // impulse field at a displaced sample: arrival impulse k_bar(zeta -> y),
    // or departure impulse k_bar0(y -> zeta) in the swapped variant.
    auto impulse = [&](const Vec<N>& y) {
      const BoundaryDatum<N> d =
          departure_variant
              ? solve_boundary(model, domain, energy, y, Vec<N>(zeta), warm)
              : solve_boundary(model, domain, energy, Vec<N>(zeta), y, warm);
      if (!d.converged) {
        throw std::runtime_error("check_curl_formula: solve failed");
      }
      return departure_variant ? d.k_bar0 : d.k_bar;
    };

    Mat<N> jac = Mat<N>::Zero();  // jac(i, j) = d impulse^j / d x_i
    for (int i = 0; i < N; ++i) {
      const Vec<N> e = Vec<N>::Unit(i);
      const Vec<N> plus = impulse(Vec<N>(x + h * e));
      const Vec<N> minus = impulse(Vec<N>(x - h * e));
      jac.row(i) = ((plus - minus) / (2.0 * h)).transpose();
    }
    const Mat<N> b_true = model.B(x);
    for (int i = 0; i < N; ++i) {
      for (int j = i + 1; j < N; ++j) {
        const double rec = -factor * (jac(i, j) - jac(j, i));
        worst = std::max(worst, std::abs(rec - b_true(i, j)));
      }
    }
  }
  out.max_residual = worst;
  return out.finalize();
}

// --------------------------------------------------------------------------
// Living-time bound.

// Above the first energy threshold every flight through the domain lasts at
// most the report's max_exit_time; metric is the worst ratio.
template <int N>
CheckResult check_living_time(const FieldModel<N>& model,
                              const ConvexDomain<N>& domain,
                              const ThresholdReport& rep, int count,
                              std::uint64_t seed, const FlowOptions& flow = {}) {
  if (!(rep.energy >= rep.c1)) {
    throw std::invalid_argument("check_living_time: energy below C1");
  }
  CheckResult out;
  out.name = "living-time";
  out.tolerance = 1.0;
  out.sample_count = count;
  Rng rng(seed);
  const double budget = 4.0 * rep.max_exit_time + 1.0;
  double worst = 0.0;
  for (int i = 0; i < count; ++i) {
    const Vec<N> x = sample_interior(domain, rng, 0.01);
    const Vec<N> dir = rng.template unit_vector<N>();
    const PhaseState<N> s0{x, impulse_on_sphere(model, rep.energy, x, dir)};
    const auto tp = exit_time_forward(model, domain, s0, budget, flow);
    const auto tm = exit_time_backward(model, domain, s0, budget, flow);
    if (!tp || !tm) {
      worst = std::numeric_limits<double>::infinity();
      out.details = "no exit within budget";
      break;
    }
    worst = std::max(worst, (*tp - *tm) / rep.max_exit_time);
  }
  out.max_residual = worst;
  return out.finalize();
}

// --------------------------------------------------------------------------
// Injectivity bound: trajectory separation vs. free-motion separation.

// For a common start x and two impulses on the energy sphere, the distance
// between the two positions differs from the distance between the free
// straight-line positions by at most C3(x) relatively.  Metric is the worst
// violation (observed - allowed), tolerance 0.
template <int N>
CheckResult check_injectivity_bound(const FieldModel<N>& model,
                                    const ConvexDomain<N>& domain,
                                    const ThresholdEvaluator<N>& thresholds,
                                    double energy, int count,
                                    std::uint64_t seed,
                                    const FlowOptions& flow = {}) {
  const ThresholdReport rep = thresholds.report(energy);
  if (!rep.meets_energy_bound) {
    throw std::invalid_argument(
        "check_injectivity_bound: energy below max(C1, C2)");
  }
  CheckResult out;
  out.name = "injectivity-bound";
  out.tolerance = 0.0;
  out.sample_count = count;
  Rng rng(seed);
  const double budget = 4.0 * rep.max_exit_time + 1.0;
  double worst = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < count; ++i) {
    const Vec<N> x = sample_interior(domain, rng, 0.02);
    const PhaseState<N> s1{
        x, impulse_on_sphere(model, energy, x, rng.template unit_vector<N>())};
    const PhaseState<N> s2{
        x, impulse_on_sphere(model, energy, x, rng.template unit_vector<N>())};
    const FlowResult<N> f1 = integrate_flow(model, &domain, s1, budget, flow);
    const FlowResult<N> f2 = integrate_flow(model, &domain, s2, budget, flow);
    if (f1.status != FlowStatus::exited || f2.status != FlowStatus::exited) {
      worst = std::numeric_limits<double>::infinity();
      out.details = "no exit within budget";
      break;
    }
    const double t1 = rng.uniform(0.0, 0.999999 * f1.t_final);
    const double t2 = rng.uniform(0.0, 0.999999 * f2.t_final);
    const Vec<N> y1 = f1.state_at(t1).x;
    const Vec<N> y2 = f2.state_at(t2).x;
    const Vec<N> v1 = g_map(model, s1.p);
    const Vec<N> v2 = g_map(model, s2.p);
    const double free_sep = (t1 * v1 - t2 * v2).norm();
    const double lhs = std::abs((y1 - y2).norm() - free_sep);
    const double rhs = thresholds.c3_at(energy, x) * free_sep;
    const double slack = 1e-9 * (1.0 + free_sep);  // integrator noise floor
    worst = std::max(worst, lhs - rhs - slack);
  }
  out.max_residual = worst;
  return out.finalize();
}

// --------------------------------------------------------------------------
// Local diffeomorphism: singular-value floor of the flight-map Jacobian.

// Columns of the Jacobian of (t, u) -> position(t; x, r * phi(u)) where phi
// is a graph chart of the direction sphere aligned with the sampled
// direction.  The smallest singular value must stay above
// min(c * C6, t * C7) / sqrt(n).  Metric is the worst (floor - sigma_min),
// tolerance 0.
template <int N>
CheckResult check_diffeo_jacobian(const FieldModel<N>& model,
                                  const ConvexDomain<N>& domain,
                                  const ThresholdReport& rep, int count,
                                  std::uint64_t seed,
                                  const FlowOptions& flow = {}) {
  if (!rep.meets_local_diffeo) {
    throw std::invalid_argument(
        "check_diffeo_jacobian: local-diffeomorphism conditions not met");
  }
  CheckResult out;
  out.name = "diffeo-jacobian";
  out.tolerance = 0.0;
  out.sample_count = count;
  Rng rng(seed);
  const double budget = 4.0 * rep.max_exit_time + 1.0;
  const double hw = 1e-5;
  double worst = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < count; ++i) {
    const Vec<N> x = sample_interior(domain, rng, 0.02);
    const Vec<N> dir = rng.template unit_vector<N>();
    const double r = impulse_radius(model, rep.energy, x);

    // Graph chart of the sphere over the axis where |dir| is largest: the
    // free coordinates w are the other components, the pivot carries the
    // sign and the square root.
    int pivot = 0;
    for (int c = 1; c < N; ++c)
      if (std::abs(dir[c]) > std::abs(dir[pivot])) pivot = c;
    const double sign = dir[pivot] >= 0.0 ? 1.0 : -1.0;
    auto phi = [&](const Vec<N - 1>& w) {
      Vec<N> d;
      double sq = 1.0;
      int k = 0;
      for (int c = 0; c < N; ++c) {
        if (c == pivot) continue;
        d[c] = w[k++];
        sq -= sqr(d[c]);
      }
      d[pivot] = sign * std::sqrt(std::max(0.0, sq));
      return d;
    };
    Vec<N - 1> w0;
    {
      int k = 0;
      for (int c = 0; c < N; ++c)
        if (c != pivot) w0[k++] = dir[c];
    }

    const PhaseState<N> s0{x, Vec<N>(r * phi(w0))};
    const FlowResult<N> f0 = integrate_flow(model, &domain, s0, budget, flow);
    if (f0.status != FlowStatus::exited) {
      worst = std::numeric_limits<double>::infinity();
      out.details = "no exit within budget";
      break;
    }
    const double t0 = rng.uniform(0.15, 0.85) * f0.t_final;

    auto position = [&](const Vec<N - 1>& w) {
      const PhaseState<N> s{x, Vec<N>(r * phi(w))};
      // no domain stop: t0 is strictly inside the center flight
      const FlowResult<N> f =
          integrate_flow(model, static_cast<const ConvexDomain<N>*>(nullptr),
                         s, t0, flow);
      return f.final_state.x;
    };

    Eigen::Matrix<double, N, N> jac;
    jac.col(0) = g_map(model, f0.state_at(t0).p);  // exact t-column
    for (int l = 0; l < N - 1; ++l) {
      Vec<N - 1> wp = w0, wm = w0;
      wp[l] += hw;
      wm[l] -= hw;
      jac.col(l + 1) = (position(wp) - position(wm)) / (2.0 * hw);
    }
    const double sigma_min =
        Eigen::JacobiSVD<Eigen::Matrix<double, N, N>>(jac).singularValues()
            .minCoeff();
    const double floor =
        std::min(model.c * rep.c6, t0 * rep.c7) / std::sqrt(double(N));
    worst = std::max(worst, floor - sigma_min);
  }
  out.max_residual = worst;
  return out.finalize();
}

// --------------------------------------------------------------------------
// Exit transversality.

// At every boundary crossing the outward speed of the defining function is
// positive and its second derivative is at least c^2 C8.  Metric folds both:
// worst (c^2 C8 - mddot), with an infinite penalty if mdot <= 0.
template <int N>
CheckResult check_exit_transversality(const FieldModel<N>& model,
                                      const ConvexDomain<N>& domain,
                                      const ThresholdReport& rep, int count,
                                      std::uint64_t seed,
                                      const FlowOptions& flow = {}) {
  if (!(rep.energy >= rep.c1) || !(rep.c8 > 0.0)) {
    throw std::invalid_argument(
        "check_exit_transversality: requires E >= C1 and C8 > 0");
  }
  CheckResult out;
  out.name = "exit-transversality";
  out.tolerance = 0.0;
  out.sample_count = count;
  Rng rng(seed);
  const double budget = 4.0 * rep.max_exit_time + 1.0;
  const double c2 = sqr(model.c);
  double worst = -std::numeric_limits<double>::infinity();
  double min_mdot = std::numeric_limits<double>::infinity();
  for (int i = 0; i < count; ++i) {
    const Vec<N> x = sample_interior(domain, rng, 0.02);
    const Vec<N> dir = rng.template unit_vector<N>();
    const PhaseState<N> s0{x, impulse_on_sphere(model, rep.energy, x, dir)};
    const FlowResult<N> f = integrate_flow(model, &domain, s0, budget, flow);
    if (f.status != FlowStatus::exited) {
      worst = std::numeric_limits<double>::infinity();
      out.details = "no exit within budget";
      break;
    }
    const PhaseState<N> exit_state = f.final_state;
    const double mdot =
        domain.grad_chi(exit_state.x).dot(g_map(model, exit_state.p));
    min_mdot = std::min(min_mdot, mdot);
    const double mddot = boundary_curvature_rate(model, domain, exit_state);
    // The bound is exactly tight for the zero field on a ball, so allow the
    // integrator noise floor on the comparison.
    const double slack = 1e-9 * (1.0 + std::abs(mddot));
    worst = std::max(worst, c2 * rep.c8 - mddot - slack);
    if (mdot <= 0.0) worst = std::numeric_limits<double>::infinity();
  }
  out.max_residual = worst;
  out.details = detail::describe_worst("min outward mdot", min_mdot);
  return out.finalize();
}

// --------------------------------------------------------------------------
// Boundary-data uniqueness functional (planar case).
//
// Two models over the same domain and energy are compared through a pair of
// integrals: a double-boundary integral assembled from boundary data of both
// models (the "boundary functional") and an interior phase-space integral
// (the "interior functional").  The two agree as oriented integrals, and a
// known inequality bounds the L2 gap of the impulse radii by the boundary
// functional:
//
//   integral_D (r1 - r2)^2 dx  <=  (boundary functional) / (2 pi).
//
// The boundary functional integrates, over ordered boundary pairs
// (zeta, x) = (b(theta), b(eta)),
//
//   - d/dtheta (S0_2 - S0_1) * [(kbar_2 - kbar_1) . b'(eta)] dtheta ^ deta,
//
// with the theta-derivative evaluated exactly through the endpoint-gradient
// identity dS0/dzeta = -kbar0 - coupling A(zeta).  A band around the
// diagonal is excluded: with compactly supported fields the integrand
// vanishes identically there (short chords stay in vacuum), and for other
// fields the excluded mass is reported through the coarse/fine pair.
//
// The interior functional sums, over interior points x and unit directions w,
//   r_mu(x)^2 + r_mu(x) * (w . kbar_other(source(mu, x, w), x)),
// where source(mu, x, w) is the boundary point whose model-mu trajectory
// arrives at x with impulse direction -w; it is found by flowing from
// (x, r_mu w) under the magnetically reversed model until exit.

struct UniquenessOptions {
  int theta_points = 48;       // trapezoid nodes for the first boundary factor
  int gap_nodes = 48;          // Gauss-Legendre nodes across the angular gap
  double chord_cutoff = 0.0;   // excluded chord length; 0 -> 0.05 * diameter
  int radial_nodes = 12;       // interior quadrature, radial direction
  int angular_nodes = 32;      // interior quadrature, angular direction
  int circle_nodes = 32;       // direction circle for the interior functional
  bool coarse_pass = true;     // also integrate at half boundary resolution
  ShootOptions<2> shoot{};
  FlowOptions flow{};
};

struct UniquenessReport {
  double boundary_integral = 0.0;         // fine-resolution value
  double boundary_integral_coarse = 0.0;  // half-resolution value
  double boundary_extrapolated = 0.0;     // Richardson combination
  double interior_integral = 0.0;
  double radius_gap_l2 = 0.0;  // integral of (r1 - r2)^2 over the domain
  double bound = 0.0;          // boundary_extrapolated / (2 pi)
  double margin = 0.0;         // bound - radius_gap_l2
  double rel_mismatch = 0.0;   // |boundary_extrapolated - interior| / scale
  double worst_interior_term = 0.0;  // max |single interior integrand term|
  long long solves = 0;
};

namespace detail {

// Smallest angular gap whose boundary chord reaches the requested length,
// uniformly over the scan of starting angles.
inline double gap_for_chord(const ConvexDomain<2>& domain, double chord) {
  auto min_chord = [&](double u) {
    double m = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 64; ++i) {
      const double th = 2.0 * M_PI * i / 64;
      m = std::min(m, (domain.chart({th + u}) - domain.chart({th})).norm());
    }
    return m;
  };
  return brent_root([&](double u) { return min_chord(u) - chord; }, 1e-9,
                    M_PI / 2, 1e-12, 0.0);
}

inline double boundary_functional(const FieldModel<2>& m1,
                                  const FieldModel<2>& m2,
                                  const ConvexDomain<2>& domain, double energy,
                                  int theta_points, int gap_nodes,
                                  double gap_cut, const ShootOptions<2>& shoot_opts,
                                  long long& solves) {
  const auto a1 = potential_or_zero(m1);
  const auto a2 = potential_or_zero(m2);
  const double coupling = m1.b_coupling();
  const QuadRule gap_rule =
      gauss_legendre(gap_nodes, gap_cut, 2.0 * M_PI - gap_cut);
  const double w_theta = 2.0 * M_PI / theta_points;

  double total = 0.0;
  for (int i = 0; i < theta_points; ++i) {
    const double theta = 2.0 * M_PI * i / theta_points;
    const Vec<2> zeta = domain.chart({theta});
    const Vec<2> t_zeta = domain.chart_tangent({theta}, 0);
    const Vec<2> da = Vec<2>(a1(zeta) - a2(zeta));
    ShootOptions<2> o1 = shoot_opts;
    ShootOptions<2> o2 = shoot_opts;
    for (int j = 0; j < gap_nodes; ++j) {
      const double eta = theta + gap_rule.nodes[j];
      const Vec<2> x = domain.chart({eta});
      const Vec<2> t_x = domain.chart_tangent({eta}, 0);
      const ShootResult<2> r1 = shoot(m1, energy, zeta, x, o1);
      const ShootResult<2> r2 = shoot(m2, energy, zeta, x, o2);
      solves += 2;
      if (!r1.converged || !r2.converged) {
        throw std::runtime_error("uniqueness functional: boundary solve failed");
      }
      o1.warm_dir = r1.dir;
      o1.warm_s = r1.s;
      o2.warm_dir = r2.dir;
      o2.warm_s = r2.s;
      const double dtheta_ds0 =
          ((r1.k_bar0 - r2.k_bar0) + coupling * da).dot(t_zeta);
      const double arrival_gap =
          (r2.flow.final_state.p - r1.flow.final_state.p).dot(t_x);
      total += w_theta * gap_rule.weights[j] * (-dtheta_ds0 * arrival_gap);
    }
  }
  return total;
}

}  // namespace detail

inline UniquenessReport uniqueness_report(const FieldModel<2>& m1,
                                          const FieldModel<2>& m2,
                                          const ConvexDomain<2>& domain,
                                          double energy,
                                          const UniquenessOptions& opts = {}) {
  if (m1.mode != m2.mode || m1.c != m2.c) {
    throw std::invalid_argument("uniqueness_report: kinematic conventions differ");
  }
  UniquenessReport rep;
  const double cutoff =
      opts.chord_cutoff > 0.0 ? opts.chord_cutoff : 0.05 * domain.diameter;
  const double gap_cut = detail::gap_for_chord(domain, cutoff);

  rep.boundary_integral = detail::boundary_functional(
      m1, m2, domain, energy, opts.theta_points, opts.gap_nodes, gap_cut,
      opts.shoot, rep.solves);
  if (opts.coarse_pass) {
    rep.boundary_integral_coarse = detail::boundary_functional(
        m1, m2, domain, energy, std::max(4, opts.theta_points / 2),
        std::max(4, opts.gap_nodes / 2), gap_cut, opts.shoot, rep.solves);
    // Fourth-order Richardson combination of the two trapezoid passes.
    rep.boundary_extrapolated =
        rep.boundary_integral +
        (rep.boundary_integral - rep.boundary_integral_coarse) / 15.0;
  } else {
    rep.boundary_integral_coarse = rep.boundary_integral;
    rep.boundary_extrapolated = rep.boundary_integral;
  }

  // Interior functional plus the L2 radius gap over the same grid.
  const FieldModel<2> rev[2] = {reverse_b(m1), reverse_b(m2)};
  const FieldModel<2>* mod[2] = {&m1, &m2};
  const QuadRule radial = gauss_legendre(opts.radial_nodes, 0.0, 1.0);
  const double w_ang = 2.0 * M_PI / opts.angular_nodes;
  const double w_dir = 2.0 * M_PI / opts.circle_nodes;

  double phi1 = 0.0;
  double lhs = 0.0;
  double worst_term = 0.0;
  for (int a = 0; a < opts.angular_nodes; ++a) {
    const double alpha = 2.0 * M_PI * a / opts.angular_nodes;
    const Vec<2> e = domain.chart({alpha}) - domain.center;
    const Vec<2> tau = domain.chart_tangent({alpha}, 0);
    const double cross = e.x() * tau.y() - e.y() * tau.x();
    for (int k = 0; k < opts.radial_nodes; ++k) {
      const double rho = radial.nodes[k];
      const Vec<2> x = domain.center + rho * e;
      const double wx = w_ang * radial.weights[k] * rho * cross;
      const double r[2] = {impulse_radius(m1, energy, x),
                           impulse_radius(m2, energy, x)};
      lhs += wx * sqr(r[0] - r[1]);
      for (int mu = 0; mu < 2; ++mu) {
        ShootOptions<2> warm = opts.shoot;
        for (int d = 0; d < opts.circle_nodes; ++d) {
          const double phi = 2.0 * M_PI * d / opts.circle_nodes;
          const Vec<2> w(std::cos(phi), std::sin(phi));
          const PhaseState<2> seed{x, Vec<2>(r[mu] * w)};
          const double speed = g_map(*mod[mu], seed.p).norm();
          const FlowResult<2> fr = integrate_flow(
              rev[mu], &domain, seed, 60.0 * domain.diameter / speed,
              opts.flow);
          if (fr.status != FlowStatus::exited) {
            throw std::runtime_error(
                "uniqueness functional: reverse flow did not exit");
          }
          const Vec<2> zeta = fr.final_state.x;
          const ShootResult<2> rs =
              shoot(*mod[1 - mu], energy, zeta, x, warm);
          ++rep.solves;
          if (!rs.converged) {
            throw std::runtime_error(
                "uniqueness functional: interior solve failed");
          }
          warm.warm_dir = rs.dir;
          warm.warm_s = rs.s;
          const double term =
              sqr(r[mu]) + r[mu] * w.dot(rs.flow.final_state.p);
          worst_term = std::max(worst_term, std::abs(term));
          phi1 += wx * w_dir * term;
        }
      }
    }
  }
  rep.interior_integral = phi1;
  rep.radius_gap_l2 = lhs;
  // The Richardson value is the best boundary estimate available (equal to
  // the fine pass when no coarse pass ran), so the bound and the mismatch
  // are reported against it.
  rep.bound = rep.boundary_extrapolated / (2.0 * M_PI);
  rep.margin = rep.bound - rep.radius_gap_l2;
  rep.worst_interior_term = worst_term;
  const double scale =
      std::max({std::abs(rep.boundary_extrapolated),
                std::abs(rep.interior_integral), 1e-12});
  rep.rel_mismatch =
      std::abs(rep.boundary_extrapolated - rep.interior_integral) / scale;
  return rep;
}

// CheckResult wrapper: the two functionals agree relatively and the
// inequality holds with nonnegative margin.
inline CheckResult check_uniqueness_identity(const FieldModel<2>& m1,
                                             const FieldModel<2>& m2,
                                             const ConvexDomain<2>& domain,
                                             double energy, double rel_tol,
                                             const UniquenessOptions& opts = {}) {
  CheckResult out;
  out.name = "uniqueness-identity";
  out.tolerance = rel_tol;
  const UniquenessReport rep = uniqueness_report(m1, m2, domain, energy, opts);
  out.sample_count = static_cast<int>(rep.solves);
  out.max_residual = rep.rel_mismatch;
  std::ostringstream os;
  os << "boundary = " << rep.boundary_integral
     << ", interior = " << rep.interior_integral
     << ", l2 gap = " << rep.radius_gap_l2 << ", margin = " << rep.margin;
  out.details = os.str();
  out.finalize();
  if (rep.margin < 0.0) out.passed = false;
  return out;
}

// --------------------------------------------------------------------------
// Default suite: the standard battery over one model.

template <int N>
std::vector<CheckResult> run_default_suite(const FieldModel<N>& model,
                                           const ConvexDomain<N>& domain,
                                           double energy,
                                           std::uint64_t seed = 20240801) {
  std::vector<CheckResult> results;
  FlowOptions tight_flow;
  tight_flow.rtol = 1e-12;
  tight_flow.atol = 1e-14;
  // Drift and solver residuals scale with the energy / impulse magnitudes,
  // so the generic battery uses scale-aware tolerances.
  const double e_scale = std::max(1.0, std::abs(energy));
  results.push_back(check_energy_conservation(model, domain, energy, 60, seed,
                                              1e-8 * e_scale, tight_flow));
  ShootOptions<N> firm;
  firm.rtol = 1e-11;
  firm.atol = 1e-13;
  firm.residual_tol = 1e-12;
  {
    const auto sweep = boundary_sweep(model, domain, energy, 12, firm);
    results.push_back(check_speed_law(model, sweep, 1e-8 * e_scale));
  }
  results.push_back(check_reciprocity(model, domain, energy, 50, seed + 1,
                                      1e-8 * e_scale, firm));
  if (model.has_support) {
    results.push_back(check_conversion_roundtrip(model, domain, energy, 50,
                                                 seed + 2, 1e-8));
    results.push_back(check_scatter_vs_boundary(model, domain, energy, 50,
                                                seed + 3, 1e-7));
  }
  {
    // Both the truncation error and the solver noise of the action
    // derivative grow with the impulse magnitude.
    const double r_mid = impulse_radius(model, energy, domain.center);
    results.push_back(check_action_gradients(model, domain, energy, 10,
                                             seed + 4,
                                             1e-5 * std::max(1.0, r_mid)));
  }
  {
    Rng rng(seed + 5);
    std::vector<Vec<N>> points;
    const Vec<N> zeta = domain.chart(ChartAngles<N>{});
    while (static_cast<int>(points.size()) < 8) {
      const Vec<N> x = sample_interior(domain, rng, 0.1);
      if ((x - zeta).norm() >= 0.4 * domain.bound_radius) points.push_back(x);
    }
    results.push_back(
        check_curl_formula(model, domain, energy, zeta, points, 1e-3));
  }
  if (model.mode == Mode::relativistic) {
    try {
      const ThresholdEvaluator<N> eval(model, domain);
      const ThresholdReport rep = eval.report(energy);
      if (rep.energy >= rep.c1) {
        results.push_back(
            check_living_time(model, domain, rep, 200, seed + 6));
      }
      if (rep.meets_energy_bound) {
        results.push_back(check_injectivity_bound(model, domain, eval, energy,
                                                  200, seed + 7));
      }
      if (rep.meets_local_diffeo) {
        results.push_back(
            check_diffeo_jacobian(model, domain, rep, 60, seed + 8));
      }
      if (rep.energy >= rep.c1 && rep.c8 > 0.0) {
        results.push_back(
            check_exit_transversality(model, domain, rep, 200, seed + 9));
      }
    } catch (const std::exception&) {
      // Threshold machinery unavailable (e.g. energy below the rest gap):
      // the bound checks are simply not applicable.
    }
  }
  return results;
}

}  // namespace fescat
