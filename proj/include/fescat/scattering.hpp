#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "fescat/domain.hpp"
#include "fescat/dynamics.hpp"
#include "fescat/fields.hpp"

namespace fescat {

// Incoming asymptote in the canonical perpendicular parametrization:
// x(t) = x_minus + t v_minus with v_minus . x_minus = 0 and |v_minus| equal
// to the asymptotic speed at the given energy.
template <int N>
struct ScatteringState {
  Vec<N> v_minus = Vec<N>::Zero();
  Vec<N> x_minus = Vec<N>::Zero();
};

// Full scattering record: both asymptotes plus the boundary-bridge quantities
// produced by the interacting flow (entry/exit points, travel time inside the
// domain, entry/exit velocities).
template <int N>
struct ScatteringDatum {
  Vec<N> v_minus = Vec<N>::Zero();
  Vec<N> x_minus = Vec<N>::Zero();
  Vec<N> v_plus = Vec<N>::Zero();   // outgoing velocity (the map "a")
  Vec<N> x_plus = Vec<N>::Zero();   // outgoing asymptote offset (the map "b")
  double energy = 0.0;
  double tau_minus = 0.0;  // clock time the incoming line crosses the boundary
  double tau_plus = 0.0;   // clock time the outgoing line crosses it again
  double deflection = 0.0;  // angle between v_minus and v_plus
  bool interacted = false;  // incoming line actually meets the domain
  bool completed = true;    // flow reached the exit within the time budget

  // Boundary bridge (defined when interacted):
  Vec<N> q0 = Vec<N>::Zero();
  Vec<N> q = Vec<N>::Zero();
  double s = 0.0;
  Vec<N> k0 = Vec<N>::Zero();
  Vec<N> k = Vec<N>::Zero();
  double energy_drift = 0.0;
};

// Speed of a free particle at this energy (the potential vanishes along the
// asymptotes; models used for scattering carry compact support).
template <int N>
double asymptotic_speed(const FieldModel<N>& model, double energy) {
  if (model.mode == Mode::nonrelativistic) {
    if (!(energy > 0.0)) {
      throw std::invalid_argument("asymptotic_speed: need E > 0");
    }
    return std::sqrt(2.0 * energy);
  }
  const double c2 = model.c * model.c;
  if (!(energy > c2)) {
    throw std::invalid_argument("asymptotic_speed: need E > c^2");
  }
  return model.c * std::sqrt(1.0 - sqr(c2 / energy));
}

// Boundary crossing times of the straight line x + t v.  Empty when the line
// misses (or merely grazes) the domain.
struct LineTimes {
  bool hits = false;
  double tau_minus = 0.0;
  double tau_plus = 0.0;
};

template <int N>
LineTimes line_crossing_times(const ConvexDomain<N>& domain,
                                 NoDeduce<const Vec<N>&> x,
                                 NoDeduce<const Vec<N>&> v) {
  LineTimes out;
  const double vn = v.norm();
  if (vn < 1e-14) throw std::invalid_argument("line_crossing_times: zero velocity");
  const auto hits = intersect_line(domain, x, Vec<N>(v / vn));
  if (hits.count == 2) {
    out.hits = true;
    out.tau_minus = hits.t[0] / vn;
    out.tau_plus = hits.t[1] / vn;
  }
  return out;
}

namespace detail {

// Angle between two nonzero vectors through 2 asin(|u - v|/2) on the unit
// sphere: exact across the whole range and precise for tiny angles, where
// acos of a dot product loses half the significant digits.
template <int N>
double angle_between(const Vec<N>& a, const Vec<N>& b) {
  const Vec<N> ua = a.normalized();
  const Vec<N> ub = b.normalized();
  const double half_chord = 0.5 * (ua - ub).norm();
  return 2.0 * std::asin(std::min(1.0, half_chord));
}

}  // namespace detail

struct ScatterOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  double chi_tol = 1e-12;
  double time_budget_factor = 50.0;  // in units of diameter / speed
};

// Direct scattering: follow the incoming asymptote to the boundary, flow
// through the domain, and read off the outgoing asymptote.
template <int N>
ScatteringDatum<N> scatter(const FieldModel<N>& model,
                           const ConvexDomain<N>& domain, double energy,
                           NoDeduce<const Vec<N>&> v_minus,
                           NoDeduce<const Vec<N>&> x_minus,
                           const ScatterOptions& opts = {}) {
  ScatteringDatum<N> out;
  out.v_minus = v_minus;
  out.x_minus = x_minus;
  out.energy = energy;

  const double speed = asymptotic_speed(model, energy);
  if (std::abs(v_minus.norm() - speed) > 1e-8 * std::max(1.0, speed)) {
    throw std::invalid_argument(
        "scatter: |v_minus| does not match the asymptotic speed at this "
        "energy");
  }

  const LineTimes times = line_crossing_times(domain, x_minus, v_minus);
  if (!times.hits) {
    out.v_plus = v_minus;
    out.x_plus = x_minus;
    out.interacted = false;
    return out;
  }
  out.interacted = true;
  out.tau_minus = times.tau_minus;
  out.q0 = x_minus + times.tau_minus * v_minus;
  out.k0 = v_minus;

  FlowOptions fopts;
  fopts.rtol = opts.rtol;
  fopts.atol = opts.atol;
  fopts.chi_tol = opts.chi_tol;
  const double budget =
      opts.time_budget_factor * domain.diameter / std::max(speed, 1e-12);
  const PhaseState<N> entry{out.q0, g_inverse(model, v_minus)};
  const FlowResult<N> flow = integrate_flow(model, &domain, entry, budget, fopts);
  if (flow.status != FlowStatus::exited &&
      flow.status != FlowStatus::immediate_exit) {
    out.completed = false;  // trapped within the budget
    return out;
  }

  out.s = flow.t_final;
  out.q = flow.final_state.x;
  out.k = g_map(model, flow.final_state.p);
  out.energy_drift = flow.energy_drift;

  out.v_plus = out.k;
  out.x_plus = out.q - (out.tau_minus + out.s) * out.k;
  const LineTimes exit_times =
      line_crossing_times(domain, out.x_plus, out.v_plus);
  out.tau_plus = exit_times.hits ? exit_times.tau_plus
                                 : out.tau_minus + out.s;
  out.deflection = detail::angle_between(Vec<N>(v_minus), out.v_plus);
  return out;
}

// Minimal boundary-value record carried across the dictionary (no action).
template <int N>
struct BoundaryBridge {
  Vec<N> q0 = Vec<N>::Zero();
  Vec<N> q = Vec<N>::Zero();
  double s = 0.0;
  Vec<N> k0 = Vec<N>::Zero();
  Vec<N> k = Vec<N>::Zero();
};

// Dictionary, scattering -> boundary: entry point from the incoming line,
// exit point from the outgoing one, travel time from the two crossing times.
// Purely geometric; no differential equation is solved.
template <int N>
BoundaryBridge<N> scattering_to_boundary(const ConvexDomain<N>& domain,
                                         NoDeduce<const Vec<N>&> v_minus,
                                         NoDeduce<const Vec<N>&> x_minus,
                                         NoDeduce<const Vec<N>&> v_plus,
                                         NoDeduce<const Vec<N>&> x_plus) {
  const LineTimes in = line_crossing_times(domain, x_minus, v_minus);
  const LineTimes outl = line_crossing_times(domain, x_plus, v_plus);
  if (!in.hits || !outl.hits) {
    throw std::invalid_argument(
        "scattering_to_boundary: asymptote misses the domain");
  }
  BoundaryBridge<N> bridge;
  bridge.q0 = x_minus + in.tau_minus * v_minus;
  bridge.q = x_plus + outl.tau_plus * v_plus;
  bridge.s = outl.tau_plus - in.tau_minus;
  bridge.k0 = v_minus;
  bridge.k = v_plus;
  return bridge;
}

// Dictionary, boundary -> scattering: the incoming asymptote through q0 with
// velocity k0 in perpendicular parametrization, and the outgoing asymptote
// offset from the exit data.
template <int N>
ScatteringDatum<N> boundary_to_scattering(const ConvexDomain<N>& domain,
                                          const BoundaryBridge<N>& bridge,
                                          double energy) {
  ScatteringDatum<N> out;
  out.energy = energy;
  out.v_minus = bridge.k0;
  const double vsq = bridge.k0.squaredNorm();
  if (vsq < 1e-28) throw std::invalid_argument("boundary_to_scattering: zero k0");
  out.tau_minus = bridge.q0.dot(bridge.k0) / vsq;
  out.x_minus = bridge.q0 - out.tau_minus * bridge.k0;
  out.v_plus = bridge.k;
  out.x_plus = bridge.q - (out.tau_minus + bridge.s) * bridge.k;
  const LineTimes exit_times =
      line_crossing_times(domain, out.x_plus, out.v_plus);
  out.tau_plus = exit_times.hits ? exit_times.tau_plus
                                 : out.tau_minus + bridge.s;
  out.interacted = true;
  out.q0 = bridge.q0;
  out.q = bridge.q;
  out.s = bridge.s;
  out.k0 = bridge.k0;
  out.k = bridge.k;
  out.deflection = detail::angle_between(bridge.k0, bridge.k);
  return out;
}

// Draw incoming states: a random direction, speed pinned by the energy, and a
// perpendicular impact offset with norm below margin * (domain bound radius),
// so every state's line meets the domain.
template <int N>
std::vector<ScatteringState<N>> sample_scattering_states(
    const FieldModel<N>& model, const ConvexDomain<N>& domain, double energy,
    int count, Rng& rng, double margin = 0.85) {
  if (count <= 0) throw std::invalid_argument("sample_scattering_states: count");
  const double speed = asymptotic_speed(model, energy);
  std::vector<ScatteringState<N>> states;
  states.reserve(count);
  while (static_cast<int>(states.size()) < count) {
    const Vec<N> dir = rng.template unit_vector<N>();
    const Vec<N> y = rng.template in_ball<N>(domain.center,
                                             domain.bound_radius * margin);
    const Vec<N> offset = y - y.dot(dir) * dir;
    ScatteringState<N> st;
    st.v_minus = speed * dir;
    st.x_minus = offset;
    if (!line_crossing_times(domain, st.x_minus, st.v_minus).hits) continue;
    states.push_back(st);
  }
  return states;
}

}  // namespace fescat
