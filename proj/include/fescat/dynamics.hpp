#pragma once

// Fixed-energy dynamics.  The equation of motion is integrated in impulse
// form as the first-order system
//
//   x' = g(p),   p' = F(x, g(p)),   F(x, v) = -grad V(x) + (1/c) B(x) v,
//
// with g(p) = p / sqrt(1 + |p|^2/c^2) relativistically and g = id in the
// nonrelativistic convention (where p is the velocity and the 1/c in F is
// dropped).  Conserved energy:
//
//   relativistic     E = c^2 sqrt(1 + |p|^2/c^2) + V(x)
//   nonrelativistic  E = |p|^2/2 + V(x)

#include "fescat/core.hpp"
#include "fescat/domain.hpp"
#include "fescat/fields.hpp"
#include "fescat/ode.hpp"

#include <optional>

namespace fescat {

template <int N>
struct PhaseState {
  Vec<N> x = Vec<N>::Zero();
  Vec<N> p = Vec<N>::Zero();
};

/// Impulse-to-velocity map g and its inverse.
template <int N>
Vec<N> g_map(const FieldModel<N>& model, const NoDeduce<Vec<N>>& p) {
  if (model.mode == Mode::nonrelativistic) return p;
  return Vec<N>(p / std::sqrt(1.0 + p.squaredNorm() / sqr(model.c)));
}

template <int N>
Vec<N> g_inverse(const FieldModel<N>& model, const NoDeduce<Vec<N>>& v) {
  if (model.mode == Mode::nonrelativistic) return v;
  const double s2 = 1.0 - v.squaredNorm() / sqr(model.c);
  if (s2 <= 0.0)
    throw std::invalid_argument("g_inverse: speed must be below c");
  return Vec<N>(v / std::sqrt(s2));
}

template <int N>
double energy(const FieldModel<N>& model, const NoDeduce<Vec<N>>& x,
              const NoDeduce<Vec<N>>& p) {
  if (model.mode == Mode::nonrelativistic) return 0.5 * p.squaredNorm() + model.V(x);
  const double c2 = sqr(model.c);
  return c2 * std::sqrt(1.0 + p.squaredNorm() / c2) + model.V(x);
}

template <int N>
double energy(const FieldModel<N>& model, const PhaseState<N>& s) {
  return energy(model, s.x, s.p);
}

/// Impulse magnitude at energy E:
///   relativistic     r(x) = c sqrt(((E - V(x))/c^2)^2 - 1)
///   nonrelativistic  r(x) = sqrt(2 (E - V(x)))
/// E must exceed the local rest threshold (c^2 + V resp. V).
template <int N>
double impulse_radius(const FieldModel<N>& model, double E, const NoDeduce<Vec<N>>& x) {
  const double gap = E - model.V(x);
  if (model.mode == Mode::nonrelativistic) {
    if (gap < 0.0)
      throw std::invalid_argument("impulse_radius: E below potential");
    return std::sqrt(2.0 * gap);
  }
  const double c2 = sqr(model.c);
  if (gap < c2)
    throw std::invalid_argument("impulse_radius: E below rest threshold c^2 + V");
  return model.c * std::sqrt(sqr(gap / c2) - 1.0);
}

/// Speed at energy E (relativistic: c sqrt(1 - ((E - V)/c^2)^{-2})).
template <int N>
double speed_from_energy(const FieldModel<N>& model, double E,
                         const NoDeduce<Vec<N>>& x) {
  const double gap = E - model.V(x);
  if (model.mode == Mode::nonrelativistic) {
    if (gap < 0.0)
      throw std::invalid_argument("speed_from_energy: E below potential");
    return std::sqrt(2.0 * gap);
  }
  const double c2 = sqr(model.c);
  if (gap < c2)
    throw std::invalid_argument("speed_from_energy: E below rest threshold c^2 + V");
  return model.c * std::sqrt(1.0 - sqr(c2 / gap));
}

/// Impulse of magnitude r(x) in the given unit direction.
template <int N>
Vec<N> impulse_on_sphere(const FieldModel<N>& model, double E,
                         const NoDeduce<Vec<N>>& x,
                         const NoDeduce<Vec<N>>& direction) {
  return Vec<N>(impulse_radius(model, E, x) * direction.normalized());
}

namespace detail {

template <int N>
Vec<2 * N> pack(const Vec<N>& x, const Vec<N>& p) {
  Vec<2 * N> y;
  y.template head<N>() = x;
  y.template tail<N>() = p;
  return y;
}

template <int N>
PhaseState<N> unpack(const Vec<2 * N>& y) {
  PhaseState<N> s;
  s.x = y.template head<N>();
  s.p = y.template tail<N>();
  return s;
}

template <int N>
struct FlowRhs {
  const FieldModel<N>* model;
  Vec<2 * N> operator()(double, const Vec<2 * N>& y) const {
    const Vec<N> x = y.template head<N>();
    const Vec<N> p = y.template tail<N>();
    const Vec<N> v = g_map(*model, p);
    Vec<2 * N> dy;
    dy.template head<N>() = v;
    dy.template tail<N>() = -model->grad_V(x) + model->b_coupling() * (model->B(x) * v);
    return dy;
  }
};

}  // namespace detail

struct FlowOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  double chi_tol = 1e-12;   // boundary event refinement target
  long max_steps = 2000000;
};

enum class FlowStatus {
  ok,                // integrated to the requested time
  exited,            // stopped at the domain boundary
  immediate_exit,    // started on the boundary moving outward
};

/// Result of a flow integration; keeps the dense solution for later
/// interpolation (trajectory export, action quadrature, event replay).
template <int N>
struct FlowResult {
  OdeSolution<2 * N> sol;
  FlowStatus status = FlowStatus::ok;
  double t_final = 0.0;          // exit time when status != ok
  PhaseState<N> final_state;
  double energy_drift = 0.0;     // max |E(t) - E(0)| over accepted steps

  PhaseState<N> state_at(double t) const { return detail::unpack<N>(sol.eval(t)); }
};

/// Integrate the flow from `s0` for time `t_span` (sign selects direction).
/// With a domain, stop at the first boundary crossing (chi going from
/// negative to nonnegative along the motion), refined to |chi| <= chi_tol.
/// A start on the boundary moving inward is admitted; one moving outward
/// returns immediately with status immediate_exit and t_final = 0.
template <int N>
FlowResult<N> integrate_flow(const FieldModel<N>& model,
                             NoDeduce<const ConvexDomain<N>*> domain,
                             const PhaseState<N>& s0, double t_span,
                             const FlowOptions& opt = {}) {
  FlowResult<N> out;
  detail::FlowRhs<N> rhs{&model};
  const Vec<2 * N> y0 = detail::pack(s0.x, s0.p);

  if (domain != nullptr) {
    const double chi0 = domain->chi(s0.x);
    if (chi0 > 1e-10)
      throw std::invalid_argument("integrate_flow: start lies outside the domain");
    if (std::abs(chi0) <= 1e-10) {
      // On the boundary: direction of travel decides.
      const Vec<N> v = g_map(model, s0.p) * (t_span >= 0.0 ? 1.0 : -1.0);
      if (domain->grad_chi(s0.x).dot(v) >= 0.0) {
        out.status = FlowStatus::immediate_exit;
        out.t_final = 0.0;
        out.final_state = s0;
        out.sol.t_begin = out.sol.t_end = 0.0;
        out.sol.y_begin = out.sol.y_end = y0;
        return out;
      }
    }
  }

  OdeOptions oopt;
  oopt.rtol = opt.rtol;
  oopt.atol = opt.atol;
  oopt.max_steps = opt.max_steps;

  if (domain != nullptr) {
    auto chi = domain->chi;
    std::function<double(double, const Vec<2 * N>&)> event =
        [chi](double, const Vec<2 * N>& y) {
          return chi(Vec<N>(y.template head<N>()));
        };
    out.sol = integrate_ode<2 * N>(rhs, 0.0, y0, t_span, oopt, &event, opt.chi_tol);
  } else {
    out.sol = integrate_ode<2 * N>(rhs, 0.0, y0, t_span, oopt);
  }

  out.status = out.sol.event_hit ? FlowStatus::exited : FlowStatus::ok;
  out.t_final = out.sol.t_end;
  out.final_state = detail::unpack<N>(out.sol.y_end);

  // Energy drift over the accepted mesh (endpoints of every step).
  const double E0 = energy(model, s0);
  double drift = 0.0;
  for (const auto& step : out.sol.steps) {
    const PhaseState<N> s = detail::unpack<N>(step.rcont[0]);
    drift = std::max(drift, std::abs(energy(model, s) - E0));
  }
  drift = std::max(drift, std::abs(energy(model, out.final_state) - E0));
  out.energy_drift = drift;
  return out;
}

/// Forward living time t_plus (time to reach the boundary, >= 0) within the
/// given budget; nullopt if the budget elapsed without an exit.
template <int N>
std::optional<double> exit_time_forward(const FieldModel<N>& model,
                                        const ConvexDomain<N>& domain,
                                        const PhaseState<N>& s0, double budget,
                                        const FlowOptions& opt = {}) {
  const FlowResult<N> r = integrate_flow(model, &domain, s0, budget, opt);
  if (r.status == FlowStatus::ok) return std::nullopt;
  return r.t_final;
}

/// Backward living time t_minus (<= 0).
template <int N>
std::optional<double> exit_time_backward(const FieldModel<N>& model,
                                         const ConvexDomain<N>& domain,
                                         const PhaseState<N>& s0, double budget,
                                         const FlowOptions& opt = {}) {
  const FlowResult<N> r = integrate_flow(model, &domain, s0, -std::abs(budget), opt);
  if (r.status == FlowStatus::ok) return std::nullopt;
  return r.t_final;
}

/// Second time derivative of m(t) = chi(x(t)) expressed through the fields:
///   m'' = Hess chi(v, v) + (1/lambda) grad chi . F - (grad chi . p)(p . F)/(c^2 lambda^3)
/// with v = g(p), lambda = sqrt(1 + |p|^2/c^2) (relativistic), and the plain
/// m'' = Hess chi(v, v) + grad chi . F nonrelativistically.
template <int N>
double boundary_curvature_rate(const FieldModel<N>& model, const ConvexDomain<N>& domain,
                               const PhaseState<N>& s) {
  const Vec<N> v = g_map(model, s.p);
  const Vec<N> F = eval_force(model, s.x, v);
  const Vec<N> gchi = domain.grad_chi(s.x);
  const Mat<N> hchi = domain.hess_chi(s.x);
  double out = v.dot(hchi * v);
  if (model.mode == Mode::nonrelativistic) {
    out += gchi.dot(F);
  } else {
    const double c2 = sqr(model.c);
    const double lam = std::sqrt(1.0 + s.p.squaredNorm() / c2);
    out += gchi.dot(F) / lam - gchi.dot(s.p) * s.p.dot(F) / (c2 * lam * lam * lam);
  }
  return out;
}

}  // namespace fescat
