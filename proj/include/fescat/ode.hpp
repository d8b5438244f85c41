#pragma once

// Adaptive Dormand-Prince 5(4) integration with a stored continuous
// extension (4th-order dense output) and optional event localization.
//
// The dense coefficients of every accepted step are kept, so a solution can
// be evaluated at arbitrary times afterwards -- the trajectory-dependent
// quadratures and the boundary-event refinement both rely on this.
// Integration runs forward or backward depending on the ordering of the
// requested endpoints.

#include "fescat/core.hpp"
#include "fescat/rootfind.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace fescat {

struct OdeOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  double h_init = 0.0;   // 0: choose automatically
  double h_max = 0.0;    // 0: |t1 - t0|
  long max_steps = 2000000;
};

/// One accepted step with its dense-output coefficients.
template <int M>
struct OdeStep {
  double t0 = 0.0;
  double h = 0.0;
  std::array<Vec<M>, 5> rcont;

  /// Continuous extension at t = t0 + theta h, theta in [0, 1].
  Vec<M> eval(double t) const {
    const double th = (t - t0) / h;
    const double th1 = 1.0 - th;
    return rcont[0] +
           th * (rcont[1] + th1 * (rcont[2] + th * (rcont[3] + th1 * rcont[4])));
  }
};

template <int M>
struct OdeSolution {
  double t_begin = 0.0;
  double t_end = 0.0;
  Vec<M> y_begin = Vec<M>::Zero();
  Vec<M> y_end = Vec<M>::Zero();
  std::vector<OdeStep<M>> steps;

  bool event_hit = false;  // solution was truncated at an event crossing
  long n_accepted = 0;
  long n_rejected = 0;
  long n_rhs = 0;

  double duration() const { return t_end - t_begin; }

  /// Dense evaluation; clamps to the covered interval endpoints.
  Vec<M> eval(double t) const {
    if (steps.empty()) return y_begin;
    const double dir = steps.front().h > 0.0 ? 1.0 : -1.0;
    if ((t - t_begin) * dir <= 0.0) return y_begin;
    if ((t - t_end) * dir >= 0.0) return y_end;
    // Binary search for the step containing t.
    std::size_t lo = 0, hi = steps.size() - 1;
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      const double tend = steps[mid].t0 + steps[mid].h;
      if ((t - tend) * dir > 0.0)
        lo = mid + 1;
      else
        hi = mid;
    }
    return steps[lo].eval(t);
  }
};

namespace detail {

// Dormand-Prince RK5(4)7M tableau.
struct Dopri5Tableau {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                          a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                          a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                          a75 = -2187.0 / 6784, a76 = 11.0 / 84;
  // y5 - y4 error weights.
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
  // Dense-output weights.
  static constexpr double d1 = -12715105075.0 / 11282082432.0;
  static constexpr double d3 = 87487479700.0 / 32700410799.0;
  static constexpr double d4 = -10690763975.0 / 1880347072.0;
  static constexpr double d5 = 701980252875.0 / 199316789632.0;
  static constexpr double d6 = -1453857185.0 / 822651844.0;
  static constexpr double d7 = 69997945.0 / 29380423.0;
};

}  // namespace detail

/// Integrate y' = f(t, y) from (t0, y0) to t1.  If `event` is given, stop at
/// the first time where it crosses from negative to nonnegative (scanned on
/// quarter-points of each step, then refined on the dense output to
/// |event| <= event_tol).  The event state is available as y_end at t_end.
template <int M, typename RHS>
OdeSolution<M> integrate_ode(RHS&& f, double t0, const Vec<M>& y0, double t1,
                             const OdeOptions& opt = {},
                             const std::function<double(double, const Vec<M>&)>* event = nullptr,
                             double event_tol = 1e-12) {
  using T = detail::Dopri5Tableau;
  OdeSolution<M> sol;
  sol.t_begin = t0;
  sol.y_begin = y0;
  sol.t_end = t0;
  sol.y_end = y0;
  if (t1 == t0) return sol;

  const double dir = t1 > t0 ? 1.0 : -1.0;
  const double span = std::abs(t1 - t0);
  const double hmax = opt.h_max > 0.0 ? opt.h_max : span;

  Vec<M> y = y0;
  double t = t0;
  Vec<M> k1 = f(t, y);
  sol.n_rhs = 1;

  // Initial step heuristic: balance |y| against |f| in the error norm.
  double h;
  if (opt.h_init > 0.0) {
    h = std::min(opt.h_init, hmax);
  } else {
    double d0 = 0.0, d1n = 0.0;
    for (int i = 0; i < M; ++i) {
      const double sc = opt.atol + opt.rtol * std::abs(y[i]);
      d0 += sqr(y[i] / sc);
      d1n += sqr(k1[i] / sc);
    }
    d0 = std::sqrt(d0 / M);
    d1n = std::sqrt(d1n / M);
    h = (d0 < 1e-5 || d1n < 1e-5) ? 1e-6 * span : 0.01 * d0 / d1n;
    h = std::min(h, hmax);
    h = std::max(h, 1e-12 * span);
  }
  h *= dir;

  double e_prev = 0.0;
  bool track_event = event != nullptr;
  if (track_event) e_prev = (*event)(t, y);

  Vec<M> k2, k3, k4, k5, k6, k7, ynew, yerr;
  while (sol.n_accepted + sol.n_rejected < opt.max_steps) {
    if ((t + h - t1) * dir > 0.0) h = t1 - t;
    const double habs = std::abs(h);

    k2 = f(t + T::c2 * h, Vec<M>(y + h * (T::a21 * k1)));
    k3 = f(t + T::c3 * h, Vec<M>(y + h * (T::a31 * k1 + T::a32 * k2)));
    k4 = f(t + T::c4 * h, Vec<M>(y + h * (T::a41 * k1 + T::a42 * k2 + T::a43 * k3)));
    k5 = f(t + T::c5 * h,
           Vec<M>(y + h * (T::a51 * k1 + T::a52 * k2 + T::a53 * k3 + T::a54 * k4)));
    k6 = f(t + h, Vec<M>(y + h * (T::a61 * k1 + T::a62 * k2 + T::a63 * k3 +
                                  T::a64 * k4 + T::a65 * k5)));
    ynew = y + h * (T::a71 * k1 + T::a73 * k3 + T::a74 * k4 + T::a75 * k5 + T::a76 * k6);
    k7 = f(t + h, ynew);
    sol.n_rhs += 6;

    yerr = h * (T::e1 * k1 + T::e3 * k3 + T::e4 * k4 + T::e5 * k5 + T::e6 * k6 +
                T::e7 * k7);
    double err = 0.0;
    for (int i = 0; i < M; ++i) {
      const double sc = opt.atol + opt.rtol * std::max(std::abs(y[i]), std::abs(ynew[i]));
      err += sqr(yerr[i] / sc);
    }
    err = std::sqrt(err / M);

    if (err <= 1.0) {
      // Accept; store the dense-output coefficients of this step.
      OdeStep<M> step;
      step.t0 = t;
      step.h = h;
      const Vec<M> ydiff = ynew - y;
      const Vec<M> bspl = h * k1 - ydiff;
      step.rcont[0] = y;
      step.rcont[1] = ydiff;
      step.rcont[2] = bspl;
      step.rcont[3] = ydiff - h * k7 - bspl;
      step.rcont[4] = h * (T::d1 * k1 + T::d3 * k3 + T::d4 * k4 + T::d5 * k5 +
                           T::d6 * k6 + T::d7 * k7);
      sol.steps.push_back(step);
      ++sol.n_accepted;

      const double tnew = t + h;
      if (track_event) {
        // Scan quarter-points for the first rising crossing inside the step.
        double ta = t, ea = e_prev;
        bool found = false;
        for (int q = 1; q <= 4 && !found; ++q) {
          const double tb = t + 0.25 * q * h;
          const Vec<M> yb = q == 4 ? ynew : step.eval(tb);
          const double eb = (*event)(tb, yb);
          if (ea < 0.0 && eb >= 0.0) {
            double tev;
            if (eb <= event_tol) {
              tev = tb;
            } else {
              auto ef = [&](double tt) { return (*event)(tt, step.eval(tt)); };
              tev = brent_root(ef, ta, tb, 0.0, event_tol, 200);
            }
            sol.event_hit = true;
            sol.t_end = tev;
            sol.y_end = step.eval(tev);
            return sol;
          }
          ta = tb;
          ea = eb;
        }
        e_prev = ea;
      }

      t = tnew;
      y = ynew;
      k1 = k7;  // FSAL
      sol.t_end = t;
      sol.y_end = y;
      if ((t - t1) * dir >= 0.0) return sol;

      double fac = 0.9 * std::pow(std::max(err, 1e-10), -0.2);
      fac = std::min(5.0, std::max(0.2, fac));
      h *= fac;
      if (std::abs(h) > hmax) h = hmax * dir;
    } else {
      ++sol.n_rejected;
      double fac = 0.9 * std::pow(err, -0.2);
      h *= std::max(0.2, fac);
      if (std::abs(h) < 1e-14 * std::max(1.0, std::abs(t)))
        throw std::runtime_error("integrate_ode: step size underflow");
    }
    (void)habs;
  }
  throw std::runtime_error("integrate_ode: max step count exceeded");
}

}  // namespace fescat
