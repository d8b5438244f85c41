#include <catch2/catch_amalgamated.hpp>

#include "fescat/dynamics.hpp"
#include "fescat/fd.hpp"
#include "support/fixtures.hpp"

using namespace fescat;

TEST_CASE("free flight is exact and dense output interpolates it", "[dynamics]") {
  auto model = make_zero_field<2>();
  PhaseState<2> s0{Vec<2>(-0.4, 0.1), Vec<2>(0.8, 0.3)};
  const Vec<2> v = g_map(model, s0.p);

  const FlowResult<2> r = integrate_flow(model, nullptr, s0, 2.5);
  REQUIRE(r.status == FlowStatus::ok);
  CHECK((r.final_state.x - (s0.x + 2.5 * v)).norm() < 1e-12);
  CHECK((r.final_state.p - s0.p).norm() < 1e-13);

  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const double t = rng.uniform(0.0, 2.5);
    const PhaseState<2> s = r.state_at(t);
    CHECK((s.x - (s0.x + t * v)).norm() < 1e-12);
    CHECK((s.p - s0.p).norm() < 1e-12);
  }
}

TEST_CASE("nonrelativistic cyclotron orbit", "[dynamics]") {
  // v' = B v with B_12 = 1 rotates the unit velocity clockwise with period
  // 2 pi; starting at the origin the orbit is the circle of radius 1 about
  // (0, -1).
  auto model = make_constant_b2(1.0, Mode::nonrelativistic);
  PhaseState<2> s0{Vec<2>::Zero(), Vec<2>(1.0, 0.0)};

  const FlowResult<2> r = integrate_flow(model, nullptr, s0, 2.0 * M_PI);
  CHECK((r.final_state.x - s0.x).norm() < 1e-9);
  CHECK((r.final_state.p - s0.p).norm() < 1e-9);
  CHECK(r.energy_drift < 1e-10);

  // Dense output at the half period: diametrically opposite point.
  const PhaseState<2> mid = r.state_at(M_PI);
  CHECK((mid.x - Vec<2>(0.0, -2.0)).norm() < 1e-9);
  CHECK((mid.p - Vec<2>(-1.0, 0.0)).norm() < 1e-9);

  // Exact closed form at arbitrary times.
  Rng rng(2);
  for (int i = 0; i < 15; ++i) {
    const double t = rng.uniform(0.0, 2.0 * M_PI);
    const PhaseState<2> s = r.state_at(t);
    CHECK((s.x - Vec<2>(std::sin(t), std::cos(t) - 1.0)).norm() < 1e-9);
    CHECK((s.p - Vec<2>(std::cos(t), -std::sin(t))).norm() < 1e-9);
  }
}

TEST_CASE("relativistic constant-B orbit", "[dynamics]") {
  // p' = (1/c) B g(p) keeps |p| fixed, so p rotates at rate b/(c lambda),
  // lambda = sqrt(1 + |p|^2/c^2); with b = c = |p| = 1 the period is
  // 2 pi sqrt(2) and the orbit radius is c |p| / b = 1.
  auto model = make_constant_b2(1.0);
  PhaseState<2> s0{Vec<2>::Zero(), Vec<2>(1.0, 0.0)};
  const double period = 2.0 * M_PI * std::sqrt(2.0);

  const FlowResult<2> r = integrate_flow(model, nullptr, s0, period);
  CHECK((r.final_state.x - s0.x).norm() < 5e-9);
  CHECK((r.final_state.p - s0.p).norm() < 5e-9);
  CHECK(r.energy_drift < 1e-9);
  CHECK(energy(model, s0) == Catch::Approx(std::sqrt(2.0)).epsilon(1e-14));

  // Quarter period: p rotated by -pi/2.
  const PhaseState<2> q = r.state_at(0.25 * period);
  CHECK((q.p - Vec<2>(0.0, -1.0)).norm() < 1e-9);
}

TEST_CASE("energy conservation in mixed bump fields", "[dynamics]") {
  auto model = fixtures::mixed_bumps_disk();
  Rng rng(17);
  for (int i = 0; i < 10; ++i) {
    PhaseState<2> s0;
    s0.x = rng.in_ball<2>(Vec<2>::Zero(), 0.8);
    s0.p = impulse_on_sphere(model, fixtures::e_ref(), s0.x, rng.unit_vector<2>());
    const FlowResult<2> r = integrate_flow(model, nullptr, s0, 3.0);
    CHECK(r.energy_drift < 1e-8);
    CHECK(energy(model, r.final_state) == Catch::Approx(fixtures::e_ref()).margin(1e-8));
  }
}

TEST_CASE("g map and its inverse", "[dynamics]") {
  auto model = make_zero_field<3>();
  model.c = 1.7;
  Rng rng(4);
  for (int i = 0; i < 30; ++i) {
    const Vec<3> p = 2.0 * rng.in_ball<3>(Vec<3>::Zero(), 1.5);
    const Vec<3> v = g_map(model, p);
    CHECK(v.norm() < model.c);
    CHECK((g_inverse(model, v) - p).norm() < 1e-12 * std::max(1.0, p.norm()));
  }
  CHECK_THROWS_AS(g_inverse(model, Vec<3>(1.7, 0.0, 0.0)), std::invalid_argument);

  // Row-wise gradient bound |grad g_i(p)| <= (1 + |p|^2/c^2)^{-1/2}.
  for (int i = 0; i < 20; ++i) {
    const Vec<3> p = 3.0 * rng.in_ball<3>(Vec<3>::Zero(), 1.0);
    auto g = [&](const Vec<3>& q) { return g_map(model, q); };
    const Mat<3> jac = fd_jacobian<3>(g, p, 1e-6);
    const double bound = 1.0 / std::sqrt(1.0 + p.squaredNorm() / sqr(model.c));
    for (int row = 0; row < 3; ++row)
      CHECK(jac.row(row).norm() <= bound + 1e-7);
  }
}

TEST_CASE("impulse radius and speed at fixed energy", "[dynamics]") {
  auto model = fixtures::bump_v_disk();
  const double E = fixtures::e_ref();
  Rng rng(6);
  for (int i = 0; i < 20; ++i) {
    const Vec<2> x = rng.in_ball<2>(Vec<2>::Zero(), 1.0);
    const double r = impulse_radius(model, E, x);
    const Vec<2> p = impulse_on_sphere(model, E, x, rng.unit_vector<2>());
    CHECK(energy(model, x, p) == Catch::Approx(E).epsilon(1e-13));
    CHECK(g_map(model, p).norm() == Catch::Approx(speed_from_energy(model, E, x)).epsilon(1e-13));
    CHECK(p.norm() == Catch::Approx(r).epsilon(1e-13));
  }
  // Below the rest threshold both quantities are undefined.
  CHECK_THROWS_AS(impulse_radius(model, 0.9, Vec<2>::Zero()), std::invalid_argument);
  CHECK_THROWS_AS(speed_from_energy(model, 0.9, Vec<2>::Zero()), std::invalid_argument);

  // Nonrelativistic variants.
  auto nr = make_zero_field<2>(Mode::nonrelativistic);
  CHECK(impulse_radius(nr, 0.5, Vec<2>::Zero()) == Catch::Approx(1.0));
  CHECK(speed_from_energy(nr, 2.0, Vec<2>::Zero()) == Catch::Approx(2.0));
}

TEST_CASE("domain exit detection", "[dynamics]") {
  auto model = make_zero_field<2>();
  auto disk = fixtures::unit_disk();

  SECTION("interior start, free flight") {
    PhaseState<2> s0{Vec<2>::Zero(), g_inverse(model, Vec<2>(0.5, 0.0))};
    const FlowResult<2> r = integrate_flow(model, &disk, s0, 10.0);
    REQUIRE(r.status == FlowStatus::exited);
    CHECK(r.t_final == Catch::Approx(2.0).margin(1e-10));
    CHECK((r.final_state.x - Vec<2>(1.0, 0.0)).norm() < 1e-10);
    CHECK(std::abs(disk.chi(r.final_state.x)) < 1e-12);
  }

  SECTION("boundary start moving inward") {
    PhaseState<2> s0{Vec<2>(-1.0, 0.0), g_inverse(model, Vec<2>(0.5, 0.0))};
    const FlowResult<2> r = integrate_flow(model, &disk, s0, 10.0);
    REQUIRE(r.status == FlowStatus::exited);
    CHECK(r.t_final == Catch::Approx(4.0).margin(1e-10));
    CHECK((r.final_state.x - Vec<2>(1.0, 0.0)).norm() < 1e-10);
  }

  SECTION("boundary start moving outward") {
    PhaseState<2> s0{Vec<2>(1.0, 0.0), g_inverse(model, Vec<2>(0.5, 0.0))};
    const FlowResult<2> r = integrate_flow(model, &disk, s0, 10.0);
    CHECK(r.status == FlowStatus::immediate_exit);
    CHECK(r.t_final == 0.0);
  }

  SECTION("start outside the domain is rejected") {
    PhaseState<2> s0{Vec<2>(2.0, 0.0), Vec<2>(1.0, 0.0)};
    CHECK_THROWS_AS(integrate_flow(model, &disk, s0, 1.0), std::invalid_argument);
  }

  SECTION("backward exit") {
    PhaseState<2> s0{Vec<2>::Zero(), g_inverse(model, Vec<2>(0.5, 0.0))};
    const auto tminus = exit_time_backward(model, disk, s0, 10.0);
    REQUIRE(tminus.has_value());
    CHECK(*tminus == Catch::Approx(-2.0).margin(1e-10));
    const auto tplus = exit_time_forward(model, disk, s0, 10.0);
    REQUIRE(tplus.has_value());
    CHECK(*tplus == Catch::Approx(2.0).margin(1e-10));
  }

  SECTION("budget elapsing without exit") {
    PhaseState<2> s0{Vec<2>::Zero(), g_inverse(model, Vec<2>(0.5, 0.0))};
    CHECK_FALSE(exit_time_forward(model, disk, s0, 0.5).has_value());
  }
}

TEST_CASE("curved exit in the mixed field stays on the boundary", "[dynamics]") {
  auto model = fixtures::mixed_bumps_disk();
  auto disk = fixtures::unit_disk();
  Rng rng(12);
  for (int i = 0; i < 10; ++i) {
    PhaseState<2> s0;
    s0.x = rng.in_ball<2>(Vec<2>::Zero(), 0.7);
    s0.p = impulse_on_sphere(model, fixtures::e_ref(), s0.x, rng.unit_vector<2>());
    const FlowResult<2> r = integrate_flow(model, &disk, s0, 20.0);
    REQUIRE(r.status == FlowStatus::exited);
    CHECK(std::abs(disk.chi(r.final_state.x)) < 1e-12);
    // Transversality: outward normal velocity at the exit.
    CHECK(disk.grad_chi(r.final_state.x).dot(g_map(model, r.final_state.p)) > 0.0);
    CHECK(r.energy_drift < 1e-8);
  }
}

TEST_CASE("time reversal flips the magnetic field", "[dynamics]") {
  // If x(t) solves the system for (V, B), then x(-t) solves it for (V, -B).
  auto model = fixtures::mixed_bumps_disk();
  auto reversed = reverse_b(model);
  PhaseState<2> s0{Vec<2>(0.1, -0.2),
                   impulse_on_sphere(model, fixtures::e_ref(), Vec<2>(0.1, -0.2),
                                     Vec<2>(0.6, 0.8))};
  const double T = 1.7;
  const FlowResult<2> fwd = integrate_flow(model, nullptr, s0, T);

  PhaseState<2> s1{fwd.final_state.x, Vec<2>(-fwd.final_state.p)};
  const FlowResult<2> back = integrate_flow(reversed, nullptr, s1, T);
  CHECK((back.final_state.x - s0.x).norm() < 5e-9);
  CHECK((back.final_state.p + s0.p).norm() < 5e-8);
}

TEST_CASE("boundary curvature rate matches FD of chi along the flow", "[dynamics]") {
  auto model = fixtures::mixed_bumps_disk();
  auto disk = fixtures::unit_disk();
  PhaseState<2> s0{Vec<2>(0.2, 0.1),
                   impulse_on_sphere(model, fixtures::e_ref(), Vec<2>(0.2, 0.1),
                                     Vec<2>(1.0, 0.3))};
  const FlowResult<2> r = integrate_flow(model, nullptr, s0, 1.0);
  auto m_of_t = [&](double t) { return disk.chi(r.state_at(t).x); };
  for (double t : {0.2, 0.5, 0.8}) {
    const double mdd_fd =
        (m_of_t(t + 1e-4) - 2.0 * m_of_t(t) + m_of_t(t - 1e-4)) / 1e-8;
    const double mdd = boundary_curvature_rate(model, disk, r.state_at(t));
    CHECK(mdd == Catch::Approx(mdd_fd).margin(1e-5));
  }

  // Nonrelativistic variant.
  auto nr = make_constant_b2(0.8, Mode::nonrelativistic);
  PhaseState<2> s1{Vec<2>(0.1, 0.0), Vec<2>(0.9, 0.2)};
  const FlowResult<2> rn = integrate_flow(nr, nullptr, s1, 1.0);
  auto mn = [&](double t) { return disk.chi(rn.state_at(t).x); };
  const double t = 0.4;
  const double mdd_fd = (mn(t + 1e-4) - 2.0 * mn(t) + mn(t - 1e-4)) / 1e-8;
  CHECK(boundary_curvature_rate(nr, disk, rn.state_at(t)) ==
        Catch::Approx(mdd_fd).margin(1e-5));
}
