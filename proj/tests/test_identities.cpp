#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "fescat/identities.hpp"
#include "support/fixtures.hpp"

using namespace fescat;
using namespace fixtures;

namespace {

// Spatially constant potential: trajectories are straight lines and every
// piece of the uniqueness functional has a closed form.
FieldModel<2> constant_v(double v0) {
  FieldModel<2> m = make_zero_field<2>();
  m.V = [v0](const Vec<2>&) { return v0; };
  m.name = "constant-v";
  m.has_support = false;
  return m;
}

void expect_pass(const CheckResult& r) {
  INFO(r.name << ": residual " << r.max_residual << " vs tolerance "
              << r.tolerance << " over " << r.sample_count << " samples. "
              << r.details);
  CHECK(r.passed);
}

FlowOptions tight_flow() {
  FlowOptions f;
  f.rtol = 1e-12;
  f.atol = 1e-14;
  return f;
}

}  // namespace

TEST_CASE("local speed of boundary data matches the energy-speed law",
          "[identities]") {
  const auto disk = unit_disk();
  ShootOptions<2> opts;
  opts.rtol = 1e-11;
  opts.atol = 1e-13;

  SECTION("mixed relativistic bumps") {
    const auto model = mixed_bumps_disk();
    const auto sweep = boundary_sweep(model, disk, e_ref(), 8, opts);
    expect_pass(check_speed_law(model, sweep, 1e-8));
  }
  SECTION("free field") {
    const auto model = make_zero_field<2>();
    const auto sweep = boundary_sweep(model, disk, e_ref(), 6, opts);
    expect_pass(check_speed_law(model, sweep, 1e-10));
  }
  SECTION("nonrelativistic bump") {
    const auto model =
        make_bump_v<2>(0.08, Vec<2>(0.15, -0.1), 0.55, Mode::nonrelativistic);
    const auto sweep = boundary_sweep(model, disk, 0.9, 6, opts);
    expect_pass(check_speed_law(model, sweep, 1e-8));
  }
}

TEST_CASE("entry-exit data obey reciprocity under magnetic reversal",
          "[identities]") {
  SECTION("electric bump only") {
    expect_pass(
        check_reciprocity(bump_v_disk(), unit_disk(), e_ref(), 25, 11, 1e-8));
  }
  SECTION("constant magnetic field") {
    expect_pass(check_reciprocity(make_constant_b2(0.3), unit_disk(), e_ref(),
                                  25, 12, 1e-8));
  }
  SECTION("mixed bumps on the ellipse") {
    expect_pass(
        check_reciprocity(mixed_bumps_disk(), ellipse(), e_ref(), 25, 13, 1e-8));
  }
  SECTION("3d mixed bumps") {
    // 3d chords need the tighter solver preset to converge reliably.
    ShootOptions<3> firm;
    firm.rtol = 1e-11;
    firm.atol = 1e-13;
    firm.residual_tol = 1e-12;
    expect_pass(check_reciprocity(mixed_bumps_ball3(), unit_ball3(), e_ref(),
                                  10, 14, 1e-8, firm));
  }
}

TEST_CASE("boundary and scattering dictionaries agree", "[identities]") {
  const auto disk = unit_disk();
  const auto model = mixed_bumps_disk();
  expect_pass(check_conversion_roundtrip(model, disk, e_ref(), 20, 21, 1e-8));
  expect_pass(check_scatter_vs_boundary(model, disk, e_ref(), 20, 22, 1e-7));
}

TEST_CASE("reduced-action endpoint gradients match boundary impulses",
          "[identities]") {
  const auto disk = unit_disk();
  SECTION("free field") {
    expect_pass(
        check_action_gradients(make_zero_field<2>(), disk, e_ref(), 6, 31, 1e-6));
  }
  SECTION("mixed bumps in the canonical gauge") {
    const auto model = with_canonical_potential(mixed_bumps_disk(), Vec<2>::Zero());
    expect_pass(check_action_gradients(model, disk, e_ref(), 10, 32, 1e-5));
  }
  SECTION("gauge-shifted vector potential") {
    // Adding a gradient to A changes the action but not the identity.
    const auto base = with_canonical_potential(mixed_bumps_disk(), Vec<2>::Zero());
    FieldModel<2> shifted = base;
    const auto base_a = base.A;
    shifted.A = [base_a](const Vec<2>& x) {
      const Vec<2> grad_phi(0.25 * std::cos(x.x()) * std::cos(x.y()),
                            -0.25 * std::sin(x.x()) * std::sin(x.y()));
      return Vec<2>(base_a(x) + grad_phi);
    };
    expect_pass(check_action_gradients(shifted, disk, e_ref(), 6, 33, 1e-5));
  }
  SECTION("nonrelativistic bump") {
    const auto model =
        make_bump_v<2>(0.08, Vec<2>(0.15, -0.1), 0.55, Mode::nonrelativistic);
    expect_pass(check_action_gradients(model, disk, 0.9, 6, 34, 1e-5));
  }
  SECTION("3d mixed bumps") {
    const auto model = with_canonical_potential(mixed_bumps_ball3(), Vec<3>::Zero());
    expect_pass(check_action_gradients(model, unit_ball3(), e_ref(), 3, 35, 1e-5));
  }
}

TEST_CASE("magnetic field is recovered from impulse-field curls",
          "[identities]") {
  const auto disk = unit_disk();
  const Vec<2> zeta = disk.chart({0.0});
  std::vector<Vec<2>> points;
  for (int i = 0; i < 10; ++i) {
    const double a = M_PI / 2 + i * M_PI / 9.0;
    points.push_back(Vec<2>(0.55 * std::cos(a), 0.55 * std::sin(a)));
  }

  SECTION("constant field") {
    expect_pass(check_curl_formula(make_constant_b2(0.1), disk, e_ref(), zeta,
                                   points, 1e-3));
  }
  SECTION("free field") {
    expect_pass(check_curl_formula(make_zero_field<2>(), disk, e_ref(), zeta,
                                   points, 1e-6));
  }
  SECTION("departure-impulse variant") {
    expect_pass(check_curl_formula(make_constant_b2(0.1), disk, e_ref(), zeta,
                                   points, 1e-3, 0.0, true));
  }
  SECTION("magnetic bump") {
    expect_pass(
        check_curl_formula(bump_b_disk(), disk, e_ref(), zeta, points, 1e-3));
  }
  SECTION("3d magnetic bump") {
    const auto ball = unit_ball3();
    const Vec<3> zeta3 = ball.chart({M_PI / 2, 0.0});
    const std::vector<Vec<3>> pts3{
        Vec<3>(-0.4, 0.1, 0.2), Vec<3>(-0.2, -0.45, 0.1),
        Vec<3>(0.1, 0.4, -0.35), Vec<3>(-0.5, 0.2, -0.2)};
    expect_pass(
        check_curl_formula(mixed_bumps_ball3(), ball, e_ref(), zeta3, pts3, 1e-3));
  }
}

TEST_CASE("energy stays fixed along domain-limited flows", "[identities]") {
  expect_pass(check_energy_conservation(mixed_bumps_disk(), unit_disk(), e_ref(),
                                        20, 71, 1e-8, tight_flow()));
  expect_pass(check_energy_conservation(make_constant_b2(0.3), unit_disk(),
                                        e_ref(), 15, 72, 1e-8, tight_flow()));
  expect_pass(check_energy_conservation(mixed_bumps_ball3(), unit_ball3(),
                                        e_ref(), 15, 73, 1e-8, tight_flow()));
}

TEST_CASE("high-energy regime bounds hold for the free field", "[identities]") {
  const auto disk = unit_disk();
  const auto model = make_zero_field<2>();
  const ThresholdEvaluator<2> eval(model, disk, 16, 64);
  const ThresholdReport rep = eval.report(3.0);
  REQUIRE(rep.energy >= rep.c1);
  REQUIRE(rep.meets_energy_bound);
  REQUIRE(rep.meets_local_diffeo);
  REQUIRE(rep.c8 > 0.0);

  expect_pass(check_living_time(model, disk, rep, 200, 41));
  expect_pass(check_injectivity_bound(model, disk, eval, 3.0, 150, 42));
  expect_pass(check_diffeo_jacobian(model, disk, rep, 100, 43));
  // Exactly tight case: on the ball the exit acceleration bound is saturated.
  expect_pass(check_exit_transversality(model, disk, rep, 150, 44));
}

TEST_CASE("high-energy regime bounds hold for gentle bumps", "[identities]") {
  const auto disk = unit_disk();
  const auto model = gentle_bumps_disk();
  const ThresholdEvaluator<2> eval(model, disk, 32, 96);
  const double estar = eval.operational_threshold(energy_ladder(2.0, 12, 8));
  const ThresholdReport rep = eval.report(estar);
  INFO("operational energy " << estar);
  REQUIRE(rep.meets_operational);

  expect_pass(check_living_time(model, disk, rep, 200, 51));
  expect_pass(check_injectivity_bound(model, disk, eval, estar, 200, 52));
  expect_pass(check_diffeo_jacobian(model, disk, rep, 120, 53));
  expect_pass(check_exit_transversality(model, disk, rep, 200, 54));
}

TEST_CASE("regime checks refuse energies outside their hypotheses",
          "[identities]") {
  const auto disk = unit_disk();
  const auto model = gentle_bumps_disk();
  const ThresholdEvaluator<2> eval(model, disk, 16, 48);
  const double e_low = 1.01 * eval.rest_threshold();
  const ThresholdReport rep = eval.report(e_low);
  REQUIRE_FALSE(rep.energy >= rep.c1);

  REQUIRE_THROWS_AS(check_living_time(model, disk, rep, 10, 61),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(check_injectivity_bound(model, disk, eval, e_low, 10, 62),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(check_diffeo_jacobian(model, disk, rep, 10, 63),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(check_exit_transversality(model, disk, rep, 10, 64),
                    std::invalid_argument);
}

TEST_CASE("uniqueness functional matches its constant-potential closed form",
          "[identities]") {
  const auto disk = unit_disk();
  const double energy = 2.0;
  const auto m1 = constant_v(0.2);
  const auto m2 = constant_v(0.05);
  const double r1 = std::sqrt(sqr(energy - 0.2) - 1.0);
  const double r2 = std::sqrt(sqr(energy - 0.05) - 1.0);
  const double dr2 = sqr(r1 - r2);

  UniquenessOptions opts;
  opts.theta_points = 8;  // the integrand is rotation invariant here
  opts.gap_nodes = 48;
  opts.chord_cutoff = 0.004;
  opts.radial_nodes = 6;
  opts.angular_nodes = 8;
  opts.circle_nodes = 8;
  opts.coarse_pass = false;
  const UniquenessReport rep = uniqueness_report(m1, m2, disk, energy, opts);

  // On the unit circle a chord of length L subtends the angle 2 asin(L/2),
  // and the boundary integrand depends only on the angular separation u:
  // it equals (r1 - r2)^2 cos^2(u/2).
  const double a = 2.0 * std::asin(0.5 * opts.chord_cutoff);
  const double phi0_exact = 2.0 * M_PI * dr2 * (M_PI - a - std::sin(a));
  const double phi1_exact = 2.0 * sqr(M_PI) * dr2;

  CHECK_THAT(rep.boundary_integral,
             Catch::Matchers::WithinRel(phi0_exact, 1e-6));
  CHECK_THAT(rep.interior_integral,
             Catch::Matchers::WithinRel(phi1_exact, 1e-6));
  CHECK_THAT(rep.radius_gap_l2,
             Catch::Matchers::WithinRel(M_PI * dr2, 1e-9));
  // The inequality is saturated by constant potentials; the diagonal cutoff
  // removes a sliver of the boundary integral, so the margin sits just below
  // zero by exactly the excluded mass.
  CHECK(rep.margin <= 0.0);
  CHECK(rep.margin >= -dr2 * (a + std::sin(a)) * 1.001 - 1e-9);
}

TEST_CASE("uniqueness functional vanishes for identical models",
          "[identities]") {
  const auto disk = unit_disk();
  const auto model = mixed_bumps_disk();
  UniquenessOptions opts;
  opts.theta_points = 12;
  opts.gap_nodes = 16;
  opts.radial_nodes = 4;
  opts.angular_nodes = 8;
  opts.circle_nodes = 8;
  opts.coarse_pass = false;
  const UniquenessReport rep =
      uniqueness_report(model, model, disk, e_ref(), opts);

  CHECK(rep.boundary_integral == 0.0);
  CHECK(rep.radius_gap_l2 == 0.0);
  CHECK(std::abs(rep.interior_integral) < 1e-6);
  CHECK(rep.worst_interior_term < 1e-6);
}

TEST_CASE("uniqueness identity separates distinct electric models",
          "[identities]") {
  const auto disk = unit_disk();
  const auto m1 = bump_v_disk();
  const auto m2 = make_bump_v<2>(0.07, Vec<2>(-0.25, 0.1), 0.5);

  UniquenessOptions opts;
  opts.theta_points = 24;
  opts.gap_nodes = 48;
  opts.radial_nodes = 12;
  opts.angular_nodes = 24;
  opts.circle_nodes = 24;
  const UniquenessReport rep = uniqueness_report(m1, m2, disk, e_ref(), opts);
  INFO("boundary " << rep.boundary_integral << " extrapolated "
                   << rep.boundary_extrapolated << " interior "
                   << rep.interior_integral << " l2 gap " << rep.radius_gap_l2
                   << " margin " << rep.margin);

  CHECK(rep.radius_gap_l2 > 1e-4);
  CHECK(rep.rel_mismatch < 0.02);
  CHECK(rep.margin > 0.0);
}

TEST_CASE("uniqueness identity separates distinct magnetic models",
          "[identities]") {
  const auto disk = unit_disk();
  const auto m1 = with_canonical_potential(bump_b_disk(0.08), Vec<2>::Zero());
  const auto m2 = with_canonical_potential(
      make_bump_b2(-0.05, Vec<2>(0.2, 0.1), 0.45), Vec<2>::Zero());

  UniquenessOptions opts;
  opts.theta_points = 24;
  opts.gap_nodes = 48;
  opts.radial_nodes = 8;
  opts.angular_nodes = 16;
  opts.circle_nodes = 24;
  const UniquenessReport rep = uniqueness_report(m1, m2, disk, e_ref(), opts);
  INFO("boundary " << rep.boundary_integral << " interior "
                   << rep.interior_integral << " margin " << rep.margin);

  // Equal potentials: the left side is exactly zero, the functional is the
  // pure magnetic mismatch and must stay positive.
  CHECK(rep.radius_gap_l2 == 0.0);
  CHECK(rep.boundary_integral > 0.0);
  CHECK(rep.margin > 0.0);
  CHECK(rep.rel_mismatch < 0.03);
}

TEST_CASE("arrival directions wind once around the source circle",
          "[identities]") {
  const auto disk = unit_disk();
  const auto model = mixed_bumps_disk();
  const Vec<2> x(0.12, -0.07);
  const int m = 48;

  std::vector<double> ang;
  ang.reserve(m);
  std::optional<Vec<2>> warm_dir;
  std::optional<double> warm_s;
  for (int j = 0; j < m; ++j) {
    const double th = 2.0 * M_PI * j / m;
    ShootOptions<2> o;
    o.warm_dir = warm_dir;
    o.warm_s = warm_s;
    const BoundaryDatum<2> d =
        solve_boundary(model, disk, e_ref(), disk.chart({th}), x, o);
    REQUIRE(d.converged);
    const Vec<2> nu = Vec<2>(-d.k_bar.normalized());
    ang.push_back(std::atan2(nu.y(), nu.x()));
    warm_dir = d.k0.normalized();
    warm_s = d.s;
  }

  double total = 0.0;
  for (int j = 0; j < m; ++j) {
    double step = ang[(j + 1) % m] - ang[j];
    while (step <= -M_PI) step += 2.0 * M_PI;
    while (step > M_PI) step -= 2.0 * M_PI;
    CHECK(step > 0.0);  // orientation preserving
    total += step;
  }
  CHECK_THAT(total, Catch::Matchers::WithinAbs(2.0 * M_PI, 1e-9));
}

TEST_CASE("default verification suite passes on reference fixtures",
          "[identities]") {
  const auto disk = unit_disk();

  SECTION("mixed bumps at the reference energy") {
    for (const auto& r : run_default_suite(mixed_bumps_disk(), disk, e_ref())) {
      expect_pass(r);
    }
  }
  SECTION("nonrelativistic bump") {
    const auto model =
        make_bump_v<2>(0.08, Vec<2>(0.15, -0.1), 0.55, Mode::nonrelativistic);
    for (const auto& r : run_default_suite(model, disk, 0.9)) {
      expect_pass(r);
    }
  }
  SECTION("gentle bumps in the threshold regime") {
    const auto model = gentle_bumps_disk();
    const ThresholdEvaluator<2> eval(model, disk, 32, 96);
    const double estar = eval.operational_threshold(energy_ladder(2.0, 12, 8));
    for (const auto& r : run_default_suite(model, disk, estar)) {
      expect_pass(r);
    }
  }
}
