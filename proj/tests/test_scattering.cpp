#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fescat/scattering.hpp"
#include "support/fixtures.hpp"

using namespace fescat;

namespace {

Vec<2> rot(double a, const Vec<2>& v) {
  return Vec<2>(std::cos(a) * v.x() - std::sin(a) * v.y(),
                std::sin(a) * v.x() + std::cos(a) * v.y());
}

}  // namespace

TEST_CASE("free field scatters trivially", "[scattering]") {
  const auto model = make_zero_field<2>();
  const auto disk = fixtures::unit_disk();
  const double e = fixtures::e_ref();
  const double v = asymptotic_speed(model, e);
  CHECK_THAT(v, Catch::Matchers::WithinAbs(std::sqrt(3.0) / 2.0, 1e-14));

  Rng rng(5);
  const auto states = sample_scattering_states(model, disk, e, 10, rng);
  for (const auto& st : states) {
    const auto d = scatter(model, disk, e, st.v_minus, st.x_minus);
    REQUIRE(d.interacted);
    REQUIRE(d.completed);
    CHECK((d.v_plus - st.v_minus).norm() < 1e-10);
    CHECK((d.x_plus - st.x_minus).norm() < 1e-9);
    CHECK(d.deflection < 1e-9);
    // Straight-line travel time between the crossings.
    CHECK_THAT(d.s, Catch::Matchers::WithinAbs(d.tau_plus - d.tau_minus, 1e-9));
  }
}

TEST_CASE("constant magnetic field deflects by omega times the dwell time",
          "[scattering]") {
  const double b = 0.25;

  struct Setup {
    FieldModel<2> model;
    double energy;
  };
  const Setup setups[] = {
      {make_constant_b2(b, Mode::nonrelativistic), 0.5},
      {make_constant_b2(b, Mode::relativistic), 2.0},
  };
  const auto disk = fixtures::unit_disk();

  for (const auto& setup : setups) {
    const double v = asymptotic_speed(setup.model, setup.energy);
    const double lambda = (setup.model.mode == Mode::relativistic)
                              ? 1.0 / std::sqrt(1.0 - v * v)
                              : 1.0;
    const double omega = b * setup.model.b_coupling() / lambda;

    Rng rng(17);
    const auto states =
        sample_scattering_states(setup.model, disk, setup.energy, 8, rng, 0.7);
    for (const auto& st : states) {
      const auto d = scatter(setup.model, disk, setup.energy, st.v_minus,
                             st.x_minus);
      REQUIRE(d.interacted);
      REQUIRE(d.completed);
      CHECK_THAT(d.v_plus.norm(), Catch::Matchers::WithinAbs(v, 5e-9));
      // Velocity rotates clockwise at rate omega while inside the field.
      CHECK((d.v_plus - rot(-omega * d.s, Vec<2>(d.v_minus))).norm() < 1e-9);
      CHECK_THAT(d.deflection,
                 Catch::Matchers::WithinAbs(std::abs(omega) * d.s, 1e-9));
    }
  }
}

TEST_CASE("dictionary converts the direct flow both ways", "[scattering]") {
  const auto model = fixtures::mixed_bumps_disk();
  const auto disk = fixtures::unit_disk();
  const double e = fixtures::e_ref();

  Rng rng(23);
  const auto states = sample_scattering_states(model, disk, e, 40, rng);
  for (const auto& st : states) {
    const auto d = scatter(model, disk, e, st.v_minus, st.x_minus);
    REQUIRE(d.interacted);
    REQUIRE(d.completed);

    // scattering -> boundary reproduces the flow's own bridge quantities.
    const auto bridge = scattering_to_boundary(disk, d.v_minus, d.x_minus,
                                               d.v_plus, d.x_plus);
    CHECK((bridge.q0 - d.q0).norm() < 1e-8);
    CHECK((bridge.q - d.q).norm() < 1e-8);
    CHECK_THAT(bridge.s, Catch::Matchers::WithinAbs(d.s, 1e-8));
    CHECK((bridge.k0 - d.k0).norm() < 1e-12);
    CHECK((bridge.k - d.k).norm() < 1e-12);

    // boundary -> scattering reproduces the asymptotes.
    BoundaryBridge<2> flow_bridge;
    flow_bridge.q0 = d.q0;
    flow_bridge.q = d.q;
    flow_bridge.s = d.s;
    flow_bridge.k0 = d.k0;
    flow_bridge.k = d.k;
    const auto back = boundary_to_scattering(disk, flow_bridge, e);
    CHECK((back.v_minus - st.v_minus).norm() < 1e-12);
    CHECK((back.x_minus - st.x_minus).norm() < 1e-8);
    CHECK((back.v_plus - d.v_plus).norm() < 1e-12);
    CHECK((back.x_plus - d.x_plus).norm() < 1e-8);
    CHECK_THAT(back.tau_minus, Catch::Matchers::WithinAbs(d.tau_minus, 1e-8));
    CHECK_THAT(back.tau_plus, Catch::Matchers::WithinAbs(d.tau_plus, 1e-8));
  }
}

TEST_CASE("outgoing speed matches the incoming speed", "[scattering]") {
  const auto model = fixtures::mixed_bumps_disk();
  const auto disk = fixtures::unit_disk();
  const double e = fixtures::e_ref();
  const double v = asymptotic_speed(model, e);

  Rng rng(31);
  for (const auto& st : sample_scattering_states(model, disk, e, 25, rng)) {
    const auto d = scatter(model, disk, e, st.v_minus, st.x_minus);
    REQUIRE(d.completed);
    CHECK_THAT(d.v_plus.norm(), Catch::Matchers::WithinAbs(v, 5e-9));
  }
}

TEST_CASE("a line missing the domain passes through unchanged", "[scattering]") {
  const auto model = fixtures::mixed_bumps_disk();
  const auto disk = fixtures::unit_disk();
  const double e = fixtures::e_ref();
  const double v = asymptotic_speed(model, e);

  const Vec<2> dir(1.0, 0.0);
  const Vec<2> offset(0.0, 1.8);  // outside the unit disk
  const auto d = scatter(model, disk, e, Vec<2>(v * dir), offset);
  CHECK_FALSE(d.interacted);
  CHECK((d.v_plus - v * dir).norm() == 0.0);
  CHECK((d.x_plus - offset).norm() == 0.0);
}

TEST_CASE("sampled states sit on the fixed-energy manifold", "[scattering]") {
  const auto model = fixtures::mixed_bumps_disk();
  const auto disk = fixtures::unit_disk();
  const double e = fixtures::e_ref();
  const double v = asymptotic_speed(model, e);

  Rng rng(77);
  const auto states = sample_scattering_states(model, disk, e, 50, rng);
  REQUIRE(states.size() == 50);
  for (const auto& st : states) {
    CHECK(std::abs(st.v_minus.dot(st.x_minus)) < 1e-12);
    CHECK_THAT(st.v_minus.norm(), Catch::Matchers::WithinAbs(v, 1e-12));
    CHECK(line_crossing_times(disk, st.x_minus, st.v_minus).hits);
  }

  // Same seed, same draw.
  Rng rng2(77);
  const auto states2 = sample_scattering_states(model, disk, e, 50, rng2);
  CHECK(states2[17].v_minus == states[17].v_minus);
  CHECK(states2[17].x_minus == states[17].x_minus);
}

TEST_CASE("scattering input validation", "[scattering]") {
  const auto model = fixtures::mixed_bumps_disk();
  const auto disk = fixtures::unit_disk();
  const double e = fixtures::e_ref();

  CHECK_THROWS_AS(scatter(model, disk, e, Vec<2>(1.0, 0.0), Vec<2>(0.0, 0.0)),
                  std::invalid_argument);  // wrong speed
  CHECK_THROWS_AS(asymptotic_speed(model, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(
      scattering_to_boundary(disk, Vec<2>(1.0, 0.0), Vec<2>(0.0, 5.0),
                             Vec<2>(1.0, 0.0), Vec<2>(0.0, 5.0)),
      std::invalid_argument);
}
