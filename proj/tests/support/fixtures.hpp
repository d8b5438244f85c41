#pragma once

// Shared fixtures for the unit and acceptance suites: a couple of domains
// and field models exercised all over the place, with energies chosen
// comfortably above the rest threshold c^2 + sup V (c = 1 throughout).

#include "fescat/domain.hpp"
#include "fescat/dynamics.hpp"
#include "fescat/fields.hpp"

namespace fixtures {

using namespace fescat;

inline ConvexDomain<2> unit_disk() { return make_ball<2>(Vec<2>::Zero(), 1.0); }

inline ConvexDomain<3> unit_ball3() { return make_ball<3>(Vec<3>::Zero(), 1.0); }

inline ConvexDomain<2> ellipse() {
  return make_ellipsoid<2>(Vec<2>(0.0, 0.0), Vec<2>(1.2, 0.8));
}

/// Interior bump potential, comfortably inside the unit disk.
inline FieldModel<2> bump_v_disk(double amplitude = 0.12) {
  return make_bump_v<2>(amplitude, Vec<2>(0.15, -0.1), 0.55);
}

/// Interior planar magnetic bump.
inline FieldModel<2> bump_b_disk(double amplitude = 0.08) {
  return make_bump_b2(amplitude, Vec<2>(-0.1, 0.2), 0.5);
}

/// Mixed electric + magnetic bump model on the unit disk.
inline FieldModel<2> mixed_bumps_disk() {
  return combine_fields(bump_v_disk(), bump_b_disk());
}

/// A second, genuinely different mixed model (different centers/amplitudes).
inline FieldModel<2> mixed_bumps_disk_alt() {
  return combine_fields(make_bump_v<2>(0.09, Vec<2>(-0.2, 0.05), 0.5),
                        make_bump_b2(-0.06, Vec<2>(0.2, 0.15), 0.45));
}

/// 3D model: potential bump plus a closed magnetic bump from a vector
/// potential.
inline FieldModel<3> mixed_bumps_ball3() {
  return combine_fields(
      make_bump_v<3>(0.1, Vec<3>(0.1, -0.05, 0.1), 0.5),
      make_bump_b_potential<3>(0.07, Vec<3>(-0.1, 0.1, 0.0), 0.5,
                               Vec<3>(0.3, 1.0, 0.5)));
}

/// Mild-amplitude mixed model whose high-energy threshold constants stay
/// finite from moderate energies on; used by the regime checks.
inline FieldModel<2> gentle_bumps_disk() {
  return combine_fields(make_bump_v<2>(0.02, Vec<2>(0.15, -0.1), 0.55),
                        make_bump_b2(0.015, Vec<2>(-0.1, 0.2), 0.5));
}

/// Reference fixed energy for the disk fixtures (well above c^2 + sup V).
inline double e_ref() { return 2.0; }

}  // namespace fixtures
