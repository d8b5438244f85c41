#include <catch2/catch_amalgamated.hpp>

#include "fescat/fd.hpp"
#include "fescat/fields.hpp"
#include "support/fixtures.hpp"

using namespace fescat;

namespace {

template <int N>
std::vector<Vec<N>> sample_points(Rng& rng, int count, double radius) {
  std::vector<Vec<N>> pts;
  for (int i = 0; i < count; ++i) pts.push_back(rng.in_ball<N>(Vec<N>::Zero(), radius));
  return pts;
}

}  // namespace

TEST_CASE("force law: constant planar field", "[fields]") {
  // Unit-speed particle moving along +x in B_12 = 1 feels (0, -1).
  auto model = make_constant_b2(1.0);
  const Vec<2> F = eval_force(model, Vec<2>(0.3, -0.2), Vec<2>(1.0, 0.0));
  CHECK(F[0] == Catch::Approx(0.0).margin(1e-15));
  CHECK(F[1] == Catch::Approx(-1.0).margin(1e-15));

  // The 1/c coupling is relativistic only.
  auto rel_c2 = make_constant_b2(1.0, Mode::relativistic, 2.0);
  CHECK(eval_force(rel_c2, Vec<2>::Zero(), Vec<2>(1.0, 0.0))[1] == Catch::Approx(-0.5));
  auto nonrel = make_constant_b2(1.0, Mode::nonrelativistic);
  CHECK(eval_force(nonrel, Vec<2>::Zero(), Vec<2>(1.0, 0.0))[1] == Catch::Approx(-1.0));
}

TEST_CASE("analytic derivatives agree with finite differences", "[fields]") {
  Rng rng(11);
  const double h = 1e-5;

  SECTION("bump potential, 2D") {
    auto model = make_bump_v<2>(0.3, Vec<2>(0.1, -0.2), 0.7);
    for (const auto& x : sample_points<2>(rng, 25, 1.0)) {
      const Vec<2> gfd = fd_gradient<2>(model.V, x, h);
      CHECK((model.grad_V(x) - gfd).norm() < 1e-7);
      const Mat<2> hfd = fd_hessian<2>(model.V, x, h);
      CHECK((model.hess_V(x) - hfd).norm() < 1e-5);
    }
  }

  SECTION("truncated harmonic, 3D") {
    auto model = make_truncated_harmonic_v<3>(1.3, Vec<3>(0.05, 0.0, -0.1), 0.8);
    for (const auto& x : sample_points<3>(rng, 25, 1.0)) {
      const Vec<3> gfd = fd_gradient<3>(model.V, x, h);
      CHECK((model.grad_V(x) - gfd).norm() < 1e-7);
      const Mat<3> hfd = fd_hessian<3>(model.V, x, h);
      CHECK((model.hess_V(x) - hfd).norm() < 1e-5);
    }
  }

  SECTION("gaussian potential") {
    auto model = make_gaussian_v<2>(0.25, Vec<2>(0.2, 0.1), 0.6);
    for (const auto& x : sample_points<2>(rng, 25, 1.2)) {
      CHECK((model.grad_V(x) - fd_gradient<2>(model.V, x, h)).norm() < 1e-7);
      CHECK((model.hess_V(x) - fd_hessian<2>(model.V, x, h)).norm() < 1e-5);
    }
  }

  SECTION("magnetic bumps: dB against FD of B") {
    auto model2 = make_bump_b2(0.4, Vec<2>(-0.1, 0.15), 0.6);
    for (const auto& x : sample_points<2>(rng, 20, 1.0)) {
      const DTensor<2> t = model2.dB(x);
      for (int l = 0; l < 2; ++l) {
        auto Bl = [&](const Vec<2>& y) { return model2.B(y); };
        Vec<2> xp = x, xm = x;
        xp[l] += h;
        xm[l] -= h;
        const Mat<2> fd = (Bl(xp) - Bl(xm)) / (2.0 * h);
        CHECK((t[l] - fd).norm() < 1e-8);
      }
    }
    auto model3 = make_bump_b_potential<3>(0.3, Vec<3>(0.1, 0.0, -0.1), 0.6,
                                           Vec<3>(0.2, 1.0, -0.4));
    for (const auto& x : sample_points<3>(rng, 20, 1.0)) {
      const DTensor<3> t = model3.dB(x);
      for (int l = 0; l < 3; ++l) {
        Vec<3> xp = x, xm = x;
        xp[l] += h;
        xm[l] -= h;
        const Mat<3> fd = (model3.B(xp) - model3.B(xm)) / (2.0 * h);
        CHECK((t[l] - fd).norm() < 1e-7);
      }
    }
  }
}

TEST_CASE("truncated harmonic is exactly harmonic on its plateau", "[fields]") {
  auto model = make_truncated_harmonic_v<2>(1.0, Vec<2>::Zero(), 1.0);
  // Plateau covers |x| <= rho/2.
  const Vec<2> x(0.2, -0.3);
  CHECK(model.V(x) == Catch::Approx(0.5 * x.squaredNorm()).epsilon(1e-14));
  const Vec<2> F = eval_force(model, x, Vec<2>::Zero());
  CHECK((F + x).norm() < 1e-14);
  // Zero at and beyond the truncation radius.
  CHECK(model.V(Vec<2>(1.0, 0.0)) == 0.0);
  CHECK(model.V(Vec<2>(1.4, 0.2)) == 0.0);
}

TEST_CASE("magnetic closedness of built-ins", "[fields]") {
  Rng rng(7);
  const auto pts2 = sample_points<2>(rng, 40, 1.0);
  const auto pts3 = sample_points<3>(rng, 40, 1.0);

  CHECK(check_magnetic_closedness(make_constant_b2(0.7), pts2) < 1e-14);
  CHECK(check_magnetic_closedness(make_bump_b2(0.5, Vec<2>(0.1, 0.1), 0.6), pts2) < 1e-13);
  CHECK(check_magnetic_closedness(
            make_bump_b_potential<3>(0.5, Vec<3>::Zero(), 0.7, Vec<3>(1.0, 0.4, -0.2)),
            pts3) < 1e-13);

  Mat<3> B0 = Mat<3>::Zero();
  B0(0, 1) = 0.3; B0(1, 0) = -0.3;
  B0(1, 2) = -0.2; B0(2, 1) = 0.2;
  CHECK(check_magnetic_closedness(make_constant_b<3>(B0), pts3) < 1e-14);

  // A deliberately non-closed B (n = 3) must be caught.
  FieldModel<3> bad = make_constant_b<3>(B0);
  bad.B = [](const Vec<3>& x) {
    Mat<3> b = Mat<3>::Zero();
    b(0, 1) = x[2] * x[0];  // dB_{01}/dx_2 enters the cyclic sum asymmetrically
    b(1, 0) = -b(0, 1);
    return b;
  };
  bad.dB = [](const Vec<3>& x) {
    DTensor<3> t;
    for (auto& m : t) m.setZero();
    t[2](0, 1) = x[0];
    t[2](1, 0) = -x[0];
    t[0](0, 1) = x[2];
    t[0](1, 0) = -x[2];
    return t;
  };
  CHECK(check_magnetic_closedness(bad, pts3) > 0.01);
}

TEST_CASE("potential reconstructed from B has curl B", "[fields]") {
  Rng rng(23);

  SECTION("constant field: closed form") {
    auto model = make_constant_b2(0.8);
    auto A = potential_from_B(model, Vec<2>::Zero());
    for (const auto& x : sample_points<2>(rng, 10, 1.5)) {
      // -(1/2) B x = (-b x2 / 2, b x1 / 2).
      CHECK(A(x)[0] == Catch::Approx(-0.4 * x[1]).margin(1e-13));
      CHECK(A(x)[1] == Catch::Approx(0.4 * x[0]).margin(1e-13));
    }
  }

  SECTION("planar bump: d1 A2 - d2 A1 = B12") {
    auto model = make_bump_b2(0.5, Vec<2>(0.1, -0.1), 0.7);
    auto A = potential_from_B(model, Vec<2>::Zero());
    const double h = 1e-5;
    for (const auto& x : sample_points<2>(rng, 15, 1.0)) {
      auto A1 = [&](const Vec<2>& y) { return A(y)[0]; };
      auto A2 = [&](const Vec<2>& y) { return A(y)[1]; };
      const double curl = fd_gradient<2>(A2, x, h)[0] - fd_gradient<2>(A1, x, h)[1];
      CHECK(curl == Catch::Approx(model.B(x)(0, 1)).margin(1e-8));
    }
  }

  SECTION("3D bump from vector potential: d_i A_k - d_k A_i = B_{ik}") {
    auto model = make_bump_b_potential<3>(0.4, Vec<3>(0.0, 0.1, -0.05), 0.6,
                                          Vec<3>(0.5, -0.3, 1.0));
    auto A = potential_from_B(model, Vec<3>(0.2, 0.0, 0.0));
    const double h = 1e-5;
    for (const auto& x : sample_points<3>(rng, 10, 0.9)) {
      const Mat<3> jac = fd_jacobian<3>(A, x, h);
      const Mat<3> curl = jac.transpose() - jac;  // row i, col k: d_i A_k - d_k A_i
      CHECK((curl - model.B(x)).norm() < 1e-7);
      // The model's own potential must produce the same B.
      const Mat<3> jac_own = fd_jacobian<3>(model.A, x, h);
      CHECK(((jac_own.transpose() - jac_own) - model.B(x)).norm() < 1e-7);
    }
  }
}

TEST_CASE("field norms against a dense-grid oracle", "[fields]") {
  auto model = make_gaussian_v<2>(0.25, Vec<2>::Zero(), 0.5);
  auto domain = fixtures::unit_disk();
  const auto grid = interior_grid(domain, 65);  // odd count puts the peak on-grid

  const FieldNorms norms = field_norms(model, grid);
  // Peak amplitude sits at the center, which is a grid node.
  CHECK(norms.sup_V == Catch::Approx(0.25).epsilon(1e-12));
  CHECK(norms.sup_V_signed == Catch::Approx(0.25).epsilon(1e-12));
  CHECK(norms.sup_B == 0.0);
  CHECK(norms.sup_dB == 0.0);

  // Independent oracle: direct maxima over the same grid.
  double sup_g = 0.0, sup_h = 0.0;
  for (const auto& x : grid) {
    sup_g = std::max(sup_g, model.grad_V(x).lpNorm<Eigen::Infinity>());
    sup_h = std::max(sup_h, model.hess_V(x).cwiseAbs().maxCoeff());
  }
  CHECK(norms.sup_grad_V == Catch::Approx(sup_g));
  CHECK(norms.sup_hess_V == Catch::Approx(sup_h));
  CHECK(norms.beta == Catch::Approx(std::max({norms.sup_V, sup_g, sup_h})));
}

TEST_CASE("bump support containment and combination", "[fields]") {
  auto v = fixtures::bump_v_disk();
  auto b = fixtures::bump_b_disk();
  auto domain = fixtures::unit_disk();

  // Supports sit strictly inside the unit disk.
  for (const auto* m : {&v, &b}) {
    REQUIRE(m->has_support);
    CHECK(m->support_center.norm() + m->support_radius < 1.0);
  }
  // Fields vanish outside their support balls.
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const Vec<2> u = rng.unit_vector<2>();
    const Vec<2> x = v.support_center + (v.support_radius + rng.uniform(0.0, 1.0)) * u;
    CHECK(v.V(x) == 0.0);
    CHECK(v.grad_V(x).norm() == 0.0);
    const Vec<2> y = b.support_center + (b.support_radius + rng.uniform(0.0, 1.0)) * u;
    CHECK(b.B(y).norm() == 0.0);
  }

  auto mixed = combine_fields(v, b);
  REQUIRE(mixed.has_support);
  // Combined support ball contains both original balls.
  CHECK((v.support_center - mixed.support_center).norm() + v.support_radius <=
        mixed.support_radius + 1e-12);
  CHECK((b.support_center - mixed.support_center).norm() + b.support_radius <=
        mixed.support_radius + 1e-12);
  // And the combined model evaluates to the sum.
  const Vec<2> x(0.2, 0.05);
  CHECK(mixed.V(x) == Catch::Approx(v.V(x)));
  CHECK(mixed.B(x)(0, 1) == Catch::Approx(b.B(x)(0, 1)));
}

TEST_CASE("field model constructor errors", "[fields]") {
  Mat<2> not_antisym;
  not_antisym << 0.0, 1.0, 1.0, 0.0;
  CHECK_THROWS_AS(make_constant_b<2>(not_antisym), std::invalid_argument);
  CHECK_THROWS_AS(make_bump_v<2>(1.0, Vec<2>::Zero(), -0.5), std::invalid_argument);
  CHECK_THROWS_AS(make_gaussian_v<2>(1.0, Vec<2>::Zero(), 0.0), std::invalid_argument);
  auto rel = make_zero_field<2>();
  auto nonrel = make_zero_field<2>(Mode::nonrelativistic);
  CHECK_THROWS_AS(combine_fields(rel, nonrel), std::invalid_argument);
}
