#include "feasmap/errors.hpp"
#include "feasmap/setgeom.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace feasmap;
using testing::sampled_boundary_distance;
using testing::vec;

namespace {

Matrix diag2(double a, double b) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

// Smallest |w| for which dV/dt > 0 somewhere on the surface of {x^T P x = level} under
// u = -Kx, V = x^T P x. Below it the level set cannot be crossed by any disturbance signal.
double invariance_threshold(double level) {
  const SystemModel model = make_cart_spring();
  const Matrix P = cart_spring_terminal_matrix();
  const Matrix K = cart_spring_feedback_gain();
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 100000; ++k) {
    const double t = 2 * std::numbers::pi * k / 100000;
    Eigen::SelfAdjointEigenSolver<Matrix> es(P);
    const Vector x = es.eigenvectors() * vec({std::sqrt(level / es.eigenvalues()[0]) * std::cos(t),
                                              std::sqrt(level / es.eigenvalues()[1]) * std::sin(t)});
    const Vector f = eval_rhs(model, x, -K * x);
    best = std::min(best, -2 * x.dot(P * f) / (2 * std::abs((P * x)[1])));
  }
  return best;
}

}  // namespace

TEST_CASE("ellipsoid validation and containment") {
  CHECK_THROWS_AS(EllipsoidSet(diag2(1, -1), 1.0), InvalidArgument);
  Matrix asym = diag2(1, 1);
  asym(0, 1) = 1e-6;
  CHECK_THROWS_AS(EllipsoidSet(asym, 1.0), InvalidArgument);
  CHECK_THROWS_AS(EllipsoidSet(diag2(1, 1), 0.0), InvalidArgument);

  const EllipsoidSet unit(diag2(1, 1), 1.0);
  CHECK(ellipsoid_contains(unit, vec({0, 0})));
  CHECK(ellipsoid_contains(unit, vec({1, 0})));
  CHECK_FALSE(ellipsoid_contains(unit, vec({1.1, 0})));
  CHECK_THROWS_AS(ellipsoid_contains(unit, vec({0, 0, 0})), InvalidArgument);
  CHECK(ellipsoid_contains(EllipsoidSet(cart_spring_terminal_matrix(), 0.5), vec({0, 0})));
}

TEST_CASE("distance examples") {
  CHECK(dist_to_ellipsoid_boundary(EllipsoidSet(diag2(1, 1), 4.0), vec({1, 0})) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(dist_to_ellipsoid_boundary(EllipsoidSet(diag2(1, 1), 1.0), vec({0, 0})) == doctest::Approx(1.0).epsilon(1e-12));
  const EllipsoidSet e(diag2(4, 1), 4.0);
  CHECK(dist_to_ellipsoid_boundary(e, vec({0, 0})) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sampled_boundary_distance(diag2(4, 1), 4.0, vec({0, 0}), 1000000) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS_AS(dist_to_ellipsoid_boundary(e, vec({3, 0})), OutOfDomain);

  const EllipsoidSet cart(cart_spring_terminal_matrix(), 0.5);
  CHECK(dist_to_ellipsoid_boundary(cart, vec({0, 0})) ==
        doctest::Approx(std::sqrt(0.5 / cart.max_eigenvalue())).epsilon(1e-12));
}

TEST_CASE("distance agrees with dense boundary sampling") {
  std::vector<std::pair<Matrix, double>> sets = {
      {cart_spring_terminal_matrix(), 0.5}, {diag2(4, 1), 4.0}, {diag2(25, 1), 1.0}};
  Matrix tilted(2, 2);
  tilted << 3.0, 1.4, 1.4, 1.0;
  sets.emplace_back(tilted, 0.7);
  double worst = 0.0;
  for (std::size_t s = 0; s < sets.size(); ++s) {
    const EllipsoidSet set(sets[s].first, sets[s].second);
    for (const auto& x : ellipsoid_uniform_points(set, 25, 11 + s)) {
      const double got = dist_to_ellipsoid_boundary(set, x);
      const double want = sampled_boundary_distance(sets[s].first, sets[s].second, x, 20000);
      worst = std::max(worst, std::abs(got - want));
    }
  }
  MESSAGE("max |analytic - sampled| distance: " << worst);
  CHECK(worst <= 1e-6);
}

TEST_CASE("erosion level formula") {
  const EllipsoidSet unit(diag2(1, 1), 1.0);
  CHECK(erode_ellipsoid(unit, 0.1).eroded_level == doctest::Approx(0.81).epsilon(1e-14));
  CHECK(erode_ellipsoid(unit, 0.0).eroded_level == 1.0);

  const EllipsoidSet cart(cart_spring_terminal_matrix(), 0.5);
  const double lmax = Eigen::SelfAdjointEigenSolver<Matrix>(cart_spring_terminal_matrix()).eigenvalues().maxCoeff();
  const ErodedEllipsoid e = erode_ellipsoid(cart, 0.01);
  CHECK(e.eroded_level == doctest::Approx(std::pow(std::sqrt(0.5) - 0.01 * std::sqrt(lmax), 2)).epsilon(1e-14));
  CHECK(e.eroded_level < 0.5);
  CHECK(e.margin == 0.01);

  double previous = 0.5;
  for (double w = 0.02; w < 0.28; w += 0.02) {
    const double level = erode_ellipsoid(cart, w).eroded_level;
    CHECK(level < previous);
    previous = level;
  }
  try {
    erode_ellipsoid(cart, 0.3);
    FAIL("expected empty erosion");
  } catch (const EmptyErosion& err) {
    CHECK(err.max_admissible_margin() == doctest::Approx(std::sqrt(0.5 / lmax)));
  }
  CHECK_THROWS_AS(erode_ellipsoid(cart, -0.1), InvalidArgument);
}

TEST_CASE("eroded points keep the margin") {
  for (double w : {0.01, 0.1}) {
    const EllipsoidSet cart(cart_spring_terminal_matrix(), 0.5);
    const ErodedEllipsoid e = erode_ellipsoid(cart, w);
    const auto pts = ellipsoid_uniform_points(e.inner(), 10000, 2);
    double smallest = std::numeric_limits<double>::infinity();
    for (const auto& x : pts) {
      REQUIRE(ellipsoid_contains(e.inner(), x));
      REQUIRE(ellipsoid_contains(cart, x));
      smallest = std::min(smallest, dist_to_ellipsoid_boundary(cart, x));
    }
    CHECK(smallest >= w - 1e-9);
  }
  const EllipsoidSet unit(diag2(1, 1), 1.0);
  for (const auto& x : ellipsoid_boundary_points(erode_ellipsoid(unit, 0.1).inner(), 64)) {
    CHECK(dist_to_ellipsoid_boundary(unit, x) == doctest::Approx(0.1).epsilon(1e-9));
  }
}

TEST_CASE("sample generators") {
  const EllipsoidSet cart(cart_spring_terminal_matrix(), 0.5);
  for (const auto& x : ellipsoid_boundary_points(cart, 100)) CHECK(cart.quadratic(x) == doctest::Approx(0.5).epsilon(1e-12));
  const auto a = ellipsoid_uniform_points(cart, 4000, 1);
  const auto b = ellipsoid_uniform_points(cart, 4000, 1);
  std::size_t inner_half = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK((a[i].array() == b[i].array()).all());
    inner_half += cart.quadratic(a[i]) <= 0.25 * 0.5;
  }
  // Uniform in a 2-D ellipsoid: the half-radius ellipsoid holds a quarter of the mass.
  CHECK(static_cast<double>(inner_half) / 4000.0 == doctest::Approx(0.25).epsilon(0.1));
}

TEST_CASE("invariance of the eroded terminal set") {
  const SystemModel model = make_cart_spring();
  const ErodedEllipsoid e = erode_ellipsoid(EllipsoidSet(cart_spring_terminal_matrix(), 0.5), 0.01);
  RciOptions opts;
  const RciReport r = verify_rci(model, e, cart_spring_feedback_gain(), opts);
  CHECK(r.trajectories == 200);
  CHECK(r.exits == 0);
  CHECK(r.input_violations == 0);
  CHECK(r.max_level_ratio <= 1.0);

  opts.disturbance_amplitude = 0.0;
  const RciReport nominal = verify_rci(model, e, cart_spring_feedback_gain(), opts);
  CHECK(nominal.exits == 0);
}

TEST_CASE("exits appear only above the analytic invariance threshold") {
  const double threshold = invariance_threshold(0.5);
  MESSAGE("Omega(0.5) is invariant for every |w| < " << threshold);
  CHECK(threshold > 0.1);

  const SystemModel model = make_cart_spring();
  const ErodedEllipsoid e = erode_ellipsoid(EllipsoidSet(cart_spring_terminal_matrix(), 0.5), 0.01);
  RciOptions opts;
  opts.disturbance_amplitude = 0.9 * threshold;
  CHECK(verify_rci(model, e, cart_spring_feedback_gain(), opts).exits == 0);
  opts.disturbance_amplitude = 1.25 * threshold;
  const RciReport above = verify_rci(model, e, cart_spring_feedback_gain(), opts);
  MESSAGE("|w| = " << opts.disturbance_amplitude << ": exits=" << above.exits);
  CHECK(above.exits > 0);
  CHECK(above.adversarial_exits >= above.random_exits);
}

// Expected outcome as originally specified. The threshold above shows it cannot occur for the
// cart-spring closed loop, so the case is allowed to fail.
TEST_CASE("ten-fold disturbance produces exits" * doctest::may_fail()) {
  const SystemModel model = make_cart_spring();
  const ErodedEllipsoid e = erode_ellipsoid(EllipsoidSet(cart_spring_terminal_matrix(), 0.5), 0.01);
  RciOptions opts;
  opts.disturbance_amplitude = 0.1;
  const RciReport r = verify_rci(model, e, cart_spring_feedback_gain(), opts);
  MESSAGE("|w| = 0.1: exits=" << r.exits << " max level ratio=" << r.max_level_ratio);
  CHECK(r.exits > 0);
}
