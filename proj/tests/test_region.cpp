#include "feasmap/errors.hpp"
#include "feasmap/region.hpp"
#include "feasmap/sampling.hpp"
#include "feasmap/svm.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

using namespace feasmap;
using testing::vec;

namespace {

constexpr double kSigma = 0.8;

// phi(x) = 10 exp(-x^2 / (2 sigma^2)) - 5 on [-10, 10]; position that produces a given score.
SvmModel bump_model() { return SvmModel({vec({0.0})}, {10.0}, {1}, -5.0, KernelSpec{kSigma}, 10.0, 1); }

Vector at_score(double score) { return vec({std::sqrt(-2 * kSigma * kSigma * std::log((score + 5.0) / 10.0))}); }

std::vector<LabeledSample> scored(std::vector<double> neg, std::vector<double> pos) {
  std::vector<LabeledSample> out;
  for (double s : neg) out.push_back({at_score(s), -1, 0.0});
  for (double s : pos) out.push_back({at_score(s), 1, 0.0});
  return out;
}

// phi(x) = exp(-|x|^2 / (2 sigma^2)) - exp(-1 / (2 sigma^2)): zero exactly on the unit circle.
RegionModel circle_region(double w_bar = 0.0) {
  SvmModel svm({vec({0, 0})}, {1.0}, {1}, -std::exp(-1.0 / (2 * kSigma * kSigma)), KernelSpec{kSigma}, 10.0, 1);
  return RegionModel(std::move(svm), {1e-6, -1e-6}, BoxSet::symmetric(2, 2.0), w_bar);
}

RegionModel constant_region(double bias, Thresholds t) {
  return RegionModel(SvmModel({}, {}, {}, bias, KernelSpec{kSigma}, 10.0, 0), t, BoxSet::symmetric(2, 2.0));
}

double hausdorff(const std::vector<Vector>& a, const std::vector<Vector>& b) {
  auto directed = [](const std::vector<Vector>& p, const std::vector<Vector>& q) {
    double worst = 0.0;
    for (const auto& x : p) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& y : q) best = std::min(best, (x - y).norm());
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(directed(a, b), directed(b, a));
}

// Disk-labeled data with a few flipped labels so calibration has work to do.
std::vector<LabeledSample> noisy_disk(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<LabeledSample> out;
  for (const auto& x : halton_samples(n, BoxSet::symmetric(2, 2.0)).points) {
    int y = x.norm() <= 1.2 ? 1 : -1;
    if (std::abs(x.norm() - 1.2) < 0.3 && u(rng) < 0.2) y = -y;
    out.push_back({x, y, 0.0});
  }
  return out;
}

}  // namespace

TEST_CASE("score fixture") {
  for (double s : {-1.2, -0.3, 0.05, 0.4, 1.1}) CHECK(bump_model().decision_value(at_score(s)) == doctest::Approx(s).epsilon(1e-12));
}

TEST_CASE("strict calibration examples") {
  const SvmModel m = bump_model();
  const Thresholds clean = calibrate(m, scored({-1.2, -0.3}, {0.4, 1.1}), 1e-6);
  CHECK(clean.eps_plus == doctest::Approx(1e-6).epsilon(1e-9));
  CHECK(clean.eps_minus == doctest::Approx(-1e-6).epsilon(1e-9));

  const Thresholds up = calibrate(m, scored({-1.2, 0.05}, {0.4, 1.1}), 1e-6);
  CHECK(up.eps_plus == doctest::Approx(0.050001).epsilon(1e-9));

  const Thresholds down = calibrate(m, scored({-1.2, -0.3}, {-0.07, 0.9}), 1e-6);
  CHECK(down.eps_minus == doctest::Approx(-0.070001).epsilon(1e-9));

  CHECK_THROWS_AS(calibrate(m, scored({}, {0.4, 1.1})), InvalidArgument);
  CHECK_THROWS_AS(calibrate(m, scored({-0.4}, {})), InvalidArgument);
}

TEST_CASE("margin calibration") {
  const Thresholds t = calibrate(bump_model(), scored({-1.2, -0.3}, {0.4, 1.1}), 1e-6, CalibrationMode::margin);
  CHECK(t.eps_plus == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(t.eps_minus == doctest::Approx(-0.3).epsilon(1e-12));
  CHECK(parse_calibration_mode("margin") == CalibrationMode::margin);
  CHECK(to_string(CalibrationMode::strict) == "strict");
  CHECK_THROWS_AS(parse_calibration_mode("loose"), InvalidArgument);
}

TEST_CASE("classification verdicts") {
  const Thresholds t{0.05, -0.05};
  CHECK(classify(constant_region(0.15, t), vec({0, 0})) == Membership::inner);
  CHECK(classify(constant_region(0.0, t), vec({1, 1})) == Membership::band);
  CHECK(classify(constant_region(-0.15, t), vec({1, 1})) == Membership::outer);
  CHECK_THROWS_AS(classify(constant_region(0.0, t), vec({2.5, 0})), OutOfDomain);
  CHECK_THROWS_AS(classify(constant_region(0.0, t), vec({0, 0, 0})), InvalidArgument);
  CHECK_THROWS_AS(constant_region(0.0, {-0.1, -0.2}), InvalidArgument);
  CHECK(to_string(Membership::robust_inner) == "robust_inner");
}

TEST_CASE("boundary of the unit-circle surrogate") {
  RegionModel region = circle_region();
  const BoundaryExtraction b = extract_boundary(region, 64);
  REQUIRE_FALSE(b.empty);
  CHECK(b.points.size() > 100);
  double worst = 0.0;
  for (const auto& p : b.points) {
    worst = std::max(worst, std::abs(p.norm() - 1.0));
    CHECK(std::abs(region.svm().decision_value(p)) <= 1e-6);
  }
  MESSAGE("max radius error: " << worst);
  CHECK(worst <= 1e-6);
  CHECK(region.boundary_cloud().size() == b.points.size());

  // Same result with several workers.
  RegionModel again = circle_region();
  const BoundaryExtraction c = extract_boundary(again, 64, 3);
  REQUIRE(c.points.size() == b.points.size());
  for (std::size_t i = 0; i < c.points.size(); ++i) CHECK((c.points[i].array() == b.points[i].array()).all());
}

TEST_CASE("boundary refines with resolution") {
  RegionModel region = circle_region();
  const auto c32 = extract_boundary(region, 32).points;
  const auto c64 = extract_boundary(region, 64).points;
  const auto c128 = extract_boundary(region, 128).points;
  const double h1 = hausdorff(c32, c64);
  const double h2 = hausdorff(c64, c128);
  MESSAGE("Hausdorff 32/64: " << h1 << "  64/128: " << h2);
  CHECK(h2 < h1);
}

TEST_CASE("no sign change gives an empty cloud") {
  RegionModel region = constant_region(0.5, {1e-6, -1e-6});
  testing::WarningCapture capture;
  const BoundaryExtraction b = extract_boundary(region, 32);
  CHECK(b.empty);
  CHECK(capture.messages.size() == 1);
  CHECK(b.points.empty());
  CHECK_THROWS_AS(extract_boundary(region, 0), InvalidArgument);
}

TEST_CASE("robust membership on the circle surrogate") {
  RegionModel region = circle_region();
  CHECK_THROWS_AS(erode_region(region, 0.2), StateError);
  CHECK_THROWS_AS(region.distance_to_boundary(vec({0, 0})), StateError);
  extract_boundary(region, 200);
  const RobustPredicate robust = erode_region(region, 0.2);
  CHECK(robust(vec({0.5, 0})));
  CHECK_FALSE(robust(vec({0.9, 0})));
  CHECK(region.distance_to_boundary(vec({0.5, 0})) == doctest::Approx(0.5).epsilon(1e-3));
  CHECK_THROWS_AS(erode_region(region, -0.1), InvalidArgument);

  region.set_w_bar(0.2);
  CHECK(classify(region, vec({0.5, 0})) == Membership::robust_inner);
  CHECK(classify(region, vec({0.9, 0})) == Membership::inner);
  CHECK(classify(region, vec({1.5, 0})) == Membership::outer);
}

TEST_CASE("robust nesting and monotonicity on a trained region") {
  const auto data = noisy_disk(512, 3);
  RegionModel region = make_region(train(data, KernelSpec{kSigma}, TrainConfig{}), data, BoxSet::symmetric(2, 2.0));
  extract_boundary(region, 150);
  const auto probe = halton_samples(1000, region.domain(), 5000).points;

  const RobustPredicate zero = erode_region(region, 0.0);
  std::size_t previous = probe.size() + 1;
  for (double w : {0.0, 0.01, 0.1, 0.3}) {
    const RobustPredicate robust = erode_region(region, w);
    std::size_t count = 0;
    for (const auto& x : probe) {
      const bool inner = region.svm().decision_value(x) > region.eps_plus();
      if (robust(x)) {
        ++count;
        CHECK(inner);
      }
      if (w == 0.0) CHECK(zero(x) == inner);
    }
    CHECK(count <= previous);
    previous = count;
  }
}

TEST_CASE("strictness and nesting after calibration") {
  for (unsigned seed : {1u, 2u, 3u}) {
    const auto data = noisy_disk(400, seed);
    for (double L : {0.5, 10.0}) {
      TrainConfig cfg;
      cfg.regularization_L = L;
      const SvmModel svm = train(data, KernelSpec{kSigma}, cfg);
      const RegionModel region = make_region(svm, data, BoxSet::symmetric(2, 2.0));
      CHECK(region.eps_minus() <= 0.0);
      CHECK(region.eps_plus() >= 0.0);
      std::size_t violations = 0;
      for (const auto& s : data) {
        const Membership m = classify(region, s.state);
        violations += (s.label == -1 && m == Membership::inner) || (s.label == 1 && m == Membership::outer);
      }
      CHECK(violations == 0);
      const auto probe = halton_samples(800, region.domain(), 9000).points;
      for (const auto& x : probe) {
        const Membership m = classify(region, x);
        if (m == Membership::inner) CHECK(svm.predict(x) == 1);
        if (m == Membership::outer) CHECK(svm.predict(x) == -1);
      }
      const RegionReport report = region_metrics(region, probe, data);
      CHECK(report.strictness_violations == 0);
      CHECK(report.inner_fraction + report.band_fraction + report.outer_fraction == doctest::Approx(1.0));
      CHECK(report.probes == 800);
    }
  }
}

TEST_CASE("trained boundary lies on the zero level set") {
  const auto data = noisy_disk(300, 8);
  RegionModel region = make_region(train(data, KernelSpec{kSigma}, TrainConfig{}), data, BoxSet::symmetric(2, 2.0));
  const BoundaryExtraction b = extract_boundary(region, 100, 2);
  REQUIRE_FALSE(b.empty);
  for (const auto& p : b.points) CHECK(std::abs(region.svm().decision_value(p)) <= 1e-6);
}

TEST_CASE("band shrinks as the sample grows") {
  auto band = [](std::size_t n) {
    std::vector<LabeledSample> data;
    for (const auto& x : halton_samples(n, BoxSet::symmetric(2, 2.0)).points) {
      data.push_back({x, x.norm() <= 1.2 ? 1 : -1, 0.0});
    }
    const RegionModel region = make_region(train(data, KernelSpec{kSigma}, TrainConfig{}), data, BoxSet::symmetric(2, 2.0));
    return region_metrics(region, halton_samples(4096, region.domain(), 100001).points, data).band_fraction;
  };
  const double b256 = band(256), b1024 = band(1024);
  MESSAGE("band fraction N=256: " << b256 << "  N=1024: " << b1024);
  CHECK(b1024 <= b256 + 0.02);
}

TEST_CASE("region persistence") {
  const auto data = noisy_disk(200, 4);
  RegionModel region = make_region(train(data, KernelSpec{kSigma}, TrainConfig{}), data, BoxSet::symmetric(2, 2.0), 1e-6,
                                   CalibrationMode::strict);
  extract_boundary(region, 40);
  region.set_w_bar(0.05);
  const auto path = std::filesystem::temp_directory_path() / "feasmap_test_region.rgn";
  save_region(region, path);
  const RegionModel back = load_region(path);
  CHECK(back.eps_plus() == region.eps_plus());
  CHECK(back.eps_minus() == region.eps_minus());
  CHECK(back.w_bar() == 0.05);
  CHECK(back.calibration_mode() == CalibrationMode::strict);
  REQUIRE(back.boundary_cloud().size() == region.boundary_cloud().size());
  for (const auto& x : halton_samples(300, region.domain(), 321).points) {
    CHECK(back.svm().decision_value(x) == region.svm().decision_value(x));
    CHECK(classify(back, x) == classify(region, x));
  }
  std::filesystem::remove(path);
}
