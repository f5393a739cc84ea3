// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include "feasmap/config.hpp"
#include "feasmap/csv_io.hpp"
#include "feasmap/errors.hpp"
#include "feasmap/oracle.hpp"
#include "feasmap/pipeline.hpp"
#include "feasmap/region.hpp"
#include "feasmap/sampling.hpp"
#include "feasmap/setgeom.hpp"
#include "feasmap/svm.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>

using namespace feasmap;
namespace fs = std::filesystem;
using testing::vec;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::printf("criterion %2d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

void info(const std::string& detail) {
  std::printf("        info: %s\n", detail.c_str());
  std::fflush(stdout);
}

template <class F>
double timed(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int workers() { return static_cast<int>(std::clamp(std::thread::hardware_concurrency(), 1u, 8u)); }

std::size_t positives(const std::vector<LabeledSample>& s) {
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](const auto& x) { return x.label == 1; }));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const BoxSet kBox = BoxSet::symmetric(2, 2.0);
constexpr double kSigma = 0.8;
constexpr double kL = 10.0;

struct Trained {
  std::size_t n = 0;
  std::vector<LabeledSample> data;
  RegionModel region;
};

Trained train_region(std::vector<LabeledSample> data) {
  TrainConfig cfg;
  cfg.regularization_L = kL;
  SvmModel svm = train(data, KernelSpec{kSigma}, cfg);
  RegionModel region = make_region(std::move(svm), data, kBox);
  return {data.size(), std::move(data), std::move(region)};
}

void criterion1() {
  const OcpSpec spec = make_cart_spring_ocp(1.0, 0.5);
  FeasibilityResult r;
  const double t = timed([&] { r = solve_feasibility(spec, vec({0, 0})); });
  report(1, r.label == 1 && r.violation == 0.0 && t < 1.0,
         fmt("label %+d, violation %g, %.3f s (need +1, 0, < 1 s)", r.label, r.violation, t));
}

// Returns the nominal T=1, mu=0.5 labels of the 1024-point set for later criteria.
std::vector<LabeledSample> criteria2and3(const std::vector<Vector>& points) {
  const double N = static_cast<double>(points.size());
  LabelingResult base, wide, long_h;
  const double t_base = timed([&] { base = label_dataset(make_cart_spring_ocp(1.0, 0.5), points, workers()); });
  const double t_wide = timed([&] { wide = label_dataset(make_cart_spring_ocp(1.0, 0.9), points, workers()); });
  const double t_long = timed([&] { long_h = label_dataset(make_cart_spring_ocp(2.0, 0.5), points, workers()); });
  const std::size_t c_base = positives(base.samples), c_wide = positives(wide.samples), c_long = positives(long_h.samples);
  info(fmt("labeling with %d worker(s): T=1 mu=0.5 %.1f s, T=1 mu=0.9 %.1f s, T=2 mu=0.5 %.1f s", workers(), t_base,
           t_wide, t_long));
  report(2, static_cast<double>(c_wide) >= static_cast<double>(c_base) - 0.01 * N && t_base + t_wide <= 600.0,
         fmt("feasible mu=0.9: %zu, mu=0.5: %zu of %zu (need >= %.2f); %.1f s (<= 600 s)", c_wide, c_base,
             points.size(), static_cast<double>(c_base) - 0.01 * N, t_base + t_wide));
  report(3, static_cast<double>(c_long) >= static_cast<double>(c_base) - 0.01 * N && t_base + t_long <= 900.0,
         fmt("feasible T=2: %zu, T=1: %zu of %zu (need >= %.2f); %.1f s (<= 900 s)", c_long, c_base, points.size(),
             static_cast<double>(c_base) - 0.01 * N, t_base + t_long));
  return base.samples;
}

std::vector<LabeledSample> small_instance(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  std::vector<LabeledSample> data;
  for (std::size_t i = 0; i < n; ++i) data.push_back({vec({u(rng), u(rng)}), i % 2 == 0 ? 1 : -1, 0.0});
  return data;
}

void criterion4(const std::vector<Trained>& trained) {
  double worst_gap = 0.0, worst_balance = 0.0, worst_kkt = 0.0;
  bool bounds = true;
  int instances = 0;
  auto account = [&](const SvmModel& m, const std::vector<LabeledSample>& data, double L) {
    const auto k = testing::kkt_report(m, data, L);
    worst_balance = std::max(worst_balance, k.balance);
    worst_kkt = std::max(worst_kkt, k.max_residual);
    bounds = bounds && k.bounds_ok;
  };
  for (std::size_t n = 2; n <= 6; ++n) {
    for (double L : {1.0, 10.0}) {
      for (unsigned seed = 1; seed <= 3; ++seed) {
        const auto data = small_instance(n, static_cast<unsigned>(100 * n + seed));
        TrainConfig cfg;
        cfg.regularization_L = L;
        const SvmModel m = train(data, KernelSpec{kSigma}, cfg);
        const testing::DualOracle oracle(data, kSigma, L);
        const double brute = oracle.solve(L / (n >= 5 ? 20.0 : 100.0));
        worst_gap = std::max(worst_gap, std::abs(m.dual_objective() - brute));
        account(m, data, L);
        ++instances;
      }
    }
  }
  for (const auto& t : trained) account(t.region.svm(), t.data, kL);
  report(4, worst_gap <= 1e-4 && worst_balance <= 1e-8 && bounds && worst_kkt <= 1e-3,
         fmt("%d small instances: max |dual - oracle| %.2e (<= 1e-4); %zu trained models + small: max |sum a y| "
             "%.2e (<= 1e-8), bounds %s, max KKT residual %.2e (<= 1e-3)",
             instances, worst_gap, trained.size(), worst_balance, bounds ? "exact" : "VIOLATED", worst_kkt));
}

void criterion5(const std::vector<Trained>& trained) {
  std::size_t bad = 0;
  std::string counts;
  for (const auto& t : trained) {
    std::size_t here = 0;
    for (const auto& s : t.data) {
      const double v = t.region.svm().decision_value(s.state);
      if (s.label == -1 && v > t.region.eps_plus()) ++here;
      if (s.label == 1 && v < t.region.eps_minus()) ++here;
    }
    bad += here;
    counts += fmt(" N=%zu:%zu", t.n, here);
  }
  report(5, bad == 0, "opposite-class samples inside calibrated sets" + counts + " (need 0)");
}

void criterion6(const std::vector<Trained>& trained, const std::vector<LabeledSample>& probe) {
  std::vector<double> acc, band;
  std::string detail;
  for (const auto& t : trained) {
    std::size_t correct = 0, in_band = 0;
    for (const auto& s : probe) {
      const double v = t.region.svm().decision_value(s.state);
      correct += (v >= 0.0 ? 1 : -1) == s.label;
      in_band += v >= t.region.eps_minus() && v <= t.region.eps_plus();
    }
    acc.push_back(static_cast<double>(correct) / static_cast<double>(probe.size()));
    band.push_back(static_cast<double>(in_band) / static_cast<double>(probe.size()));
    detail += fmt(" N=%zu acc %.4f band %.4f;", t.n, acc.back(), band.back());
  }
  bool ok = true;
  for (std::size_t i = 1; i < trained.size(); ++i) {
    ok = ok && acc[i] >= acc[i - 1] - 0.02 && band[i] <= band[i - 1] + 0.02;
  }
  report(6, ok, fmt("%zu-point probe:", probe.size()) + detail + " slack 0.02");
}

void criterion7() {
  const SystemModel model = make_cart_spring();
  const Matrix K = cart_spring_feedback_gain();
  auto run = [&](const Matrix& P, RciReport& r, double& expected, double& level) {
    const EllipsoidSet omega(P, 0.5);
    const ErodedEllipsoid eroded = erode_ellipsoid(omega, 0.01);
    const double lmax = Eigen::SelfAdjointEigenSolver<Matrix>(P).eigenvalues().maxCoeff();
    expected = std::pow(std::sqrt(0.5) - 0.01 * std::sqrt(lmax), 2);
    level = eroded.eroded_level;
    RciOptions opt;
    opt.n_trials = 100;
    opt.horizon = 10.0;
    opt.workers = workers();
    return timed([&] { r = verify_rci(model, eroded, K, opt); });
  };
  RciReport r;
  double expected = 0, level = 0;
  const double t = run(cart_spring_terminal_matrix(), r, expected, level);
  report(7, r.exits == 0 && std::abs(level - expected) <= 1e-12 && t < 60.0,
         fmt("P12=+2.2731: mu0 %.6f (formula %.6f), %d trajectories, %d exits (%d random, %d adversarial), "
             "max level ratio %.3f, %.1f s (< 60 s)",
             level, expected, r.trajectories, r.exits, r.random_exits, r.adversarial_exits, r.max_level_ratio, t));
  RciReport printed;
  run(cart_spring_printed_terminal_matrix(), printed, expected, level);
  info(fmt("with the off-diagonal sign as printed (P12=-2.2731): %d of %d trajectories exit; see README", printed.exits,
           printed.trajectories));
}

void criterion8() {
  const Matrix P = cart_spring_terminal_matrix();
  const EllipsoidSet omega(P, 0.5);
  const double w_bar = 0.01;
  const ErodedEllipsoid eroded = erode_ellipsoid(omega, w_bar);
  double min_dist = std::numeric_limits<double>::infinity();
  const auto pts = ellipsoid_uniform_points(eroded.inner(), 10000, 8);
  for (const auto& x : pts) min_dist = std::min(min_dist, dist_to_ellipsoid_boundary(omega, x));

  std::mt19937_64 rng(88);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  int queries = 0;
  while (queries < 100) {
    const Vector x = vec({u(rng), u(rng)});
    if (!ellipsoid_contains(omega, x)) continue;
    worst = std::max(worst, std::abs(dist_to_ellipsoid_boundary(omega, x) -
                                     testing::sampled_boundary_distance(P, 0.5, x, 20000)));
    ++queries;
  }
  report(8, pts.size() == 10000 && min_dist >= w_bar - 1e-9 && worst <= 1e-6,
         fmt("%zu eroded samples, min boundary distance %.6f (>= %.6f); %d queries, max |dist - oracle| %.2e "
             "(<= 1e-6)",
             pts.size(), min_dist, w_bar - 1e-9, queries, worst));
}

void criterion9(Trained& t, const std::vector<LabeledSample>& probe) {
  extract_boundary(t.region, 200, workers());
  std::vector<std::size_t> counts;
  std::size_t violations = 0;
  for (double w_bar : {0.0, 0.01, 0.1}) {
    t.region.set_w_bar(w_bar);
    std::size_t robust = 0;
    for (std::size_t i = 0; i < 1000; ++i) {
      const Vector& x = probe[i].state;
      if (classify(t.region, x) != Membership::robust_inner) continue;
      ++robust;
      if (!(t.region.svm().decision_value(x) > t.region.eps_plus())) ++violations;
    }
    counts.push_back(robust);
  }
  const bool monotone = counts[0] >= counts[1] && counts[1] >= counts[2];
  report(9, violations == 0 && monotone,
         fmt("1000 probes, N=%zu region: robust_inner counts %zu / %zu / %zu for w=0 / 0.01 / 0.1, %zu outside inner",
             t.n, counts[0], counts[1], counts[2], violations));
}

void criterion10() {
  const double d64 = star_discrepancy_unit(halton(64, 2)).value;
  const double d256 = star_discrepancy_unit(halton(256, 2)).value;
  const double d1024 = star_discrepancy_unit(halton(1024, 2)).value;

  const SystemModel decay = testing::decay_model();
  auto error = [&](double dt) {
    Rk4Stepper stepper(decay);
    std::vector<double> x{1.0}, u{0.0}, w{0.0};
    const int steps = static_cast<int>(std::lround(1.0 / dt));
    for (int k = 0; k < steps; ++k) stepper.step(x, u, w, dt);
    return std::abs(x[0] - std::exp(-1.0));
  };
  const double ratio = error(0.1) / error(0.05);
  report(10, d1024 < d256 && d256 < d64 && ratio >= 12.0 && ratio <= 20.0,
         fmt("D*(64) %.5f > D*(256) %.5f > D*(1024) %.5f; RK4 error ratio dt 0.1 -> 0.05: %.3f (in [12, 20])", d64,
             d256, d1024, ratio));
}

void criterion11() {
  const fs::path root = fs::temp_directory_path() / "feasmap_acceptance";
  fs::remove_all(root);
  RunConfig a = load_config(fs::path(FEASMAP_PRESET_DIR) / "fig1.cfg");
  a.workers = workers();
  RunConfig b = a;
  a.output_dir = root / "a";
  b.output_dir = root / "b";
  double t = timed([&] {
    run_pipeline(a);
    run_pipeline(b);
  });
  const bool labels_same = slurp(a.output_dir / "labels.csv") == slurp(b.output_dir / "labels.csv") &&
                           !slurp(a.output_dir / "labels.csv").empty();

  TrainConfig cfg;
  cfg.regularization_L = a.regularization_L;
  cfg.kkt_tol = a.kkt_tol;
  cfg.seed = a.seed;
  const SvmModel fresh = train(read_labels_csv(a.output_dir / "labels.csv"), KernelSpec{a.sigma}, cfg);
  save_model(fresh, root / "fresh.svm");
  const SvmModel reloaded = load_model(root / "fresh.svm");
  const SvmModel run_a = load_model(a.output_dir / "model.svm");
  const SvmModel run_b = load_model(b.output_dir / "model.svm");
  double worst = 0.0;
  for (const auto& x : halton_samples(4096, kBox, kProbeStartIndex).points) {
    const double v = fresh.decision_value(x);
    worst = std::max({worst, std::abs(v - reloaded.decision_value(x)), std::abs(v - run_a.decision_value(x)),
                      std::abs(v - run_b.decision_value(x))});
  }
  report(11, labels_same && worst <= 1e-12,
         fmt("two fig1 runs: labels.csv %s; max decision difference over 4096 probes after persistence %.2e "
             "(<= 1e-12); %.1f s",
             labels_same ? "byte-identical" : "DIFFER", worst, t));
  fs::remove_all(root);
}

}  // namespace

int main() {
  try {
    testing::WarningCapture quiet;
    criterion1();

    const auto points = halton_samples(1024, kBox).points;
    const auto base = criteria2and3(points);

    const auto probe_points = halton_samples(4096, kBox, kProbeStartIndex).points;
    LabelingResult probe;
    const double t_probe =
        timed([&] { probe = label_dataset(make_cart_spring_ocp(1.0, 0.5), probe_points, workers()); });
    info(fmt("probe set: %zu points labeled by the oracle in %.1f s, %zu feasible", probe.samples.size(), t_probe,
             positives(probe.samples)));

    std::vector<Trained> trained;
    for (std::size_t n : {256, 512, 1024}) {
      trained.push_back(train_region(std::vector<LabeledSample>(base.begin(), base.begin() + static_cast<long>(n))));
    }
    criterion4(trained);
    criterion5(trained);
    criterion6(trained, probe.samples);
    criterion7();
    criterion8();
    criterion9(trained.back(), probe.samples);
    criterion10();
    criterion11();
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%d criterion failure(s)\n", failures);
  return failures == 0 ? 0 : 1;
}
