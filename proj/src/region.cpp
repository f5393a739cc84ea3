#include "feasmap/region.hpp"

#include "feasmap/errors.hpp"
#include "feasmap/parallel.hpp"

#include "svm_json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace feasmap {

namespace {

constexpr const char* kRegionFormat = "feasmap-region";
constexpr int kRegionVersion = 1;
constexpr double kBisectionTolerance = 1e-10;
constexpr std::size_t kRaySeedProbes = 4096;

// Shrinks [a, b] (phi(a) and phi(b) of opposite sign) around the zero crossing.
Vector bisect(const SvmModel& svm, Vector a, Vector b) {
  const bool a_positive = svm.decision_value(a) >= 0.0;
  while ((b - a).norm() > kBisectionTolerance) {
    Vector mid = 0.5 * (a + b);
    const double v = svm.decision_value(mid);
    if (v == 0.0) return mid;
    if ((v >= 0.0) == a_positive) {
      a = std::move(mid);
    } else {
      b = std::move(mid);
    }
  }
  return 0.5 * (a + b);
}

std::vector<Vector> lattice_crossings(const SvmModel& svm, const BoxSet& box, int res, int workers) {
  const auto nodes = static_cast<std::size_t>(res + 1);
  const Vector lo = box.lower();
  const Vector step = (box.upper() - box.lower()) / res;
  auto node = [&](std::size_t i, std::size_t j) {
    Vector p(2);
    p << lo[0] + static_cast<double>(i) * step[0], lo[1] + static_cast<double>(j) * step[1];
    return p;
  };
  std::vector<std::vector<double>> phi(nodes, std::vector<double>(nodes));
  parallel_for(nodes, workers, [&](std::size_t i) {
    for (std::size_t j = 0; j < nodes; ++j) phi[i][j] = svm.decision_value(node(i, j));
  });

  // Crossings per lattice row so rows can be processed independently.
  std::vector<std::vector<Vector>> rows(nodes);
  parallel_for(nodes, workers, [&](std::size_t i) {
    for (std::size_t j = 0; j < nodes; ++j) {
      const bool here = phi[i][j] >= 0.0;
      if (i + 1 < nodes && here != (phi[i + 1][j] >= 0.0)) rows[i].push_back(bisect(svm, node(i, j), node(i + 1, j)));
      if (j + 1 < nodes && here != (phi[i][j + 1] >= 0.0)) rows[i].push_back(bisect(svm, node(i, j), node(i, j + 1)));
    }
  });
  std::vector<Vector> out;
  for (auto& r : rows) {
    for (auto& p : r) out.push_back(std::move(p));
  }
  return out;
}

std::vector<Vector> ray_crossings(const SvmModel& svm, const BoxSet& box, int res) {
  const int dim = box.dimension();
  const SampleSet probes = halton_samples(kRaySeedProbes, box);
  const Vector* seed = nullptr;
  double best = 0.0;
  for (const auto& p : probes.points) {
    const double v = svm.decision_value(p);
    if (v > best) {
      best = v;
      seed = &p;
    }
  }
  if (seed == nullptr) return {};

  std::vector<Vector> directions;
  if (dim == 1) {
    directions = {Vector::Constant(1, 1.0), Vector::Constant(1, -1.0)};
  } else {
    const std::size_t count = static_cast<std::size_t>(res) * static_cast<std::size_t>(res);
    std::uint64_t index = 1;
    while (directions.size() < count) {
      Vector d = Vector::Constant(dim, -1.0) + 2.0 * halton(1, dim, index++).front();
      const double norm = d.norm();
      if (norm > 1e-3 && norm <= 1.0) directions.push_back(d / norm);
    }
  }

  const double march = (box.upper() - box.lower()).norm() / res;
  std::vector<Vector> out;
  for (const auto& d : directions) {
    Vector prev = *seed;
    for (int k = 1;; ++k) {
      Vector next = *seed + (k * march) * d;
      bool outside = !box.contains(next);
      if (outside) {
        // Clip the final step onto the box surface.
        double t_max = std::numeric_limits<double>::infinity();
        for (int i = 0; i < dim; ++i) {
          if (d[i] > 0) t_max = std::min(t_max, (box.upper()[i] - (*seed)[i]) / d[i]);
          if (d[i] < 0) t_max = std::min(t_max, (box.lower()[i] - (*seed)[i]) / d[i]);
        }
        next = *seed + t_max * d;
      }
      if (svm.decision_value(next) < 0.0) {
        out.push_back(bisect(svm, prev, next));
        break;
      }
      if (outside) break;
      prev = std::move(next);
    }
  }
  return out;
}

}  // namespace

CalibrationMode parse_calibration_mode(std::string_view text) {
  if (text == "strict") return CalibrationMode::strict;
  if (text == "margin") return CalibrationMode::margin;
  throw InvalidArgument("calibration must be 'strict' or 'margin', got '" + std::string(text) + "'");
}

std::string_view to_string(CalibrationMode mode) { return mode == CalibrationMode::strict ? "strict" : "margin"; }

std::string_view to_string(Membership m) {
  switch (m) {
    case Membership::inner: return "inner";
    case Membership::outer: return "outer";
    case Membership::band: return "band";
    case Membership::robust_inner: return "robust_inner";
  }
  return "band";
}

RegionModel::RegionModel(SvmModel svm, Thresholds thresholds, BoxSet domain, double w_bar, CalibrationMode mode)
    : svm_(std::move(svm)), thresholds_(thresholds), domain_(std::move(domain)), w_bar_(0.0), mode_(mode) {
  if (mode_ == CalibrationMode::strict && !(thresholds_.eps_minus <= 0.0 && 0.0 <= thresholds_.eps_plus)) {
    throw InvalidArgument("strict thresholds must satisfy eps- <= 0 <= eps+");
  }
  set_w_bar(w_bar);
}

void RegionModel::set_w_bar(double w_bar) {
  if (!(w_bar >= 0.0) || !std::isfinite(w_bar)) throw InvalidArgument("w_bar must be finite and >= 0");
  w_bar_ = w_bar;
}

double RegionModel::distance_to_boundary(const Vector& x) const {
  if (boundary_.empty()) throw StateError("region has no boundary cloud; run extract_boundary first");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : boundary_) best = std::min(best, (p - x).squaredNorm());
  return std::sqrt(best);
}

Thresholds calibrate(const SvmModel& svm, const std::vector<LabeledSample>& data, double delta, CalibrationMode mode) {
  if (!(delta >= 0.0)) throw InvalidArgument("calibrate: delta must be nonnegative");
  double max_neg = -std::numeric_limits<double>::infinity();
  double min_neg = std::numeric_limits<double>::infinity();
  double min_pos = std::numeric_limits<double>::infinity();
  double max_pos = -std::numeric_limits<double>::infinity();
  bool has_pos = false;
  bool has_neg = false;
  for (const auto& s : data) {
    const double v = svm.decision_value(s.state);
    if (s.label == 1) {
      has_pos = true;
      min_pos = std::min(min_pos, v);
      max_pos = std::max(max_pos, v);
    } else {
      has_neg = true;
      max_neg = std::max(max_neg, v);
      min_neg = std::min(min_neg, v);
    }
  }
  if (!has_pos || !has_neg) throw InvalidArgument("calibrate: both feasible and infeasible samples are required");
  if (mode == CalibrationMode::margin) return {min_pos, max_neg};
  return {std::max(0.0, max_neg) + delta, std::min(0.0, min_pos) - delta};
}

RegionModel make_region(SvmModel svm, const std::vector<LabeledSample>& data, const BoxSet& domain, double delta,
                        CalibrationMode mode) {
  const Thresholds t = calibrate(svm, data, delta, mode);
  return RegionModel(std::move(svm), t, domain, 0.0, mode);
}

Membership classify(const RegionModel& region, const Vector& x) {
  if (x.size() != region.domain().dimension()) throw InvalidArgument("classify: dimension mismatch");
  if (!region.domain().contains(x, 1e-12)) throw OutOfDomain("classify: point lies outside the state box");
  const double v = region.svm().decision_value(x);
  if (v > region.eps_plus()) {
    if (region.has_boundary() && (region.w_bar() == 0.0 || region.distance_to_boundary(x) >= region.w_bar())) {
      return Membership::robust_inner;
    }
    return Membership::inner;
  }
  if (v < region.eps_minus()) return Membership::outer;
  return Membership::band;
}

BoundaryExtraction extract_boundary(RegionModel& region, int resolution, int workers) {
  if (resolution < 1) throw InvalidArgument("extract_boundary: resolution must be positive");
  BoundaryExtraction out;
  if (region.domain().dimension() == 2) {
    out.points = lattice_crossings(region.svm(), region.domain(), resolution, workers);
  } else {
    out.points = ray_crossings(region.svm(), region.domain(), resolution);
  }
  out.empty = out.points.empty();
  if (out.empty) warn("extract_boundary: no sign change of the decision function at this resolution");
  region.set_boundary_cloud(out.points);
  return out;
}

bool RobustPredicate::operator()(const Vector& x) const {
  const Membership m = classify(*region_, x);
  if (m != Membership::inner && m != Membership::robust_inner) return false;
  if (w_bar_ == 0.0) return true;
  return region_->distance_to_boundary(x) >= w_bar_;
}

RobustPredicate erode_region(const RegionModel& region, double w_bar) {
  if (!(w_bar >= 0.0)) throw InvalidArgument("erode_region: w_bar must be nonnegative");
  if (!region.has_boundary()) throw StateError("erode_region: boundary cloud missing; run extract_boundary first");
  return RobustPredicate(region, w_bar);
}

RegionReport region_metrics(const RegionModel& region, const std::vector<Vector>& probe,
                            const std::vector<LabeledSample>& labels) {
  RegionReport r;
  r.probes = probe.size();
  std::size_t inner = 0;
  std::size_t band = 0;
  std::size_t outer = 0;
  for (const auto& x : probe) {
    const double v = region.svm().decision_value(x);
    if (v > region.eps_plus()) {
      ++inner;
    } else if (v < region.eps_minus()) {
      ++outer;
    } else {
      ++band;
    }
  }
  if (!probe.empty()) {
    const auto total = static_cast<double>(probe.size());
    r.inner_fraction = static_cast<double>(inner) / total;
    r.band_fraction = static_cast<double>(band) / total;
    r.outer_fraction = static_cast<double>(outer) / total;
  }
  std::size_t correct = 0;
  for (const auto& s : labels) {
    const double v = region.svm().decision_value(s.state);
    if (s.label == -1 && v > region.eps_plus()) ++r.strictness_violations;
    if (s.label == 1 && v < region.eps_minus()) ++r.strictness_violations;
    correct += (v >= 0.0 ? 1 : -1) == s.label;
  }
  if (!labels.empty()) r.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  return r;
}

void save_region(const RegionModel& region, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = kRegionFormat;
  j["version"] = kRegionVersion;
  j["calibration"] = std::string(to_string(region.calibration_mode()));
  j["eps_plus"] = region.eps_plus();
  j["eps_minus"] = region.eps_minus();
  j["w_bar"] = region.w_bar();
  j["domain"] = {{"lower", detail::vector_to_json(region.domain().lower())}, {"upper", detail::vector_to_json(region.domain().upper())}};
  j["svm"] = detail::svm_to_json(region.svm());
  j["boundary"] = nlohmann::json::array();
  for (const auto& p : region.boundary_cloud()) j["boundary"].push_back(detail::vector_to_json(p));
  std::ofstream out(path);
  if (!out) throw InvalidArgument("save_region: cannot open " + path.string());
  out << j.dump(1) << '\n';
}

RegionModel load_region(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("load_region: cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("load_region: malformed region file: " + std::string(e.what()));
  }
  try {
    if (j.value("format", "") != kRegionFormat) throw InvalidArgument("load_region: not a feasmap region file");
    if (j.value("version", 0) != kRegionVersion) throw InvalidArgument("load_region: unsupported region version");
    SvmModel svm = detail::svm_from_json(j.at("svm"));
    BoxSet domain(detail::vector_from_json(j.at("domain").at("lower")),
                  detail::vector_from_json(j.at("domain").at("upper")));
    RegionModel region(std::move(svm), {j.at("eps_plus").get<double>(), j.at("eps_minus").get<double>()},
                       std::move(domain), j.at("w_bar").get<double>(),
                       parse_calibration_mode(j.at("calibration").get<std::string>()));
    std::vector<Vector> cloud;
    for (const auto& p : j.at("boundary")) cloud.push_back(detail::vector_from_json(p));
    region.set_boundary_cloud(std::move(cloud));
    return region;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("load_region: malformed region file: " + std::string(e.what()));
  }
}

}  // namespace feasmap
