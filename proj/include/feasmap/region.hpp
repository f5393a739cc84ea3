#pragma once

#include "feasmap/dynamics.hpp"
#include "feasmap/oracle.hpp"
#include "feasmap/sampling.hpp"
#include "feasmap/svm.hpp"

#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

namespace feasmap {

enum class CalibrationMode {
  /// Thresholds exclude every training sample of the opposite class.
  strict,
  /// Thresholds hug the own class: eps+ = min phi over feasible, eps- = max phi over infeasible.
  margin,
};

CalibrationMode parse_calibration_mode(std::string_view text);
std::string_view to_string(CalibrationMode mode);

struct Thresholds {
  double eps_plus = 0.0;
  double eps_minus = 0.0;
};

enum class Membership { inner, outer, band, robust_inner };

std::string_view to_string(Membership m);

/// Trained decision function plus calibrated inner/outer thresholds, an optional discretized
/// zero level set, and a disturbance margin for robust queries.
class RegionModel {
 public:
  RegionModel(SvmModel svm, Thresholds thresholds, BoxSet domain, double w_bar = 0.0,
              CalibrationMode mode = CalibrationMode::strict);

  const SvmModel& svm() const noexcept { return svm_; }
  double eps_plus() const noexcept { return thresholds_.eps_plus; }
  double eps_minus() const noexcept { return thresholds_.eps_minus; }
  const BoxSet& domain() const noexcept { return domain_; }
  double w_bar() const noexcept { return w_bar_; }
  CalibrationMode calibration_mode() const noexcept { return mode_; }
  const std::vector<Vector>& boundary_cloud() const noexcept { return boundary_; }
  bool has_boundary() const noexcept { return !boundary_.empty(); }

  void set_boundary_cloud(std::vector<Vector> cloud) { boundary_ = std::move(cloud); }
  void set_w_bar(double w_bar);

  /// Euclidean distance from x to the nearest boundary-cloud point. Throws StateError when
  /// the cloud is empty.
  double distance_to_boundary(const Vector& x) const;

 private:
  SvmModel svm_;
  Thresholds thresholds_;
  BoxSet domain_;
  double w_bar_;
  CalibrationMode mode_;
  std::vector<Vector> boundary_;
};

/// Strict mode: eps+ = max(0, max phi over infeasible) + delta and
/// eps- = min(0, min phi over feasible) - delta. Throws InvalidArgument for single-class data.
Thresholds calibrate(const SvmModel& svm, const std::vector<LabeledSample>& data, double delta = 1e-6,
                     CalibrationMode mode = CalibrationMode::strict);

/// Builds a region from a model: calibrates on `data` with the given mode.
RegionModel make_region(SvmModel svm, const std::vector<LabeledSample>& data, const BoxSet& domain,
                        double delta = 1e-6, CalibrationMode mode = CalibrationMode::strict);

/// inner if phi > eps+, outer if phi < eps-, band otherwise. When the region carries a boundary
/// cloud, inner points at least w_bar away from the cloud report robust_inner instead.
/// Throws OutOfDomain for x outside the state box.
Membership classify(const RegionModel& region, const Vector& x);

struct BoundaryExtraction {
  std::vector<Vector> points;
  /// No sign change of phi was found at this resolution.
  bool empty = false;
};

/// Locates the zero level set of phi. In 2-D, evaluates phi on a (resolution+1)^2 lattice and
/// bisects every sign-changing cell edge to 1e-8 in position (marching-squares edge set). In
/// other dimensions, bisects along rays cast from interior seed points. Stores the cloud in
/// the region.
BoundaryExtraction extract_boundary(RegionModel& region, int resolution, int workers = 1);

/// Robust membership predicate: inner and at least w_bar from the boundary cloud.
class RobustPredicate {
 public:
  RobustPredicate(const RegionModel& region, double w_bar) : region_(&region), w_bar_(w_bar) {}
  bool operator()(const Vector& x) const;
  double w_bar() const noexcept { return w_bar_; }

 private:
  const RegionModel* region_;
  double w_bar_;
};

/// Throws StateError if the boundary cloud has not been extracted, InvalidArgument if w_bar < 0.
RobustPredicate erode_region(const RegionModel& region, double w_bar);

struct RegionReport {
  std::size_t probes = 0;
  double inner_fraction = 0.0;
  double band_fraction = 0.0;
  double outer_fraction = 0.0;
  /// Infeasible samples inside the inner set plus feasible samples inside the outer set.
  std::size_t strictness_violations = 0;
  /// Fraction of labeled samples whose predict() matches their label.
  double accuracy = 0.0;
};

/// Volume fractions over the probe set and strictness/accuracy against the labeled samples.
RegionReport region_metrics(const RegionModel& region, const std::vector<Vector>& probe,
                            const std::vector<LabeledSample>& labels);

void save_region(const RegionModel& region, const std::filesystem::path& path);
RegionModel load_region(const std::filesystem::path& path);

}  // namespace feasmap
