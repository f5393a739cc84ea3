#pragma once

#include "feasmap/config.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace feasmap {

/// Hex SHA-256 digests.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Probe points used for volume fractions and run comparison: Halton over the state box,
/// started past any realistic training index so probes never coincide with samples.
inline constexpr std::uint64_t kProbeStartIndex = 1000001;

struct StageRecord {
  std::string name;
  /// Hash of the stage parameters and of every input file.
  std::string fingerprint;
  /// Output file name (relative to the run directory) and its hash.
  std::vector<std::pair<std::string, std::string>> outputs;
  double seconds = 0.0;
  bool skipped = false;
};

struct RunSummary {
  std::size_t sample_count = 0;
  std::size_t positive_labels = 0;
  std::size_t negative_labels = 0;
  std::size_t support_vectors = 0;
  double training_accuracy = 0.0;
  double eps_plus = 0.0;
  double eps_minus = 0.0;
  std::size_t strictness_violations = 0;
  std::size_t boundary_points = 0;
  /// Eroded terminal level and lambda_max(P) for the configured w_bar.
  double eroded_terminal_level = 0.0;
  double lambda_max = 0.0;
  std::size_t probe_count = 0;
  std::uint64_t probe_start = kProbeStartIndex;
  double inner_fraction = 0.0;
  double band_fraction = 0.0;
  double outer_fraction = 0.0;
  double robust_inner_fraction = 0.0;
};

struct RunManifest {
  RunConfig config;
  std::filesystem::path directory;
  std::vector<StageRecord> stages;
  RunSummary summary;
  bool complete = false;
  std::string failed_stage;
  std::string error;

  /// Absolute path of a run artifact, e.g. path("labels.csv").
  std::filesystem::path path(std::string_view file) const { return directory / file; }
};

/// Stage names in execution order.
const std::vector<std::string>& pipeline_stages();

struct PipelineOptions {
  /// Rerun every stage even when its fingerprint and outputs are unchanged.
  bool force = false;
  /// Progress messages; null for silence.
  std::function<void(std::string_view)> log;
};

/// Runs sample, label, train, calibrate, boundary, erode and export in config.output_dir and
/// writes manifest.json there. A stage is skipped when its fingerprint matches the previous
/// manifest, its outputs still hash to the recorded values and no earlier stage ran.
/// On failure writes a partial manifest and throws StageFailure.
RunManifest run_pipeline(const RunConfig& config, const PipelineOptions& options = {});

void save_manifest(const RunManifest& manifest, const std::filesystem::path& path);
/// The manifest's directory is the folder containing the file.
RunManifest load_manifest(const std::filesystem::path& path);

struct ComparisonReport {
  std::string name_a;
  std::string name_b;
  double inner_fraction_a = 0.0;
  double inner_fraction_b = 0.0;
  /// b minus a.
  double inner_fraction_difference = 0.0;
  long positive_label_difference = 0;
  long negative_label_difference = 0;
  /// Probe fraction that is inner for a but not for b, and the reverse.
  double a_not_in_b = 0.0;
  double b_not_in_a = 0.0;
  double slack = 0.01;
  std::string verdict;
};

/// Evaluates both final regions on the shared probe set. Throws InvalidComparison when the
/// runs are incomplete or use different models or probe sets.
ComparisonReport compare_runs(const RunManifest& a, const RunManifest& b, std::string name_a = "A",
                              std::string name_b = "B", double slack = 0.01);

}  // namespace feasmap
