#pragma once

#include "feasmap/oracle.hpp"
#include "feasmap/region.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace feasmap {

/// Parameters of one pipeline run. Field names match the config-file keys.
struct RunConfig {
  std::string model = "cart_spring";
  std::size_t N = 1024;
  double horizon_T = 1.0;
  int segments = 10;
  int steps_per_segment = 10;
  double mu = 0.5;
  double sigma = 0.8;
  double regularization_L = 10.0;
  double w_bar = 0.01;
  double feas_tol = 1e-6;
  int restarts = 5;
  int max_evaluations = 600;
  int workers = 1;
  CalibrationMode calibration = CalibrationMode::strict;
  double delta = 1e-6;
  double kkt_tol = 1e-3;
  /// Label against the terminal set eroded by w_bar.
  bool robust = false;
  /// Extra feasible samples to collect after labeling; 0 disables enrichment.
  std::size_t enrich_target = 0;
  int boundary_resolution = 200;
  int grid_resolution = 200;
  std::size_t probe_count = 4096;
  std::filesystem::path output_dir = "run";
  std::uint64_t seed = 0;
};

/// Keys that must appear in every config file.
const std::vector<std::string>& required_config_keys();
/// Every accepted key.
const std::vector<std::string>& known_config_keys();

/// Parses `key = value` lines ('#' starts a comment). Unknown, duplicate and missing required
/// keys and out-of-range values are all reported, one per line, in a single ConfigError.
RunConfig validate_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Range checks on an already-typed config. Throws ConfigError.
void check_config(const RunConfig& config);

/// Canonical key = value text; validate_config(to_config_text(c)) reproduces c.
std::string to_config_text(const RunConfig& config);

/// Feasibility problem described by the config. Only registered models with a known terminal
/// ingredient set are accepted.
OcpSpec make_ocp(const RunConfig& config);

}  // namespace feasmap
