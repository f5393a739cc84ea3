// feasmap command-line front end.
#include "feasmap/config.hpp"
#include "feasmap/csv_io.hpp"
#include "feasmap/errors.hpp"
#include "feasmap/pipeline.hpp"
#include "feasmap/region.hpp"
#include "feasmap/sampling.hpp"
#include "feasmap/setgeom.hpp"
#include "feasmap/svm.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <iostream>

namespace fs = std::filesystem;
using namespace feasmap;

namespace {

enum ExitCode { kOk = 0, kConfigError = 2, kStageFailure = 3, kDegenerate = 4 };

fs::path preset_path(const std::string& name) {
  const fs::path local = fs::path("presets") / (name + ".cfg");
  if (fs::exists(local)) return local;
  return fs::path(FEASMAP_PRESET_DIR) / (name + ".cfg");
}

RunConfig config_from(const std::string& config_file, const std::string& preset) {
  if (!config_file.empty() && !preset.empty()) throw ConfigError("give either --config or --preset, not both");
  if (!preset.empty()) return load_config(preset_path(preset));
  if (config_file.empty()) throw ConfigError("a --config file or --preset is required");
  return load_config(config_file);
}

void print_manifest(const RunManifest& m) {
  for (const auto& s : m.stages) {
    std::cout << "stage " << s.name << ": " << (s.skipped ? "skipped" : "ran") << " (" << s.seconds << " s)\n";
  }
  const RunSummary& r = m.summary;
  std::cout << "samples=" << r.sample_count << " feasible=" << r.positive_labels << " infeasible=" << r.negative_labels
            << "\nsupport_vectors=" << r.support_vectors << " training_accuracy=" << r.training_accuracy
            << "\neps_plus=" << r.eps_plus << " eps_minus=" << r.eps_minus
            << " strictness_violations=" << r.strictness_violations << "\nboundary_points=" << r.boundary_points
            << "\ninner_fraction=" << r.inner_fraction << " band_fraction=" << r.band_fraction
            << " outer_fraction=" << r.outer_fraction << " robust_inner_fraction=" << r.robust_inner_fraction
            << "\neroded_terminal_level=" << r.eroded_terminal_level << " lambda_max=" << r.lambda_max << '\n'
            << "manifest=" << m.path("manifest.json").string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feasible-region mapping for NMPC: sampling, labeling, SVM training and erosion"};
  app.require_subcommand(1);
  int workers = 0;
  app.add_option("--workers", workers, "Override the worker count");

  // sample
  auto* sample = app.add_subcommand("sample", "Halton samples over the model's state box");
  std::size_t n_samples = 1024;
  std::string model_name = "cart_spring";
  std::uint64_t start_index = 1;
  std::string out;
  sample->add_option("--n", n_samples, "Number of points")->required();
  sample->add_option("--model", model_name, "Registered model");
  sample->add_option("--start", start_index, "First Halton index");
  sample->add_option("--out", out, "Output samples.csv")->required();

  // label
  auto* label = app.add_subcommand("label", "Label samples by phase-1 feasibility solves");
  std::string config_file, preset, samples_file;
  label->add_option("--config", config_file, "Run config file");
  label->add_option("--preset", preset, "Preset name (fig1, fig2, fig3)");
  label->add_option("--samples", samples_file, "Input samples.csv")->required();
  label->add_option("--out", out, "Output labels.csv")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train the Gaussian-kernel SVM");
  std::string labels_file;
  double sigma = 0.8, reg_L = 10.0, kkt_tol = 1e-3;
  std::uint64_t seed = 0;
  train_cmd->add_option("--labels", labels_file, "Input labels.csv")->required();
  train_cmd->add_option("--sigma", sigma, "Kernel width");
  train_cmd->add_option("--L", reg_L, "Box constraint on the multipliers");
  train_cmd->add_option("--kkt-tol", kkt_tol, "KKT tolerance");
  train_cmd->add_option("--seed", seed, "Seed");
  train_cmd->add_option("--out", out, "Output model.svm")->required();

  // calibrate
  auto* calibrate_cmd = app.add_subcommand("calibrate", "Compute inner/outer thresholds");
  std::string model_file, mode = "strict";
  double delta = 1e-6;
  calibrate_cmd->add_option("--model", model_file, "Trained model.svm")->required();
  calibrate_cmd->add_option("--labels", labels_file, "labels.csv used for calibration")->required();
  calibrate_cmd->add_option("--system", model_name, "Registered model providing the state box");
  calibrate_cmd->add_option("--mode", mode, "strict or margin");
  calibrate_cmd->add_option("--delta", delta, "Strict-mode offset");
  calibrate_cmd->add_option("--out", out, "Output region.rgn")->required();

  // boundary
  auto* boundary_cmd = app.add_subcommand("boundary", "Extract the zero level set of the decision function");
  std::string region_file;
  int resolution = 200;
  bool update_region = false;
  boundary_cmd->add_option("--region", region_file, "Region file")->required();
  boundary_cmd->add_option("--res", resolution, "Lattice resolution");
  boundary_cmd->add_option("--out", out, "Output boundary.csv")->required();
  boundary_cmd->add_flag("--update-region", update_region, "Store the cloud in the region file");

  // erode
  auto* erode_cmd = app.add_subcommand("erode", "Erode the terminal ellipsoid by the disturbance bound");
  std::string p_file;
  double mu = 0.5, w_bar = 0.01;
  erode_cmd->add_option("--P-file", p_file, "CSV with the n x n shape matrix (default: cart-spring P)");
  erode_cmd->add_option("--mu", mu, "Level of the terminal set");
  erode_cmd->add_option("--wbar", w_bar, "Disturbance bound");

  // export-grid
  auto* grid_cmd = app.add_subcommand("export-grid", "Evaluate phi and membership on a lattice");
  std::string boundary_file;
  double grid_wbar = -1.0;
  grid_cmd->add_option("--region", region_file, "Region file")->required();
  grid_cmd->add_option("--res", resolution, "Cells per axis");
  grid_cmd->add_option("--boundary", boundary_file, "boundary.csv to use for robust membership");
  grid_cmd->add_option("--wbar", grid_wbar, "Override the region's disturbance margin");
  grid_cmd->add_option("--out", out, "Output grid.csv")->required();

  // pipeline
  auto* pipeline_cmd = app.add_subcommand("pipeline", "Run every stage and write a manifest");
  std::string out_dir;
  bool force = false;
  pipeline_cmd->add_option("--config", config_file, "Run config file");
  pipeline_cmd->add_option("--preset", preset, "Preset name (fig1, fig2, fig3)");
  pipeline_cmd->add_option("--out-dir", out_dir, "Override output_dir");
  pipeline_cmd->add_flag("--force", force, "Rerun stages even when up to date");

  // compare
  auto* compare_cmd = app.add_subcommand("compare", "Compare two completed runs");
  std::string manifest_a, manifest_b, name_a = "A", name_b = "B";
  compare_cmd->add_option("--a", manifest_a, "First manifest.json or run directory")->required();
  compare_cmd->add_option("--b", manifest_b, "Second manifest.json or run directory")->required();
  compare_cmd->add_option("--name-a", name_a, "Label for the first run");
  compare_cmd->add_option("--name-b", name_b, "Label for the second run");

  // verify-terminal
  auto* terminal_cmd = app.add_subcommand("verify-terminal", "Check the terminal decrease condition on the ellipsoid");
  int n_checks = 2000;
  bool printed = false;
  terminal_cmd->add_option("--mu", mu, "Level of the terminal set");
  terminal_cmd->add_option("--samples", n_checks, "Sample count");
  terminal_cmd->add_flag("--printed-P", printed, "Use the shape matrix with the negative off-diagonal");

  // verify-rci
  auto* rci_cmd = app.add_subcommand("verify-rci", "Monte Carlo and adversarial invariance trials");
  int trials = 100;
  double horizon = 10.0;
  rci_cmd->add_option("--mu", mu, "Level of the terminal set");
  rci_cmd->add_option("--wbar", w_bar, "Disturbance bound used for erosion");
  rci_cmd->add_option("--trials", trials, "Start points on the eroded boundary");
  rci_cmd->add_option("--horizon", horizon, "Trial length in seconds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  auto resolve_manifest = [](const std::string& p) {
    return fs::is_directory(p) ? fs::path(p) / "manifest.json" : fs::path(p);
  };

  try {
    if (*sample) {
      const SystemModel model = make_model(model_name);
      write_points_csv(out, halton_samples(n_samples, model.state_set(), start_index).points);
    } else if (*label) {
      RunConfig c = config_from(config_file, preset);
      if (workers > 0) c.workers = workers;
      const LabelingResult r = label_dataset(make_ocp(c), read_points_csv(samples_file), c.workers);
      write_labels_csv(out, r.samples);
      std::size_t positive = 0;
      for (const auto& s : r.samples) positive += s.label == 1;
      std::cout << "feasible=" << positive << " infeasible=" << r.samples.size() - positive << '\n';
      if (r.degenerate) return kDegenerate;
    } else if (*train_cmd) {
      TrainConfig tc;
      tc.regularization_L = reg_L;
      tc.kkt_tol = kkt_tol;
      tc.seed = seed;
      const auto data = read_labels_csv(labels_file);
      const SvmModel m = train(data, KernelSpec{sigma}, tc);
      save_model(m, out);
      std::cout << "support_vectors=" << m.support_points().size() << " bias=" << m.bias()
                << " converged=" << m.converged() << " training_accuracy=" << training_accuracy(m, data) << '\n';
    } else if (*calibrate_cmd) {
      const auto data = read_labels_csv(labels_file);
      const RegionModel r = make_region(load_model(model_file), data, make_model(model_name).state_set(), delta,
                                        parse_calibration_mode(mode));
      save_region(r, out);
      std::cout << "eps_plus=" << format_double(r.eps_plus()) << " eps_minus=" << format_double(r.eps_minus()) << '\n';
    } else if (*boundary_cmd) {
      RegionModel r = load_region(region_file);
      const BoundaryExtraction b = extract_boundary(r, resolution, workers > 0 ? workers : 1);
      write_points_csv(out, b.points);
      if (update_region) save_region(r, region_file);
      std::cout << "boundary_points=" << b.points.size() << (b.empty ? " (no zero crossing found)" : "") << '\n';
    } else if (*erode_cmd) {
      const Matrix P = p_file.empty() ? cart_spring_terminal_matrix() : read_matrix_csv(p_file);
      const EllipsoidSet set(P, mu);
      std::cout << "lambda_max=" << format_double(set.max_eigenvalue())
                << "\nmax_admissible_margin=" << format_double(std::sqrt(mu / set.max_eigenvalue())) << '\n';
      const ErodedEllipsoid e = erode_ellipsoid(set, w_bar);
      std::cout << "mu0=" << format_double(e.eroded_level) << '\n';
    } else if (*grid_cmd) {
      RegionModel r = load_region(region_file);
      if (!boundary_file.empty()) r.set_boundary_cloud(read_points_csv(boundary_file));
      if (grid_wbar >= 0.0) r.set_w_bar(grid_wbar);
      if (r.domain().dimension() != 2) throw UnsupportedDimension("export-grid: only 2-D regions are supported");
      const BoxSet& box = r.domain();
      std::vector<GridRow> rows;
      for (int i = 0; i <= resolution; ++i) {
        for (int j = 0; j <= resolution; ++j) {
          Vector x(2);
          x << box.lower()[0] + (box.upper()[0] - box.lower()[0]) * j / resolution,
              box.lower()[1] + (box.upper()[1] - box.lower()[1]) * i / resolution;
          rows.push_back({x[0], x[1], r.svm().decision_value(x), std::string(to_string(classify(r, x)))});
        }
      }
      write_grid_csv(out, rows);
    } else if (*pipeline_cmd) {
      RunConfig c = config_from(config_file, preset);
      if (!out_dir.empty()) c.output_dir = out_dir;
      if (workers > 0) c.workers = workers;
      PipelineOptions opts;
      opts.force = force;
      opts.log = [](std::string_view msg) { std::cerr << msg << '\n'; };
      print_manifest(run_pipeline(c, opts));
    } else if (*compare_cmd) {
      const ComparisonReport r =
          compare_runs(load_manifest(resolve_manifest(manifest_a)), load_manifest(resolve_manifest(manifest_b)), name_a,
                       name_b);
      std::cout << "inner_fraction_" << r.name_a << "=" << r.inner_fraction_a << "\ninner_fraction_" << r.name_b
                << "=" << r.inner_fraction_b << "\ninner_fraction_difference=" << r.inner_fraction_difference
                << "\npositive_label_difference=" << r.positive_label_difference
                << "\nnegative_label_difference=" << r.negative_label_difference << "\n" << r.name_a << "_not_in_"
                << r.name_b << "=" << r.a_not_in_b << "\n" << r.name_b << "_not_in_" << r.name_a << "=" << r.b_not_in_a
                << "\nverdict: " << r.verdict << '\n';
    } else if (*terminal_cmd) {
      OcpSpec spec = make_cart_spring_ocp(1.0, mu);
      if (printed) spec.terminal_weight = cart_spring_printed_terminal_matrix();
      const TerminalCheckReport r = verify_terminal_assumptions(spec, cart_spring_feedback_gain(), n_checks);
      std::cout << "passing=" << r.passing << "/" << r.samples << " max_decrease_violation=" << r.max_decrease_violation
                << " decrease_failures=" << r.decrease_failures << " input_failures=" << r.input_failures << '\n';
      return r.passing == r.samples ? kOk : kStageFailure;
    } else if (*rci_cmd) {
      const SystemModel model = make_cart_spring();
      const ErodedEllipsoid e = erode_ellipsoid(EllipsoidSet(cart_spring_terminal_matrix(), mu), w_bar);
      RciOptions opts;
      opts.n_trials = trials;
      opts.horizon = horizon;
      opts.workers = workers > 0 ? workers : 1;
      const RciReport r = verify_rci(model, e, cart_spring_feedback_gain(), opts);
      std::cout << "mu0=" << format_double(e.eroded_level) << " trajectories=" << r.trajectories << " exits=" << r.exits
                << " (random " << r.random_exits << ", adversarial " << r.adversarial_exits << ")"
                << " input_violations=" << r.input_violations << " max_level_ratio=" << r.max_level_ratio << '\n';
      return r.exits == 0 ? kOk : kStageFailure;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const StageFailure& e) {
    std::cerr << "stage failed: " << e.what() << '\n';
    return e.degenerate() ? kDegenerate : kStageFailure;
  } catch (const DegenerateData& e) {
    std::cerr << "degenerate data: " << e.what() << '\n';
    return kDegenerate;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kStageFailure;
  }
  return kOk;
}
