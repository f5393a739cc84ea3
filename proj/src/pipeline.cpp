#include "feasmap/pipeline.hpp"

#include "feasmap/csv_io.hpp"
#include "feasmap/errors.hpp"
#include "feasmap/parallel.hpp"
#include "feasmap/region.hpp"
#include "feasmap/sampling.hpp"
#include "feasmap/setgeom.hpp"
#include "feasmap/svm.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

namespace feasmap {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kManifestFormat = "feasmap-manifest";
constexpr int kManifestVersion = 1;

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256: init failed");
  }
  void update(const void* data, std::size_t size) {
    if (EVP_DigestUpdate(ctx_.get(), data, size) != 1) throw Error("sha256: update failed");
  }
  std::string hex() {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), digest, &len) != 1) throw Error("sha256: final failed");
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out += kDigits[digest[i] >> 4];
      out += kDigits[digest[i] & 15];
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, void (*)(EVP_MD_CTX*)> ctx_;
};

double elapsed(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

// Stage parameters that enter each fingerprint.
std::string stage_parameters(const std::string& stage, const RunConfig& c) {
  std::ostringstream p;
  p << "stage=" << stage << ";model=" << c.model << ';';
  if (stage == "sample") {
    p << "N=" << c.N;
  } else if (stage == "label") {
    p << "T=" << format_double(c.horizon_T) << ";segments=" << c.segments << ";steps=" << c.steps_per_segment
      << ";mu=" << format_double(c.mu) << ";feas_tol=" << format_double(c.feas_tol) << ";restarts=" << c.restarts
      << ";evals=" << c.max_evaluations << ";robust=" << c.robust << ";enrich=" << c.enrich_target;
    if (c.robust) p << ";w_bar=" << format_double(c.w_bar);
  } else if (stage == "train") {
    p << "sigma=" << format_double(c.sigma) << ";L=" << format_double(c.regularization_L)
      << ";kkt_tol=" << format_double(c.kkt_tol) << ";seed=" << c.seed;
  } else if (stage == "calibrate") {
    p << "calibration=" << to_string(c.calibration) << ";delta=" << format_double(c.delta);
  } else if (stage == "boundary") {
    p << "resolution=" << c.boundary_resolution;
  } else if (stage == "erode") {
    p << "w_bar=" << format_double(c.w_bar) << ";mu=" << format_double(c.mu);
  } else if (stage == "export") {
    p << "grid=" << c.grid_resolution << ";probes=" << c.probe_count << ";probe_start=" << kProbeStartIndex;
  }
  return p.str();
}

struct StageSpec {
  std::string name;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
};

const std::vector<StageSpec>& stage_specs() {
  static const std::vector<StageSpec> specs = {
      {"sample", {}, {"samples.csv"}},
      {"label", {"samples.csv"}, {"labels.csv"}},
      {"train", {"labels.csv"}, {"model.svm"}},
      {"calibrate", {"model.svm", "labels.csv"}, {"calibrated.rgn"}},
      {"boundary", {"calibrated.rgn"}, {"boundary.csv"}},
      {"erode", {"calibrated.rgn", "boundary.csv"}, {"region.rgn", "erosion.json"}},
      {"export", {"region.rgn", "labels.csv"}, {"grid.csv", "metrics.json"}},
  };
  return specs;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error("malformed " + path.string() + ": " + e.what());
  }
}

// Stage bodies. Each reads its inputs from the run directory and writes its outputs there.
void run_sample(const RunConfig& c, const fs::path& dir) {
  const SystemModel model = make_model(c.model);
  write_points_csv(dir / "samples.csv", halton_samples(c.N, model.state_set()).points);
}

void run_label(const RunConfig& c, const fs::path& dir) {
  const OcpSpec spec = make_ocp(c);
  const auto points = read_points_csv(dir / "samples.csv");
  if (points.empty()) throw InvalidArgument("samples.csv holds no points");
  LabelingResult labeled = label_dataset(spec, points, c.workers);
  if (c.enrich_target > 0) {
    const EnrichmentResult extra = enrich_feasible(spec, labeled.samples, c.enrich_target, points.size() + 1, c.workers);
    labeled.samples.insert(labeled.samples.end(), extra.added.begin(), extra.added.end());
  }
  write_labels_csv(dir / "labels.csv", labeled.samples);
  std::size_t positive = 0;
  for (const auto& s : labeled.samples) positive += s.label == 1;
  if (positive == 0 || positive == labeled.samples.size()) {
    throw DegenerateData("labeling produced a single class (" + std::to_string(positive) + " feasible of " +
                         std::to_string(labeled.samples.size()) + ")");
  }
}

void run_train(const RunConfig& c, const fs::path& dir) {
  const auto labels = read_labels_csv(dir / "labels.csv");
  TrainConfig tc;
  tc.regularization_L = c.regularization_L;
  tc.kkt_tol = c.kkt_tol;
  tc.seed = c.seed;
  save_model(train(labels, KernelSpec{c.sigma}, tc), dir / "model.svm");
}

void run_calibrate(const RunConfig& c, const fs::path& dir) {
  const auto labels = read_labels_csv(dir / "labels.csv");
  const SystemModel model = make_model(c.model);
  save_region(make_region(load_model(dir / "model.svm"), labels, model.state_set(), c.delta, c.calibration),
              dir / "calibrated.rgn");
}

void run_boundary(const RunConfig& c, const fs::path& dir) {
  RegionModel region = load_region(dir / "calibrated.rgn");
  const BoundaryExtraction b = extract_boundary(region, c.boundary_resolution, c.workers);
  if (b.empty) warn("boundary: decision function has no zero crossing at this resolution");
  write_points_csv(dir / "boundary.csv", b.points);
}

void run_erode(const RunConfig& c, const fs::path& dir) {
  RegionModel region = load_region(dir / "calibrated.rgn");
  region.set_boundary_cloud(read_points_csv(dir / "boundary.csv"));
  region.set_w_bar(c.w_bar);
  save_region(region, dir / "region.rgn");

  const OcpSpec spec = make_ocp(c);
  const EllipsoidSet terminal(spec.terminal_weight, c.mu);
  json j;
  j["w_bar"] = c.w_bar;
  j["mu"] = c.mu;
  j["lambda_max"] = terminal.max_eigenvalue();
  j["max_admissible_margin"] = std::sqrt(c.mu / terminal.max_eigenvalue());
  try {
    j["eroded_terminal_level"] = erode_ellipsoid(terminal, c.w_bar).eroded_level;
  } catch (const EmptyErosion&) {
    j["eroded_terminal_level"] = 0.0;
  }
  write_json(dir / "erosion.json", j);
}

void run_export(const RunConfig& c, const fs::path& dir) {
  const RegionModel region = load_region(dir / "region.rgn");
  const auto labels = read_labels_csv(dir / "labels.csv");
  const BoxSet& box = region.domain();
  const int n = static_cast<int>(box.dimension());

  // Grid over the first two coordinates; any further coordinates are held at the box centre.
  const int res = c.grid_resolution;
  const std::size_t side = static_cast<std::size_t>(res) + 1;
  std::vector<GridRow> rows(side * side);
  const Vector centre = 0.5 * (box.lower() + box.upper());
  parallel_for(rows.size(), c.workers, [&](std::size_t k) {
    Vector x = centre;
    const std::size_t i = k / side;
    const std::size_t jx = k % side;
    x[0] = box.lower()[0] + (box.upper()[0] - box.lower()[0]) * static_cast<double>(jx) / res;
    if (n > 1) x[1] = box.lower()[1] + (box.upper()[1] - box.lower()[1]) * static_cast<double>(i) / res;
    rows[k] = {x[0], n > 1 ? x[1] : 0.0, region.svm().decision_value(x), std::string(to_string(classify(region, x)))};
  });
  write_grid_csv(dir / "grid.csv", rows);

  const std::vector<Vector> probe = halton_samples(c.probe_count, box, kProbeStartIndex).points;
  const RegionReport report = region_metrics(region, probe, labels);
  std::vector<int> robust(probe.size(), 0);
  parallel_for(probe.size(), c.workers,
               [&](std::size_t k) { robust[k] = classify(region, probe[k]) == Membership::robust_inner; });
  std::size_t robust_count = 0;
  for (int r : robust) robust_count += static_cast<std::size_t>(r);
  std::size_t positive = 0;
  for (const auto& s : labels) positive += s.label == 1;

  json m;
  m["sample_count"] = labels.size();
  m["positive_labels"] = positive;
  m["negative_labels"] = labels.size() - positive;
  m["support_vectors"] = region.svm().support_points().size();
  m["training_accuracy"] = report.accuracy;
  m["eps_plus"] = region.eps_plus();
  m["eps_minus"] = region.eps_minus();
  m["strictness_violations"] = report.strictness_violations;
  m["boundary_points"] = region.boundary_cloud().size();
  m["probe"] = {{"family", "halton"}, {"count", probe.size()}, {"start_index", kProbeStartIndex}};
  m["inner_fraction"] = report.inner_fraction;
  m["band_fraction"] = report.band_fraction;
  m["outer_fraction"] = report.outer_fraction;
  m["robust_inner_fraction"] = static_cast<double>(robust_count) / static_cast<double>(probe.size());
  write_json(dir / "metrics.json", m);
}

using StageBody = void (*)(const RunConfig&, const fs::path&);

StageBody stage_body(const std::string& name) {
  static const std::map<std::string, StageBody> bodies = {
      {"sample", run_sample},       {"label", run_label}, {"train", run_train},   {"calibrate", run_calibrate},
      {"boundary", run_boundary},   {"erode", run_erode}, {"export", run_export},
  };
  return bodies.at(name);
}

json summary_to_json(const RunSummary& s) {
  return {{"sample_count", s.sample_count},
          {"positive_labels", s.positive_labels},
          {"negative_labels", s.negative_labels},
          {"support_vectors", s.support_vectors},
          {"training_accuracy", s.training_accuracy},
          {"eps_plus", s.eps_plus},
          {"eps_minus", s.eps_minus},
          {"strictness_violations", s.strictness_violations},
          {"boundary_points", s.boundary_points},
          {"eroded_terminal_level", s.eroded_terminal_level},
          {"lambda_max", s.lambda_max},
          {"probe", {{"family", "halton"}, {"count", s.probe_count}, {"start_index", s.probe_start}}},
          {"inner_fraction", s.inner_fraction},
          {"band_fraction", s.band_fraction},
          {"outer_fraction", s.outer_fraction},
          {"robust_inner_fraction", s.robust_inner_fraction}};
}

RunSummary summary_from_json(const json& j) {
  RunSummary s;
  s.sample_count = j.at("sample_count");
  s.positive_labels = j.at("positive_labels");
  s.negative_labels = j.at("negative_labels");
  s.support_vectors = j.at("support_vectors");
  s.training_accuracy = j.at("training_accuracy");
  s.eps_plus = j.at("eps_plus");
  s.eps_minus = j.at("eps_minus");
  s.strictness_violations = j.at("strictness_violations");
  s.boundary_points = j.at("boundary_points");
  s.eroded_terminal_level = j.at("eroded_terminal_level");
  s.lambda_max = j.at("lambda_max");
  s.probe_count = j.at("probe").at("count");
  s.probe_start = j.at("probe").at("start_index");
  s.inner_fraction = j.at("inner_fraction");
  s.band_fraction = j.at("band_fraction");
  s.outer_fraction = j.at("outer_fraction");
  s.robust_inner_fraction = j.at("robust_inner_fraction");
  return s;
}

RunSummary read_summary(const fs::path& dir) {
  json j = read_json(dir / "metrics.json");
  const json e = read_json(dir / "erosion.json");
  j["eroded_terminal_level"] = e.at("eroded_terminal_level");
  j["lambda_max"] = e.at("lambda_max");
  return summary_from_json(j);
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  Sha256 h;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    h.update(buf, static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

const std::vector<std::string>& pipeline_stages() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& s : stage_specs()) n.push_back(s.name);
    return n;
  }();
  return names;
}

RunManifest run_pipeline(const RunConfig& config, const PipelineOptions& options) {
  check_config(config);
  const fs::path dir = config.output_dir;
  fs::create_directories(dir);
  const fs::path manifest_path = dir / "manifest.json";
  auto log = [&](const std::string& msg) {
    if (options.log) options.log(msg);
  };

  std::map<std::string, StageRecord> previous;
  if (fs::exists(manifest_path)) {
    try {
      for (auto& s : load_manifest(manifest_path).stages) previous[s.name] = s;
    } catch (const Error& e) {
      log("ignoring unreadable previous manifest: " + std::string(e.what()));
    }
  }

  RunManifest manifest;
  manifest.config = config;
  manifest.directory = dir;
  bool upstream_ran = false;

  for (const auto& stage : stage_specs()) {
    const auto start = std::chrono::steady_clock::now();
    StageRecord record;
    record.name = stage.name;
    try {
      std::string material = stage_parameters(stage.name, config);
      for (const auto& in : stage.inputs) material += ";" + in + "=" + sha256_file(dir / in);
      record.fingerprint = sha256_hex(material);

      bool fresh = !options.force && !upstream_ran;
      if (fresh) {
        const auto it = previous.find(stage.name);
        fresh = it != previous.end() && it->second.fingerprint == record.fingerprint &&
                it->second.outputs.size() == stage.outputs.size();
        for (std::size_t k = 0; fresh && k < stage.outputs.size(); ++k) {
          const auto& [file, hash] = it->second.outputs[k];
          fresh = file == stage.outputs[k] && fs::exists(dir / file) && sha256_file(dir / file) == hash;
        }
      }
      if (fresh) {
        record.skipped = true;
        log(stage.name + ": up to date");
      } else {
        log(stage.name + ": running");
        stage_body(stage.name)(config, dir);
        upstream_ran = true;
      }
      for (const auto& out : stage.outputs) record.outputs.emplace_back(out, sha256_file(dir / out));
    } catch (const Error& e) {
      manifest.failed_stage = stage.name;
      manifest.error = e.what();
      manifest.complete = false;
      save_manifest(manifest, manifest_path);
      throw StageFailure(stage.name, e.what(), dynamic_cast<const DegenerateData*>(&e) != nullptr);
    } catch (const std::exception& e) {
      manifest.failed_stage = stage.name;
      manifest.error = e.what();
      manifest.complete = false;
      save_manifest(manifest, manifest_path);
      throw StageFailure(stage.name, e.what(), false);
    }
    record.seconds = elapsed(start);
    manifest.stages.push_back(std::move(record));
  }

  manifest.summary = read_summary(dir);
  manifest.complete = true;
  save_manifest(manifest, manifest_path);
  return manifest;
}

void save_manifest(const RunManifest& manifest, const fs::path& path) {
  json j;
  j["format"] = kManifestFormat;
  j["version"] = kManifestVersion;
  j["config"] = to_config_text(manifest.config);
  j["complete"] = manifest.complete;
  if (!manifest.failed_stage.empty()) {
    j["failed_stage"] = manifest.failed_stage;
    j["error"] = manifest.error;
  }
  json stages = json::array();
  for (const auto& s : manifest.stages) {
    json outputs = json::array();
    for (const auto& [file, hash] : s.outputs) outputs.push_back({{"path", file}, {"sha256", hash}});
    stages.push_back({{"name", s.name},
                      {"fingerprint", s.fingerprint},
                      {"outputs", outputs},
                      {"seconds", s.seconds},
                      {"skipped", s.skipped}});
  }
  j["stages"] = stages;
  j["files"] = {{"samples", "samples.csv"}, {"labels", "labels.csv"}, {"model", "model.svm"},
                {"region", "region.rgn"},   {"boundary", "boundary.csv"}, {"grid", "grid.csv"}};
  if (manifest.complete) j["summary"] = summary_to_json(manifest.summary);
  write_json(path, j);
}

RunManifest load_manifest(const fs::path& path) {
  const json j = read_json(path);
  if (j.value("format", "") != kManifestFormat) throw InvalidArgument(path.string() + ": not a feasmap manifest");
  if (j.value("version", 0) != kManifestVersion) throw InvalidArgument(path.string() + ": unsupported manifest version");
  try {
    RunManifest m;
    m.config = validate_config(j.at("config").get<std::string>());
    m.directory = path.parent_path().empty() ? fs::path(".") : path.parent_path();
    m.complete = j.at("complete").get<bool>();
    m.failed_stage = j.value("failed_stage", "");
    m.error = j.value("error", "");
    for (const auto& s : j.at("stages")) {
      StageRecord r;
      r.name = s.at("name");
      r.fingerprint = s.at("fingerprint");
      r.seconds = s.at("seconds");
      r.skipped = s.at("skipped");
      for (const auto& o : s.at("outputs")) r.outputs.emplace_back(o.at("path"), o.at("sha256"));
      m.stages.push_back(std::move(r));
    }
    if (m.complete) m.summary = summary_from_json(j.at("summary"));
    return m;
  } catch (const json::exception& e) {
    throw InvalidArgument(path.string() + ": malformed manifest: " + e.what());
  }
}

ComparisonReport compare_runs(const RunManifest& a, const RunManifest& b, std::string name_a, std::string name_b,
                              double slack) {
  if (!a.complete || !b.complete) throw InvalidComparison("compare_runs: both runs must be complete");
  if (a.config.model != b.config.model) {
    throw InvalidComparison("compare_runs: models differ ('" + a.config.model + "' vs '" + b.config.model + "')");
  }
  if (a.summary.probe_count != b.summary.probe_count || a.summary.probe_start != b.summary.probe_start) {
    throw InvalidComparison("compare_runs: probe sets differ");
  }
  const RegionModel ra = load_region(a.path("region.rgn"));
  const RegionModel rb = load_region(b.path("region.rgn"));
  const auto probe = halton_samples(a.summary.probe_count, ra.domain(), a.summary.probe_start).points;

  auto is_inner = [](const RegionModel& r, const Vector& x) { return r.svm().decision_value(x) > r.eps_plus(); };
  std::size_t in_a = 0, in_b = 0, a_only = 0, b_only = 0;
  for (const auto& x : probe) {
    const bool ia = is_inner(ra, x);
    const bool ib = is_inner(rb, x);
    in_a += ia;
    in_b += ib;
    a_only += ia && !ib;
    b_only += ib && !ia;
  }
  const auto total = static_cast<double>(probe.size());
  ComparisonReport r;
  r.name_a = std::move(name_a);
  r.name_b = std::move(name_b);
  r.slack = slack;
  r.inner_fraction_a = static_cast<double>(in_a) / total;
  r.inner_fraction_b = static_cast<double>(in_b) / total;
  r.inner_fraction_difference = r.inner_fraction_b - r.inner_fraction_a;
  r.positive_label_difference =
      static_cast<long>(b.summary.positive_labels) - static_cast<long>(a.summary.positive_labels);
  r.negative_label_difference =
      static_cast<long>(b.summary.negative_labels) - static_cast<long>(a.summary.negative_labels);
  r.a_not_in_b = static_cast<double>(a_only) / total;
  r.b_not_in_a = static_cast<double>(b_only) / total;
  std::ostringstream pct;
  pct << slack * 100.0;
  if (r.a_not_in_b <= slack) {
    r.verdict = r.name_b + " ⊇ " + r.name_a + " within slack " + pct.str() + "%";
  } else if (r.b_not_in_a <= slack) {
    r.verdict = r.name_a + " ⊇ " + r.name_b + " within slack " + pct.str() + "%";
  } else {
    r.verdict = "no containment within slack " + pct.str() + "%";
  }
  return r;
}

}  // namespace feasmap
