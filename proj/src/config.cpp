#include "feasmap/config.hpp"

#include "feasmap/csv_io.hpp"
#include "feasmap/errors.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace feasmap {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  std::string out(s.substr(b, e - b + 1));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError(key + ": cannot parse '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + value + "'");
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

template <typename T>
Setter number(T RunConfig::*field) {
  return [field](RunConfig& c, const std::string& k, const std::string& v) { c.*field = parse_number<T>(k, v); };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"model", [](RunConfig& c, const std::string&, const std::string& v) { c.model = v; }},
      {"N", number(&RunConfig::N)},
      {"horizon_T", number(&RunConfig::horizon_T)},
      {"segments", number(&RunConfig::segments)},
      {"steps_per_segment", number(&RunConfig::steps_per_segment)},
      {"mu", number(&RunConfig::mu)},
      {"sigma", number(&RunConfig::sigma)},
      {"regularization_L", number(&RunConfig::regularization_L)},
      {"w_bar", number(&RunConfig::w_bar)},
      {"feas_tol", number(&RunConfig::feas_tol)},
      {"restarts", number(&RunConfig::restarts)},
      {"max_evaluations", number(&RunConfig::max_evaluations)},
      {"workers", number(&RunConfig::workers)},
      {"calibration",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         try {
           c.calibration = parse_calibration_mode(v);
         } catch (const InvalidArgument&) {
           throw ConfigError(k + ": expected strict or margin, got '" + v + "'");
         }
       }},
      {"delta", number(&RunConfig::delta)},
      {"kkt_tol", number(&RunConfig::kkt_tol)},
      {"robust", [](RunConfig& c, const std::string& k, const std::string& v) { c.robust = parse_bool(k, v); }},
      {"enrich_target", number(&RunConfig::enrich_target)},
      {"boundary_resolution", number(&RunConfig::boundary_resolution)},
      {"grid_resolution", number(&RunConfig::grid_resolution)},
      {"probe_count", number(&RunConfig::probe_count)},
      {"output_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = v; }},
      {"seed", number(&RunConfig::seed)},
  };
  return table;
}

std::vector<std::string> range_errors(const RunConfig& c) {
  std::vector<std::string> errors;
  const auto& models = registered_models();
  if (std::find(models.begin(), models.end(), c.model) == models.end()) {
    errors.push_back("model: unknown model '" + c.model + "'");
  }
  if (c.N < 2) errors.push_back("N must be at least 2");
  if (!(c.horizon_T > 0.0)) errors.push_back("horizon_T must be positive");
  if (c.segments <= 0) errors.push_back("segments must be positive");
  if (c.steps_per_segment <= 0) errors.push_back("steps_per_segment must be positive");
  if (!(c.mu > 0.0 && c.mu < 1.0)) errors.push_back("mu must lie in (0,1)");
  if (!(c.sigma > 0.0)) errors.push_back("sigma must be positive");
  if (!(c.regularization_L > 0.0)) errors.push_back("regularization_L must be positive");
  if (!(c.w_bar >= 0.0)) errors.push_back("w_bar must be nonnegative");
  if (!(c.feas_tol > 0.0)) errors.push_back("feas_tol must be positive");
  if (c.restarts <= 0) errors.push_back("restarts must be positive");
  if (c.max_evaluations <= 0) errors.push_back("max_evaluations must be positive");
  if (c.workers <= 0) errors.push_back("workers must be positive");
  if (!(c.delta > 0.0)) errors.push_back("delta must be positive");
  if (!(c.kkt_tol > 0.0)) errors.push_back("kkt_tol must be positive");
  if (c.boundary_resolution < 2) errors.push_back("boundary_resolution must be at least 2");
  if (c.grid_resolution < 1) errors.push_back("grid_resolution must be positive");
  if (c.probe_count == 0) errors.push_back("probe_count must be positive");
  if (c.output_dir.empty()) errors.push_back("output_dir must not be empty");
  return errors;
}

std::string join(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += (out.empty() ? "" : "\n") + l;
  return out;
}

}  // namespace

const std::vector<std::string>& required_config_keys() {
  static const std::vector<std::string> keys = {"model", "N", "horizon_T", "mu", "sigma", "regularization_L"};
  return keys;
}

const std::vector<std::string>& known_config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, setter] : setters()) k.push_back(name);
    return k;
  }();
  return keys;
}

RunConfig validate_config(std::string_view text) {
  RunConfig config;
  std::vector<std::string> errors;
  std::map<std::string, int> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(line_no) + ": expected key = value");
      continue;
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) {
      errors.push_back("unknown key '" + key + "' (line " + std::to_string(line_no) + ")");
      continue;
    }
    if (seen.count(key)) {
      errors.push_back("duplicate key '" + key + "' (lines " + std::to_string(seen[key]) + " and " +
                       std::to_string(line_no) + ")");
      continue;
    }
    seen[key] = line_no;
    try {
      it->second(config, key, value);
    } catch (const ConfigError& e) {
      errors.push_back(e.what());
    }
  }
  for (const auto& key : required_config_keys()) {
    if (!seen.count(key)) errors.push_back("missing required key '" + key + "'");
  }
  for (auto& e : range_errors(config)) errors.push_back(std::move(e));
  if (!errors.empty()) throw ConfigError(join(errors));
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return validate_config(text.str());
}

void check_config(const RunConfig& config) {
  const auto errors = range_errors(config);
  if (!errors.empty()) throw ConfigError(join(errors));
}

std::string to_config_text(const RunConfig& c) {
  std::ostringstream out;
  out << "model = " << c.model << '\n'
      << "N = " << c.N << '\n'
      << "horizon_T = " << format_double(c.horizon_T) << '\n'
      << "segments = " << c.segments << '\n'
      << "steps_per_segment = " << c.steps_per_segment << '\n'
      << "mu = " << format_double(c.mu) << '\n'
      << "sigma = " << format_double(c.sigma) << '\n'
      << "regularization_L = " << format_double(c.regularization_L) << '\n'
      << "w_bar = " << format_double(c.w_bar) << '\n'
      << "feas_tol = " << format_double(c.feas_tol) << '\n'
      << "restarts = " << c.restarts << '\n'
      << "max_evaluations = " << c.max_evaluations << '\n'
      << "workers = " << c.workers << '\n'
      << "calibration = " << to_string(c.calibration) << '\n'
      << "delta = " << format_double(c.delta) << '\n'
      << "kkt_tol = " << format_double(c.kkt_tol) << '\n'
      << "robust = " << (c.robust ? "true" : "false") << '\n'
      << "enrich_target = " << c.enrich_target << '\n'
      << "boundary_resolution = " << c.boundary_resolution << '\n'
      << "grid_resolution = " << c.grid_resolution << '\n'
      << "probe_count = " << c.probe_count << '\n'
      << "output_dir = " << c.output_dir.string() << '\n'
      << "seed = " << c.seed << '\n';
  return out.str();
}

OcpSpec make_ocp(const RunConfig& c) {
  check_config(c);
  if (c.model != "cart_spring") throw ConfigError("model: no terminal ingredients registered for '" + c.model + "'");
  OcpSpec spec = make_cart_spring_ocp(c.horizon_T, c.mu, c.robust);
  spec.segments = c.segments;
  spec.steps_per_segment = c.steps_per_segment;
  spec.feas_tol = c.feas_tol;
  spec.restarts = c.restarts;
  spec.max_evaluations = c.max_evaluations;
  spec.erosion_margin = c.w_bar;
  return spec;
}

}  // namespace feasmap
