#include "feasmap/svm.hpp"

#include "feasmap/errors.hpp"

#include "svm_json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <list>
#include <numeric>
#include <random>
#include <unordered_map>

namespace feasmap {

namespace {

constexpr double kTau = 1e-12;
constexpr const char* kModelFormat = "feasmap-svm";
constexpr int kModelVersion = 1;

double squared_distance(const Vector& a, const Vector& b) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

double gaussian(double sq_dist, double sigma) { return std::exp(-sq_dist / (2.0 * sigma * sigma)); }

// LRU cache of full kernel rows K(x_i, .).
class KernelRowCache {
 public:
  KernelRowCache(const std::vector<LabeledSample>& data, double sigma, std::size_t budget_bytes)
      : data_(data), sigma_(sigma) {
    const std::size_t row_bytes = std::max<std::size_t>(1, data.size() * sizeof(double));
    capacity_ = std::max<std::size_t>(2, budget_bytes / row_bytes);
  }

  const std::vector<double>& row(std::size_t i) {
    if (auto it = index_.find(i); it != index_.end()) {
      lru_.splice(lru_.begin(), lru_, it->second);
      return it->second->values;
    }
    if (lru_.size() >= capacity_) {
      index_.erase(lru_.back().key);
      lru_.pop_back();
    }
    Entry e{i, std::vector<double>(data_.size())};
    for (std::size_t t = 0; t < data_.size(); ++t) {
      e.values[t] = gaussian(squared_distance(data_[i].state, data_[t].state), sigma_);
    }
    lru_.push_front(std::move(e));
    index_[i] = lru_.begin();
    return lru_.front().values;
  }

 private:
  struct Entry {
    std::size_t key;
    std::vector<double> values;
  };
  const std::vector<LabeledSample>& data_;
  double sigma_;
  std::size_t capacity_;
  std::list<Entry> lru_;
  std::unordered_map<std::size_t, std::list<Entry>::iterator> index_;
};

class SmoSolver {
 public:
  SmoSolver(const std::vector<LabeledSample>& data, const KernelSpec& kernel, const TrainConfig& cfg)
      : data_(data),
        cfg_(cfg),
        n_(data.size()),
        cache_(data, kernel.sigma, cfg.cache_bytes),
        y_(n_),
        alpha_(n_, 0.0),
        grad_(n_, -1.0),
        order_(n_) {
    for (std::size_t i = 0; i < n_; ++i) y_[i] = static_cast<double>(data[i].label);
    std::iota(order_.begin(), order_.end(), 0);
    std::mt19937_64 rng(cfg.seed);
    std::shuffle(order_.begin(), order_.end(), rng);
  }

  // Runs SMO until the maximal violating pair gap drops below eps or the iteration cap is hit.
  bool optimize(double eps, long max_iterations) {
    while (iterations_ < max_iterations) {
      std::size_t i = 0;
      std::size_t j = 0;
      if (!select_pair(eps, i, j)) return true;
      update_pair(i, j);
      ++iterations_;
    }
    return false;
  }

  // Solves the KKT system exactly on the current active set. Keeps the result only if it
  // stays inside the box and all multipliers at the bounds remain optimal.
  bool polish() {
    const double upper = cfg_.regularization_L;
    std::vector<std::size_t> free_set;
    for (std::size_t t = 0; t < n_; ++t) {
      if (alpha_[t] > 0.0 && alpha_[t] < upper) free_set.push_back(t);
    }
    if (free_set.empty()) return false;
    const auto f = static_cast<Eigen::Index>(free_set.size());
    Matrix a = Matrix::Zero(f + 1, f + 1);
    Vector rhs = Vector::Zero(f + 1);
    for (Eigen::Index r = 0; r < f; ++r) {
      const std::size_t k = free_set[static_cast<std::size_t>(r)];
      const auto& row = cache_.row(k);
      for (Eigen::Index c = 0; c < f; ++c) {
        const std::size_t j = free_set[static_cast<std::size_t>(c)];
        a(r, c) = y_[k] * y_[j] * row[j];
      }
      a(r, f) = y_[k];
      a(f, r) = y_[k];
      double bound_part = 0.0;
      for (std::size_t j = 0; j < n_; ++j) {
        if (alpha_[j] >= upper) bound_part += y_[k] * y_[j] * row[j] * upper;
      }
      rhs[r] = 1.0 - bound_part;
    }
    double bound_sum = 0.0;
    for (std::size_t j = 0; j < n_; ++j) {
      if (alpha_[j] >= upper) bound_sum += y_[j] * upper;
    }
    rhs[f] = -bound_sum;
    const Vector sol = a.fullPivLu().solve(rhs);
    if (!sol.allFinite() || (a * sol - rhs).cwiseAbs().maxCoeff() > 1e-8) return false;
    for (Eigen::Index r = 0; r < f; ++r) {
      if (sol[r] < -1e-9 || sol[r] > upper + 1e-9) return false;
    }

    std::vector<double> saved_alpha = alpha_;
    std::vector<double> saved_grad = grad_;
    for (Eigen::Index r = 0; r < f; ++r) {
      alpha_[free_set[static_cast<std::size_t>(r)]] = std::clamp(sol[r], 0.0, upper);
    }
    recompute_gradient();
    if (max_violation() > cfg_.kkt_tol) {
      alpha_ = std::move(saved_alpha);
      grad_ = std::move(saved_grad);
      return false;
    }
    return true;
  }

  double max_violation() const {
    double m_up = -std::numeric_limits<double>::infinity();
    double m_low = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n_; ++t) {
      const double v = -y_[t] * grad_[t];
      if (in_up(t)) m_up = std::max(m_up, v);
      if (in_low(t)) m_low = std::min(m_low, v);
    }
    return m_up - m_low;
  }

  double bias() const {
    const double upper = cfg_.regularization_L;
    double sum = 0.0;
    std::size_t free_count = 0;
    double lb = -std::numeric_limits<double>::infinity();
    double ub = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n_; ++t) {
      // y_t * phi(x_t) = G_t + 1 + y_t * b
      const double yg = y_[t] * grad_[t];
      if (alpha_[t] > 0.0 && alpha_[t] < upper) {
        sum += -yg;
        ++free_count;
      } else if ((alpha_[t] <= 0.0) == (y_[t] > 0.0)) {
        lb = std::max(lb, -yg);
      } else {
        ub = std::min(ub, -yg);
      }
    }
    if (free_count > 0) return sum / static_cast<double>(free_count);
    if (!std::isfinite(lb)) return ub;
    if (!std::isfinite(ub)) return lb;
    return 0.5 * (lb + ub);
  }

  double objective() const {
    double acc = 0.0;
    for (std::size_t t = 0; t < n_; ++t) acc += alpha_[t] * (grad_[t] - 1.0);
    return 0.5 * acc;
  }

  const std::vector<double>& alphas() const { return alpha_; }
  long iterations() const { return iterations_; }

 private:
  bool in_up(std::size_t t) const {
    return (y_[t] > 0.0 && alpha_[t] < cfg_.regularization_L) || (y_[t] < 0.0 && alpha_[t] > 0.0);
  }
  bool in_low(std::size_t t) const {
    return (y_[t] < 0.0 && alpha_[t] < cfg_.regularization_L) || (y_[t] > 0.0 && alpha_[t] > 0.0);
  }

  bool select_pair(double eps, std::size_t& out_i, std::size_t& out_j) {
    double g_max = -std::numeric_limits<double>::infinity();
    std::size_t i = n_;
    for (std::size_t t : order_) {
      if (in_up(t) && -y_[t] * grad_[t] > g_max) {
        g_max = -y_[t] * grad_[t];
        i = t;
      }
    }
    if (i == n_) return false;
    const auto& row_i = cache_.row(i);
    double g_min = std::numeric_limits<double>::infinity();
    double best_gain = std::numeric_limits<double>::infinity();
    std::size_t j = n_;
    for (std::size_t t : order_) {
      if (!in_low(t)) continue;
      const double v = -y_[t] * grad_[t];
      g_min = std::min(g_min, v);
      const double b = g_max - v;
      if (b > 0.0) {
        double a = 2.0 - 2.0 * row_i[t];  // K_ii + K_tt - 2 K_it with unit diagonal
        if (a <= 0.0) a = kTau;
        const double gain = -(b * b) / a;
        if (gain < best_gain) {
          best_gain = gain;
          j = t;
        }
      }
    }
    if (g_max - g_min < eps || j == n_) return false;
    out_i = i;
    out_j = j;
    return true;
  }

  void update_pair(std::size_t i, std::size_t j) {
    const double upper = cfg_.regularization_L;
    const auto& row_i = cache_.row(i);
    const double k_ij = row_i[j];
    const double old_i = alpha_[i];
    const double old_j = alpha_[j];
    double ai = old_i;
    double aj = old_j;
    if (y_[i] != y_[j]) {
      double quad = 2.0 - 2.0 * k_ij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad_[i] - grad_[j]) / quad;
      const double diff = ai - aj;
      ai += delta;
      aj += delta;
      if (diff > 0.0) {
        if (aj < 0.0) {
          aj = 0.0;
          ai = diff;
        }
      } else if (ai < 0.0) {
        ai = 0.0;
        aj = -diff;
      }
      if (diff > 0.0) {
        if (ai > upper) {
          ai = upper;
          aj = upper - diff;
        }
      } else if (aj > upper) {
        aj = upper;
        ai = upper + diff;
      }
    } else {
      double quad = 2.0 - 2.0 * k_ij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad_[i] - grad_[j]) / quad;
      const double sum = ai + aj;
      ai -= delta;
      aj += delta;
      if (sum > upper) {
        if (ai > upper) {
          ai = upper;
          aj = sum - upper;
        }
      } else if (aj < 0.0) {
        aj = 0.0;
        ai = sum;
      }
      if (sum > upper) {
        if (aj > upper) {
          aj = upper;
          ai = sum - upper;
        }
      } else if (ai < 0.0) {
        ai = 0.0;
        aj = sum;
      }
    }
    alpha_[i] = std::clamp(ai, 0.0, upper);
    alpha_[j] = std::clamp(aj, 0.0, upper);
    const double d_i = alpha_[i] - old_i;
    const double d_j = alpha_[j] - old_j;
    const auto& ri = cache_.row(i);
    const auto& rj = cache_.row(j);
    for (std::size_t t = 0; t < n_; ++t) {
      grad_[t] += y_[t] * (y_[i] * ri[t] * d_i + y_[j] * rj[t] * d_j);
    }
  }

  void recompute_gradient() {
    std::fill(grad_.begin(), grad_.end(), -1.0);
    for (std::size_t j = 0; j < n_; ++j) {
      if (alpha_[j] == 0.0) continue;
      const auto& row = cache_.row(j);
      for (std::size_t t = 0; t < n_; ++t) grad_[t] += y_[t] * y_[j] * row[t] * alpha_[j];
    }
  }

  const std::vector<LabeledSample>& data_;
  const TrainConfig& cfg_;
  std::size_t n_;
  KernelRowCache cache_;
  std::vector<double> y_;
  std::vector<double> alpha_;
  std::vector<double> grad_;
  std::vector<std::size_t> order_;
  long iterations_ = 0;
};

}  // namespace

void KernelSpec::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidArgument("kernel sigma must be positive");
}

void TrainConfig::validate() const {
  if (!(regularization_L > 0.0) || !std::isfinite(regularization_L)) {
    throw InvalidArgument("regularization L must be positive");
  }
  if (!(kkt_tol > 0.0)) throw InvalidArgument("kkt_tol must be positive");
  if (max_passes <= 0) throw InvalidArgument("max_passes must be positive");
}

double kernel_eval(const KernelSpec& kernel, const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw InvalidArgument("kernel_eval: dimension mismatch");
  return gaussian(squared_distance(a, b), kernel.sigma);
}

SvmModel::SvmModel(std::vector<Vector> support_points, std::vector<double> alphas, std::vector<int> labels,
                   double bias, KernelSpec kernel, double regularization_L, std::size_t training_size)
    : support_points_(std::move(support_points)),
      alphas_(std::move(alphas)),
      labels_(std::move(labels)),
      bias_(bias),
      kernel_(kernel),
      regularization_L_(regularization_L),
      training_size_(training_size) {
  if (support_points_.size() != alphas_.size() || alphas_.size() != labels_.size()) {
    throw InvalidArgument("support points, alphas and labels must have equal length");
  }
  kernel_.validate();
  for (std::size_t k = 0; k < alphas_.size(); ++k) {
    if (!(alphas_[k] >= 0.0 && alphas_[k] <= regularization_L_)) throw InvalidArgument("alpha outside [0, L]");
    if (labels_[k] != 1 && labels_[k] != -1) throw InvalidArgument("labels must be +1 or -1");
    if (support_points_[k].size() != support_points_.front().size()) {
      throw InvalidArgument("support points must share one dimension");
    }
  }
}

int SvmModel::dimension() const noexcept {
  return support_points_.empty() ? -1 : static_cast<int>(support_points_.front().size());
}

double SvmModel::decision_value(const Vector& x) const {
  if (!support_points_.empty() && x.size() != support_points_.front().size()) {
    throw InvalidArgument("decision_value: dimension mismatch");
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < support_points_.size(); ++k) {
    acc += alphas_[k] * labels_[k] * gaussian(squared_distance(support_points_[k], x), kernel_.sigma);
  }
  return acc + bias_;
}

int SvmModel::predict(const Vector& x) const { return decision_value(x) >= 0.0 ? 1 : -1; }

SvmModel train(const std::vector<LabeledSample>& data, const KernelSpec& kernel, const TrainConfig& cfg) {
  kernel.validate();
  cfg.validate();
  if (data.size() < 2) throw InvalidArgument("train: at least two samples are required");
  bool has_pos = false;
  bool has_neg = false;
  for (const auto& s : data) {
    if (s.label != 1 && s.label != -1) throw InvalidArgument("train: labels must be +1 or -1");
    if (s.state.size() != data.front().state.size()) throw InvalidArgument("train: inconsistent dimensions");
    (s.label == 1 ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) {
    throw DegenerateData("train: both classes are required; single-class data forces every alpha to zero");
  }

  SmoSolver solver(data, kernel, cfg);
  const long cap = static_cast<long>(cfg.max_passes) * static_cast<long>(data.size());
  bool converged = solver.optimize(cfg.kkt_tol, cap);
  if (converged && !solver.polish()) {
    // Tighten and retry once; the active set is usually settled by then.
    solver.optimize(cfg.kkt_tol * 1e-4, cap);
    solver.polish();
  }
  converged = converged && solver.max_violation() <= cfg.kkt_tol;
  if (!converged) warn("train: SMO stopped at the iteration cap before meeting kkt_tol");

  SvmModel model;
  model.kernel_ = kernel;
  model.regularization_L_ = cfg.regularization_L;
  model.training_size_ = data.size();
  model.bias_ = solver.bias();
  model.converged_ = converged;
  model.iterations_ = solver.iterations();
  model.dual_objective_ = solver.objective();
  const auto& alpha = solver.alphas();
  for (std::size_t k = 0; k < data.size(); ++k) {
    if (alpha[k] <= 0.0) continue;
    model.support_points_.push_back(data[k].state);
    model.alphas_.push_back(alpha[k]);
    model.labels_.push_back(data[k].label);
    model.support_indices_.push_back(k);
  }
  return model;
}

double training_accuracy(const SvmModel& model, const std::vector<LabeledSample>& data) {
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& s : data) correct += model.predict(s.state) == s.label;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

double dual_objective(const std::vector<LabeledSample>& data, const KernelSpec& kernel,
                      const std::vector<double>& alphas) {
  if (alphas.size() != data.size()) throw InvalidArgument("dual_objective: one alpha per sample required");
  double quad = 0.0;
  double lin = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    lin += alphas[i];
    for (std::size_t k = 0; k < data.size(); ++k) {
      quad += alphas[i] * alphas[k] * data[i].label * data[k].label * kernel_eval(kernel, data[i].state, data[k].state);
    }
  }
  return 0.5 * quad - lin;
}

namespace detail {

nlohmann::json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

nlohmann::json svm_to_json(const SvmModel& model) {
  nlohmann::json j;
  j["kernel"] = {{"family", "gaussian"}, {"sigma", model.kernel().sigma}};
  j["L"] = model.regularization_L();
  j["bias"] = model.bias();
  j["training_size"] = model.training_size();
  auto& svs = j["support_vectors"] = nlohmann::json::array();
  for (std::size_t k = 0; k < model.alphas().size(); ++k) {
    svs.push_back({{"x", vector_to_json(model.support_points()[k])},
                   {"alpha", model.alphas()[k]},
                   {"label", model.labels()[k]}});
  }
  return j;
}

SvmModel svm_from_json(const nlohmann::json& j) {
  if (j.at("kernel").value("family", "") != "gaussian") throw InvalidArgument("unknown kernel family");
  std::vector<Vector> points;
  std::vector<double> alphas;
  std::vector<int> labels;
  for (const auto& sv : j.at("support_vectors")) {
    points.push_back(vector_from_json(sv.at("x")));
    alphas.push_back(sv.at("alpha").get<double>());
    labels.push_back(sv.at("label").get<int>());
  }
  return SvmModel(std::move(points), std::move(alphas), std::move(labels), j.at("bias").get<double>(),
                  KernelSpec{j.at("kernel").at("sigma").get<double>()}, j.at("L").get<double>(),
                  j.at("training_size").get<std::size_t>());
}

}  // namespace detail

void save_model(const SvmModel& model, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = kModelFormat;
  j["version"] = kModelVersion;
  j.update(detail::svm_to_json(model));
  std::ofstream out(path);
  if (!out) throw InvalidArgument("save_model: cannot open " + path.string());
  out << j.dump(1) << '\n';
}

SvmModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("load_model: cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    if (j.value("format", "") != kModelFormat) throw InvalidArgument("load_model: not a feasmap SVM model");
    if (j.value("version", 0) != kModelVersion) throw InvalidArgument("load_model: unsupported model version");
    return detail::svm_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("load_model: malformed model file: " + std::string(e.what()));
  }
}

}  // namespace feasmap
