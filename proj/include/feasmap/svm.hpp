#pragma once

#include "feasmap/dynamics.hpp"
#include "feasmap/oracle.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace feasmap {

/// Gaussian kernel K(a, b) = exp(-|a - b|^2 / (2 sigma^2)).
struct KernelSpec {
  double sigma = 0.8;

  void validate() const;
};

double kernel_eval(const KernelSpec& kernel, const Vector& a, const Vector& b);

struct TrainConfig {
  double regularization_L = 10.0;
  double kkt_tol = 1e-3;
  /// SMO iterations are capped at max_passes * N.
  int max_passes = 1000;
  std::uint64_t seed = 0;
  /// Budget for cached kernel rows.
  std::size_t cache_bytes = std::size_t{256} << 20;

  void validate() const;
};

/// Soft-margin kernel SVM decision function
///   phi(x) = sum_k alpha_k y_k K(x_k, x) + bias
/// Only points with alpha_k > 0 are kept.
class SvmModel {
 public:
  SvmModel() = default;
  SvmModel(std::vector<Vector> support_points, std::vector<double> alphas, std::vector<int> labels, double bias,
           KernelSpec kernel, double regularization_L, std::size_t training_size);

  const std::vector<Vector>& support_points() const noexcept { return support_points_; }
  const std::vector<double>& alphas() const noexcept { return alphas_; }
  const std::vector<int>& labels() const noexcept { return labels_; }
  double bias() const noexcept { return bias_; }
  const KernelSpec& kernel() const noexcept { return kernel_; }
  double regularization_L() const noexcept { return regularization_L_; }
  std::size_t training_size() const noexcept { return training_size_; }
  int dimension() const noexcept;

  /// Index of each support point in the training data (empty for loaded models).
  const std::vector<std::size_t>& support_indices() const noexcept { return support_indices_; }
  bool converged() const noexcept { return converged_; }
  long iterations() const noexcept { return iterations_; }
  /// 1/2 sum_ik a_i a_k y_i y_k K_ik - sum_k a_k at the returned multipliers.
  double dual_objective() const noexcept { return dual_objective_; }

  /// Throws InvalidArgument on dimension mismatch.
  double decision_value(const Vector& x) const;
  /// +1 when decision_value >= 0, else -1.
  int predict(const Vector& x) const;

 private:
  friend SvmModel train(const std::vector<LabeledSample>&, const KernelSpec&, const TrainConfig&);

  std::vector<Vector> support_points_;
  std::vector<double> alphas_;
  std::vector<int> labels_;
  double bias_ = 0.0;
  KernelSpec kernel_;
  double regularization_L_ = 0.0;
  std::size_t training_size_ = 0;
  std::vector<std::size_t> support_indices_;
  bool converged_ = true;
  long iterations_ = 0;
  double dual_objective_ = 0.0;
};

/// Solves the dual QP
///   min 1/2 a^T Q a - 1^T a   s.t.  y^T a = 0,  0 <= a <= L,   Q_ik = y_i y_k K(x_i, x_k)
/// by SMO with second-order working-pair selection, then refines the free multipliers by an
/// exact solve of the KKT system on the detected active set.
/// Throws DegenerateData for single-class data and InvalidArgument for fewer than two samples.
SvmModel train(const std::vector<LabeledSample>& data, const KernelSpec& kernel, const TrainConfig& cfg);

/// Fraction of samples whose predicted class equals their label.
double training_accuracy(const SvmModel& model, const std::vector<LabeledSample>& data);

/// Dual objective value for arbitrary multipliers (used for verification).
double dual_objective(const std::vector<LabeledSample>& data, const KernelSpec& kernel,
                      const std::vector<double>& alphas);

/// Versioned text persistence. Decision values survive a round trip bit-for-bit.
void save_model(const SvmModel& model, const std::filesystem::path& path);
SvmModel load_model(const std::filesystem::path& path);

}  // namespace feasmap
