#pragma once

#include "feasmap/dynamics.hpp"
#include "feasmap/sampling.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace feasmap {

/// Finite-horizon feasibility problem: steer x0 into {x : x^T P x <= level} at time T with
/// u(t) in U and x(t) in X, using a piecewise-constant control on `segments` intervals.
struct OcpSpec {
  explicit OcpSpec(SystemModel system) : model(std::move(system)) {}

  SystemModel model;
  double horizon = 1.0;
  int segments = 10;
  int steps_per_segment = 10;
  Matrix state_weight;     // Q
  Matrix input_weight;     // R
  Matrix terminal_weight;  // P
  double mu = 0.5;
  double feas_tol = 1e-6;
  int restarts = 5;
  /// Local feedback gain K (m x n) used to seed one restart; empty disables that seed.
  Matrix feedback_gain;
  /// When set, the terminal level is the eroded level for the model's disturbance bound.
  bool robust = false;
  /// Erosion margin used when robust; negative means the model's disturbance bound.
  double erosion_margin = -1.0;
  /// Objective evaluations allowed per restart.
  int max_evaluations = 600;

  /// Throws InvalidArgument naming the first offending field.
  void validate() const;
  /// mu, or the eroded level when robust.
  double terminal_level() const;
  double step_size() const { return horizon / (segments * steps_per_segment); }
  int parameter_count() const { return segments * model.input_dim(); }
};

/// Cart-spring feasibility problem with the benchmark weights, P and K.
OcpSpec make_cart_spring_ocp(double horizon, double mu, bool robust = false);

struct FeasibilityResult {
  int label = -1;
  double violation = 0.0;
  /// Best control found, segment-major (segments x m).
  Vector control;
  int restarts_used = 0;
  long evaluations = 0;
  /// Every restart diverged numerically.
  bool diverged = false;
};

struct LabeledSample {
  Vector state;
  int label = -1;
  double violation = 0.0;
};

/// Maximum constraint violation of a control sequence from x0: the larger of the worst
/// state-box excess over every integrator step and max(0, x(T)^T P x(T) - level).
/// Returns +infinity if the trajectory diverges.
double control_violation(const OcpSpec& spec, const Vector& x0, const Vector& control);

/// Phase-1 feasibility decision by multi-start coordinate search. A +1 label is certified by
/// the returned control; -1 may be a false negative. Throws OutOfDomain when x0 is not in X.
FeasibilityResult solve_feasibility(const OcpSpec& spec, const Vector& x0);

struct LabelingResult {
  std::vector<LabeledSample> samples;
  /// All labels are equal.
  bool degenerate = false;
};

/// Labels every point independently on `workers` threads; output order follows input order.
LabelingResult label_dataset(const OcpSpec& spec, const std::vector<Vector>& points, int workers = 1);

struct EnrichmentResult {
  std::vector<LabeledSample> added;
  /// Halton index to continue from next time.
  std::uint64_t next_index = 1;
  long candidates_tried = 0;
  bool cap_exceeded = false;
};

/// Continues the Halton sequence over the state box from `next_index`, keeping only newly
/// found feasible points until `target_positive` feasible samples exist in total or
/// 10 * target_positive candidates have been tried.
EnrichmentResult enrich_feasible(const OcpSpec& spec, const std::vector<LabeledSample>& existing,
                                 std::size_t target_positive, std::uint64_t next_index, int workers = 1);

struct TerminalCheckReport {
  int samples = 0;
  int passing = 0;
  double pass_fraction = 0.0;
  /// Largest value of 2 x^T P f(x, -Kx) + |x|_Q^2 + |Kx|_R^2 seen.
  double max_decrease_violation = 0.0;
  int decrease_failures = 0;
  int input_failures = 0;
};

/// Samples points inside {x^T P x <= mu} and checks the continuous-time terminal decrease
/// condition and input admissibility of kappa(x) = -K x at each.
TerminalCheckReport verify_terminal_assumptions(const OcpSpec& spec, const Matrix& gain, int n_samples,
                                                double tolerance = 1e-9, std::uint64_t seed = 0);

}  // namespace feasmap
