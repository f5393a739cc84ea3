#include "feasmap/oracle.hpp"

#include "feasmap/errors.hpp"
#include "feasmap/parallel.hpp"
#include "feasmap/setgeom.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace feasmap {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Lexicographic score: worst violation first, accumulated violation as tie-break so the
// search still has a slope to follow when the worst point is flat in one coordinate.
struct Score {
  double worst = kInf;
  double total = kInf;

  bool better_than(const Score& other) const {
    if (worst != other.worst) return worst < other.worst;
    return total < other.total;
  }
};

class PhaseOneEvaluator {
 public:
  PhaseOneEvaluator(const OcpSpec& spec, const Vector& x0, double level)
      : spec_(spec),
        x0_(x0),
        level_(level),
        dt_(spec.step_size()),
        stepper_(spec.model),
        x_(static_cast<std::size_t>(spec.model.state_dim())),
        w_(static_cast<std::size_t>(spec.model.disturbance_dim()), 0.0) {}

  /// Stops early and reports a worse-than-incumbent score once the running worst violation
  /// exceeds abort_above.
  Score evaluate(const Vector& control, double abort_above = kInf) {
    ++evaluations_;
    const int m = spec_.model.input_dim();
    const BoxSet& box = spec_.model.state_set();
    std::copy(x0_.data(), x0_.data() + x0_.size(), x_.begin());
    Score s{box.violation(x_), 0.0};
    s.total = s.worst;
    for (int seg = 0; seg < spec_.segments; ++seg) {
      std::span<const double> u(control.data() + static_cast<std::ptrdiff_t>(seg) * m, static_cast<std::size_t>(m));
      for (int k = 0; k < spec_.steps_per_segment; ++k) {
        stepper_.step(x_, u, w_, dt_);
        const double v = box.violation(x_);
        if (!std::isfinite(v)) return {kInf, kInf};
        s.worst = std::max(s.worst, v);
        s.total += v * dt_;
        if (s.worst > abort_above) return {s.worst, kInf};
      }
    }
    const Eigen::Map<const Vector> xt(x_.data(), static_cast<Eigen::Index>(x_.size()));
    const double terminal = std::max(0.0, xt.dot(spec_.terminal_weight * xt) - level_);
    if (!std::isfinite(terminal)) return {kInf, kInf};
    s.worst = std::max(s.worst, terminal);
    s.total += terminal;
    return s;
  }

  long evaluations() const { return evaluations_; }

 private:
  const OcpSpec& spec_;
  const Vector& x0_;
  double level_;
  double dt_;
  Rk4Stepper stepper_;
  std::vector<double> x_;
  std::vector<double> w_;
  long evaluations_ = 0;
};

// Zero-order hold of the clamped local feedback, one value per segment.
Vector feedback_seed(const OcpSpec& spec, const Vector& x0) {
  const int m = spec.model.input_dim();
  Vector control(spec.parameter_count());
  Rk4Stepper stepper(spec.model);
  std::vector<double> x(x0.data(), x0.data() + x0.size());
  std::vector<double> w(static_cast<std::size_t>(spec.model.disturbance_dim()), 0.0);
  const double dt = spec.step_size();
  for (int seg = 0; seg < spec.segments; ++seg) {
    const Eigen::Map<const Vector> xs(x.data(), static_cast<Eigen::Index>(x.size()));
    Vector u = -spec.feedback_gain * xs;
    if (!u.allFinite()) u.setZero();
    spec.model.input_set().clamp({u.data(), static_cast<std::size_t>(m)});
    control.segment(static_cast<Eigen::Index>(seg) * m, m) = u;
    for (int k = 0; k < spec.steps_per_segment; ++k) {
      stepper.step(x, {u.data(), static_cast<std::size_t>(m)}, w, dt);
    }
  }
  return control;
}

Vector spread_seed(const OcpSpec& spec, int restart) {
  const int dim = spec.parameter_count();
  const int m = spec.model.input_dim();
  const BoxSet& input = spec.model.input_set();
  Vector unit(dim);
  if (dim <= kMaxHaltonDimension) {
    unit = halton(1, dim, static_cast<std::uint64_t>(restart - 1)).front();
  } else {
    std::mt19937_64 rng(static_cast<std::uint64_t>(restart));
    std::uniform_real_distribution<double> unif;
    for (int i = 0; i < dim; ++i) unit[i] = unif(rng);
  }
  Vector control(dim);
  for (int i = 0; i < dim; ++i) {
    const int j = i % m;
    control[i] = input.lower()[j] + unit[i] * (input.upper()[j] - input.lower()[j]);
  }
  return control;
}

Vector initial_guess(const OcpSpec& spec, const Vector& x0, int restart) {
  if (restart == 0) return Vector::Zero(spec.parameter_count());
  if (restart == 1 && spec.feedback_gain.size() > 0) return feedback_seed(spec, x0);
  return spread_seed(spec, restart);
}

struct LocalResult {
  Vector control;
  Score score;
};

// Adaptive coordinate search with a Hooke-Jeeves pattern move after each improving sweep.
LocalResult refine(const OcpSpec& spec, PhaseOneEvaluator& eval, Vector control) {
  const int m = spec.model.input_dim();
  const int dim = spec.parameter_count();
  const BoxSet& input = spec.model.input_set();
  const long budget = eval.evaluations() + spec.max_evaluations;

  Vector width(dim);
  Vector lower(dim);
  Vector upper(dim);
  for (int i = 0; i < dim; ++i) {
    lower[i] = input.lower()[i % m];
    upper[i] = input.upper()[i % m];
    width[i] = upper[i] - lower[i];
  }
  control = control.cwiseMax(lower).cwiseMin(upper);
  Vector step = 0.25 * width;
  Score best = eval.evaluate(control);

  Vector candidate = control;
  while (best.worst > spec.feas_tol && eval.evaluations() < budget) {
    const Vector sweep_start = control;
    bool improved_any = false;
    for (int i = 0; i < dim && best.worst > spec.feas_tol; ++i) {
      bool improved = false;
      for (double dir : {1.0, -1.0}) {
        const double value = std::clamp(control[i] + dir * step[i], lower[i], upper[i]);
        if (value == control[i]) continue;
        candidate = control;
        candidate[i] = value;
        const Score s = eval.evaluate(candidate, best.worst);
        if (s.better_than(best)) {
          control = candidate;
          best = s;
          step[i] = std::min(2.0 * step[i], width[i]);
          improved = true;
          break;
        }
      }
      if (!improved) step[i] *= 0.5;
      improved_any = improved_any || improved;
    }
    if (improved_any && best.worst > spec.feas_tol) {
      candidate = (2.0 * control - sweep_start).cwiseMax(lower).cwiseMin(upper);
      const Score s = eval.evaluate(candidate, best.worst);
      if (s.better_than(best)) {
        control = candidate;
        best = s;
      }
    }
    if ((step.array() / width.array()).maxCoeff() < 1e-7) break;
  }
  return {control, best};
}

}  // namespace

void OcpSpec::validate() const {
  const int n = model.state_dim();
  const int m = model.input_dim();
  if (!(horizon > 0.0)) throw InvalidArgument("horizon_T must be positive");
  if (segments <= 0) throw InvalidArgument("segments must be positive");
  if (steps_per_segment <= 0) throw InvalidArgument("steps_per_segment must be positive");
  if (!(mu > 0.0 && mu < 1.0)) throw InvalidArgument("mu must lie in (0,1)");
  if (!(feas_tol > 0.0)) throw InvalidArgument("feas_tol must be positive");
  if (restarts <= 0) throw InvalidArgument("restarts must be positive");
  if (max_evaluations <= 0) throw InvalidArgument("max_evaluations must be positive");
  if (terminal_weight.rows() != n || terminal_weight.cols() != n) {
    throw InvalidArgument("terminal weight P must be n x n");
  }
  EllipsoidSet check(terminal_weight, mu);  // throws unless P is symmetric positive definite
  if (state_weight.size() > 0 && (state_weight.rows() != n || state_weight.cols() != n)) {
    throw InvalidArgument("state weight Q must be n x n");
  }
  if (input_weight.size() > 0 && (input_weight.rows() != m || input_weight.cols() != m)) {
    throw InvalidArgument("input weight R must be m x m");
  }
  if (feedback_gain.size() > 0 && (feedback_gain.rows() != m || feedback_gain.cols() != n)) {
    throw InvalidArgument("feedback gain K must be m x n");
  }
}

double OcpSpec::terminal_level() const {
  if (!robust) return mu;
  const double margin = erosion_margin >= 0.0 ? erosion_margin : model.disturbance_bound();
  return erode_ellipsoid(EllipsoidSet(terminal_weight, mu), margin).eroded_level;
}

OcpSpec make_cart_spring_ocp(double horizon, double mu, bool robust) {
  OcpSpec spec(make_cart_spring());
  spec.horizon = horizon;
  spec.mu = mu;
  spec.robust = robust;
  spec.state_weight = cart_spring_state_weight();
  spec.input_weight = cart_spring_input_weight();
  spec.terminal_weight = cart_spring_terminal_matrix();
  spec.feedback_gain = cart_spring_feedback_gain();
  return spec;
}

double control_violation(const OcpSpec& spec, const Vector& x0, const Vector& control) {
  if (x0.size() != spec.model.state_dim() || control.size() != spec.parameter_count()) {
    throw InvalidArgument("control_violation: dimension mismatch");
  }
  PhaseOneEvaluator eval(spec, x0, spec.terminal_level());
  return eval.evaluate(control).worst;
}

FeasibilityResult solve_feasibility(const OcpSpec& spec, const Vector& x0) {
  if (x0.size() != spec.model.state_dim()) throw InvalidArgument("solve_feasibility: state dimension mismatch");
  if (!spec.model.state_set().contains(x0)) throw OutOfDomain("solve_feasibility: initial state lies outside X");

  PhaseOneEvaluator eval(spec, x0, spec.terminal_level());
  FeasibilityResult result;
  Score best;
  for (int r = 0; r < spec.restarts; ++r) {
    LocalResult local = refine(spec, eval, initial_guess(spec, x0, r));
    result.restarts_used = r + 1;
    if (r == 0 || local.score.better_than(best)) {
      best = local.score;
      result.control = std::move(local.control);
    }
    if (best.worst <= spec.feas_tol) break;
  }
  result.evaluations = eval.evaluations();
  result.diverged = !std::isfinite(best.worst);
  result.violation = best.worst;
  result.label = best.worst <= spec.feas_tol ? 1 : -1;
  return result;
}

LabelingResult label_dataset(const OcpSpec& spec, const std::vector<Vector>& points, int workers) {
  if (points.empty()) throw InvalidArgument("label_dataset: no samples to label");
  spec.validate();
  LabelingResult out;
  out.samples.resize(points.size());
  parallel_for(points.size(), workers, [&](std::size_t i) {
    const FeasibilityResult r = solve_feasibility(spec, points[i]);
    out.samples[i] = {points[i], r.label, r.violation};
  });
  const int first = out.samples.front().label;
  out.degenerate = std::all_of(out.samples.begin(), out.samples.end(),
                               [first](const LabeledSample& s) { return s.label == first; });
  if (out.degenerate) warn("label_dataset: every sample received the same label");
  return out;
}

EnrichmentResult enrich_feasible(const OcpSpec& spec, const std::vector<LabeledSample>& existing,
                                 std::size_t target_positive, std::uint64_t next_index, int workers) {
  const auto have = static_cast<std::size_t>(
      std::count_if(existing.begin(), existing.end(), [](const LabeledSample& s) { return s.label == 1; }));
  EnrichmentResult out;
  out.next_index = next_index;
  if (have >= target_positive) return out;

  const std::size_t needed = target_positive - have;
  const long cap = 10L * static_cast<long>(target_positive);
  const BoxSet& box = spec.model.state_set();
  const std::size_t batch = static_cast<std::size_t>(std::max(1, workers)) * 8;

  while (out.added.size() < needed) {
    if (out.candidates_tried >= cap) {
      out.cap_exceeded = true;
      break;
    }
    const std::size_t count = std::min<std::size_t>(batch, static_cast<std::size_t>(cap - out.candidates_tried));
    const SampleSet candidates = halton_samples(count, box, out.next_index);
    std::vector<FeasibilityResult> results(count);
    parallel_for(count, workers, [&](std::size_t i) { results[i] = solve_feasibility(spec, candidates.points[i]); });
    // Consume in sequence order so the result does not depend on the batch size.
    for (std::size_t i = 0; i < count && out.added.size() < needed; ++i) {
      ++out.candidates_tried;
      ++out.next_index;
      if (results[i].label == 1) out.added.push_back({candidates.points[i], 1, results[i].violation});
    }
  }
  if (out.cap_exceeded) warn("enrich_feasible: candidate cap reached before the feasible target");
  return out;
}

TerminalCheckReport verify_terminal_assumptions(const OcpSpec& spec, const Matrix& gain, int n_samples,
                                                double tolerance, std::uint64_t seed) {
  const int n = spec.model.state_dim();
  const int m = spec.model.input_dim();
  if (gain.rows() != m || gain.cols() != n) throw InvalidArgument("verify_terminal_assumptions: K must be m x n");
  const EllipsoidSet omega(spec.terminal_weight, spec.mu);
  const Matrix q = spec.state_weight.size() > 0 ? spec.state_weight : Matrix::Zero(n, n);
  const Matrix r = spec.input_weight.size() > 0 ? spec.input_weight : Matrix::Zero(m, m);

  TerminalCheckReport report;
  report.max_decrease_violation = -kInf;
  for (const Vector& x : ellipsoid_uniform_points(omega, static_cast<std::size_t>(std::max(0, n_samples)), seed)) {
    const Vector u = -gain * x;
    const Vector f = eval_rhs(spec.model, x, u);
    const double decrease = 2.0 * x.dot(spec.terminal_weight * f) + x.dot(q * x) + u.dot(r * u);
    const bool decrease_ok = decrease <= tolerance;
    const bool input_ok = spec.model.input_set().contains(u);
    report.max_decrease_violation = std::max(report.max_decrease_violation, decrease);
    report.decrease_failures += !decrease_ok;
    report.input_failures += !input_ok;
    report.passing += decrease_ok && input_ok;
    ++report.samples;
  }
  report.pass_fraction = report.samples > 0 ? static_cast<double>(report.passing) / report.samples : 0.0;
  return report;
}

}  // namespace feasmap
