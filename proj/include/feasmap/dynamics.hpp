#pragma once

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace feasmap {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Receives non-fatal diagnostics (out-of-bound disturbances, degenerate data, ...).
using WarningHandler = std::function<void(std::string_view)>;

/// Installs a process-wide warning handler and returns the previous one.
/// The default handler writes to stderr.
WarningHandler set_warning_handler(WarningHandler handler);
void warn(std::string_view message);

/// Axis-aligned box {x : lower <= x <= upper}.
class BoxSet {
 public:
  /// Throws InvalidArgument unless lower < upper componentwise and 0 is interior.
  BoxSet(Vector lower, Vector upper);

  static BoxSet symmetric(int dimension, double half_width);

  int dimension() const noexcept { return static_cast<int>(lower_.size()); }
  const Vector& lower() const noexcept { return lower_; }
  const Vector& upper() const noexcept { return upper_; }

  bool contains(std::span<const double> x, double tol = 0.0) const;
  bool contains(const Vector& x, double tol = 0.0) const {
    return contains(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())), tol);
  }

  /// Largest componentwise distance outside the box; 0 inside.
  double violation(std::span<const double> x) const;

  void clamp(std::span<double> x) const;

 private:
  Vector lower_;
  Vector upper_;
};

/// Right-hand side F(x, u, w) written into xdot. Must be pure.
using RhsFunction = std::function<void(std::span<const double> x, std::span<const double> u,
                                       std::span<const double> w, std::span<double> xdot)>;

/// Controlled ODE  xdot = F(x, u, w)  with box state and input constraints and an
/// additive disturbance bounded by |w_i| <= disturbance_bound.
class SystemModel {
 public:
  SystemModel(std::string name, int state_dim, int input_dim, int disturbance_dim, RhsFunction rhs,
              BoxSet state_set, BoxSet input_set, double disturbance_bound);

  const std::string& name() const noexcept { return name_; }
  int state_dim() const noexcept { return n_; }
  int input_dim() const noexcept { return m_; }
  int disturbance_dim() const noexcept { return p_; }
  const BoxSet& state_set() const noexcept { return state_set_; }
  const BoxSet& input_set() const noexcept { return input_set_; }
  double disturbance_bound() const noexcept { return w_bar_; }

  /// Unchecked evaluation used on hot paths.
  void rhs(std::span<const double> x, std::span<const double> u, std::span<const double> w,
           std::span<double> xdot) const {
    rhs_(x, u, w, xdot);
  }

 private:
  std::string name_;
  int n_;
  int m_;
  int p_;
  RhsFunction rhs_;
  BoxSet state_set_;
  BoxSet input_set_;
  double w_bar_;
};

/// Checked evaluation of F(x, u, w). An empty w means the nominal field f(x, u).
Vector eval_rhs(const SystemModel& model, const Vector& x, const Vector& u, const Vector& w = Vector());

/// Cart with a hardening spring and viscous damping:
///   x1' = x2,  x2' = -(k0/M) exp(-x1) x1 - (hd/M) x2 + u/M + w
/// with M = 1.8, k0 = 1.2, hd = 0.25, |x_i| <= 2, |u| <= 3, |w| <= 0.01.
SystemModel make_cart_spring();

/// Terminal-cost matrix of the cart-spring benchmark, off-diagonal sign corrected so that
/// it is a Lyapunov matrix for the closed loop under cart_spring_feedback_gain().
Matrix cart_spring_terminal_matrix();
/// The terminal-cost matrix with the off-diagonal sign as it was originally published.
/// It does not satisfy the terminal decrease condition; kept for diagnostics.
Matrix cart_spring_printed_terminal_matrix();
/// Local feedback gain K for kappa(x) = -K x (1 x 2).
Matrix cart_spring_feedback_gain();
Matrix cart_spring_state_weight();
Matrix cart_spring_input_weight();

/// Looks up a built-in model by registry name. Throws InvalidArgument on unknown names.
SystemModel make_model(std::string_view name);
std::vector<std::string> registered_models();

struct Trajectory {
  std::vector<double> times;
  std::vector<Vector> states;
};

/// Piecewise-constant signal: values[k] holds on [k*segment_length, (k+1)*segment_length).
/// Queries past the last segment return the last value.
struct PiecewiseConstantSignal {
  double segment_length = 0.0;
  std::vector<Vector> values;

  static PiecewiseConstantSignal constant(Vector value, double duration);
  const Vector& at(double t) const;
};

/// Reusable fixed-step RK4 stepper. Holds scratch buffers, so one instance per thread.
class Rk4Stepper {
 public:
  explicit Rk4Stepper(const SystemModel& model);

  /// Advances x in place by one step of length dt.
  void step(std::span<double> x, std::span<const double> u, std::span<const double> w, double dt);

  /// One step under the state feedback u = -gain * x, re-evaluated at every RK4 stage.
  void step_feedback(std::span<double> x, const Matrix& gain, std::span<const double> w, double dt);

 private:
  const SystemModel* model_;
  std::vector<double> k1_, k2_, k3_, k4_, tmp_, u_;
};

/// Fixed-step classical RK4 integration over [0, duration]. The disturbance signal may be
/// empty (nominal dynamics). Throws Divergence when the state becomes non-finite.
Trajectory integrate(const SystemModel& model, const Vector& x0, const PiecewiseConstantSignal& control,
                     const PiecewiseConstantSignal& disturbance, double duration, double dt);

}  // namespace feasmap
