#include "feasmap/dynamics.hpp"

#include "feasmap/errors.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <mutex>
#include <sstream>

namespace feasmap {

namespace {

std::mutex g_warning_mutex;
WarningHandler g_warning_handler = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };

std::span<const double> view(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

bool near_integer_ratio(double whole, double part) {
  const double ratio = whole / part;
  return std::abs(ratio - std::round(ratio)) <= 1e-9 * std::max(1.0, ratio) && std::round(ratio) >= 1.0;
}

}  // namespace

WarningHandler set_warning_handler(WarningHandler handler) {
  std::lock_guard lock(g_warning_mutex);
  std::swap(handler, g_warning_handler);
  return handler;
}

void warn(std::string_view message) {
  std::lock_guard lock(g_warning_mutex);
  if (g_warning_handler) g_warning_handler(message);
}

BoxSet::BoxSet(Vector lower, Vector upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
  if (lower_.size() != upper_.size() || lower_.size() == 0) {
    throw InvalidArgument("box bounds must be nonempty and of equal length");
  }
  for (Eigen::Index i = 0; i < lower_.size(); ++i) {
    if (!std::isfinite(lower_[i]) || !std::isfinite(upper_[i]) || !(lower_[i] < upper_[i])) {
      throw InvalidArgument("box bounds must be finite with lower < upper");
    }
    if (!(lower_[i] < 0.0 && 0.0 < upper_[i])) {
      throw InvalidArgument("box must contain the origin in its interior");
    }
  }
}

BoxSet BoxSet::symmetric(int dimension, double half_width) {
  return BoxSet(Vector::Constant(dimension, -half_width), Vector::Constant(dimension, half_width));
}

bool BoxSet::contains(std::span<const double> x, double tol) const {
  if (static_cast<Eigen::Index>(x.size()) != lower_.size()) {
    throw InvalidArgument("point dimension does not match box dimension");
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] >= lower_[i] - tol && x[i] <= upper_[i] + tol)) return false;
  }
  return true;
}

double BoxSet::violation(std::span<const double> x) const {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    worst = std::max({worst, lower_[i] - x[i], x[i] - upper_[i]});
  }
  return worst;
}

void BoxSet::clamp(std::span<double> x) const {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lower_[i], upper_[i]);
}

SystemModel::SystemModel(std::string name, int state_dim, int input_dim, int disturbance_dim, RhsFunction rhs,
                         BoxSet state_set, BoxSet input_set, double disturbance_bound)
    : name_(std::move(name)),
      n_(state_dim),
      m_(input_dim),
      p_(disturbance_dim),
      rhs_(std::move(rhs)),
      state_set_(std::move(state_set)),
      input_set_(std::move(input_set)),
      w_bar_(disturbance_bound) {
  if (n_ <= 0 || m_ <= 0 || p_ < 0) throw InvalidArgument("model dimensions must be positive");
  if (state_set_.dimension() != n_) throw InvalidArgument("state set dimension must equal state dimension");
  if (input_set_.dimension() != m_) throw InvalidArgument("input set dimension must equal input dimension");
  if (!(w_bar_ >= 0.0) || !std::isfinite(w_bar_)) throw InvalidArgument("disturbance bound must be finite and >= 0");
  if (!rhs_) throw InvalidArgument("model right-hand side is empty");
}

Vector eval_rhs(const SystemModel& model, const Vector& x, const Vector& u, const Vector& w) {
  if (x.size() != model.state_dim() || u.size() != model.input_dim()) {
    throw InvalidArgument("eval_rhs: state or input dimension does not match the model");
  }
  Vector w_full = w.size() == 0 ? Vector::Zero(model.disturbance_dim()) : w;
  if (w_full.size() != model.disturbance_dim()) {
    throw InvalidArgument("eval_rhs: disturbance dimension does not match the model");
  }
  if (w_full.size() > 0 && w_full.cwiseAbs().maxCoeff() > model.disturbance_bound()) {
    std::ostringstream msg;
    msg << "disturbance magnitude " << w_full.cwiseAbs().maxCoeff() << " exceeds bound "
        << model.disturbance_bound() << " of model " << model.name();
    warn(msg.str());
  }
  Vector xdot(model.state_dim());
  model.rhs(view(x), view(u), view(w_full), {xdot.data(), static_cast<std::size_t>(xdot.size())});
  return xdot;
}

SystemModel make_cart_spring() {
  constexpr double mass = 1.8;
  constexpr double spring = 1.2;
  constexpr double damping = 0.25;
  auto rhs = [](std::span<const double> x, std::span<const double> u, std::span<const double> w,
                std::span<double> xdot) {
    xdot[0] = x[1];
    xdot[1] = -(spring / mass) * std::exp(-x[0]) * x[0] - (damping / mass) * x[1] + u[0] / mass + w[0];
  };
  return SystemModel("cart_spring", 2, 1, 1, rhs, BoxSet::symmetric(2, 2.0), BoxSet::symmetric(1, 3.0), 0.01);
}

Matrix cart_spring_terminal_matrix() {
  Matrix p(2, 2);
  p << 5.0511, 2.2731, 2.2731, 2.4586;
  return p;
}

Matrix cart_spring_printed_terminal_matrix() {
  Matrix p(2, 2);
  p << 5.0511, -2.2731, -2.2731, 2.4586;
  return p;
}

Matrix cart_spring_feedback_gain() {
  Matrix k(1, 2);
  k << 4.2291, 4.8551;
  return k;
}

Matrix cart_spring_state_weight() { return Matrix::Identity(2, 2); }

Matrix cart_spring_input_weight() { return Matrix::Constant(1, 1, 0.1); }

SystemModel make_model(std::string_view name) {
  if (name == "cart_spring") return make_cart_spring();
  throw InvalidArgument("unknown model '" + std::string(name) + "'");
}

std::vector<std::string> registered_models() { return {"cart_spring"}; }

PiecewiseConstantSignal PiecewiseConstantSignal::constant(Vector value, double duration) {
  return {duration, {std::move(value)}};
}

const Vector& PiecewiseConstantSignal::at(double t) const {
  if (values.empty()) throw InvalidArgument("signal has no segments");
  if (values.size() == 1) return values.front();
  auto k = static_cast<std::size_t>(std::floor(t / segment_length + 1e-9));
  return values[std::min(k, values.size() - 1)];
}

Rk4Stepper::Rk4Stepper(const SystemModel& model)
    : model_(&model),
      k1_(model.state_dim()),
      k2_(model.state_dim()),
      k3_(model.state_dim()),
      k4_(model.state_dim()),
      tmp_(model.state_dim()),
      u_(model.input_dim()) {}

void Rk4Stepper::step(std::span<double> x, std::span<const double> u, std::span<const double> w, double dt) {
  const std::size_t n = x.size();
  model_->rhs(x, u, w, k1_);
  for (std::size_t i = 0; i < n; ++i) tmp_[i] = x[i] + 0.5 * dt * k1_[i];
  model_->rhs(tmp_, u, w, k2_);
  for (std::size_t i = 0; i < n; ++i) tmp_[i] = x[i] + 0.5 * dt * k2_[i];
  model_->rhs(tmp_, u, w, k3_);
  for (std::size_t i = 0; i < n; ++i) tmp_[i] = x[i] + dt * k3_[i];
  model_->rhs(tmp_, u, w, k4_);
  for (std::size_t i = 0; i < n; ++i) x[i] += dt / 6.0 * (k1_[i] + 2.0 * k2_[i] + 2.0 * k3_[i] + k4_[i]);
}

void Rk4Stepper::step_feedback(std::span<double> x, const Matrix& gain, std::span<const double> w, double dt) {
  const std::size_t n = x.size();
  auto feedback = [&](std::span<const double> state) {
    for (std::size_t r = 0; r < u_.size(); ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < n; ++c) acc -= gain(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * state[c];
      u_[r] = acc;
    }
    return std::span<const double>(u_);
  };
  model_->rhs(x, feedback(x), w, k1_);
  for (std::size_t i = 0; i < n; ++i) tmp_[i] = x[i] + 0.5 * dt * k1_[i];
  model_->rhs(tmp_, feedback(tmp_), w, k2_);
  for (std::size_t i = 0; i < n; ++i) tmp_[i] = x[i] + 0.5 * dt * k2_[i];
  model_->rhs(tmp_, feedback(tmp_), w, k3_);
  for (std::size_t i = 0; i < n; ++i) tmp_[i] = x[i] + dt * k3_[i];
  model_->rhs(tmp_, feedback(tmp_), w, k4_);
  for (std::size_t i = 0; i < n; ++i) x[i] += dt / 6.0 * (k1_[i] + 2.0 * k2_[i] + 2.0 * k3_[i] + k4_[i]);
}

Trajectory integrate(const SystemModel& model, const Vector& x0, const PiecewiseConstantSignal& control,
                     const PiecewiseConstantSignal& disturbance, double duration, double dt) {
  if (!(duration > 0.0) || !(dt > 0.0)) throw InvalidArgument("integrate: duration and dt must be positive");
  if (x0.size() != model.state_dim()) throw InvalidArgument("integrate: initial state has wrong dimension");
  if (!near_integer_ratio(duration, dt)) throw InvalidArgument("integrate: dt must divide the duration");
  if (control.values.size() > 1 && !near_integer_ratio(control.segment_length, dt)) {
    throw InvalidArgument("integrate: dt must divide the control segment length");
  }
  if (disturbance.values.size() > 1 && !near_integer_ratio(disturbance.segment_length, dt)) {
    throw InvalidArgument("integrate: dt must divide the disturbance segment length");
  }
  for (const auto& u : control.values) {
    if (u.size() != model.input_dim()) throw InvalidArgument("integrate: control has wrong dimension");
  }
  for (const auto& w : disturbance.values) {
    if (w.size() != model.disturbance_dim()) throw InvalidArgument("integrate: disturbance has wrong dimension");
  }

  const auto steps = static_cast<std::size_t>(std::llround(duration / dt));
  const Vector zero_w = Vector::Zero(model.disturbance_dim());
  Rk4Stepper stepper(model);

  Trajectory traj;
  traj.times.reserve(steps + 1);
  traj.states.reserve(steps + 1);
  traj.times.push_back(0.0);
  traj.states.push_back(x0);

  Vector x = x0;
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    // Sample signals at the step midpoint so segment edges never straddle a step.
    const double t_mid = t + 0.5 * dt;
    const Vector& u = control.at(t_mid);
    const Vector& w = disturbance.values.empty() ? zero_w : disturbance.at(t_mid);
    stepper.step({x.data(), static_cast<std::size_t>(x.size())}, view(u), view(w), dt);
    const double t_next = static_cast<double>(k + 1) * dt;
    if (!x.allFinite()) {
      std::ostringstream msg;
      msg << "integration diverged at t = " << t_next;
      throw Divergence(msg.str(), t_next);
    }
    traj.times.push_back(t_next);
    traj.states.push_back(x);
  }
  return traj;
}

}  // namespace feasmap
