#pragma once

#include "feasmap/dynamics.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace testing {

inline feasmap::Vector vec(std::initializer_list<double> v) {
  feasmap::Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

/// xdot = -x on the scalar box [-10, 10].
inline feasmap::SystemModel decay_model() {
  return feasmap::SystemModel(
      "decay", 1, 1, 1, [](auto x, auto, auto, auto xdot) { xdot[0] = -x[0]; },
      feasmap::BoxSet::symmetric(1, 10.0), feasmap::BoxSet::symmetric(1, 10.0), 0.0);
}

/// xdot = u on the scalar box [-10, 10].
inline feasmap::SystemModel integrator_model() {
  return feasmap::SystemModel(
      "integrator", 1, 1, 1, [](auto, auto u, auto, auto xdot) { xdot[0] = u[0]; },
      feasmap::BoxSet::symmetric(1, 10.0), feasmap::BoxSet::symmetric(1, 10.0), 0.0);
}

/// Silences library warnings for the lifetime of the object and counts them.
class WarningCapture {
 public:
  WarningCapture() {
    previous_ = feasmap::set_warning_handler([this](std::string_view m) { messages.emplace_back(m); });
  }
  ~WarningCapture() { feasmap::set_warning_handler(previous_); }
  WarningCapture(const WarningCapture&) = delete;
  WarningCapture& operator=(const WarningCapture&) = delete;

  std::vector<std::string> messages;

 private:
  feasmap::WarningHandler previous_;
};

}  // namespace testing
