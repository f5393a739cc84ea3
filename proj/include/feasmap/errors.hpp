#pragma once

#include <stdexcept>
#include <string>

namespace feasmap {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A query point lies outside the set the operation is defined on.
class OutOfDomain : public Error {
 public:
  using Error::Error;
};

class UnsupportedDimension : public Error {
 public:
  using Error::Error;
};

/// Raised by the integrator when the state stops being finite.
class Divergence : public Error {
 public:
  Divergence(const std::string& what, double time) : Error(what), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

/// Labeled data contains a single class.
class DegenerateData : public Error {
 public:
  using Error::Error;
};

class EmptyErosion : public Error {
 public:
  EmptyErosion(const std::string& what, double max_margin) : Error(what), max_margin_(max_margin) {}
  double max_admissible_margin() const noexcept { return max_margin_; }

 private:
  double max_margin_;
};

/// Operation called on an object that is missing a prerequisite stage.
class StateError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Two run manifests cannot be compared (different model or probe set).
class InvalidComparison : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage failed. Carries the stage name; `degenerate` marks single-class labeling.
class StageFailure : public Error {
 public:
  StageFailure(std::string stage, const std::string& what, bool degenerate)
      : Error(stage + ": " + what), stage_(std::move(stage)), degenerate_(degenerate) {}
  const std::string& stage() const noexcept { return stage_; }
  bool degenerate() const noexcept { return degenerate_; }

 private:
  std::string stage_;
  bool degenerate_;
};

}  // namespace feasmap
