#pragma once

#include "feasmap/dynamics.hpp"

#include <cstdint>
#include <vector>

namespace feasmap {

/// Ellipsoid {x : x^T P x <= level} with P symmetric positive definite.
class EllipsoidSet {
 public:
  /// Throws InvalidArgument if P is not square, not symmetric within 1e-10, not positive
  /// definite, or level <= 0.
  EllipsoidSet(Matrix p, double level);

  int dimension() const noexcept { return static_cast<int>(p_.rows()); }
  const Matrix& shape() const noexcept { return p_; }
  double level() const noexcept { return level_; }
  /// Eigenvalues of P in ascending order, with matching eigenvector columns.
  const Vector& eigenvalues() const noexcept { return eigenvalues_; }
  const Matrix& eigenvectors() const noexcept { return eigenvectors_; }
  double max_eigenvalue() const noexcept { return eigenvalues_[eigenvalues_.size() - 1]; }

  double quadratic(const Vector& x) const { return x.dot(p_ * x); }

 private:
  Matrix p_;
  double level_;
  Vector eigenvalues_;
  Matrix eigenvectors_;
};

struct ErodedEllipsoid {
  EllipsoidSet base;
  double margin = 0.0;
  double eroded_level = 0.0;

  EllipsoidSet inner() const { return {base.shape(), eroded_level}; }
};

/// x^T P x <= level + 1e-12.
bool ellipsoid_contains(const EllipsoidSet& set, const Vector& x);

/// Euclidean distance from an interior point to the ellipsoid surface.
/// Throws OutOfDomain for points outside the set.
double dist_to_ellipsoid_boundary(const EllipsoidSet& set, const Vector& x);

/// Shrinks the level to (sqrt(level) - margin * sqrt(lambda_max))^2 so every point of the
/// result is at least `margin` away from the base boundary. Throws EmptyErosion when
/// margin >= sqrt(level / lambda_max).
ErodedEllipsoid erode_ellipsoid(const EllipsoidSet& set, double margin);

/// Points on the surface of the set along `count` Halton-generated directions.
std::vector<Vector> ellipsoid_boundary_points(const EllipsoidSet& set, std::size_t count);

/// Uniformly distributed points inside the set (rejection-free radial sampling).
std::vector<Vector> ellipsoid_uniform_points(const EllipsoidSet& set, std::size_t count, std::uint64_t seed);

struct RciOptions {
  int n_trials = 100;
  double horizon = 10.0;
  double dt = 0.01;
  /// Disturbance amplitude used in the trials; negative means "use the erosion margin".
  double disturbance_amplitude = -1.0;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct RciReport {
  int trajectories = 0;
  /// Trajectories that left the base ellipsoid at any integrator step.
  int exits = 0;
  int random_exits = 0;
  int adversarial_exits = 0;
  /// Integrator steps at which -Kx fell outside the input set.
  long input_violations = 0;
  /// Largest x^T P x / level reached over all trajectories.
  double max_level_ratio = 0.0;
  double disturbance_amplitude = 0.0;
};

/// Monte Carlo invariance check of the eroded set under kappa(x) = -K x. From n_trials points
/// on the eroded boundary, simulates once with uniformly drawn piecewise-constant disturbance
/// and once with the worst-case sign disturbance w = amp * sign(d/dw of dV/dt), V = x^T P x.
RciReport verify_rci(const SystemModel& model, const ErodedEllipsoid& eroded, const Matrix& gain,
                     const RciOptions& options = {});

}  // namespace feasmap
