#include "feasmap/setgeom.hpp"

#include "feasmap/errors.hpp"
#include "feasmap/parallel.hpp"
#include "feasmap/sampling.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace feasmap {

namespace {

// sum_i lambda_i z_i^2 / s_i^2 with s_i = 1 + t * lambda_i, parameterized by s = s_max.
struct SecularFunction {
  const Vector& lambda;
  const Vector& z;
  double lambda_max;

  double scale(Eigen::Index i, double s) const {
    // 1 + t*lambda_i with t = (s - 1) / lambda_max; exact for the top eigenvalue.
    if (lambda[i] == lambda_max) return s;
    return 1.0 + (s - 1.0) * (lambda[i] / lambda_max);
  }

  double level(double s) const {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      if (z[i] == 0.0) continue;  // avoids 0/0 once s*s underflows
      const double si = scale(i, s);
      acc += lambda[i] * z[i] * z[i] / (si * si);
    }
    return acc;
  }

  double distance(double s) const {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      if (z[i] == 0.0) continue;
      const double si = scale(i, s);
      // xi_i - z_i = z_i (1 - s_i) / s_i
      const double d = z[i] * (1.0 - si) / si;
      acc += d * d;
    }
    return std::sqrt(acc);
  }
};

}  // namespace

EllipsoidSet::EllipsoidSet(Matrix p, double level) : p_(std::move(p)), level_(level) {
  if (p_.rows() == 0 || p_.rows() != p_.cols()) throw InvalidArgument("ellipsoid shape matrix must be square");
  if ((p_ - p_.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
    throw InvalidArgument("ellipsoid shape matrix must be symmetric");
  }
  if (!(level_ > 0.0) || !std::isfinite(level_)) throw InvalidArgument("ellipsoid level must be positive");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(p_);
  if (eig.info() != Eigen::Success || !(eig.eigenvalues().minCoeff() > 0.0)) {
    throw InvalidArgument("ellipsoid shape matrix must be positive definite");
  }
  eigenvalues_ = eig.eigenvalues();
  eigenvectors_ = eig.eigenvectors();
}

bool ellipsoid_contains(const EllipsoidSet& set, const Vector& x) {
  if (x.size() != set.dimension()) throw InvalidArgument("ellipsoid_contains: dimension mismatch");
  return set.quadratic(x) <= set.level() + 1e-12;
}

double dist_to_ellipsoid_boundary(const EllipsoidSet& set, const Vector& x) {
  if (x.size() != set.dimension()) throw InvalidArgument("dist_to_ellipsoid_boundary: dimension mismatch");
  if (!ellipsoid_contains(set, x)) throw OutOfDomain("dist_to_ellipsoid_boundary: point lies outside the set");

  const Vector z = set.eigenvectors().transpose() * x;
  const SecularFunction g{set.eigenvalues(), z, set.max_eigenvalue()};
  const double mu = set.level();
  if (g.level(1.0) >= mu) return 0.0;

  // The nearest surface point is xi = (I + tP)^{-1} x with -1/lambda_max < t <= 0, i.e.
  // s = 1 + t lambda_max in (0, 1]. level(s) decreases in s, so bracket and bisect.
  double lo = 1e-300;
  double hi = 1.0;
  if (g.level(lo) <= mu) {
    // Hard case: x has (numerically) no component along the top eigenspace. The optimum
    // sits at s = 0 and moves freely along that eigenspace to reach the surface.
    double level_rest = 0.0;
    double dist2 = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      if (set.eigenvalues()[i] == set.max_eigenvalue()) continue;
      const double si = g.scale(i, 0.0);
      const double xi = z[i] / si;
      level_rest += set.eigenvalues()[i] * xi * xi;
      dist2 += (xi - z[i]) * (xi - z[i]);
    }
    double top_component2 = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      if (set.eigenvalues()[i] == set.max_eigenvalue()) top_component2 += z[i] * z[i];
    }
    const double free2 = std::max(0.0, (mu - level_rest) / set.max_eigenvalue());
    const double along = std::sqrt(free2) - std::sqrt(top_component2);
    return std::sqrt(dist2 + along * along);
  }
  for (int iter = 0; iter < 2000 && hi - lo > 0.0; ++iter) {
    // Geometric midpoint while the bracket spans orders of magnitude.
    const double mid = (hi > 4.0 * lo) ? std::sqrt(lo * hi) : 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (g.level(mid) > mu) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return g.distance(0.5 * (lo + hi));
}

ErodedEllipsoid erode_ellipsoid(const EllipsoidSet& set, double margin) {
  if (!(margin >= 0.0) || !std::isfinite(margin)) throw InvalidArgument("erosion margin must be finite and >= 0");
  const double max_margin = std::sqrt(set.level() / set.max_eigenvalue());
  if (!(margin < max_margin)) {
    std::ostringstream msg;
    msg << "erosion by " << margin << " empties the ellipsoid; the largest admissible margin is " << max_margin;
    throw EmptyErosion(msg.str(), max_margin);
  }
  const double root = std::sqrt(set.level()) - margin * std::sqrt(set.max_eigenvalue());
  return {set, margin, margin == 0.0 ? set.level() : root * root};
}

std::vector<Vector> ellipsoid_boundary_points(const EllipsoidSet& set, std::size_t count) {
  const int n = set.dimension();
  std::vector<Vector> out;
  out.reserve(count);
  if (n == 1) {
    const double r = std::sqrt(set.level() / set.shape()(0, 0));
    for (std::size_t k = 0; k < count; ++k) out.push_back(Vector::Constant(1, (k % 2 == 0) ? r : -r));
    return out;
  }
  if (n == 2) {
    for (std::size_t k = 0; k < count; ++k) {
      const double angle = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(count);
      Vector d(2);
      d << std::cos(angle), std::sin(angle);
      out.push_back(d * std::sqrt(set.level() / set.quadratic(d)));
    }
    return out;
  }
  std::uint64_t index = 1;
  while (out.size() < count) {
    Vector d = Vector::Constant(n, -1.0) + 2.0 * halton(1, n, index++).front();
    if (d.norm() < 1e-3) continue;
    out.push_back(d * std::sqrt(set.level() / set.quadratic(d)));
  }
  return out;
}

std::vector<Vector> ellipsoid_uniform_points(const EllipsoidSet& set, std::size_t count, std::uint64_t seed) {
  const int n = set.dimension();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif;
  // x = sqrt(level) * P^{-1/2} b with b uniform in the unit ball.
  const Matrix inv_sqrt =
      set.eigenvectors() * set.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() * set.eigenvectors().transpose();
  std::vector<Vector> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Vector b(n);
    for (int i = 0; i < n; ++i) b[i] = gauss(rng);
    b *= std::pow(unif(rng), 1.0 / n) / b.norm();
    out.push_back(std::sqrt(set.level()) * inv_sqrt * b);
  }
  return out;
}

RciReport verify_rci(const SystemModel& model, const ErodedEllipsoid& eroded, const Matrix& gain,
                     const RciOptions& options) {
  const int n = model.state_dim();
  const int m = model.input_dim();
  const int p = model.disturbance_dim();
  if (gain.rows() != m || gain.cols() != n) throw InvalidArgument("verify_rci: gain must be m x n");
  if (eroded.base.dimension() != n) throw InvalidArgument("verify_rci: set dimension differs from the model");
  if (options.n_trials <= 0 || !(options.horizon > 0.0) || !(options.dt > 0.0)) {
    throw InvalidArgument("verify_rci: trials, horizon and dt must be positive");
  }

  const double amplitude = options.disturbance_amplitude < 0.0 ? eroded.margin : options.disturbance_amplitude;
  const auto starts = ellipsoid_boundary_points(eroded.inner(), static_cast<std::size_t>(options.n_trials));
  const auto steps = static_cast<long>(std::llround(options.horizon / options.dt));
  const Matrix& shape = eroded.base.shape();
  const double level = eroded.base.level();

  struct TrialResult {
    bool random_exit = false;
    bool adversarial_exit = false;
    long input_violations = 0;
    double max_ratio = 0.0;
  };
  std::vector<TrialResult> results(starts.size());

  parallel_for(starts.size(), options.workers, [&](std::size_t trial) {
    Rk4Stepper stepper(model);
    std::mt19937_64 rng(options.seed * 1000003ULL + trial);
    std::uniform_real_distribution<double> unif(-amplitude, amplitude);
    TrialResult& res = results[trial];

    for (int mode = 0; mode < 2; ++mode) {
      const bool adversarial = mode == 1;
      Vector x = starts[trial];
      Vector w = Vector::Zero(p);
      Vector u(m);
      Vector f_plus(n);
      Vector f_minus(n);
      bool left = false;
      for (long k = 0; k < steps; ++k) {
        u = -gain * x;
        if (!model.input_set().contains(u)) ++res.input_violations;
        if (adversarial) {
          // dV/dt = 2 x^T P F(x, u, w); push each disturbance channel in the direction that grows V.
          const Vector px = shape * x;
          for (int j = 0; j < p; ++j) {
            Vector wp = Vector::Zero(p);
            wp[j] = 1.0;
            model.rhs({x.data(), static_cast<std::size_t>(n)}, {u.data(), static_cast<std::size_t>(m)},
                      {wp.data(), static_cast<std::size_t>(p)}, {f_plus.data(), static_cast<std::size_t>(n)});
            wp[j] = -1.0;
            model.rhs({x.data(), static_cast<std::size_t>(n)}, {u.data(), static_cast<std::size_t>(m)},
                      {wp.data(), static_cast<std::size_t>(p)}, {f_minus.data(), static_cast<std::size_t>(n)});
            const double sensitivity = px.dot(f_plus - f_minus);
            w[j] = sensitivity >= 0.0 ? amplitude : -amplitude;
          }
        } else {
          for (int j = 0; j < p; ++j) w[j] = unif(rng);
        }
        stepper.step_feedback({x.data(), static_cast<std::size_t>(n)}, gain, {w.data(), static_cast<std::size_t>(p)},
                              options.dt);
        if (!x.allFinite()) {
          left = true;
          break;
        }
        const double ratio = x.dot(shape * x) / level;
        res.max_ratio = std::max(res.max_ratio, ratio);
        if (ratio > 1.0) left = true;
      }
      (adversarial ? res.adversarial_exit : res.random_exit) = left;
    }
  });

  RciReport report;
  report.trajectories = 2 * static_cast<int>(starts.size());
  report.disturbance_amplitude = amplitude;
  for (const auto& r : results) {
    report.random_exits += r.random_exit;
    report.adversarial_exits += r.adversarial_exit;
    report.input_violations += r.input_violations;
    report.max_level_ratio = std::max(report.max_level_ratio, r.max_ratio);
  }
  report.exits = report.random_exits + report.adversarial_exits;
  return report;
}

}  // namespace feasmap
