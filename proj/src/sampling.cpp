#include "feasmap/sampling.hpp"

#include "feasmap/errors.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <random>

namespace feasmap {

namespace {

constexpr std::array<int, kMaxHaltonDimension> kPrimes{2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};

constexpr std::size_t kExactPointLimit = 4096;
constexpr int kMonteCarloBoxes = 100000;

double exact_1d(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    // [0, x_i) holds i points; [0, x_i] holds at least i + 1.
    worst = std::max(worst, xs[i] - static_cast<double>(i) / n);
    std::size_t closed = i + 1;
    while (closed < xs.size() && xs[closed] == xs[i]) ++closed;
    worst = std::max(worst, static_cast<double>(closed) / n - xs[i]);
  }
  return worst;
}

// Enumerates anchored boxes [0,a) x [0,b) with a, b on the coordinate grid (plus 1).
double exact_2d(const std::vector<Vector>& pts) {
  const std::size_t n = pts.size();
  const double nd = static_cast<double>(n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pts[a][0] < pts[b][0]; });

  std::vector<double> b_candidates;
  b_candidates.reserve(n + 1);
  for (const auto& p : pts) b_candidates.push_back(p[1]);
  b_candidates.push_back(1.0);
  std::sort(b_candidates.begin(), b_candidates.end());
  b_candidates.erase(std::unique(b_candidates.begin(), b_candidates.end()), b_candidates.end());

  std::vector<double> ys_open;    // y of points with x < a
  std::vector<double> ys_closed;  // y of points with x <= a
  ys_open.reserve(n);
  ys_closed.reserve(n);

  double worst = 0.0;
  std::size_t next = 0;
  auto scan = [&](double a) {
    std::size_t io = 0;
    std::size_t ic = 0;
    for (double b : b_candidates) {
      while (io < ys_open.size() && ys_open[io] < b) ++io;
      while (ic < ys_closed.size() && ys_closed[ic] <= b) ++ic;
      const double vol = a * b;
      worst = std::max({worst, vol - static_cast<double>(io) / nd, static_cast<double>(ic) / nd - vol});
    }
  };
  while (next < n) {
    const double a = pts[order[next]][0];
    std::size_t group_end = next;
    while (group_end < n && pts[order[group_end]][0] == a) {
      const double y = pts[order[group_end]][1];
      ys_closed.insert(std::upper_bound(ys_closed.begin(), ys_closed.end(), y), y);
      ++group_end;
    }
    scan(a);
    ys_open = ys_closed;
    next = group_end;
  }
  scan(1.0);
  return worst;
}

double monte_carlo(const std::vector<Vector>& pts, std::uint64_t seed) {
  const auto dim = pts.front().size();
  const double nd = static_cast<double>(pts.size());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vector corner(dim);
  double worst = 0.0;
  for (int trial = 0; trial < kMonteCarloBoxes; ++trial) {
    double vol = 1.0;
    for (Eigen::Index d = 0; d < dim; ++d) {
      corner[d] = unif(rng);
      vol *= corner[d];
    }
    std::size_t open = 0;
    std::size_t closed = 0;
    for (const auto& p : pts) {
      bool in_open = true;
      bool in_closed = true;
      for (Eigen::Index d = 0; d < dim; ++d) {
        in_open = in_open && p[d] < corner[d];
        in_closed = in_closed && p[d] <= corner[d];
      }
      open += in_open;
      closed += in_closed;
    }
    worst = std::max({worst, vol - static_cast<double>(open) / nd, static_cast<double>(closed) / nd - vol});
  }
  return worst;
}

}  // namespace

std::vector<int> halton_bases(int dim) {
  if (dim <= 0) throw InvalidArgument("halton: dimension must be positive");
  if (dim > kMaxHaltonDimension) {
    throw UnsupportedDimension("halton: dimension " + std::to_string(dim) + " exceeds the supported maximum of 12");
  }
  return {kPrimes.begin(), kPrimes.begin() + dim};
}

double radical_inverse(std::uint64_t index, int base) {
  const double inv_base = 1.0 / base;
  double factor = inv_base;
  double result = 0.0;
  while (index > 0) {
    result += static_cast<double>(index % static_cast<std::uint64_t>(base)) * factor;
    index /= static_cast<std::uint64_t>(base);
    factor *= inv_base;
  }
  return result;
}

std::vector<Vector> halton(std::size_t count, int dim, std::uint64_t start_index) {
  const auto bases = halton_bases(dim);
  std::vector<Vector> points;
  points.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Vector p(dim);
    for (int d = 0; d < dim; ++d) p[d] = radical_inverse(start_index + k, bases[d]);
    points.push_back(std::move(p));
  }
  return points;
}

SampleSet scale_to_box(const std::vector<Vector>& unit_points, const BoxSet& domain, GeneratorDescriptor generator) {
  const Vector width = domain.upper() - domain.lower();
  SampleSet out{{}, domain, std::move(generator)};
  out.points.reserve(unit_points.size());
  for (const auto& u : unit_points) {
    if (u.size() != domain.dimension()) throw InvalidArgument("scale_to_box: point and box dimensions differ");
    out.points.push_back(domain.lower() + u.cwiseProduct(width));
  }
  return out;
}

Vector unscale_from_box(const Vector& point, const BoxSet& domain) {
  if (point.size() != domain.dimension()) throw InvalidArgument("unscale_from_box: dimension mismatch");
  return (point - domain.lower()).cwiseQuotient(domain.upper() - domain.lower());
}

SampleSet halton_samples(std::size_t count, const BoxSet& domain, std::uint64_t start_index) {
  GeneratorDescriptor gen{"halton", halton_bases(domain.dimension()), start_index};
  return scale_to_box(halton(count, domain.dimension(), start_index), domain, std::move(gen));
}

DiscrepancyResult star_discrepancy_unit(const std::vector<Vector>& unit_points, std::uint64_t seed) {
  if (unit_points.empty()) throw InvalidArgument("star_discrepancy: empty point set");
  const auto dim = unit_points.front().size();
  if (dim == 1 && unit_points.size() <= kExactPointLimit) {
    std::vector<double> xs;
    xs.reserve(unit_points.size());
    for (const auto& p : unit_points) xs.push_back(p[0]);
    return {exact_1d(std::move(xs)), true};
  }
  if (dim == 2 && unit_points.size() <= kExactPointLimit) return {exact_2d(unit_points), true};
  return {monte_carlo(unit_points, seed), false};
}

DiscrepancyResult star_discrepancy(const SampleSet& samples, std::uint64_t seed) {
  if (samples.points.empty()) throw InvalidArgument("star_discrepancy: empty sample set");
  std::vector<Vector> unit;
  unit.reserve(samples.points.size());
  for (const auto& p : samples.points) unit.push_back(unscale_from_box(p, samples.domain));
  return star_discrepancy_unit(unit, seed);
}

}  // namespace feasmap
