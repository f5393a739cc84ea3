#pragma once

#include "feasmap/dynamics.hpp"

#include <cstdint>
#include <vector>

namespace feasmap {

/// Identifies a point set completely: the same descriptor always yields the same points.
struct GeneratorDescriptor {
  std::string family = "halton";
  std::vector<int> bases;
  std::uint64_t start_index = 1;
};

struct SampleSet {
  std::vector<Vector> points;
  BoxSet domain;
  GeneratorDescriptor generator;
};

/// Largest supported Halton dimension (bases are the first 12 primes).
inline constexpr int kMaxHaltonDimension = 12;

std::vector<int> halton_bases(int dim);

/// Van der Corput radical inverse of index in the given base.
double radical_inverse(std::uint64_t index, int base);

/// Halton points with indices start_index, start_index + 1, ... in [0,1)^dim.
/// Throws UnsupportedDimension for dim > 12.
std::vector<Vector> halton(std::size_t count, int dim, std::uint64_t start_index = 1);

/// Affine map of unit-cube points into the box.
SampleSet scale_to_box(const std::vector<Vector>& unit_points, const BoxSet& domain,
                       GeneratorDescriptor generator = {});
/// Inverse of scale_to_box for a single point.
Vector unscale_from_box(const Vector& point, const BoxSet& domain);

/// Halton samples of count points scaled into the domain, starting at start_index.
SampleSet halton_samples(std::size_t count, const BoxSet& domain, std::uint64_t start_index = 1);

struct DiscrepancyResult {
  double value = 0.0;
  /// True when computed exactly; false for the Monte Carlo lower bound.
  bool exact = true;
};

/// Star discrepancy of the samples relative to their domain. Exact enumeration of anchored boxes
/// for dimension <= 2 and at most 4096 points, otherwise a Monte Carlo lower bound over
/// 1e5 random anchored boxes drawn with the given seed.
DiscrepancyResult star_discrepancy(const SampleSet& samples, std::uint64_t seed = 0);

/// Star discrepancy of unit-cube points (same dispatch as above).
DiscrepancyResult star_discrepancy_unit(const std::vector<Vector>& unit_points, std::uint64_t seed = 0);

}  // namespace feasmap
