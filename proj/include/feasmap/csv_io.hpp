#pragma once

#include "feasmap/dynamics.hpp"
#include "feasmap/oracle.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace feasmap {

/// One row of grid.csv.
struct GridRow {
  double x1 = 0.0;
  double x2 = 0.0;
  double phi = 0.0;
  std::string verdict;
};

/// Header x1..xn, one row per point. Numbers use 17 significant digits.
void write_points_csv(const std::filesystem::path& path, const std::vector<Vector>& points);
std::vector<Vector> read_points_csv(const std::filesystem::path& path);

/// Header x1..xn,label,violation.
void write_labels_csv(const std::filesystem::path& path, const std::vector<LabeledSample>& samples);
std::vector<LabeledSample> read_labels_csv(const std::filesystem::path& path);

/// Header x1,x2,phi,verdict.
void write_grid_csv(const std::filesystem::path& path, const std::vector<GridRow>& rows);
std::vector<GridRow> read_grid_csv(const std::filesystem::path& path);

/// Dense matrix, one row per line, comma separated, no header.
Matrix read_matrix_csv(const std::filesystem::path& path);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double value);

}  // namespace feasmap
