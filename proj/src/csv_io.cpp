#include "feasmap/csv_io.hpp"

#include "feasmap/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace feasmap {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  return out;
}

double parse_double(const std::string& text, const std::filesystem::path& path, std::size_t line) {
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw InvalidArgument(path.string() + ":" + std::to_string(line) + ": cannot parse number '" + text + "'");
  }
  return value;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  return out;
}

std::string coordinate_header(Eigen::Index n) {
  std::string h;
  for (Eigen::Index i = 0; i < n; ++i) h += (i ? ",x" : "x") + std::to_string(i + 1);
  return h;
}

// Reads the header and returns the number of leading x-columns.
std::size_t read_header(std::ifstream& in, const std::filesystem::path& path, std::size_t trailing) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument(path.string() + ": missing header row");
  const auto cols = split(line);
  if (cols.size() <= trailing) throw InvalidArgument(path.string() + ": header has too few columns");
  const std::size_t n = cols.size() - trailing;
  for (std::size_t i = 0; i < n; ++i) {
    if (cols[i] != "x" + std::to_string(i + 1)) throw InvalidArgument(path.string() + ": unexpected header '" + line + "'");
  }
  return n;
}

}  // namespace

std::string format_double(double value) {
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

void write_points_csv(const std::filesystem::path& path, const std::vector<Vector>& points) {
  auto out = open_out(path);
  out << coordinate_header(points.empty() ? 0 : points.front().size()) << '\n';
  for (const auto& p : points) {
    for (Eigen::Index i = 0; i < p.size(); ++i) out << (i ? "," : "") << format_double(p[i]);
    out << '\n';
  }
}

std::vector<Vector> read_points_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  const std::size_t n = read_header(in, path, 0);
  std::vector<Vector> points;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != n) throw InvalidArgument(path.string() + ":" + std::to_string(line_no) + ": wrong column count");
    Vector p(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) p[static_cast<Eigen::Index>(i)] = parse_double(cells[i], path, line_no);
    points.push_back(std::move(p));
  }
  return points;
}

void write_labels_csv(const std::filesystem::path& path, const std::vector<LabeledSample>& samples) {
  auto out = open_out(path);
  out << coordinate_header(samples.empty() ? 0 : samples.front().state.size()) << (samples.empty() ? "" : ",")
      << "label,violation\n";
  for (const auto& s : samples) {
    for (Eigen::Index i = 0; i < s.state.size(); ++i) out << format_double(s.state[i]) << ',';
    out << s.label << ',' << format_double(s.violation) << '\n';
  }
}

std::vector<LabeledSample> read_labels_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  const std::size_t n = read_header(in, path, 2);
  std::vector<LabeledSample> samples;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != n + 2) throw InvalidArgument(path.string() + ":" + std::to_string(line_no) + ": wrong column count");
    LabeledSample s;
    s.state.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) s.state[static_cast<Eigen::Index>(i)] = parse_double(cells[i], path, line_no);
    if (cells[n] == "1" || cells[n] == "+1") {
      s.label = 1;
    } else if (cells[n] == "-1") {
      s.label = -1;
    } else {
      throw InvalidArgument(path.string() + ":" + std::to_string(line_no) + ": label must be +1 or -1");
    }
    s.violation = parse_double(cells[n + 1], path, line_no);
    samples.push_back(std::move(s));
  }
  return samples;
}

void write_grid_csv(const std::filesystem::path& path, const std::vector<GridRow>& rows) {
  auto out = open_out(path);
  out << "x1,x2,phi,verdict\n";
  for (const auto& r : rows) {
    out << format_double(r.x1) << ',' << format_double(r.x2) << ',' << format_double(r.phi) << ',' << r.verdict << '\n';
  }
}

std::vector<GridRow> read_grid_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || split(line) != std::vector<std::string>{"x1", "x2", "phi", "verdict"}) {
    throw InvalidArgument(path.string() + ": expected header x1,x2,phi,verdict");
  }
  std::vector<GridRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != 4) throw InvalidArgument(path.string() + ":" + std::to_string(line_no) + ": wrong column count");
    rows.push_back({parse_double(cells[0], path, line_no), parse_double(cells[1], path, line_no),
                    parse_double(cells[2], path, line_no), cells[3]});
  }
  return rows;
}

Matrix read_matrix_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    std::vector<double> row;
    for (const auto& cell : split(line)) row.push_back(parse_double(cell, path, line_no));
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw InvalidArgument(path.string() + ":" + std::to_string(line_no) + ": ragged matrix row");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InvalidArgument(path.string() + ": empty matrix");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return m;
}

}  // namespace feasmap
