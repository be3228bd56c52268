#include "confglm/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace confglm {

Eigen::Index CsvTable::column_index(const std::string& name) const {
  for (std::size_t j = 0; j < columns.size(); ++j)
    if (columns[j] == name) return static_cast<Eigen::Index>(j);
  return -1;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open csv file: " + path);
  std::string line;
  if (!std::getline(in, line) || line.empty())
    throw InvalidInput(path + ": empty csv (header required)");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  CsvTable t;
  t.columns = split_line(line);
  const std::size_t ncol = t.columns.size();
  if (ncol == 0) throw InvalidInput(path + ": header has no columns");

  std::vector<double> body;
  std::size_t nrow = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != ncol)
      throw InvalidInput(path + ": row " + std::to_string(nrow + 2) + " has " +
                         std::to_string(cells.size()) + " cells, expected " +
                         std::to_string(ncol));
    for (std::size_t j = 0; j < ncol; ++j) {
      const std::string& c = cells[j];
      double v;
      const auto* first = c.data();
      const auto* last = c.data() + c.size();
      auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc{} || ptr != last)
        throw InvalidInput(path + ": non-numeric cell at row " +
                           std::to_string(nrow + 2) + ", column '" + t.columns[j] +
                           "'");
      body.push_back(v);
    }
    ++nrow;
  }
  t.values.resize(nrow, ncol);
  for (std::size_t i = 0; i < nrow; ++i)
    for (std::size_t j = 0; j < ncol; ++j) t.values(i, j) = body[i * ncol + j];
  return t;
}

void write_csv(const std::string& path, const std::vector<std::string>& columns,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot open output file: " + path);
  for (std::size_t j = 0; j < columns.size(); ++j)
    out << columns[j] << (j + 1 < columns.size() ? "," : "\n");
  for (const auto& row : rows) {
    for (std::size_t j = 0; j < row.size(); ++j)
      out << row[j] << (j + 1 < row.size() ? "," : "\n");
  }
}

std::string format_double(double x) {
  char buf[64];
  // %.17g round-trips any double and is locale-independent for '.' decimals.
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace confglm
