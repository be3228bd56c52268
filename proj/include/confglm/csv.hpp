#pragma once

#include <string>
#include <vector>

#include "confglm/types.hpp"

namespace confglm {

struct CsvTable {
  std::vector<std::string> columns;
  MatrixXd values;  // rows x columns, numeric body

  Eigen::Index column_index(const std::string& name) const;  // -1 if absent
};

// Comma-separated, header required, '.' decimal, UTF-8. Throws InvalidInput
// with row/column context on malformed content.
CsvTable read_csv(const std::string& path);

void write_csv(const std::string& path, const std::vector<std::string>& columns,
               const std::vector<std::vector<std::string>>& rows);

// Shortest round-trip decimal representation of a double.
std::string format_double(double x);

}  // namespace confglm
