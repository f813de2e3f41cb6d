#pragma once

#include "distsi/common.hpp"

#include <string>

namespace distsi {

struct CsvTable {
  std::vector<std::string> header;
  Matrix values;
};

/// Comma-separated, header row required, decimal point, UTF-8.
CsvTable read_csv(const std::string& path);

/// Deterministic numeric formatting (17 significant digits).
std::string format_double(double v);

}  // namespace distsi
