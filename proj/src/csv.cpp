#include "distsi/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace distsi {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' '))
      field.pop_back();
    while (!field.empty() && field.front() == ' ') field.erase(field.begin());
    out.push_back(field);
  }
  return out;
}

}  // namespace

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV file '" + path + "'");
  std::string line;
  if (!std::getline(in, line))
    throw DataError("CSV file '" + path + "' is empty (header row required)");
  CsvTable table;
  table.header = split_line(line);
  const std::size_t width = table.header.size();
  if (width == 0) throw DataError("CSV file '" + path + "' has an empty header");
  std::vector<double> cells;
  int rows = 0;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split_line(line);
    if (fields.size() != width)
      throw DataError(path + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(width) + " fields, got " +
                      std::to_string(fields.size()));
    for (const auto& f : fields) {
      double v;
      auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size())
        throw DataError(path + ":" + std::to_string(lineno) +
                        ": bad numeric field '" + f + "'");
      cells.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) throw DataError("CSV file '" + path + "' has no data rows");
  table.values = Matrix(rows, width);
  for (int i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < width; ++j)
      table.values(i, j) = cells[i * width + j];
  return table;
}

std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v,
                           std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

}  // namespace distsi
