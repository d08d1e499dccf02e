#pragma once

// CSV tables with a fixed column order and 17-significant-digit floats, plus
// a small reader for the plot command. All output is UTF-8 with LF endings.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace icl {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  void add_row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_.size())
      throw std::invalid_argument("CsvTable: cell count does not match header");
    rows_.push_back(cells);
  }

  std::string to_string() const {
    std::ostringstream out;
    out << join(columns_) << "\n";
    for (const auto& row : rows_) out << join(row) << "\n";
    return out.str();
  }

  const std::vector<std::string>& columns() const { return columns_; }

 private:
  static std::string join(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) line += ',';
      line += cells[i];
    }
    return line;
  }
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

struct CsvData {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::size_t column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    throw std::invalid_argument("csv: missing column '" + name + "'");
  }
};

inline CsvData read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("csv: cannot open " + path);
  CsvData data;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(s);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!s.empty() && s.back() == ',') cells.push_back("");
    return cells;
  };
  if (!std::getline(in, line)) throw std::invalid_argument("csv: empty file " + path);
  data.columns = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    data.rows.push_back(split(line));
  }
  if (data.rows.empty()) throw std::invalid_argument("csv: no data rows in " + path);
  return data;
}

inline std::uint64_t fnv1a_digest(const std::string& bytes) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace icl
