#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hdgam/errors.hpp"

namespace hdgam {

/// Shortest round-trip decimal representation ('.' decimal point, no locale).
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct CsvTable {
  std::vector<std::string> header;
  Eigen::MatrixXd data;  // rows x header.size()

  int find_column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t')) --e;
  return s.substr(b, e - b);
}

}  // namespace detail

/// Read a numeric CSV with a required header row. Empty, NA or non-numeric
/// cells raise DataError naming the data row (1-based) and column.
inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path + "' is empty; a header row is required");
  for (auto& name : detail::split_csv_line(line)) table.header.push_back(detail::trim(name));
  if (table.header.empty()) throw DataError("'" + path + "' has an empty header row");

  std::vector<double> values;
  long rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    ++rows;
    if (fields.size() != table.header.size())
      throw DataError("row " + std::to_string(rows) + ": expected " +
                      std::to_string(table.header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const std::string cell = detail::trim(fields[c]);
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
        throw DataError("row " + std::to_string(rows) + ", column '" + table.header[c] +
                        "': non-numeric cell '" + cell + "'");
      values.push_back(v);
    }
  }
  table.data.resize(rows, static_cast<Eigen::Index>(table.header.size()));
  for (long r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < table.header.size(); ++c)
      table.data(r, static_cast<Eigen::Index>(c)) =
          values[static_cast<std::size_t>(r) * table.header.size() + c];
  return table;
}

inline void write_csv_line(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << fields[i];
  }
  out << '\n';
}

}  // namespace hdgam
