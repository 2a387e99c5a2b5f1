#pragma once

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace swapcalc::cli {

/// CSV accumulator: fixed header, comma separation, LF endings, doubles at
/// full precision (17 significant digits) so plots downstream are faithful.
class CsvTable {
 public:
  using Cell = std::variant<double, long long, std::string>;

  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(std::vector<Cell> row) {
    if (row.size() != header_.size())
      throw std::runtime_error("csv row width does not match the header");
    rows_.push_back(std::move(row));
  }

  std::size_t row_count() const { return rows_.size(); }

  std::string to_string() const {
    std::string out;
    for (std::size_t i = 0; i < header_.size(); ++i) {
      if (i) out += ',';
      out += header_[i];
    }
    out += '\n';
    char buf[64];
    for (const auto& row : rows_) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out += ',';
        if (const double* d = std::get_if<double>(&row[i])) {
          std::snprintf(buf, sizeof buf, "%.17g", *d);
          out += buf;
        } else if (const long long* n = std::get_if<long long>(&row[i])) {
          std::snprintf(buf, sizeof buf, "%lld", *n);
          out += buf;
        } else {
          out += std::get<std::string>(row[i]);
        }
      }
      out += '\n';
    }
    return out;
  }

  void write_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << to_string();
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<Cell>> rows_;
};

}  // namespace swapcalc::cli
