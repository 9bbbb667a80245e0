#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace failcast::csv {

// Shortest decimal string that round-trips the exact double. Locale-free,
// so artifacts are byte-stable across runs.
inline std::string format(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{}) throw std::runtime_error("csv: bad number '" + s + "'");
  return v;
}

class Writer {
 public:
  Writer(const std::string& path, const std::vector<std::string>& header) : out_(path) {
    if (!out_) throw std::runtime_error("csv: cannot open " + path + " for writing");
    write_row_strings(header);
  }

  void field(double v) { cells_.push_back(format(v)); }
  void field(int v) { cells_.push_back(std::to_string(v)); }
  void field(std::uint64_t v) { cells_.push_back(std::to_string(v)); }
  void field(const std::string& v) { cells_.push_back(v); }

  void end_row() {
    write_row_strings(cells_);
    cells_.clear();
  }

 private:
  void write_row_strings(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

  std::ofstream out_;
  std::vector<std::string> cells_;
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw std::runtime_error("csv: missing column " + name);
  }
};

Table read(const std::string& path);

}  // namespace failcast::csv
