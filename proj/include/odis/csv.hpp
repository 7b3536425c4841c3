#pragma once

#include <string>
#include <vector>

namespace odis {

/// CSV writer with locale-independent, round-trip double formatting
/// (identical inputs produce byte-identical files).
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);

  void row(const std::vector<double>& values);
  void raw_row(const std::vector<std::string>& cells);
  void write(const std::string& path) const;
  const std::string& text() const { return buf_; }

  static std::string format(double v);

 private:
  std::string buf_;
  size_t columns_;
};

}  // namespace odis
