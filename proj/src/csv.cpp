#include "odis/csv.hpp"

#include <charconv>
#include <fstream>
#include <stdexcept>

namespace odis {

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
  for (size_t i = 0; i < header.size(); ++i) {
    if (i) buf_ += ',';
    buf_ += header[i];
  }
  buf_ += '\n';
}

std::string CsvWriter::format(double v) {
  char tmp[32];
  auto [p, ec] = std::to_chars(tmp, tmp + sizeof(tmp), v);
  if (ec != std::errc{}) return "nan";
  return std::string(tmp, p);
}

void CsvWriter::row(const std::vector<double>& values) {
  for (size_t i = 0; i < values.size(); ++i) {
    if (i) buf_ += ',';
    buf_ += format(values[i]);
  }
  buf_ += '\n';
}

void CsvWriter::raw_row(const std::vector<std::string>& cells) {
  for (size_t i = 0; i < cells.size(); ++i) {
    if (i) buf_ += ',';
    buf_ += cells[i];
  }
  buf_ += '\n';
}

void CsvWriter::write(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  out << buf_;
}

}  // namespace odis
