#include "vmv/csv.hpp"

#include <cmath>
#include <cstdio>

namespace vmv {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void CsvWriter::header(const std::vector<std::string>& names) {
  for (const auto& n : names) field(std::string_view(n));
  end_row();
}

void CsvWriter::separator() {
  if (row_started_) out_ << ',';
  row_started_ = true;
}

CsvWriter& CsvWriter::field(double v) {
  separator();
  out_ << format_number(v);
  return *this;
}

CsvWriter& CsvWriter::field(std::uint64_t v) {
  separator();
  out_ << v;
  return *this;
}

CsvWriter& CsvWriter::field(std::string_view text) {
  separator();
  out_ << text;
  return *this;
}

void CsvWriter::end_row() {
  out_ << '\n';
  row_started_ = false;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace vmv
