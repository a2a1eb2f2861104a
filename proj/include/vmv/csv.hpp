#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace vmv {

/// Shortest text that reads back to the same double ("%.17g").
std::string format_number(double v);

/// Minimal CSV writer: numbers at 17 significant digits, fields joined by
/// commas, rows terminated by '\n'.
class CsvWriter {
public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}

  void header(const std::vector<std::string>& names);
  CsvWriter& field(double v);
  CsvWriter& field(std::uint64_t v);
  CsvWriter& field(std::string_view text);
  void end_row();

private:
  void separator();
  std::ostream& out_;
  bool row_started_ = false;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace vmv
