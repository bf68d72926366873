#pragma once

// CSV dialect shared by scan results and comparison tables:
//   # key=value            metadata lines, before the header
//   col_a,col_b,...        header row
//   1.2345678901234567,...  data rows, 17 significant digits, '.' decimal point
// An empty stderr field means "no noise estimate".

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "swgate/experiment.hpp"

namespace swgate {

/// Shortest-safe round-trip text for a double: 17 significant digits, C locale.
/// Infinities are written as inf / -inf, NaN as nan.
std::string format_double(double value);

/// Locale-independent parse of a full string; throws IoError naming `what`.
double parse_double(std::string_view text, std::string_view what = "number");

struct CsvTable {
  Metadata metadata;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

void write_csv(std::ostream& out, const CsvTable& table);
CsvTable read_csv(std::istream& in);

void write_scan_csv(std::ostream& out, const ScanResult& result);
ScanResult read_scan_csv(std::istream& in);
ScanResult read_scan_csv(const std::filesystem::path& path);

/// Looks up a metadata key; nullptr when absent.
const std::string* find_metadata(const Metadata& md, std::string_view key);

/// Writes `contents` to a sibling temporary file and renames it into place, so
/// a failed run never leaves a partial file behind.
void write_file_atomically(const std::filesystem::path& path, std::string_view contents);

}  // namespace swgate
