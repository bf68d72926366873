#include "swgate/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "swgate/errors.hpp"

namespace swgate {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_commas(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text, std::string_view what) {
  const std::string_view t = trim(text);
  if (t == "inf" || t == "+inf") return INFINITY;
  if (t == "-inf") return -INFINITY;
  if (t == "nan") return NAN;
  std::string_view body = t;
  if (!body.empty() && body.front() == '+') body.remove_prefix(1);
  double value = 0.0;
  const auto res = std::from_chars(body.data(), body.data() + body.size(), value);
  if (body.empty() || res.ec != std::errc() || res.ptr != body.data() + body.size()) {
    throw IoError("cannot parse " + std::string(what) + " from '" + std::string(text) + "'");
  }
  return value;
}

void write_csv(std::ostream& out, const CsvTable& table) {
  for (const auto& [k, v] : table.metadata) out << "# " << k << '=' << v << '\n';
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    out << (i ? "," : "") << table.header[i];
  }
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << '\n';
  }
}

CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    const std::string_view t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      const std::string_view body = trim(t.substr(1));
      const auto eq = body.find('=');
      if (eq != std::string_view::npos) {
        table.metadata.emplace_back(std::string(trim(body.substr(0, eq))),
                                    std::string(trim(body.substr(eq + 1))));
      }
      continue;
    }
    auto fields = split_commas(t);
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw IoError("CSV row has " + std::to_string(fields.size()) + " fields, header has " +
                    std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  if (!have_header) throw IoError("CSV has no header row");
  return table;
}

void write_scan_csv(std::ostream& out, const ScanResult& result) {
  CsvTable table;
  table.metadata = result.metadata;
  table.header = {"abscissa", "population", "stderr"};
  for (std::size_t i = 0; i < result.abscissa.size(); ++i) {
    table.rows.push_back({format_double(result.abscissa[i]), format_double(result.population[i]),
                          result.noiseless() ? std::string()
                                             : format_double(result.population_stderr[i])});
  }
  write_csv(out, table);
}

ScanResult read_scan_csv(std::istream& in) {
  const CsvTable table = read_csv(in);
  if (table.header != std::vector<std::string>{"abscissa", "population", "stderr"}) {
    throw IoError("scan CSV header must be 'abscissa,population,stderr'");
  }
  ScanResult result;
  result.metadata = table.metadata;
  bool any_stderr = false;
  bool all_stderr = true;
  std::vector<double> stderrs;
  for (const auto& row : table.rows) {
    result.abscissa.push_back(parse_double(row[0], "abscissa"));
    result.population.push_back(parse_double(row[1], "population"));
    if (row[2].empty()) {
      all_stderr = false;
      stderrs.push_back(0.0);
    } else {
      any_stderr = true;
      stderrs.push_back(parse_double(row[2], "stderr"));
    }
  }
  if (any_stderr && !all_stderr) throw IoError("scan CSV: stderr column partially filled");
  if (any_stderr) result.population_stderr = std::move(stderrs);
  return result;
}

ScanResult read_scan_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return read_scan_csv(in);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

const std::string* find_metadata(const Metadata& md, std::string_view key) {
  for (const auto& [k, v] : md) {
    if (k == key) return &v;
  }
  return nullptr;
}

void write_file_atomically(const std::filesystem::path& path, std::string_view contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

}  // namespace swgate
