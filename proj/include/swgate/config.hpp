#pragma once

// INI-style run configuration.
//
//   [section]            section names may contain dots (scan.carrier_ey)
//   key = value          keys carry their unit as a suffix (_hz, _deg, _nm, ...)
//   # or ; comment
//
// Every key is checked against a per-section schema so a unitless or
// misspelled key is rejected instead of silently ignored.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "swgate/experiment.hpp"
#include "swgate/fitter.hpp"
#include "swgate/trapmodel.hpp"

namespace swgate {

struct IniSection {
  std::string name;
  std::vector<std::pair<std::string, std::string>> entries;

  const std::string* find(std::string_view key) const;
};

struct IniDocument {
  std::vector<IniSection> sections;

  const IniSection* find(std::string_view section) const;
  IniSection& get_or_add(std::string_view section);
  // Replaces or appends section.key.
  void set(std::string_view section, std::string_view key, std::string value);
};

/// Throws ConfigError (key = "section.key" or "line N") on syntax errors,
/// duplicate keys or sections, and keys outside the schema.
IniDocument parse_ini(std::istream& in);
IniDocument parse_ini_text(std::string_view text);
IniDocument load_ini(const std::string& path);
std::string format_ini(const IniDocument& doc);

/// Embeds the document as "config.<section>.<key>" metadata entries.
Metadata config_metadata(const IniDocument& doc);
/// Rebuilds a document from embedded metadata; other keys are ignored.
IniDocument config_from_metadata(const Metadata& md);

struct RunSettings {
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct FitSettings {
  FitOptions options;
  Weighting weighting = Weighting::equal;
};

struct CompareSettings {
  std::vector<double> grid_kvm;
};

// Each reader pulls one block and throws ConfigError naming the first missing
// or malformed key.
ExperimentSetup read_setup(const IniDocument& doc);
FitParameterSet read_parameters(const IniDocument& doc);
std::vector<ScanSpec> read_scans(const IniDocument& doc);
FitSettings read_fit_settings(const IniDocument& doc);
RunSettings read_run_settings(const IniDocument& doc);
std::optional<double> read_reflectivity(const IniDocument& doc);
QuadrupoleTrap read_trap(const IniDocument& doc);
CompareSettings read_compare_settings(const IniDocument& doc);

/// Configuration text reproducing reference_scenario(shots).
std::string reference_config_text(int shots = 0);

}  // namespace swgate
