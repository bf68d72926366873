#include "swgate/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>

#include "swgate/constants.hpp"
#include "swgate/csv.hpp"
#include "swgate/errors.hpp"

namespace swgate {

namespace {

constexpr std::string_view kScanPrefix = "scan.";
constexpr std::string_view kConfigPrefix = "config.";

struct SectionSchema {
  std::string_view name;
  std::vector<std::string_view> keys;
};

const std::vector<SectionSchema>& schema() {
  static const std::vector<SectionSchema> s{
      {"constants", {"mass_u", "charge_e", "wavelength_nm"}},
      {"geometry", {"alpha_deg", "theta_deg", "phi_deg"}},
      {"drive",
       {"omega1_hz", "omega1_rad_s", "omega2_hz", "omega2_rad_s", "omega2_ratio",
        "carrier_offset_db", "red_sideband_offset_db", "blue_sideband_offset_db"}},
      {"motion", {"nu_hz", "nbar", "nu_table_kvm_hz"}},
      {"micromotion", {"nu_rf_hz", "beta_deg", "compensation", "ex_over_ey"}},
      {"map", {"a0_m", "a1_m", "a2_m", "a3_m", "a4_m", "m2", "m3", "m4"}},
      {"population", {"rabi_convention", "truncation_eps"}},
      {"scan.",
       {"kind", "transition", "ey_start_kvm", "ey_stop_kvm", "db_start", "db_stop", "points",
        "duration_us", "power_offset_db", "fixed_ey_kvm", "shots"}},
      {"fit",
       {"max_iterations", "starts", "jitter", "method", "threads", "weighting",
        "balance_datasets", "window_fractions"}},
      {"report", {"reflectivity"}},
      {"trap",
       {"secular_freq_rf_hz", "dc_freq_hz", "null_position_um", "stray_field_v_per_m"}},
      {"compare", {"ey_start_kvm", "ey_stop_kvm", "points"}},
      {"run", {"seed", "threads"}},
  };
  return s;
}

const SectionSchema* schema_for(std::string_view section) {
  for (const auto& s : schema()) {
    if (s.name == section) return &s;
    if (s.name == kScanPrefix && section.size() > kScanPrefix.size() &&
        section.substr(0, kScanPrefix.size()) == kScanPrefix) {
      return &s;
    }
  }
  return nullptr;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string qualified(std::string_view section, std::string_view key) {
  return std::string(section) + "." + std::string(key);
}

// Typed access to one section with ConfigError naming "section.key".
class Block {
 public:
  Block(const IniDocument& doc, std::string_view name, bool required = true)
      : name_(name), section_(doc.find(name)) {
    if (!section_ && required) {
      throw ConfigError(std::string(name), "missing section [" + std::string(name) + "]");
    }
  }

  bool present() const { return section_ != nullptr; }
  bool has(std::string_view key) const { return section_ && section_->find(key); }

  const std::string& text(std::string_view key) const {
    const std::string* v = section_ ? section_->find(key) : nullptr;
    if (!v) {
      throw ConfigError(qualified(name_, key),
                        "missing required key '" + qualified(name_, key) + "'");
    }
    return *v;
  }

  std::string text_or(std::string_view key, std::string fallback) const {
    return has(key) ? text(key) : fallback;
  }

  double number(std::string_view key) const {
    const std::string& v = text(key);
    try {
      const double x = parse_double(v, key);
      if (!std::isfinite(x)) throw IoError("non-finite");
      return x;
    } catch (const IoError&) {
      throw ConfigError(qualified(name_, key),
                        "'" + qualified(name_, key) + "' is not a finite number: '" + v + "'");
    }
  }

  double number_or(std::string_view key, double fallback) const {
    return has(key) ? number(key) : fallback;
  }

  long long integer(std::string_view key) const {
    const std::string& v = text(key);
    long long x = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
    if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) {
      throw ConfigError(qualified(name_, key),
                        "'" + qualified(name_, key) + "' is not an integer: '" + v + "'");
    }
    return x;
  }

  long long integer_or(std::string_view key, long long fallback) const {
    return has(key) ? integer(key) : fallback;
  }

  bool flag_or(std::string_view key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string& v = text(key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(qualified(name_, key),
                      "'" + qualified(name_, key) + "' is not a boolean: '" + v + "'");
  }

  std::vector<double> number_list(std::string_view key) const {
    std::vector<double> out;
    const std::string& v = text(key);
    std::size_t start = 0;
    while (start <= v.size()) {
      const auto pos = v.find(',', start);
      const std::string_view item =
          trim(std::string_view(v).substr(start, pos == std::string::npos ? pos : pos - start));
      try {
        out.push_back(parse_double(item, key));
      } catch (const IoError&) {
        throw ConfigError(qualified(name_, key),
                          "'" + qualified(name_, key) + "' is not a number list: '" + v + "'");
      }
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    return out;
  }

  [[noreturn]] void fail(std::string_view key, const std::string& what) const {
    throw ConfigError(qualified(name_, key), "'" + qualified(name_, key) + "': " + what);
  }

  // Exactly one of `keys` must be present; returns its index.
  std::size_t one_of(std::initializer_list<std::string_view> keys) const {
    std::size_t found = keys.size();
    std::size_t i = 0;
    std::string names;
    for (auto k : keys) {
      if (!names.empty()) names += " | ";
      names += qualified(name_, k);
      if (has(k)) {
        if (found != keys.size()) fail(k, "conflicts with another form of the same quantity");
        found = i;
      }
      ++i;
    }
    if (found == keys.size()) {
      throw ConfigError(qualified(name_, *keys.begin()), "missing required key (" + names + ")");
    }
    return found;
  }

 private:
  std::string name_;
  const IniSection* section_;
};

constexpr long long kDefaultScanPoints = 201;
constexpr long long kDefaultShots = 200;

int checked_points(const Block& b, std::string_view key, long long fallback = kDefaultScanPoints) {
  const long long n = b.integer_or(key, fallback);
  if (n < 1 || n > 10'000'000) b.fail(key, "must be between 1 and 1e7");
  return static_cast<int>(n);
}

}  // namespace

const std::string* IniSection::find(std::string_view key) const {
  for (const auto& [k, v] : entries) {
    if (k == key) return &v;
  }
  return nullptr;
}

const IniSection* IniDocument::find(std::string_view section) const {
  for (const auto& s : sections) {
    if (s.name == section) return &s;
  }
  return nullptr;
}

IniSection& IniDocument::get_or_add(std::string_view section) {
  for (auto& s : sections) {
    if (s.name == section) return s;
  }
  sections.push_back({std::string(section), {}});
  return sections.back();
}

void IniDocument::set(std::string_view section, std::string_view key, std::string value) {
  IniSection& s = get_or_add(section);
  for (auto& [k, v] : s.entries) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  s.entries.emplace_back(std::string(key), std::move(value));
}

IniDocument parse_ini(std::istream& in) {
  IniDocument doc;
  std::set<std::string> seen_sections;
  std::size_t current = 0;  // 1-based index into doc.sections; 0 = none yet
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view t = trim(line);
    const std::string where = "line " + std::to_string(line_no);
    if (t.empty() || t.front() == '#' || t.front() == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(where, where + ": unterminated section header");
      const std::string name(trim(t.substr(1, t.size() - 2)));
      if (!schema_for(name)) throw ConfigError(name, "unknown section [" + name + "]");
      if (!seen_sections.insert(name).second) {
        throw ConfigError(name, "duplicate section [" + name + "]");
      }
      doc.sections.push_back({name, {}});
      current = doc.sections.size();
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where, where + ": expected key = value");
    if (current == 0) throw ConfigError(where, where + ": key outside any section");
    IniSection& section = doc.sections[current - 1];
    const std::string key(trim(t.substr(0, eq)));
    const std::string value(trim(t.substr(eq + 1)));
    const std::string full = qualified(section.name, key);
    const SectionSchema* sch = schema_for(section.name);
    if (std::find(sch->keys.begin(), sch->keys.end(), key) == sch->keys.end()) {
      throw ConfigError(full, "unknown key '" + full + "' (units must be given as a key suffix)");
    }
    if (section.find(key)) throw ConfigError(full, "duplicate key '" + full + "'");
    section.entries.emplace_back(key, value);
  }
  return doc;
}

IniDocument parse_ini_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_ini(in);
}

IniDocument load_ini(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  return parse_ini(in);
}

std::string format_ini(const IniDocument& doc) {
  std::ostringstream out;
  bool first = true;
  for (const auto& s : doc.sections) {
    if (!first) out << '\n';
    first = false;
    out << '[' << s.name << "]\n";
    for (const auto& [k, v] : s.entries) out << k << " = " << v << '\n';
  }
  return out.str();
}

Metadata config_metadata(const IniDocument& doc) {
  Metadata md;
  for (const auto& s : doc.sections) {
    for (const auto& [k, v] : s.entries) {
      md.emplace_back(std::string(kConfigPrefix) + s.name + "." + k, v);
    }
  }
  return md;
}

IniDocument config_from_metadata(const Metadata& md) {
  IniDocument doc;
  for (const auto& [key, value] : md) {
    if (key.rfind(kConfigPrefix, 0) != 0) continue;
    const std::string rest = key.substr(kConfigPrefix.size());
    const auto dot = rest.rfind('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == rest.size()) {
      throw ConfigError(key, "malformed embedded config key '" + key + "'");
    }
    const std::string section = rest.substr(0, dot);
    const std::string k = rest.substr(dot + 1);
    if (!schema_for(section)) throw ConfigError(section, "unknown section [" + section + "]");
    doc.set(section, k, value);
  }
  // Round-trip through the validating parser.
  return parse_ini_text(format_ini(doc));
}

ExperimentSetup read_setup(const IniDocument& doc) {
  using constants::two_pi;
  ExperimentSetup s;
  const Block c(doc, "constants");
  s.mass = c.number("mass_u") * constants::atomic_mass_unit;
  const double charge = c.number_or("charge_e", 1.0) * constants::elementary_charge;
  s.wavelength = c.number("wavelength_nm") / 1e9;

  const Block g(doc, "geometry");
  s.theta = constants::deg_to_rad(g.number("theta_deg"));
  s.phi = constants::deg_to_rad(g.number_or("phi_deg", 0.0));

  const Block m(doc, "motion");
  s.nu = two_pi * m.number("nu_hz");
  if (m.has("nu_table_kvm_hz")) {
    // "E1:f1, E2:f2, ..." with E in kV/m and f in Hz.
    const std::string& v = m.text("nu_table_kvm_hz");
    std::size_t start = 0;
    while (start <= v.size()) {
      const auto pos = v.find(',', start);
      const std::string_view item =
          trim(std::string_view(v).substr(start, pos == std::string::npos ? pos : pos - start));
      const auto colon = item.find(':');
      if (colon == std::string_view::npos) m.fail("nu_table_kvm_hz", "expected E:f pairs");
      try {
        s.nu_table.push_back({parse_double(item.substr(0, colon)),
                              two_pi * parse_double(item.substr(colon + 1))});
      } catch (const IoError& e) {
        m.fail("nu_table_kvm_hz", e.what());
      }
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
  }

  const Block mm(doc, "micromotion");
  s.micromotion.nu_rf = two_pi * mm.number("nu_rf_hz");
  s.micromotion.beta = constants::deg_to_rad(mm.number_or("beta_deg", 0.0));
  s.micromotion.charge = charge;
  s.beta_compensation = mm.flag_or("compensation", true);
  s.ex_over_ey = mm.number_or("ex_over_ey", 0.0);

  const Block p(doc, "population", false);
  try {
    s.rabi = parse_rabi_convention(p.text_or("rabi_convention", "quarter"));
  } catch (const DomainError& e) {
    p.fail("rabi_convention", e.what());
  }
  s.truncation_eps = p.number_or("truncation_eps", kDefaultTruncationEps);

  try {
    s.validate();
  } catch (const DomainError& e) {
    throw ConfigError("setup", std::string("invalid setup: ") + e.what());
  }
  return s;
}

FitParameterSet read_parameters(const IniDocument& doc) {
  using constants::two_pi;
  FitParameterSet p;
  const Block g(doc, "geometry");
  p.alpha = constants::deg_to_rad(g.number("alpha_deg"));

  const Block d(doc, "drive");
  p.omega1 = d.one_of({"omega1_hz", "omega1_rad_s"}) == 0 ? two_pi * d.number("omega1_hz")
                                                           : d.number("omega1_rad_s");
  switch (d.one_of({"omega2_hz", "omega2_rad_s", "omega2_ratio"})) {
    case 0: p.omega2 = two_pi * d.number("omega2_hz"); break;
    case 1: p.omega2 = d.number("omega2_rad_s"); break;
    default: p.omega2 = d.number("omega2_ratio") * p.omega1; break;
  }

  const Block m(doc, "motion");
  p.nbar = m.number("nbar");

  const Block map(doc, "map");
  static constexpr std::array<std::string_view, 5> a_keys{"a0_m", "a1_m", "a2_m", "a3_m", "a4_m"};
  static constexpr std::array<std::string_view, 3> m_keys{"m2", "m3", "m4"};
  for (std::size_t j = 0; j < 5; ++j) p.map.a[j] = map.number_or(a_keys[j], 0.0);
  for (std::size_t j = 0; j < 3; ++j) p.map.m[j] = map.number_or(m_keys[j], 0.0);

  try {
    p.validate();
  } catch (const DomainError& e) {
    throw ConfigError("drive", std::string("invalid parameters: ") + e.what());
  }
  return p;
}

std::vector<ScanSpec> read_scans(const IniDocument& doc) {
  const Block drive(doc, "drive", false);
  std::vector<ScanSpec> scans;
  for (const auto& section : doc.sections) {
    if (section.name.rfind(kScanPrefix, 0) != 0) continue;
    const Block b(doc, section.name);
    ScanSpec s;
    s.name = section.name.substr(kScanPrefix.size());
    try {
      s.kind = parse_scan_kind(b.text("kind"));
    } catch (const ModelError& e) {
      b.fail("kind", e.what());
    }
    try {
      s.transition = parse_transition(b.text("transition"));
    } catch (const ModelError& e) {
      b.fail("transition", e.what());
    }
    const int points = checked_points(b, "points");
    if (s.kind == ScanKind::ey_scan) {
      s.grid = linspace(b.number("ey_start_kvm"), b.number("ey_stop_kvm"), points);
    } else {
      s.grid = linspace(b.number("db_start"), b.number("db_stop"), points);
      s.fixed_ey_kvm = b.number("fixed_ey_kvm");
    }
    s.pulse.duration = b.number("duration_us") / 1e6;
    const std::string offset_key = std::string(to_string(s.transition)) + "_offset_db";
    s.power_offset_db = b.number_or("power_offset_db", drive.number_or(offset_key, 0.0));
    const long long shots = b.integer_or("shots", kDefaultShots);
    if (shots < 0 || shots > 1'000'000'000) b.fail("shots", "must be between 0 and 1e9");
    s.shots = static_cast<int>(shots);
    try {
      s.validate();
    } catch (const ModelError& e) {
      throw ConfigError(section.name, e.what());
    }
    scans.push_back(std::move(s));
  }
  if (scans.empty()) throw ConfigError("scan", "no [scan.NAME] sections in config");
  return scans;
}

FitSettings read_fit_settings(const IniDocument& doc) {
  FitSettings f;
  const Block b(doc, "fit", false);
  FitOptions& o = f.options;
  o.max_iterations = static_cast<int>(b.integer_or("max_iterations", o.max_iterations));
  if (o.max_iterations < 1) b.fail("max_iterations", "must be >= 1");
  o.starts = static_cast<int>(b.integer_or("starts", o.starts));
  if (o.starts < 1) b.fail("starts", "must be >= 1");
  o.jitter = b.number_or("jitter", o.jitter);
  if (!(o.jitter >= 0.0 && o.jitter < 1.0)) b.fail("jitter", "must be in [0, 1)");
  const long long threads = b.integer_or("threads", 1);
  if (threads < 0) b.fail("threads", "must be >= 0");
  o.threads = static_cast<unsigned>(threads);
  try {
    o.method = parse_fit_method(b.text_or("method", std::string(to_string(o.method))));
  } catch (const DomainError& e) {
    b.fail("method", e.what());
  }
  try {
    f.weighting = parse_weighting(b.text_or("weighting", "equal"));
  } catch (const DomainError& e) {
    b.fail("weighting", e.what());
  }
  o.balance_datasets = b.flag_or("balance_datasets", false);
  if (b.has("window_fractions")) {
    o.window_fractions = b.number_list("window_fractions");
    const auto& w = o.window_fractions;
    if (w.empty() || w.back() != 1.0 || !std::is_sorted(w.begin(), w.end()) || !(w.front() > 0.0)) {
      b.fail("window_fractions", "must be increasing, positive and end at 1");
    }
  }
  return f;
}

RunSettings read_run_settings(const IniDocument& doc) {
  RunSettings r;
  const Block b(doc, "run", false);
  const long long seed = b.integer_or("seed", 0);
  if (seed < 0) b.fail("seed", "must be >= 0");
  r.seed = static_cast<std::uint64_t>(seed);
  const long long threads = b.integer_or("threads", 1);
  if (threads < 0) b.fail("threads", "must be >= 0");
  r.threads = static_cast<unsigned>(threads);
  return r;
}

std::optional<double> read_reflectivity(const IniDocument& doc) {
  const Block b(doc, "report", false);
  if (!b.has("reflectivity")) return std::nullopt;
  const double r = b.number("reflectivity");
  if (!(r >= 0.0 && r <= 1.0)) b.fail("reflectivity", "must be in [0, 1]");
  return r;
}

QuadrupoleTrap read_trap(const IniDocument& doc) {
  using constants::two_pi;
  const Block c(doc, "constants");
  const Block b(doc, "trap");
  QuadrupoleTrap t;
  t.secular_freq_rf = two_pi * b.number("secular_freq_rf_hz");
  t.dc_freq = two_pi * b.number_or("dc_freq_hz", 0.0);
  t.null_position = b.number_or("null_position_um", 0.0) / 1e6;
  t.stray_field = b.number_or("stray_field_v_per_m", 0.0);
  t.mass = c.number("mass_u") * constants::atomic_mass_unit;
  t.charge = c.number_or("charge_e", 1.0) * constants::elementary_charge;
  try {
    t.validate();
  } catch (const Error& e) {
    throw ConfigError("trap", std::string("invalid trap: ") + e.what());
  }
  return t;
}

CompareSettings read_compare_settings(const IniDocument& doc) {
  const Block b(doc, "compare");
  CompareSettings c;
  c.grid_kvm = linspace(b.number("ey_start_kvm"), b.number("ey_stop_kvm"), checked_points(b, "points"));
  return c;
}

std::string reference_config_text(int shots) {
  const ReferenceScenario ref = reference_scenario(shots);
  const auto& p = ref.params;
  std::ostringstream out;
  out << "# 40Ca+ 729 nm standing-wave reference configuration\n"
      << "[constants]\nmass_u = 40\ncharge_e = 1\nwavelength_nm = 729\n\n"
      << "[geometry]\nalpha_deg = 18\ntheta_deg = 13\n\n"
      << "[drive]\nomega1_hz = 190000\nomega2_ratio = 0.52\n\n"
      << "[motion]\nnu_hz = 4750000\nnbar = 18\n\n"
      << "[micromotion]\nnu_rf_hz = 40000000\nbeta_deg = 0\ncompensation = true\n\n"
      << "[map]\n";
  for (std::size_t j = 0; j < 5; ++j) out << 'a' << j << "_m = " << format_double(p.map.a[j]) << '\n';
  for (std::size_t j = 0; j < 3; ++j) out << 'm' << j + 2 << " = " << format_double(p.map.m[j]) << '\n';
  out << "\n[population]\nrabi_convention = quarter\n";
  for (const ScanSpec& s : ref.suite()) {
    out << "\n[scan." << s.name << "]\nkind = " << to_string(s.kind)
        << "\ntransition = " << to_string(s.transition) << '\n';
    if (s.kind == ScanKind::ey_scan) {
      out << "ey_start_kvm = " << format_double(s.grid.front())
          << "\ney_stop_kvm = " << format_double(s.grid.back()) << '\n';
    } else {
      out << "db_start = " << format_double(s.grid.front())
          << "\ndb_stop = " << format_double(s.grid.back())
          << "\nfixed_ey_kvm = " << format_double(s.fixed_ey_kvm) << '\n';
    }
    out << "points = " << s.grid.size() << "\nduration_us = 13\npower_offset_db = "
        << format_double(s.power_offset_db) << "\nshots = " << s.shots << '\n';
  }
  out << "\n[fit]\nstarts = 8\njitter = 0.2\nmethod = lm_nm\nweighting = equal\n"
      << "\n[report]\nreflectivity = 0.86\n"
      << "\n[trap]\nsecular_freq_rf_hz = 4000000\ndc_freq_hz = 2800000\nnull_position_um = 0\n"
      << "stray_field_v_per_m = 700\n"
      << "\n[compare]\ney_start_kvm = -1.8\ney_stop_kvm = 1.8\npoints = 37\n"
      << "\n[run]\nseed = 1\nthreads = 1\n";
  return out.str();
}

}  // namespace swgate
