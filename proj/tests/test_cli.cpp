#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "doctest.h"
#include "swgate/cli.hpp"
#include "swgate/csv.hpp"
#include "swgate/experiment.hpp"
#include "swgate/fitter.hpp"

using namespace swgate;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::path(SWGATE_TEST_TMP) / "cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string replace_all(std::string text, const std::string& from, const std::string& to) {
  for (auto pos = text.find(from); pos != std::string::npos; pos = text.find(from, pos + to.size())) {
    text.replace(pos, from.size(), to);
  }
  return text;
}

// Reference config on coarse grids so CLI round-trips stay quick.
std::string small_config(int shots) {
  std::string t = reference_config_text(shots);
  t = replace_all(t, "points = 201", "points = 61");
  t = replace_all(t, "points = 71", "points = 21");
  t = replace_all(t, "starts = 8", "starts = 2");
  return t;
}

std::map<std::string, std::string> key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

struct Captured {
  std::ostringstream out;
  std::ostringstream err;
  CommandIo io() { return {out, err}; }
};

}  // namespace

TEST_CASE("simulate writes one CSV per scan and is byte-identical across runs") {
  const fs::path dir = scratch("simulate");
  spit(dir / "ref.ini", small_config(0));
  Captured a, b;
  REQUIRE(cmd_simulate((dir / "ref.ini").string(), (dir / "a").string(), std::nullopt, a.io()) == kExitOk);
  REQUIRE(cmd_simulate((dir / "ref.ini").string(), (dir / "b").string(), std::nullopt, b.io()) == kExitOk);
  for (const char* name : {"carrier_ey.csv", "sideband_ey.csv", "carrier_power_node.csv",
                           "carrier_power_antinode.csv"}) {
    REQUIRE(fs::exists(dir / "a" / name));
    CHECK(slurp(dir / "a" / name) == slurp(dir / "b" / name));
  }
  const ScanResult car = read_scan_csv(dir / "a" / "carrier_ey.csv");
  const ScanResult red = read_scan_csv(dir / "a" / "sideband_ey.csv");
  CHECK(car.abscissa.size() == 61);
  CHECK(car.noiseless());
  // Near the null the Bessel envelope is ~1; the fringe maxima interleave there.
  std::vector<double> xc, xr;
  for (std::size_t i : local_maxima(car.population)) {
    if (std::abs(car.abscissa[i]) < 0.9) xc.push_back(car.abscissa[i]);
  }
  for (std::size_t i : local_maxima(red.population)) {
    if (std::abs(red.abscissa[i]) < 0.9) xr.push_back(red.abscissa[i]);
  }
  CHECK(xc.size() + xr.size() >= 2);
  CHECK(positions_interleave(xc, xr));
}

TEST_CASE("seeded noisy simulation re-runs bit-exactly from the embedded config") {
  const fs::path dir = scratch("embedded");
  spit(dir / "ref.ini", small_config(100));
  Captured a, b, c;
  REQUIRE(cmd_simulate((dir / "ref.ini").string(), (dir / "a").string(), 17, a.io()) == kExitOk);
  REQUIRE(cmd_simulate((dir / "a" / "carrier_ey.csv").string(), (dir / "b").string(), std::nullopt, b.io()) ==
          kExitOk);
  for (const char* name : {"carrier_ey.csv", "sideband_ey.csv", "carrier_power_node.csv"}) {
    CHECK(slurp(dir / "a" / name) == slurp(dir / "b" / name));
  }
  REQUIRE(cmd_simulate((dir / "ref.ini").string(), (dir / "c").string(), 18, c.io()) == kExitOk);
  CHECK(slurp(dir / "a" / "carrier_ey.csv") != slurp(dir / "c" / "carrier_ey.csv"));
  CHECK(slurp(dir / "a" / "carrier_ey.csv").find("# config.run.seed=17") != std::string::npos);
}

TEST_CASE("simulate: missing nu is a config error naming the key; nothing is written") {
  const fs::path dir = scratch("missing_nu");
  spit(dir / "bad.ini", replace_all(small_config(0), "nu_hz = 4750000\n", ""));
  Captured cap;
  CHECK(cmd_simulate((dir / "bad.ini").string(), (dir / "out").string(), std::nullopt, cap.io()) == kExitConfig);
  CHECK(cap.err.str().find("nu") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "out"));

  Captured missing;
  CHECK(cmd_simulate((dir / "none.ini").string(), (dir / "out").string(), std::nullopt, missing.io()) ==
        kExitConfig);
}

TEST_CASE("simulate: an invalid micromotion map is a model error with no partial output") {
  const fs::path dir = scratch("model_error");
  spit(dir / "bad.ini", replace_all(small_config(0), "m2 = 2\n", "m2 = -2\n"));
  Captured cap;
  CHECK(cmd_simulate((dir / "bad.ini").string(), (dir / "out").string(), std::nullopt, cap.io()) == kExitModel);
  CHECK(cap.err.str().find("kappa") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "out" / "carrier_ey.csv"));
}

TEST_CASE("fit: empty data files are rejected") {
  const fs::path dir = scratch("fit_empty");
  spit(dir / "ref.ini", small_config(0));
  spit(dir / "empty.csv", "");
  spit(dir / "header_only.csv", "abscissa,population,stderr\n");
  Captured a, b;
  CHECK(cmd_fit((dir / "ref.ini").string(), {(dir / "empty.csv").string()}, "", std::nullopt, a.io()) ==
        kExitConfig);
  CHECK(cmd_fit((dir / "ref.ini").string(), {(dir / "header_only.csv").string()}, "", std::nullopt, b.io()) ==
        kExitConfig);
  CHECK(b.err.str().find("no data rows") != std::string::npos);
}

TEST_CASE("fit: self-generated suite round-trips, iteration cap exits 3 with a report") {
  const fs::path dir = scratch("fit");
  spit(dir / "ref.ini", small_config(0));
  Captured sim;
  REQUIRE(cmd_simulate((dir / "ref.ini").string(), (dir / "data").string(), std::nullopt, sim.io()) == kExitOk);
  const std::vector<std::string> files{
      (dir / "data" / "carrier_ey.csv").string(), (dir / "data" / "sideband_ey.csv").string(),
      (dir / "data" / "carrier_power_node.csv").string(),
      (dir / "data" / "carrier_power_antinode.csv").string()};

  Captured ok;
  REQUIRE(cmd_fit((dir / "ref.ini").string(), files, (dir / "fit.txt").string(), std::nullopt, ok.io()) == kExitOk);
  const auto kv = key_values(slurp(dir / "fit.txt"));
  CHECK(kv.at("fit.converged") == "1");
  CHECK(std::stod(kv.at("best.nbar")) == doctest::Approx(18.0).epsilon(1e-6));
  CHECK(std::stod(kv.at("best.omega2_rad_s")) / std::stod(kv.at("best.omega1_rad_s")) ==
        doctest::Approx(0.52).epsilon(1e-6));
  CHECK(slurp(dir / "fit.txt").find("# data.0=") != std::string::npos);

  spit(dir / "capped.ini", replace_all(small_config(0), "[fit]\n", "[fit]\nmax_iterations = 1\n"));
  // Start away from the truth so one iteration cannot converge.
  const std::string capped_text = replace_all(slurp(dir / "capped.ini"), "nbar = 18\n", "nbar = 15\n");
  spit(dir / "capped.ini", capped_text);
  Captured capped;
  CHECK(cmd_fit((dir / "capped.ini").string(), files, (dir / "capped.txt").string(), std::nullopt, capped.io()) ==
        kExitNotConverged);
  CHECK(key_values(slurp(dir / "capped.txt")).at("fit.converged") == "0");
}

TEST_CASE("report: suppression, reflectivity limits and Lamb-Dicke values") {
  const fs::path dir = scratch("report");
  spit(dir / "ref.ini", small_config(0));
  Captured cap;
  REQUIRE(cmd_report((dir / "ref.ini").string(), "", cap.io()) == kExitOk);
  auto kv = key_values(cap.out.str());
  CHECK(std::stod(kv.at("reflectivity.omega_ratio_limit")) == doctest::Approx(0.927).epsilon(5e-4));
  CHECK(std::stod(kv.at("speedup_factor")) ==
        doctest::Approx(std::pow(10.0, std::stod(kv.at("suppression.carrier_db")) / 20.0)).epsilon(1e-12));
  CHECK(std::stod(kv.at("eta1")) * std::stod(kv.at("eta2")) < 0.0);
  CHECK(std::stod(kv.at("fringe_period_m")) == doctest::Approx(729e-9 / (2.0 * std::cos(18.0 * M_PI / 180.0))));
  CHECK(kv.count("lamb_dicke.warning") == 1);
  CHECK(kv.count("suppression.red_sideband_db") == 1);

  spit(dir / "r98.ini", replace_all(small_config(0), "reflectivity = 0.86", "reflectivity = 0.98"));
  Captured r98;
  REQUIRE(cmd_report((dir / "r98.ini").string(), "", r98.io()) == kExitOk);
  kv = key_values(r98.out.str());
  CHECK(std::stod(kv.at("reflectivity.omega_ratio_limit")) == doctest::Approx(0.990).epsilon(5e-4));
  CHECK(std::stod(kv.at("reflectivity.ideal_suppression_db")) > 40.0);

  spit(dir / "r1.ini", replace_all(small_config(0), "reflectivity = 0.86", "reflectivity = 1"));
  Captured r1;
  REQUIRE(cmd_report((dir / "r1.ini").string(), (dir / "r1.txt").string(), r1.io()) == kExitOk);
  CHECK(key_values(slurp(dir / "r1.txt")).at("reflectivity.ideal_suppression_db") == "inf");

  spit(dir / "bad.ini", replace_all(small_config(0), "alpha_deg = 18\n", ""));
  Captured bad;
  CHECK(cmd_report((dir / "bad.ini").string(), "", bad.io()) == kExitConfig);
  CHECK(bad.err.str().find("alpha_deg") != std::string::npos);
}

TEST_CASE("ideal suppression limits") {
  CHECK(std::abs(ideal_suppression_db(0.93) - 28.8) < 0.2);
  CHECK(ideal_suppression_db(0.99) > 40.0);
  CHECK(std::isinf(ideal_suppression_db(1.0)));
  CHECK(ideal_suppression_db(0.0) == 0.0);
}

TEST_CASE("compare: trap model against the config map or a fit report") {
  const fs::path dir = scratch("compare");
  spit(dir / "ref.ini", small_config(0));
  Captured cap;
  REQUIRE(cmd_compare((dir / "ref.ini").string(), "", (dir / "cmp.csv").string(), cap.io()) == kExitOk);
  std::ifstream in(dir / "cmp.csv");
  const CsvTable t = read_csv(in);
  CHECK(t.rows.size() == 37);
  CHECK(t.header.front() == "ey_kvm");
  CHECK(find_metadata(t.metadata, "config.trap.stray_field_v_per_m") != nullptr);

  FitReport r;
  r.best = reference_scenario().params;
  r.standard_errors.fill(0.0);
  spit(dir / "fit.txt", format_fit_report(r));
  Captured viafit;
  REQUIRE(cmd_compare((dir / "ref.ini").string(), (dir / "fit.txt").string(), "", viafit.io()) == kExitOk);
  std::istringstream via(viafit.out.str());
  const CsvTable from_fit = read_csv(via);
  CHECK(from_fit.rows == t.rows);
  CHECK(find_metadata(from_fit.metadata, "fit_report") != nullptr);

  Captured missing;
  CHECK(cmd_compare((dir / "ref.ini").string(), (dir / "nope.txt").string(), "", missing.io()) == kExitConfig);
}
