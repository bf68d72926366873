#include "swgate/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "swgate/constants.hpp"
#include "swgate/csv.hpp"
#include "swgate/errors.hpp"
#include "swgate/experiment.hpp"
#include "swgate/fitter.hpp"
#include "swgate/trapmodel.hpp"

namespace swgate {

namespace {

namespace fs = std::filesystem;

constexpr std::string_view kEmbeddedMarker = "# config.";

// Maps library exceptions onto exit codes; the message goes to err.
template <class Body>
int guarded(std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    err << "model error: " << e.what() << '\n';
    return kExitModel;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitModel;
  }
}

IniDocument resolved_config(const std::string& path, std::optional<std::uint64_t> seed) {
  IniDocument doc = load_run_config(path);
  if (seed) doc.set("run", "seed", std::to_string(*seed));
  return doc;
}

void emit(const std::string& out_path, const std::string& text, std::ostream& out) {
  if (out_path.empty()) {
    out << text;
  } else {
    write_file_atomically(out_path, text);
  }
}

std::string csv_text(const CsvTable& table) {
  std::ostringstream s;
  write_csv(s, table);
  return s.str();
}

}  // namespace

IniDocument load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();

  Metadata embedded;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.rfind(kEmbeddedMarker, 0) != 0) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    embedded.emplace_back(line.substr(2, eq - 2), line.substr(eq + 1));
  }
  if (!embedded.empty()) return config_from_metadata(embedded);
  return parse_ini_text(text);
}

double ideal_suppression_db(double ratio) {
  BeamGeometry geom;
  // eta ~ 1e-40: every Debye-Waller correction underflows against 1.
  const MotionalMode vanishing{1.0, 1e60};
  return suppression_db(StandingWaveDrive{1.0, ratio}, Transition::carrier, geom, vanishing, 0.0);
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 std::optional<std::uint64_t> seed, CommandIo io) {
  return guarded(io.err, [&] {
    if (out_dir.empty()) throw IoError("simulate needs an output directory (--out)");
    const IniDocument doc = resolved_config(config_path, seed);
    const ExperimentSetup setup = read_setup(doc);
    const FitParameterSet params = read_parameters(doc);
    const std::vector<ScanSpec> scans = read_scans(doc);
    const RunSettings run = read_run_settings(doc);
    const Metadata embedded = config_metadata(doc);

    std::vector<std::pair<fs::path, std::string>> files;
    for (const ScanSpec& spec : scans) {
      ScanResult result = simulate_scan(setup, params, spec, {run.seed, run.threads});
      result.metadata.insert(result.metadata.end(), embedded.begin(), embedded.end());
      std::ostringstream text;
      write_scan_csv(text, result);
      files.emplace_back(fs::path(out_dir) / (spec.name + ".csv"), text.str());
    }
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (!fs::is_directory(out_dir)) throw IoError("cannot create output directory " + out_dir);
    for (const auto& [path, text] : files) {
      write_file_atomically(path, text);
      io.out << "wrote " << path.string() << '\n';
    }
    return kExitOk;
  });
}

int cmd_fit(const std::string& config_path, const std::vector<std::string>& data_paths,
            const std::string& out_path, std::optional<std::uint64_t> seed, CommandIo io) {
  return guarded(io.err, [&] {
    if (data_paths.empty()) throw IoError("fit needs at least one data file");
    const IniDocument doc = resolved_config(config_path, seed);
    const ExperimentSetup setup = read_setup(doc);
    const FitParameterSet initial = read_parameters(doc);
    FitSettings settings = read_fit_settings(doc);
    settings.options.seed = read_run_settings(doc).seed;

    std::vector<Dataset> datasets;
    for (const auto& path : data_paths) {
      const ScanResult scan = read_scan_csv(fs::path(path));
      if (scan.abscissa.empty()) throw IoError(path + ": no data rows");
      datasets.push_back(dataset_from_scan(scan, settings.weighting));
    }

    const FitReport report = fit(setup, datasets, initial, settings.options);
    Metadata extra = config_metadata(doc);
    for (std::size_t i = 0; i < data_paths.size(); ++i) {
      extra.emplace_back("data." + std::to_string(i), data_paths[i]);
    }
    emit(out_path, format_fit_report(report, extra), io.out);
    if (!report.converged) {
      io.err << "fit did not converge within " << settings.options.max_iterations
             << " iterations\n";
      return kExitNotConverged;
    }
    return kExitOk;
  });
}

int cmd_report(const std::string& config_path, const std::string& out_path, CommandIo io) {
  return guarded(io.err, [&] {
    const IniDocument doc = load_run_config(config_path);
    const ExperimentSetup setup = read_setup(doc);
    const FitParameterSet params = read_parameters(doc);
    const std::optional<double> reflectivity = read_reflectivity(doc);

    const BeamGeometry geom = setup.geometry(params.alpha);
    const MotionalMode mode = setup.mode_at(0.0);
    const LambDickePair eta = lamb_dicke_pair(geom, mode);
    const double carrier = suppression_db(setup, params, Transition::carrier);

    std::ostringstream out;
    for (const auto& [k, v] : config_metadata(doc)) out << "# " << k << '=' << v << '\n';
    auto line = [&](std::string_view key, double value) {
      out << key << '=' << format_double(value) << '\n';
    };
    line("suppression.carrier_db", carrier);
    line("suppression.red_sideband_db", suppression_db(setup, params, Transition::red_sideband));
    line("suppression.blue_sideband_db", suppression_db(setup, params, Transition::blue_sideband));
    line("speedup_factor", speedup_factor(carrier));
    line("fringe_period_m", fringe_period(geom));
    line("eta1", eta.eta1);
    line("eta2", eta.eta2);
    const LambDickeDiagnostic d1 = lamb_dicke_diagnostic(eta.eta1, params.nbar);
    const LambDickeDiagnostic d2 = lamb_dicke_diagnostic(eta.eta2, params.nbar);
    line("lamb_dicke.eta1_sq_2nbar_plus_1", d1.value);
    line("lamb_dicke.eta2_sq_2nbar_plus_1", d2.value);
    out << "lamb_dicke.warning=" << ((d1.warn || d2.warn) ? 1 : 0) << '\n';
    if (reflectivity) {
      const double ratio = std::sqrt(*reflectivity);
      FitParameterSet limited = params;
      limited.omega2 = ratio * params.omega1;
      line("reflectivity", *reflectivity);
      line("reflectivity.omega_ratio_limit", ratio);
      line("reflectivity.ideal_suppression_db", ideal_suppression_db(ratio));
      line("reflectivity.suppression_db", suppression_db(setup, limited, Transition::carrier));
    }
    emit(out_path, out.str(), io.out);
    return kExitOk;
  });
}

int cmd_compare(const std::string& config_path, const std::string& fit_report_path,
                const std::string& out_path, CommandIo io) {
  return guarded(io.err, [&] {
    const IniDocument doc = load_run_config(config_path);
    const ExperimentSetup setup = read_setup(doc);
    const QuadrupoleTrap trap = read_trap(doc);
    const CompareSettings settings = read_compare_settings(doc);
    DisplacementMap map;
    if (fit_report_path.empty()) {
      map = read_parameters(doc).map;
    } else {
      std::ifstream in(fit_report_path);
      if (!in) throw IoError("cannot open fit report '" + fit_report_path + "'");
      map = parse_fit_report(in).map;
    }
    const auto rows = compare_to_fit(trap, map, setup.micromotion, setup.wavelength,
                                     settings.grid_kvm);
    Metadata md = config_metadata(doc);
    md.emplace_back("trap.stray_field_v_per_m", format_double(trap.stray_field));
    if (!fit_report_path.empty()) md.emplace_back("fit_report", fit_report_path);
    emit(out_path, csv_text(comparison_table(rows, md)), io.out);
    return kExitOk;
  });
}

}  // namespace swgate
