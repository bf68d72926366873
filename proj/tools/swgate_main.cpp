#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "swgate/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Standing-wave gate simulator: scans, fits, suppression reports"};
  app.require_subcommand(1);

  std::string config;
  std::string out;
  std::string fit_report;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> data;

  auto* simulate = app.add_subcommand("simulate", "Simulate every [scan.*] block to CSV");
  simulate->add_option("--config", config, "Config file or artifact with embedded config")->required();
  simulate->add_option("--out", out, "Output directory")->required();
  simulate->add_option("--seed", seed, "Override [run] seed");

  auto* fit = app.add_subcommand("fit", "Fit the model to scan CSVs");
  fit->add_option("--config", config, "Config file (initial guess, setup, fit options)")->required();
  fit->add_option("--out", out, "Report path (stdout when omitted)");
  fit->add_option("--seed", seed, "Override [run] seed");
  fit->add_option("data", data, "Scan CSV files")->required();

  auto* report = app.add_subcommand("report", "Suppression and Lamb-Dicke summary");
  report->add_option("--config", config, "Config file")->required();
  report->add_option("--out", out, "Report path (stdout when omitted)");

  auto* compare = app.add_subcommand("compare", "Trap model vs. fitted displacement map");
  compare->add_option("--config", config, "Config file")->required();
  compare->add_option("--out", out, "CSV path (stdout when omitted)");
  compare->add_option("--fit", fit_report, "Fit report supplying the map");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? swgate::kExitOk : swgate::kExitConfig;
  }

  const swgate::CommandIo io{std::cout, std::cerr};
  if (*simulate) return swgate::cmd_simulate(config, out, seed, io);
  if (*fit) return swgate::cmd_fit(config, data, out, seed, io);
  if (*report) return swgate::cmd_report(config, out, io);
  return swgate::cmd_compare(config, fit_report, out, io);
}
