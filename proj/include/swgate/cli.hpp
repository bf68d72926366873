#pragma once

// Subcommands behind the swgate executable. Each returns the process exit
// status and never throws:
//   0 success, 1 config or I/O error, 2 model or domain error,
//   3 fit stopped at the iteration cap (the report is still written).

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "swgate/config.hpp"

namespace swgate {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitModel = 2;
inline constexpr int kExitNotConverged = 3;

/// Reads either an INI file or any artifact carrying embedded "# config.*"
/// lines (scan CSV, fit report, comparison table).
IniDocument load_run_config(const std::string& path);

struct CommandIo {
  std::ostream& out;
  std::ostream& err;
};

/// Writes <out_dir>/<scan name>.csv for every [scan.NAME] block. Nothing is
/// written unless every scan evaluates.
int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 std::optional<std::uint64_t> seed, CommandIo io);

/// Fits the config's parameters (as the initial guess) to the given scan CSVs.
/// The report goes to out_path, or to io.out when out_path is empty.
int cmd_fit(const std::string& config_path, const std::vector<std::string>& data_paths,
            const std::string& out_path, std::optional<std::uint64_t> seed, CommandIo io);

/// Suppression, speedup, fringe period, Lamb-Dicke values and the
/// reflectivity-limited amplitude ratio as key=value lines.
int cmd_report(const std::string& config_path, const std::string& out_path, CommandIo io);

/// Trap model vs. fitted map on the [compare] grid. The map comes from
/// fit_report_path when given, else from the config's [map] block.
int cmd_compare(const std::string& config_path, const std::string& fit_report_path,
                const std::string& out_path, CommandIo io);

/// Suppression of an ideally aligned standing wave (alpha = theta = 0,
/// vanishing eta, nbar = 0) with amplitude ratio `ratio`.
double ideal_suppression_db(double ratio);

}  // namespace swgate
