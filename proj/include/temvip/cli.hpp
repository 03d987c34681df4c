#ifndef TEMVIP_CLI_HPP
#define TEMVIP_CLI_HPP

#include "temvip/config.hpp"

#include <iosfwd>

namespace temvip {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitEstimation = 3;

/// CSV in, result CSV + JSON manifest out. Returns 0, 2 (validation) or 3 (estimation).
int cmd_estimate(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Tidy + metrics CSVs and one summary line per (scenario, n, estimator).
/// Nonzero only when every replicate failed (3) or the configuration is bad (2).
int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Manifest written by cmd_estimate, also accepted back as a --config file.
nlohmann::json build_manifest(const RunConfig& cfg, const EstimationOutput& run);

/// Loads a --config file. A run manifest is accepted too (its "config" block is used).
RunConfig load_config(const std::string& path);

/// argv front end: `temvip estimate ...` / `temvip simulate ...`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace temvip

#endif  // TEMVIP_CLI_HPP
