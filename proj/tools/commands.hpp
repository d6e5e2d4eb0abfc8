#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "parisi/io.hpp"

namespace parisi::cli {

inline constexpr const char* kVersion = "0.1.0";

struct RunOptions {
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;  // overrides the config seed
    int workers = 1;
    double budget_scale = 1.0;
    std::string config_text;  // raw bytes, hashed into the manifest
};

/// Exit codes.
enum : int { kOk = 0, kFailed = 1, kConfigError = 2, kNumericError = 3 };

/// Names of the computational subcommands (selftest is handled by the front-end).
const std::vector<std::string>& command_names();

/// Runs one subcommand on a parsed config. Writes result files and manifest.json to
/// opt.out_dir. Schema errors return kConfigError; numeric failures write
/// diagnostics.json and return kNumericError.
int run_command(const std::string& name, const Json& config, const RunOptions& opt, std::ostream& log);

/// Files written by the last run_command call in out_dir, manifest excluded.
std::vector<std::string> result_files(const std::string& out_dir);

}  // namespace parisi::cli
