// SPDX-License-Identifier: Apache-2.0
//
// The `plr` subcommands. Each returns a process exit code:
//   0 success, 1 I/O or unexpected failure, 2 invalid configuration or inconsistent artifacts,
//   3 numerical abort during training.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace plr::commands {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

struct Options {
    std::string config_path;
    std::optional<std::string> checkpoint_path;  // default <out>/checkpoint.json
    std::optional<std::string> calibration_path; // directory of calibration_*.csv or one file
    std::string method = "isotonic";             // isotonic | percentile
    std::optional<std::string> x_obs;            // "a,b"
    std::optional<std::string> out_dir;          // overrides output_dir from the config
    std::optional<std::uint64_t> seed;           // overrides seed from the config
};

int cmd_train(const Options& opts, std::ostream& out, std::ostream& err);
int cmd_calibrate(const Options& opts, std::ostream& out, std::ostream& err);
int cmd_evaluate(const Options& opts, std::ostream& out, std::ostream& err);
int cmd_scan(const Options& opts, std::ostream& out, std::ostream& err);

} // namespace plr::commands
