// SPDX-License-Identifier: Apache-2.0
//
// plr train|calibrate|evaluate|scan --config <path> [--checkpoint <path>] [--calibration <path>]
//     [--method isotonic|percentile] [--x-obs a,b] [--out <dir>] [--seed N]

#include <iostream>

#include <CLI11.hpp>

#include "plr/commands.hpp"

int main(int argc, char** argv)
{
    CLI::App app{"Learn and validate best-average-power test statistics"};
    app.require_subcommand(1);

    plr::commands::Options opts;
    std::string checkpoint;
    std::string calibration;
    std::string x_obs;
    std::string out_dir;
    std::uint64_t seed = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opts.config_path, "Run configuration (JSON)")->required();
        sub->add_option("--checkpoint", checkpoint, "Checkpoint path (default <out>/checkpoint.json)");
        sub->add_option("--out", out_dir, "Output directory (overrides output_dir)");
        sub->add_option("--seed", seed, "Seed (overrides the config seed)");
    };
    auto add_calibration = [&](CLI::App* sub) {
        sub->add_option("--calibration", calibration,
                        "Calibration directory or file (default <out>/calibration_<method>)");
        sub->add_option("--method", opts.method, "isotonic | percentile");
    };

    auto* train = app.add_subcommand("train", "Train the parametrized statistic");
    add_common(train);
    auto* calibrate = app.add_subcommand("calibrate", "Fit calibration maps per mu0");
    add_common(calibrate);
    add_calibration(calibrate);
    auto* evaluate = app.add_subcommand("evaluate", "ROC, null-distribution and rank-correlation diagnostics");
    add_common(evaluate);
    add_calibration(evaluate);
    auto* scan = app.add_subcommand("scan", "Profile scan of one observation over the mu grid");
    add_common(scan);
    add_calibration(scan);
    scan->add_option("--x-obs", x_obs, "Observation 'x1,x2'");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : plr::commands::kExitConfig;
    }

    for (auto* sub : app.get_subcommands()) {
        if (sub->count("--checkpoint") > 0) {
            opts.checkpoint_path = checkpoint;
        }
        if (sub->count("--out") > 0) {
            opts.out_dir = out_dir;
        }
        if (sub->count("--seed") > 0) {
            opts.seed = seed;
        }
        if (sub != train && sub->count("--calibration") > 0) {
            opts.calibration_path = calibration;
        }
        if (sub == scan && sub->count("--x-obs") > 0) {
            opts.x_obs = x_obs;
        }
    }

    if (train->parsed()) {
        return plr::commands::cmd_train(opts, std::cout, std::cerr);
    }
    if (calibrate->parsed()) {
        return plr::commands::cmd_calibrate(opts, std::cout, std::cerr);
    }
    if (evaluate->parsed()) {
        return plr::commands::cmd_evaluate(opts, std::cout, std::cerr);
    }
    return plr::commands::cmd_scan(opts, std::cout, std::cerr);
}
