// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: a JSON document with a strict schema (unknown keys are rejected).
//
//   {
//     "seed": 1234,
//     "output_dir": "runs/gaussian",
//     "model": {"gaussian": {"cov": [[1, 0.8], [0.8, 1]]}}   or   {"onoff": {"s": 15, "b": 70, "tau": 1}},
//     "prior": {"mu": [-5, 5], "nu": [-5, 5], "d": [0, 3]},
//     "train": {"learning_rate": 5e-5, "batch_size": 1000, "steps": 20000,
//               "hidden_dims": [100, 100, 100], "eval_every": 500},
//     "eval":  {...}
//   }
//
// Everything except "seed" and "model" has model-dependent defaults.

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "plr/models.hpp"
#include "plr/sampling.hpp"
#include "plr/training.hpp"

namespace plr::config {

struct ModelSection {
    std::string kind; // "gaussian" | "onoff"
    Eigen::Matrix2d cov = (Eigen::Matrix2d() << 1.0, 0.8, 0.8, 1.0).finished();
    models::OnOffSpec onoff;
};

struct RocTest {
    double mu0 = 0.0;
    double nu0 = 0.0;
    double mu_alt = 0.0;
};

struct ScanGrid {
    double low = 0.0;
    double high = 0.0;
    int points = 101;

    std::vector<double> values() const;
};

struct EvalSection {
    long n_null = 100000;       // per hypothesis, ROC and null distributions
    long n_heldout = 20000;     // per mu0, rank correlation and calibrated RMSE
    long n_calibration = 50000; // per calibration fit
    std::vector<double> alphas{0.05, 0.01};
    std::vector<double> mu0_list;
    std::vector<RocTest> roc_tests;
    std::vector<double> calibration_mu0;
    std::string calibration_mode = "per_mu0"; // or "joint"
    ScanGrid scan;
    std::optional<models::Observation> x_obs;
    double rmse_t_max = 9.0;
    // Nuisance values for calibration and held-out samples. Defaults to the central half of the
    // training prior, away from the box edges where a bounded nuisance prior makes the optimal
    // classifier depend on x2 beyond the profile likelihood ratio.
    sampling::Range nu_range;
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::string output_dir;
    ModelSection model;
    sampling::PriorSpec prior;
    training::TrainConfig train;
    EvalSection eval;

    std::unique_ptr<models::StatModel> make_model() const;
    /// Canonical JSON with every default filled in.
    nlohmann::json to_json() const;
    /// Hex digest of the canonical JSON (output_dir excluded).
    std::string hash() const;
};

/// Schema violation. `line` is the 1-based line of the offending key in the source text, or 0.
class ConfigParseError : public ConfigError {
public:
    ConfigParseError(const std::string& source, int line, const std::string& what)
        : ConfigError(source + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + what)
    {
    }
};

RunConfig parse_config(const std::string& text, const std::string& source_name = "<config>");
RunConfig load_config(const std::string& path);

/// Default configurations for the two built-in experiments.
RunConfig default_config(const std::string& model_kind, std::uint64_t seed = 1);

std::string fnv1a_hex(const std::string& data);

} // namespace plr::config
