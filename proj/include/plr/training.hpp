// SPDX-License-Identifier: Apache-2.0
//
// The training loop. Each step draws a null point, its two alternatives and a balanced labeled
// batch, scores it with s(x; mu0), and takes an Adam step on the mean binary cross-entropy.

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "plr/errors.hpp"
#include "plr/models.hpp"
#include "plr/nn.hpp"
#include "plr/rng.hpp"
#include "plr/sampling.hpp"

namespace plr::training {

using models::Observation;
using models::StatModel;
using sampling::Standardizer;

struct TrainConfig {
    double learning_rate = 5e-5;
    int batch_size = 1000;
    long steps = 20000;
    std::vector<int> hidden_dims{100, 100, 100};
    std::uint64_t seed = 0;
    long eval_every = 500;
    sampling::PriorSpec prior;
    std::string model; // "gaussian" | "onoff"
    // Swaps the 0/1 labels; used to check the label-symmetry of the objective.
    bool flip_labels = false;

    void validate() const;
    /// Input, hidden and output widths: {3, hidden..., 1}.
    std::vector<int> layer_dims() const;
};

struct EvalRecord {
    long step = 0;
    double loss = 0.0;    // mean batch loss since the previous record
    double seconds = 0.0; // wall time since the start of training
};

struct TrainingLog {
    std::vector<EvalRecord> records;
    double final_loss = 0.0;
};

struct TrainResult {
    nn::NetworkParams params;
    TrainingLog log;
    Standardizer standardizer;
};

/// Raised when the loss or gradient turns non-finite. Carries the parameters before the bad step.
class TrainingAborted : public NumericalError {
public:
    TrainingAborted(long step, nn::NetworkParams last_good, const std::string& what)
        : NumericalError("training aborted at step " + std::to_string(step) + ": " + what),
          step_(step),
          last_good_(std::move(last_good))
    {
    }

    long step() const { return step_; }
    const nn::NetworkParams& last_good() const { return last_good_; }

private:
    long step_;
    nn::NetworkParams last_good_;
};

std::array<double, 3> build_features(const Observation& x, double mu0, const Standardizer& standardizer);

using ProgressFn = std::function<void(const EvalRecord&)>;

TrainResult train(const StatModel& model, const TrainConfig& config, Rng& rng, const ProgressFn& progress = {});

/// Seeds its own stream from config.seed.
TrainResult train(const StatModel& model, const TrainConfig& config, const ProgressFn& progress = {});

double score(const nn::NetworkParams& params, const Observation& x, double mu0, const Standardizer& standardizer);

std::vector<double> score_batch(const nn::NetworkParams& params, std::span<const Observation> xs, double mu0,
                                const Standardizer& standardizer);

} // namespace plr::training
