// SPDX-License-Identifier: Apache-2.0

#include "plr/training.hpp"

#include <chrono>
#include <cmath>

namespace plr::training {

void TrainConfig::validate() const
{
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning_rate must be > 0");
    }
    if (batch_size < 4 || batch_size % 4 != 0) {
        throw ConfigError("batch_size must be divisible by 4 (and at least 4)");
    }
    if (steps < 1) {
        throw ConfigError("steps must be >= 1");
    }
    if (eval_every < 1) {
        throw ConfigError("eval_every must be >= 1");
    }
    if (hidden_dims.empty()) {
        throw ConfigError("hidden_dims must be nonempty");
    }
    for (int h : hidden_dims) {
        if (h <= 0) {
            throw ConfigError("hidden_dims entries must be positive");
        }
    }
    prior.validate();
}

std::vector<int> TrainConfig::layer_dims() const
{
    std::vector<int> dims{3};
    dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
    dims.push_back(1);
    return dims;
}

std::array<double, 3> build_features(const Observation& x, double mu0, const Standardizer& standardizer)
{
    if (!std::isfinite(x.x1) || !std::isfinite(x.x2) || !std::isfinite(mu0)) {
        throw InputError("non-finite observation or mu0");
    }
    return standardizer.apply(x, mu0);
}

TrainResult train(const StatModel& model, const TrainConfig& config, Rng& rng, const ProgressFn& progress)
{
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

    TrainResult result;
    result.standardizer = Standardizer::for_model(model, config.prior);
    const auto dims = config.layer_dims();
    nn::NetworkParams params = nn::init_params(rng, dims);
    nn::AdamState adam = nn::AdamState::zeros_like(params);

    double window_sum = 0.0;
    long window_count = 0;
    auto record = [&](long step, double loss) {
        EvalRecord r{step, loss, elapsed()};
        result.log.records.push_back(r);
        if (progress) {
            progress(r);
        }
    };

    for (long step = 0; step < config.steps; ++step) {
        nn::LossAndGrad lg;
        try {
            const auto null = sampling::sample_null(config.prior, rng);
            const auto draw = sampling::sample_alternatives(null, config.prior, model, rng);
            auto batch = sampling::assemble_minibatch(model, draw, config.batch_size, result.standardizer, rng);
            if (config.flip_labels) {
                for (auto& y : batch.labels) {
                    y = 1.0 - y;
                }
            }
            lg = nn::loss_and_grad(params, batch.features, batch.labels);
        } catch (const NumericalError& e) {
            throw TrainingAborted(step, params, e.what());
        } catch (const InputError& e) {
            // Non-finite simulator output.
            throw TrainingAborted(step, params, e.what());
        }
        std::tie(params, adam) = nn::adam_step(std::move(params), lg.grad, std::move(adam), config.learning_rate);

        if (step == 0) {
            record(0, lg.loss);
            continue;
        }
        window_sum += lg.loss;
        window_count += 1;
        const long done = step + 1;
        if (done % config.eval_every == 0 || done == config.steps) {
            record(done, window_sum / static_cast<double>(window_count));
            window_sum = 0.0;
            window_count = 0;
        }
    }
    result.log.final_loss = result.log.records.back().loss;
    result.params = std::move(params);
    return result;
}

TrainResult train(const StatModel& model, const TrainConfig& config, const ProgressFn& progress)
{
    Rng rng = Rng::derive(config.seed, "train");
    return train(model, config, rng, progress);
}

double score(const nn::NetworkParams& params, const Observation& x, double mu0, const Standardizer& standardizer)
{
    const auto f = build_features(x, mu0, standardizer);
    return nn::forward(params, f);
}

std::vector<double> score_batch(const nn::NetworkParams& params, std::span<const Observation> xs, double mu0,
                                const Standardizer& standardizer)
{
    std::vector<double> out;
    out.reserve(xs.size());
    // Chunked so that large evaluation sets do not allocate 100-wide activations for every sample at once.
    constexpr std::size_t kChunk = 4096;
    for (std::size_t begin = 0; begin < xs.size(); begin += kChunk) {
        const std::size_t end = std::min(xs.size(), begin + kChunk);
        Eigen::MatrixXd features(3, static_cast<Eigen::Index>(end - begin));
        for (std::size_t i = begin; i < end; ++i) {
            const auto f = build_features(xs[i], mu0, standardizer);
            const auto col = static_cast<Eigen::Index>(i - begin);
            features(0, col) = f[0];
            features(1, col) = f[1];
            features(2, col) = f[2];
        }
        const Eigen::VectorXd p = nn::forward_batch(params, features);
        out.insert(out.end(), p.data(), p.data() + p.size());
    }
    return out;
}

} // namespace plr::training
