// SPDX-License-Identifier: Apache-2.0
//
// Dense tanh network with a sigmoid output, its binary cross-entropy loss, analytic
// backpropagation and Adam. This is the parametrized statistic s(x; mu0).

#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "plr/rng.hpp"

namespace plr::nn {

/// Probabilities are clamped to [kProbEps, 1 - kProbEps] before any logarithm.
inline constexpr double kProbEps = 1e-7;

struct DenseLayer {
    Eigen::MatrixXd weight; // out x in
    Eigen::VectorXd bias;   // out

    bool operator==(const DenseLayer&) const = default;
};

/// Hidden layers use tanh, the final layer a logistic sigmoid with one output.
struct NetworkParams {
    std::vector<DenseLayer> layers;

    std::size_t input_dim() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weight.cols()); }
    std::size_t parameter_count() const;
    /// Throws DimensionError / InputError when the invariants do not hold.
    void validate() const;

    bool operator==(const NetworkParams&) const = default;
};

/// dL/dphi, laid out exactly like NetworkParams.
struct Gradient {
    std::vector<DenseLayer> layers;

    static Gradient zeros_like(const NetworkParams& params);
};

struct AdamState {
    std::vector<DenseLayer> m;
    std::vector<DenseLayer> v;
    long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState zeros_like(const NetworkParams& params);
};

/// Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) weights, zero biases.
NetworkParams init_params(Rng& rng, std::span<const int> layer_dims);

/// s(x) for one feature vector.
double forward(const NetworkParams& params, std::span<const double> features);

/// Column-major batch: features has one sample per column. Returns one probability per column.
Eigen::VectorXd forward_batch(const NetworkParams& params, const Eigen::MatrixXd& features);

/// Mean binary cross-entropy.
double bxe_loss(std::span<const double> probs, std::span<const double> labels);

struct LossAndGrad {
    double loss = 0.0;
    Gradient grad;
};

/// Mean BXE over the batch (one sample per column) and its exact gradient.
LossAndGrad loss_and_grad(const NetworkParams& params, const Eigen::MatrixXd& features,
                          std::span<const double> labels);

/// One bias-corrected Adam update. Returns the new parameters and optimizer state.
std::pair<NetworkParams, AdamState> adam_step(NetworkParams params, const Gradient& grad, AdamState state,
                                              double learning_rate);

} // namespace plr::nn
