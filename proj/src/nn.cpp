// SPDX-License-Identifier: Apache-2.0

#include "plr/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "plr/errors.hpp"

namespace plr::nn {

namespace {

double clamp_prob(double p) { return std::clamp(p, kProbEps, 1.0 - kProbEps); }

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::vector<DenseLayer> zero_layers(const NetworkParams& params)
{
    std::vector<DenseLayer> out;
    out.reserve(params.layers.size());
    for (const auto& layer : params.layers) {
        out.push_back({Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()),
                       Eigen::VectorXd::Zero(layer.bias.size())});
    }
    return out;
}

bool same_shape(const std::vector<DenseLayer>& a, const std::vector<DenseLayer>& b)
{
    if (a.size() != b.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].weight.rows() != b[i].weight.rows() || a[i].weight.cols() != b[i].weight.cols() ||
            a[i].bias.size() != b[i].bias.size()) {
            return false;
        }
    }
    return true;
}

// Hidden activations a_0 = x, a_1, ..., a_{L-1} and the final pre-activation.
struct ForwardTrace {
    std::vector<Eigen::MatrixXd> activations;
    Eigen::RowVectorXd logits;
};

ForwardTrace trace_forward(const NetworkParams& params, const Eigen::MatrixXd& features)
{
    if (params.layers.empty()) {
        throw DimensionError("network has no layers");
    }
    if (static_cast<std::size_t>(features.rows()) != params.input_dim()) {
        throw DimensionError("feature dimension " + std::to_string(features.rows()) + " does not match network input " +
                             std::to_string(params.input_dim()));
    }
    if (!features.allFinite()) {
        throw InputError("non-finite feature value");
    }
    ForwardTrace trace;
    trace.activations.reserve(params.layers.size());
    trace.activations.push_back(features);
    const std::size_t hidden = params.layers.size() - 1;
    for (std::size_t l = 0; l < hidden; ++l) {
        const auto& layer = params.layers[l];
        Eigen::MatrixXd z = layer.weight * trace.activations.back();
        z.colwise() += layer.bias;
        trace.activations.push_back(z.array().tanh().matrix());
    }
    const auto& out = params.layers.back();
    trace.logits = (out.weight * trace.activations.back()).row(0);
    trace.logits.array() += out.bias(0);
    return trace;
}

} // namespace

std::size_t NetworkParams::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& layer : layers) {
        n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
    }
    return n;
}

void NetworkParams::validate() const
{
    if (layers.empty()) {
        throw DimensionError("network has no layers");
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& layer = layers[i];
        if (layer.weight.rows() == 0 || layer.weight.cols() == 0 || layer.bias.size() != layer.weight.rows()) {
            throw DimensionError("layer " + std::to_string(i) + " has inconsistent weight/bias shapes");
        }
        if (i + 1 < layers.size() && layers[i + 1].weight.cols() != layer.weight.rows()) {
            throw DimensionError("layer " + std::to_string(i + 1) + " input does not chain with layer " +
                                 std::to_string(i) + " output");
        }
        if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
            throw InputError("layer " + std::to_string(i) + " has non-finite entries");
        }
    }
    if (layers.back().weight.rows() != 1) {
        throw DimensionError("final layer must have a single output");
    }
}

Gradient Gradient::zeros_like(const NetworkParams& params) { return Gradient{zero_layers(params)}; }

AdamState AdamState::zeros_like(const NetworkParams& params)
{
    AdamState state;
    state.m = zero_layers(params);
    state.v = zero_layers(params);
    return state;
}

NetworkParams init_params(Rng& rng, std::span<const int> layer_dims)
{
    if (layer_dims.size() < 2) {
        throw DimensionError("need at least input and output dimensions");
    }
    for (int d : layer_dims) {
        if (d <= 0) {
            throw DimensionError("layer dimensions must be positive");
        }
    }
    if (layer_dims.back() != 1) {
        throw DimensionError("last layer dimension must be 1");
    }
    NetworkParams params;
    for (std::size_t i = 0; i + 1 < layer_dims.size(); ++i) {
        const int fan_in = layer_dims[i];
        const int fan_out = layer_dims[i + 1];
        const double bound = std::sqrt(1.0 / fan_in);
        DenseLayer layer{Eigen::MatrixXd(fan_out, fan_in), Eigen::VectorXd::Zero(fan_out)};
        // Row-major fill order so the draw sequence does not depend on Eigen storage.
        for (int r = 0; r < fan_out; ++r) {
            for (int c = 0; c < fan_in; ++c) {
                layer.weight(r, c) = rng.uniform(-bound, bound);
            }
        }
        params.layers.push_back(std::move(layer));
    }
    return params;
}

double forward(const NetworkParams& params, std::span<const double> features)
{
    if (features.size() != params.input_dim()) {
        throw DimensionError("feature length " + std::to_string(features.size()) + " does not match network input " +
                             std::to_string(params.input_dim()));
    }
    Eigen::MatrixXd column(features.size(), 1);
    for (std::size_t i = 0; i < features.size(); ++i) {
        column(static_cast<Eigen::Index>(i), 0) = features[i];
    }
    return forward_batch(params, column)(0);
}

Eigen::VectorXd forward_batch(const NetworkParams& params, const Eigen::MatrixXd& features)
{
    if (params.layers.empty()) {
        throw DimensionError("network has no layers");
    }
    if (static_cast<std::size_t>(features.rows()) != params.input_dim()) {
        throw DimensionError("feature dimension " + std::to_string(features.rows()) + " does not match network input " +
                             std::to_string(params.input_dim()));
    }
    if (!features.allFinite()) {
        throw InputError("non-finite feature value");
    }
    // One column at a time: the same kernels run whatever the batch size, so batch and
    // single-sample scores agree bit for bit.
    Eigen::VectorXd probs(features.cols());
    Eigen::VectorXd a;
    Eigen::VectorXd z;
    const std::size_t hidden = params.layers.size() - 1;
    const auto& out = params.layers.back();
    for (Eigen::Index c = 0; c < features.cols(); ++c) {
        a = features.col(c);
        for (std::size_t l = 0; l < hidden; ++l) {
            z.noalias() = params.layers[l].weight * a;
            a = (z + params.layers[l].bias).array().tanh().matrix();
        }
        const double logit = out.weight.row(0).dot(a) + out.bias(0);
        probs(c) = clamp_prob(sigmoid(logit));
    }
    return probs;
}

double bxe_loss(std::span<const double> probs, std::span<const double> labels)
{
    if (probs.size() != labels.size()) {
        throw DimensionError("probabilities and labels differ in length");
    }
    if (probs.empty()) {
        throw InsufficientDataError("empty batch");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = clamp_prob(probs[i]);
        const double y = labels[i];
        total -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    }
    return total / static_cast<double>(probs.size());
}

LossAndGrad loss_and_grad(const NetworkParams& params, const Eigen::MatrixXd& features, std::span<const double> labels)
{
    if (static_cast<std::size_t>(features.cols()) != labels.size()) {
        throw DimensionError("batch has " + std::to_string(features.cols()) + " samples but " +
                             std::to_string(labels.size()) + " labels");
    }
    if (labels.empty()) {
        throw InsufficientDataError("empty batch");
    }
    const ForwardTrace trace = trace_forward(params, features);
    const auto n = static_cast<double>(labels.size());

    std::vector<double> probs(labels.size());
    Eigen::MatrixXd delta(1, trace.logits.size());
    for (Eigen::Index i = 0; i < trace.logits.size(); ++i) {
        const double p = sigmoid(trace.logits(i));
        probs[static_cast<std::size_t>(i)] = p;
        // d(mean BXE)/dz for the logistic output; the clamp only affects |z| > ~16.
        delta(0, i) = (p - labels[static_cast<std::size_t>(i)]) / n;
    }
    LossAndGrad out;
    out.loss = bxe_loss(probs, labels);
    if (!std::isfinite(out.loss)) {
        throw NumericalError("non-finite loss");
    }

    out.grad = Gradient::zeros_like(params);
    for (std::size_t l = params.layers.size(); l-- > 0;) {
        const Eigen::MatrixXd& input = trace.activations[l];
        out.grad.layers[l].weight.noalias() = delta * input.transpose();
        out.grad.layers[l].bias = delta.rowwise().sum();
        if (l > 0) {
            Eigen::MatrixXd back = params.layers[l].weight.transpose() * delta;
            delta = back.array() * (1.0 - input.array().square());
        }
    }
    for (const auto& g : out.grad.layers) {
        if (!g.weight.allFinite() || !g.bias.allFinite()) {
            throw NumericalError("non-finite gradient");
        }
    }
    return out;
}

std::pair<NetworkParams, AdamState> adam_step(NetworkParams params, const Gradient& grad, AdamState state,
                                              double learning_rate)
{
    if (!same_shape(params.layers, grad.layers) || !same_shape(params.layers, state.m) ||
        !same_shape(params.layers, state.v)) {
        throw DimensionError("Adam: parameter, gradient and state shapes differ");
    }
    if (state.step < 0) {
        throw DomainError("Adam: negative step counter");
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    const double b1 = state.beta1;
    const double b2 = state.beta2;
    const double eps = state.eps;

    auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g.cwiseAbs2();
        p.array() -= learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    };
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        update(params.layers[l].weight, grad.layers[l].weight, state.m[l].weight, state.v[l].weight);
        update(params.layers[l].bias, grad.layers[l].bias, state.m[l].bias, state.v[l].bias);
    }
    return {std::move(params), std::move(state)};
}

} // namespace plr::nn
