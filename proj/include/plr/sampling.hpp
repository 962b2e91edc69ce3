// SPDX-License-Identifier: Apache-2.0
//
// Proposal scheme for one parameter of interest: a null theta0 = (mu0, nu0) drawn uniformly from
// a prior box, and the two equidistant alternatives (mu0 +- d, nu0) that share its nuisance value.

#pragma once

#include <array>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "plr/models.hpp"
#include "plr/rng.hpp"

namespace plr::sampling {

using models::Observation;
using models::StatModel;
using models::ThetaPoint;

struct Range {
    double low = 0.0;
    double high = 0.0;

    double mid() const { return 0.5 * (low + high); }
    double half_width() const { return 0.5 * (high - low); }
    bool contains(double v) const { return v >= low && v <= high; }
    bool operator==(const Range&) const = default;
};

struct PriorSpec {
    Range mu;
    Range nu;
    Range d; // offset |mu_alt - mu0|, drawn from (low, high]

    /// Throws ConfigError on empty or inverted ranges and negative offsets.
    void validate() const;
    bool operator==(const PriorSpec&) const = default;
};

struct HypothesisDraw {
    ThetaPoint null;
    std::array<ThetaPoint, 2> alternatives; // (mu0 + d, nu0), (mu0 - d, nu0)
    double d = 0.0;
};

/// Fixed per-feature affine map applied to (x1, x2, mu0) before the network sees them.
struct Standardizer {
    std::array<models::AffineScale, 3> features;

    static Standardizer for_model(const StatModel& model, const PriorSpec& prior);
    static Standardizer identity() { return {}; }

    std::array<double, 3> apply(const Observation& x, double mu0) const;
    std::array<double, 3> invert(const std::array<double, 3>& v) const;
    bool operator==(const Standardizer&) const = default;
};

struct LabeledBatch {
    Eigen::MatrixXd features; // 3 x n, one sample per column
    std::vector<double> labels;
    double mu0 = 0.0;
};

ThetaPoint sample_null(const PriorSpec& prior, Rng& rng);

/// Draws d and forms the two alternatives. Offsets that leave the model's validity region are
/// redrawn up to kMaxRedraws times, after which d is shrunk to the largest valid value.
HypothesisDraw sample_alternatives(const ThetaPoint& null, const PriorSpec& prior, const StatModel& model, Rng& rng);

inline constexpr int kMaxRedraws = 100;

/// n observations from the composite null at mu0, nu0 uniform on nu_range.
std::vector<Observation> sample_null_at(const StatModel& model, const Range& nu_range, double mu0, long n, Rng& rng);

/// n observations from the training construction at mu0: even indices from the null, odd
/// indices from one of its two alternatives, with fresh nu0 ~ U(nu_range) and d from the prior
/// for every sample.
std::vector<Observation> sample_mixture_at(const StatModel& model, const PriorSpec& prior, const Range& nu_range,
                                           double mu0, long n, Rng& rng);

/// n/2 null rows labeled 0 followed by n/4 rows from each alternative labeled 1.
LabeledBatch assemble_minibatch(const StatModel& model, const HypothesisDraw& draw, int n,
                                const Standardizer& standardizer, Rng& rng);

} // namespace plr::sampling
