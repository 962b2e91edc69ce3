// SPDX-License-Identifier: Apache-2.0
//
// Sample-based diagnostics: ROC curves, power at fixed size, Kolmogorov-Smirnov distances, rank
// correlation, and profile scans of a single observation over a grid of mu0.

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "plr/calibration.hpp"
#include "plr/models.hpp"
#include "plr/nn.hpp"
#include "plr/sampling.hpp"

namespace plr::evaluation {

struct RocPoint {
    double alpha = 0.0; // size: fraction of null scores in the rejection region
    double beta = 0.0;  // power: fraction of alternative scores in the rejection region
    double threshold = 0.0;
};

/// Rejection region {s > threshold}; the first point is (0, 0), the last (1, 1) at threshold -inf.
struct RocCurve {
    std::vector<RocPoint> points;
    double auc = 0.0;
};

RocCurve roc_curve(std::span<const double> scores_null, std::span<const double> scores_alt);

/// Type-7 empirical quantile (linear interpolation between order statistics).
double empirical_quantile(std::span<const double> values, double q);

struct PowerResult {
    double beta = 0.0;
    double threshold = 0.0;
    bool degenerate = false; // all null scores equal: size cannot be controlled
};

/// Threshold at the (1 - alpha) null quantile; power is the fraction of alternatives above it.
PowerResult power_at_size(std::span<const double> scores_null, std::span<const double> scores_alt, double alpha);

/// sup |F_n - F| evaluated on both sides of every jump of the empirical CDF.
double ks_statistic(std::span<const double> samples, const std::function<double(double)>& cdf);

std::vector<double> average_ranks(std::span<const double> values);
double spearman(std::span<const double> a, std::span<const double> b);

/// Calibration maps indexed by mu0. Between fitted mu0 values the calibrated statistic is
/// interpolated linearly in mu0; outside them the nearest map is used.
class CalibrationSet {
public:
    void add(double mu0, calibration::CalibrationMap map);
    void set_joint(calibration::CalibrationMap map);

    bool empty() const { return joint_.knots().empty() && per_mu0_.empty(); }
    double apply(double mu0, double s) const;

private:
    calibration::CalibrationMap joint_;
    std::vector<std::pair<double, calibration::CalibrationMap>> per_mu0_; // sorted by mu0
};

struct ScanCurve {
    std::vector<double> mu;
    std::vector<double> learned;
    std::vector<double> oracle; // empty when no oracle is available
    std::vector<std::string> warnings;
};

ScanCurve profile_scan(const nn::NetworkParams& params, const sampling::Standardizer& standardizer,
                       const CalibrationSet& calib, const models::StatModel* oracle_model,
                       const models::Observation& x_obs, std::span<const double> mu_grid,
                       const sampling::Range& trained_mu_range);

} // namespace plr::evaluation
