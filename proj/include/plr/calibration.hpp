// SPDX-License-Identifier: Apache-2.0
//
// Monotone maps from raw network scores s to profile-likelihood-ratio units t, fitted either by
// isotonic regression against oracle values or by matching null-score percentiles to chi2(1).

#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace plr::calibration {

struct Knot {
    double s = 0.0;
    double t = 0.0;

    bool operator==(const Knot&) const = default;
};

/// Piecewise-linear between knots, clamped to the end values outside them.
class CalibrationMap {
public:
    CalibrationMap() = default;
    /// Throws InputError unless s is strictly increasing, t nondecreasing, finite and >= 0.
    explicit CalibrationMap(std::vector<Knot> knots);

    const std::vector<Knot>& knots() const { return knots_; }
    double operator()(double s) const;

    bool operator==(const CalibrationMap&) const = default;

private:
    std::vector<Knot> knots_;
};

/// Weighted pool-adjacent-violators: the nondecreasing sequence closest to `values` in weighted
/// least squares. Inputs are taken in the given order.
std::vector<double> pava(std::span<const double> values, std::span<const double> weights = {});

/// Isotonic least-squares fit of t on s. Pairs are sorted by s and tied s values pre-averaged.
CalibrationMap isotonic_fit(std::span<const std::pair<double, double>> pairs);

double apply_calibration(const CalibrationMap& map, double s);

double normal_cdf(double z);
/// Inverse standard normal CDF: Acklam's rational approximation polished by one Halley step.
double normal_quantile(double p);

double chi2_cdf(double q, int dof = 1);
/// Quantile of chi2 with one degree of freedom, (Phi^{-1}((1 + p) / 2))^2. Throws DomainError for p outside [0, 1).
double chi2_quantile(double p, int dof = 1);

/// Maps the i-th order statistic of the null scores to chi2_quantile((i + 0.5) / N).
CalibrationMap percentile_match_fit(std::span<const double> null_scores, int dof = 1);

inline constexpr std::size_t kMinPercentileScores = 1000;

struct CalibrationFile {
    std::string method;
    std::size_t sample_size = 0;
    double mu0 = 0.0;
    bool joint = false;
    std::string config_hash;
    CalibrationMap map;
};

/// "# method=<m> n=<N> mu0=<v|joint> config_hash=<h>" then "s,t" then one knot per row.
void write_calibration_csv(std::ostream& os, const CalibrationFile& file);
CalibrationFile read_calibration_csv(std::istream& is);

} // namespace plr::calibration
