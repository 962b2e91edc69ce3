// SPDX-License-Identifier: Apache-2.0

#include "plr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "plr/errors.hpp"
#include "plr/io.hpp"
#include "plr/training.hpp"

namespace plr::evaluation {

RocCurve roc_curve(std::span<const double> scores_null, std::span<const double> scores_alt)
{
    if (scores_null.empty() || scores_alt.empty()) {
        throw InsufficientDataError("ROC curve needs nonempty null and alternative scores");
    }
    std::vector<double> null(scores_null.begin(), scores_null.end());
    std::vector<double> alt(scores_alt.begin(), scores_alt.end());
    std::sort(null.begin(), null.end(), std::greater<>());
    std::sort(alt.begin(), alt.end(), std::greater<>());
    const auto n0 = static_cast<double>(null.size());
    const auto n1 = static_cast<double>(alt.size());

    RocCurve roc;
    std::size_t i = 0; // null scores already above the threshold
    std::size_t j = 0;
    double threshold = std::max(null.front(), alt.front());
    roc.points.push_back({0.0, 0.0, threshold});
    while (i < null.size() || j < alt.size()) {
        // Lower the threshold past the current largest remaining value, including all ties.
        const double v = std::max(i < null.size() ? null[i] : -std::numeric_limits<double>::infinity(),
                                  j < alt.size() ? alt[j] : -std::numeric_limits<double>::infinity());
        while (i < null.size() && null[i] == v) {
            ++i;
        }
        while (j < alt.size() && alt[j] == v) {
            ++j;
        }
        const double next = std::max(i < null.size() ? null[i] : -std::numeric_limits<double>::infinity(),
                                     j < alt.size() ? alt[j] : -std::numeric_limits<double>::infinity());
        roc.points.push_back({static_cast<double>(i) / n0, static_cast<double>(j) / n1, next});
    }
    double auc = 0.0;
    for (std::size_t k = 1; k < roc.points.size(); ++k) {
        const auto& a = roc.points[k - 1];
        const auto& b = roc.points[k];
        auc += (b.alpha - a.alpha) * 0.5 * (a.beta + b.beta);
    }
    roc.auc = auc;
    return roc;
}

double empirical_quantile(std::span<const double> values, double q)
{
    if (values.empty()) {
        throw InsufficientDataError("quantile of an empty sample");
    }
    if (!(q >= 0.0 && q <= 1.0)) {
        throw DomainError("quantile level must lie in [0, 1]");
    }
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double h = static_cast<double>(sorted.size() - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) {
        return sorted.back();
    }
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

PowerResult power_at_size(std::span<const double> scores_null, std::span<const double> scores_alt, double alpha)
{
    if (scores_null.empty() || scores_alt.empty()) {
        throw InsufficientDataError("power needs nonempty null and alternative scores");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw DomainError("alpha must lie in (0, 1)");
    }
    PowerResult r;
    const auto [mn, mx] = std::minmax_element(scores_null.begin(), scores_null.end());
    r.degenerate = *mn == *mx;
    r.threshold = empirical_quantile(scores_null, 1.0 - alpha);
    const auto above = std::count_if(scores_alt.begin(), scores_alt.end(), [&](double s) { return s > r.threshold; });
    r.beta = static_cast<double>(above) / static_cast<double>(scores_alt.size());
    return r;
}

double ks_statistic(std::span<const double> samples, const std::function<double(double)>& cdf)
{
    if (samples.empty()) {
        throw InsufficientDataError("KS statistic of an empty sample");
    }
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    const auto n = static_cast<double>(sorted.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j] == sorted[i]) {
            ++j;
        }
        const double x = sorted[i];
        const double below = static_cast<double>(i) / n; // F_n just left of x
        const double at = static_cast<double>(j) / n;    // F_n at x
        const double f_left = cdf(std::nextafter(x, -std::numeric_limits<double>::infinity()));
        const double f_at = cdf(x);
        d = std::max({d, std::abs(at - f_at), std::abs(f_left - below)});
        i = j;
    }
    return d;
}

std::vector<double> average_ranks(std::span<const double> values)
{
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && values[order[j]] == values[order[i]]) {
            ++j;
        }
        const double r = 0.5 * static_cast<double>(i + j - 1) + 1.0;
        for (std::size_t k = i; k < j; ++k) {
            ranks[order[k]] = r;
        }
        i = j;
    }
    return ranks;
}

double spearman(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size()) {
        throw DimensionError("spearman: inputs differ in length");
    }
    if (a.size() < 2) {
        throw InsufficientDataError("spearman needs at least two pairs");
    }
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0.0;
    double saa = 0.0;
    double sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) {
        return 0.0;
    }
    return sab / std::sqrt(saa * sbb);
}

void CalibrationSet::add(double mu0, calibration::CalibrationMap map)
{
    auto pos = std::lower_bound(per_mu0_.begin(), per_mu0_.end(), mu0,
                                [](const auto& entry, double v) { return entry.first < v; });
    if (pos != per_mu0_.end() && pos->first == mu0) {
        throw InputError("duplicate calibration for mu0=" + io::format_double(mu0));
    }
    per_mu0_.insert(pos, {mu0, std::move(map)});
}

void CalibrationSet::set_joint(calibration::CalibrationMap map) { joint_ = std::move(map); }

double CalibrationSet::apply(double mu0, double s) const
{
    if (!joint_.knots().empty()) {
        return joint_(s);
    }
    if (per_mu0_.empty()) {
        throw InsufficientDataError("no calibration maps loaded");
    }
    if (mu0 <= per_mu0_.front().first) {
        return per_mu0_.front().second(s);
    }
    if (mu0 >= per_mu0_.back().first) {
        return per_mu0_.back().second(s);
    }
    const auto hi = std::upper_bound(per_mu0_.begin(), per_mu0_.end(), mu0,
                                     [](double v, const auto& entry) { return v < entry.first; });
    const auto lo = hi - 1;
    const double w = (mu0 - lo->first) / (hi->first - lo->first);
    return (1.0 - w) * lo->second(s) + w * hi->second(s);
}

ScanCurve profile_scan(const nn::NetworkParams& params, const sampling::Standardizer& standardizer,
                       const CalibrationSet& calib, const models::StatModel* oracle_model,
                       const models::Observation& x_obs, std::span<const double> mu_grid,
                       const sampling::Range& trained_mu_range)
{
    ScanCurve curve;
    curve.mu.assign(mu_grid.begin(), mu_grid.end());
    for (double mu0 : mu_grid) {
        if (!trained_mu_range.contains(mu0)) {
            curve.warnings.push_back("mu0=" + io::format_double(mu0) + " outside trained range [" +
                                     io::format_double(trained_mu_range.low) + ", " +
                                     io::format_double(trained_mu_range.high) + "]");
        }
        const double s = training::score(params, x_obs, mu0, standardizer);
        curve.learned.push_back(calib.apply(mu0, s));
        if (oracle_model != nullptr) {
            curve.oracle.push_back(oracle_model->profile_t(x_obs, mu0));
        }
    }
    return curve;
}

} // namespace plr::evaluation
