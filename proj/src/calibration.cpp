// SPDX-License-Identifier: Apache-2.0

#include "plr/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "plr/errors.hpp"
#include "plr/io.hpp"

namespace plr::calibration {

CalibrationMap::CalibrationMap(std::vector<Knot> knots) : knots_(std::move(knots))
{
    if (knots_.empty()) {
        throw InsufficientDataError("calibration map needs at least one knot");
    }
    for (std::size_t i = 0; i < knots_.size(); ++i) {
        const auto& k = knots_[i];
        if (!std::isfinite(k.s) || !std::isfinite(k.t) || k.t < 0.0) {
            throw InputError("calibration knot " + std::to_string(i) + " is non-finite or negative");
        }
        if (i > 0 && !(k.s > knots_[i - 1].s)) {
            throw InputError("calibration knots: s must be strictly increasing (knot " + std::to_string(i) + ")");
        }
        if (i > 0 && k.t < knots_[i - 1].t) {
            throw InputError("calibration knots: t must be nondecreasing (knot " + std::to_string(i) + ")");
        }
    }
}

double CalibrationMap::operator()(double s) const
{
    if (knots_.empty()) {
        throw InsufficientDataError("empty calibration map");
    }
    if (s <= knots_.front().s) {
        return knots_.front().t;
    }
    if (s >= knots_.back().s) {
        return knots_.back().t;
    }
    const auto hi = std::upper_bound(knots_.begin(), knots_.end(), s,
                                     [](double v, const Knot& k) { return v < k.s; });
    const auto lo = hi - 1;
    const double w = (s - lo->s) / (hi->s - lo->s);
    // Convex combination, kept within [lo.t, hi.t] so monotonicity survives rounding.
    return std::clamp(lo->t + w * (hi->t - lo->t), lo->t, hi->t);
}

std::vector<double> pava(std::span<const double> values, std::span<const double> weights)
{
    if (!weights.empty() && weights.size() != values.size()) {
        throw DimensionError("pava: values and weights differ in length");
    }
    struct Block {
        double weighted_sum;
        double weight;
        std::size_t count;
        double mean() const { return weighted_sum / weight; }
    };
    std::vector<Block> blocks;
    blocks.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double w = weights.empty() ? 1.0 : weights[i];
        if (!(w > 0.0)) {
            throw InputError("pava: weights must be positive");
        }
        blocks.push_back({values[i] * w, w, 1});
        while (blocks.size() > 1 && blocks[blocks.size() - 2].mean() >= blocks.back().mean()) {
            const Block top = blocks.back();
            blocks.pop_back();
            blocks.back().weighted_sum += top.weighted_sum;
            blocks.back().weight += top.weight;
            blocks.back().count += top.count;
        }
    }
    std::vector<double> fitted;
    fitted.reserve(values.size());
    for (const auto& b : blocks) {
        fitted.insert(fitted.end(), b.count, b.mean());
    }
    return fitted;
}

CalibrationMap isotonic_fit(std::span<const std::pair<double, double>> pairs)
{
    if (pairs.size() < 2) {
        throw InsufficientDataError("isotonic fit needs at least 2 pairs");
    }
    std::vector<std::pair<double, double>> sorted(pairs.begin(), pairs.end());
    for (const auto& [s, t] : sorted) {
        if (!std::isfinite(s) || !std::isfinite(t)) {
            throw InputError("isotonic fit: non-finite pair");
        }
    }
    std::sort(sorted.begin(), sorted.end());

    std::vector<double> unique_s;
    std::vector<double> mean_t;
    std::vector<double> weight;
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        double sum = 0.0;
        while (j < sorted.size() && sorted[j].first == sorted[i].first) {
            sum += sorted[j].second;
            ++j;
        }
        unique_s.push_back(sorted[i].first);
        mean_t.push_back(sum / static_cast<double>(j - i));
        weight.push_back(static_cast<double>(j - i));
        i = j;
    }
    const std::vector<double> fitted = pava(mean_t, weight);

    // Interior points of a flat block add nothing to a piecewise-linear map; keep block ends only.
    std::vector<Knot> knots;
    for (std::size_t i = 0; i < unique_s.size(); ++i) {
        const bool starts_block = i == 0 || fitted[i] != fitted[i - 1];
        const bool ends_block = i + 1 == unique_s.size() || fitted[i] != fitted[i + 1];
        if (starts_block || ends_block) {
            knots.push_back({unique_s[i], std::max(0.0, fitted[i])});
        }
    }
    if (knots.size() == 1) {
        knots.push_back({knots.front().s + 1.0, knots.front().t});
    }
    return CalibrationMap(std::move(knots));
}

double apply_calibration(const CalibrationMap& map, double s) { return map(s); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_quantile(double p)
{
    if (!(p >= 0.0 && p <= 1.0)) {
        throw DomainError("normal quantile: p must lie in [0, 1]");
    }
    if (p == 0.0) {
        return -std::numeric_limits<double>::infinity();
    }
    if (p == 1.0) {
        return std::numeric_limits<double>::infinity();
    }
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    double x = 0.0;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // Halley refinement brings the ~1e-9 relative error of the rational form to rounding level.
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
    return x;
}

double chi2_cdf(double q, int dof)
{
    if (dof != 1) {
        throw DomainError("only one degree of freedom is supported");
    }
    if (!(q > 0.0)) {
        return 0.0;
    }
    return std::erf(std::sqrt(0.5 * q));
}

double chi2_quantile(double p, int dof)
{
    if (dof != 1) {
        throw DomainError("only one degree of freedom is supported");
    }
    if (!(p >= 0.0 && p < 1.0)) {
        throw DomainError("chi2 quantile: p must lie in [0, 1)");
    }
    if (p == 0.0) {
        return 0.0;
    }
    // Phi^{-1}((1 + p) / 2) = -Phi^{-1}((1 - p) / 2), which keeps precision as p -> 1.
    const double z = normal_quantile(0.5 * (1.0 - p));
    return z * z;
}

CalibrationMap percentile_match_fit(std::span<const double> null_scores, int dof)
{
    if (null_scores.size() < kMinPercentileScores) {
        throw InsufficientDataError("percentile matching needs at least " + std::to_string(kMinPercentileScores) +
                                    " null scores, got " + std::to_string(null_scores.size()));
    }
    std::vector<double> sorted(null_scores.begin(), null_scores.end());
    for (double s : sorted) {
        if (!std::isfinite(s)) {
            throw InputError("percentile matching: non-finite score");
        }
    }
    std::sort(sorted.begin(), sorted.end());
    const auto n = static_cast<double>(sorted.size());
    std::vector<Knot> knots;
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        double q_sum = 0.0;
        while (j < sorted.size() && sorted[j] == sorted[i]) {
            q_sum += chi2_quantile((static_cast<double>(j) + 0.5) / n, dof);
            ++j;
        }
        knots.push_back({sorted[i], q_sum / static_cast<double>(j - i)});
        i = j;
    }
    if (knots.size() == 1) {
        knots.push_back({knots.front().s + 1.0, knots.front().t});
    }
    return CalibrationMap(std::move(knots));
}

void write_calibration_csv(std::ostream& os, const CalibrationFile& file)
{
    os << "# method=" << file.method << " n=" << file.sample_size
       << " mu0=" << (file.joint ? std::string("joint") : io::format_double(file.mu0))
       << " config_hash=" << file.config_hash << "\n";
    os << "s,t\n";
    for (const auto& k : file.map.knots()) {
        os << io::format_double(k.s) << "," << io::format_double(k.t) << "\n";
    }
}

CalibrationFile read_calibration_csv(std::istream& is)
{
    CalibrationFile file;
    std::string line;
    if (!std::getline(is, line) || line.rfind("# ", 0) != 0) {
        throw InputError("calibration CSV: missing '# method=...' header line");
    }
    std::istringstream header(line.substr(2));
    std::string field;
    bool have_method = false;
    while (header >> field) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) {
            continue;
        }
        const std::string key = field.substr(0, eq);
        const std::string value = field.substr(eq + 1);
        if (key == "method") {
            file.method = value;
            have_method = true;
        } else if (key == "n") {
            file.sample_size = static_cast<std::size_t>(std::stoull(value));
        } else if (key == "mu0") {
            file.joint = value == "joint";
            if (!file.joint) {
                file.mu0 = io::parse_double(value);
            }
        } else if (key == "config_hash") {
            file.config_hash = value;
        }
    }
    if (!have_method) {
        throw InputError("calibration CSV: header lacks method");
    }
    if (!std::getline(is, line) || line.rfind("s,t", 0) != 0) {
        throw InputError("calibration CSV: missing 's,t' column header");
    }
    std::vector<Knot> knots;
    while (std::getline(is, line)) {
        if (line.empty() || line == "\r") {
            continue;
        }
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw InputError("calibration CSV: malformed row '" + line + "'");
        }
        knots.push_back({io::parse_double(std::string_view(line).substr(0, comma)),
                         io::parse_double(std::string_view(line).substr(comma + 1))});
    }
    file.map = CalibrationMap(std::move(knots));
    return file;
}

} // namespace plr::calibration
