// SPDX-License-Identifier: Apache-2.0

#include "plr/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "plr/errors.hpp"

namespace plr::sampling {

namespace {

void check_range(const Range& r, const char* name)
{
    if (!std::isfinite(r.low) || !std::isfinite(r.high) || !(r.low < r.high)) {
        throw ConfigError(std::string("prior.") + name + ": need finite low < high");
    }
}

} // namespace

void PriorSpec::validate() const
{
    check_range(mu, "mu");
    check_range(nu, "nu");
    check_range(d, "d");
    if (d.low < 0.0) {
        throw ConfigError("prior.d: offsets must be positive (low >= 0)");
    }
}

Standardizer Standardizer::for_model(const StatModel& model, const PriorSpec& prior)
{
    // Both model means are linear in theta, so the corners of the prior box bound E[x].
    std::array<double, 2> lo{INFINITY, INFINITY};
    std::array<double, 2> hi{-INFINITY, -INFINITY};
    for (double mu : {prior.mu.low, prior.mu.high}) {
        for (double nu : {prior.nu.low, prior.nu.high}) {
            const Observation m = model.expected({mu, nu});
            lo = {std::min(lo[0], m.x1), std::min(lo[1], m.x2)};
            hi = {std::max(hi[0], m.x1), std::max(hi[1], m.x2)};
        }
    }
    auto scale = [&](int i) {
        const Range r{lo[static_cast<std::size_t>(i)], hi[static_cast<std::size_t>(i)]};
        return models::AffineScale{r.mid(), std::max(r.half_width(), 1.0)};
    };
    return {{scale(0), scale(1), models::AffineScale{prior.mu.mid(), prior.mu.half_width()}}};
}

std::array<double, 3> Standardizer::apply(const Observation& x, double mu0) const
{
    return {features[0].apply(x.x1), features[1].apply(x.x2), features[2].apply(mu0)};
}

std::array<double, 3> Standardizer::invert(const std::array<double, 3>& v) const
{
    return {features[0].invert(v[0]), features[1].invert(v[1]), features[2].invert(v[2])};
}

ThetaPoint sample_null(const PriorSpec& prior, Rng& rng)
{
    prior.validate();
    const double mu = rng.uniform(prior.mu.low, prior.mu.high);
    const double nu = rng.uniform(prior.nu.low, prior.nu.high);
    return {mu, nu};
}

HypothesisDraw sample_alternatives(const ThetaPoint& null, const PriorSpec& prior, const StatModel& model, Rng& rng)
{
    auto make = [&](double d) {
        return HypothesisDraw{null, {ThetaPoint{null.mu + d, null.nu}, ThetaPoint{null.mu - d, null.nu}}, d};
    };
    auto valid = [&](const HypothesisDraw& h) {
        return model.valid_theta(h.alternatives[0]) && model.valid_theta(h.alternatives[1]);
    };
    // (low, high] so that d is never exactly zero.
    auto draw_d = [&] { return prior.d.high - (prior.d.high - prior.d.low) * rng.uniform(); };

    HypothesisDraw h = make(draw_d());
    for (int attempt = 0; attempt < kMaxRedraws && !valid(h); ++attempt) {
        h = make(draw_d());
    }
    if (valid(h)) {
        return h;
    }
    // Bisect for the largest valid offset below the last draw.
    double lo = 0.0;
    double hi = h.d;
    for (int i = 0; i < 200 && hi - lo > 1e-15 * (1.0 + hi); ++i) {
        const double mid = 0.5 * (lo + hi);
        (valid(make(mid)) ? lo : hi) = mid;
    }
    return make(lo);
}

LabeledBatch assemble_minibatch(const StatModel& model, const HypothesisDraw& draw, int n,
                                const Standardizer& standardizer, Rng& rng)
{
    if (n < 4 || n % 4 != 0) {
        throw ConfigError("batch_size must be divisible by 4 (and at least 4), got " + std::to_string(n));
    }
    LabeledBatch batch;
    batch.mu0 = draw.null.mu;
    batch.features.resize(3, n);
    batch.labels.resize(static_cast<std::size_t>(n));
    const int n_null = n / 2;
    const int n_alt = n / 4;
    auto fill = [&](int col, const ThetaPoint& theta, double label) {
        const Observation x = model.sample(theta, rng);
        const auto f = standardizer.apply(x, draw.null.mu);
        batch.features(0, col) = f[0];
        batch.features(1, col) = f[1];
        batch.features(2, col) = f[2];
        batch.labels[static_cast<std::size_t>(col)] = label;
    };
    int col = 0;
    for (int i = 0; i < n_null; ++i) {
        fill(col++, draw.null, 0.0);
    }
    for (const auto& alt : draw.alternatives) {
        for (int i = 0; i < n_alt; ++i) {
            fill(col++, alt, 1.0);
        }
    }
    return batch;
}

std::vector<Observation> sample_null_at(const StatModel& model, const Range& nu_range, double mu0, long n, Rng& rng)
{
    std::vector<Observation> out;
    out.reserve(static_cast<std::size_t>(std::max(0L, n)));
    for (long i = 0; i < n; ++i) {
        const ThetaPoint theta{mu0, rng.uniform(nu_range.low, nu_range.high)};
        out.push_back(model.sample(theta, rng));
    }
    return out;
}

std::vector<Observation> sample_mixture_at(const StatModel& model, const PriorSpec& prior, const Range& nu_range,
                                           double mu0, long n, Rng& rng)
{
    std::vector<Observation> out;
    out.reserve(static_cast<std::size_t>(std::max(0L, n)));
    for (long i = 0; i < n; ++i) {
        const ThetaPoint null{mu0, rng.uniform(nu_range.low, nu_range.high)};
        if (i % 2 == 0) {
            out.push_back(model.sample(null, rng));
            continue;
        }
        const HypothesisDraw h = sample_alternatives(null, prior, model, rng);
        const auto side = rng.uniform() < 0.5 ? 0 : 1;
        out.push_back(model.sample(h.alternatives[static_cast<std::size_t>(side)], rng));
    }
    return out;
}

} // namespace plr::sampling
