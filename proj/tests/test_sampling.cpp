// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <vector>

#include "plr/errors.hpp"
#include "plr/evaluation.hpp"
#include "plr/sampling.hpp"

using namespace plr;
using sampling::PriorSpec;
using sampling::Range;

namespace {

PriorSpec gaussian_prior() { return {{-5.0, 5.0}, {-5.0, 5.0}, {0.0, 3.0}}; }
PriorSpec onoff_prior() { return {{-1.0, 3.0}, {0.5, 1.5}, {0.0, 2.0}}; }

Eigen::Matrix2d correlated()
{
    Eigen::Matrix2d s;
    s << 1.0, 0.8, 0.8, 1.0;
    return s;
}

std::function<double(double)> uniform_cdf(const Range& r)
{
    return [r](double v) { return std::clamp((v - r.low) / (r.high - r.low), 0.0, 1.0); };
}

} // namespace

TEST_CASE("PriorSpec::validate")
{
    CHECK_NOTHROW(gaussian_prior().validate());
    CHECK_THROWS_AS((PriorSpec{{1.0, 1.0}, {0.0, 1.0}, {0.0, 1.0}}.validate()), ConfigError);
    CHECK_THROWS_AS((PriorSpec{{0.0, 1.0}, {2.0, 1.0}, {0.0, 1.0}}.validate()), ConfigError);
    CHECK_THROWS_AS((PriorSpec{{0.0, 1.0}, {0.0, 1.0}, {-1.0, 1.0}}.validate()), ConfigError);
}

TEST_CASE("sample_null: inside the box, uniform, deterministic")
{
    const auto prior = gaussian_prior();
    Rng rng(1);
    std::vector<double> mu;
    std::vector<double> nu;
    for (int i = 0; i < 100000; ++i) {
        const auto th = sampling::sample_null(prior, rng);
        CHECK(prior.mu.contains(th.mu));
        CHECK(prior.nu.contains(th.nu));
        mu.push_back(th.mu);
        nu.push_back(th.nu);
    }
    CHECK(evaluation::ks_statistic(mu, uniform_cdf(prior.mu)) <= 0.01);
    CHECK(evaluation::ks_statistic(nu, uniform_cdf(prior.nu)) <= 0.01);

    Rng a(2);
    Rng b(2);
    for (int i = 0; i < 100; ++i) {
        CHECK(sampling::sample_null(prior, a) == sampling::sample_null(prior, b));
    }
}

TEST_CASE("sample_alternatives: geometry and offset distribution")
{
    const auto prior = gaussian_prior();
    const models::GaussianModel m(correlated());
    Rng rng(3);
    std::vector<double> ds;
    for (int i = 0; i < 100000; ++i) {
        const auto null = sampling::sample_null(prior, rng);
        const auto h = sampling::sample_alternatives(null, prior, m, rng);
        CHECK(h.null == null);
        CHECK(h.alternatives[0].nu == null.nu);
        CHECK(h.alternatives[1].nu == null.nu);
        CHECK(h.alternatives[0].mu == null.mu + h.d);
        CHECK(h.alternatives[1].mu == null.mu - h.d);
        CHECK(0.5 * (h.alternatives[0].mu + h.alternatives[1].mu) == doctest::Approx(null.mu).epsilon(1e-15));
        CHECK(h.d > prior.d.low);
        CHECK(h.d <= prior.d.high);
        ds.push_back(h.d);
    }
    CHECK(evaluation::ks_statistic(ds, uniform_cdf(prior.d)) <= 0.01);
}

TEST_CASE("sample_alternatives: on-off alternatives keep nonnegative rates")
{
    const auto prior = onoff_prior();
    const models::OnOffModel m({15.0, 70.0, 1.0});
    Rng rng(4);
    for (int i = 0; i < 20000; ++i) {
        const auto null = sampling::sample_null(prior, rng);
        const auto h = sampling::sample_alternatives(null, prior, m, rng);
        for (const auto& alt : h.alternatives) {
            CHECK(m.valid_theta(alt));
        }
        CHECK(h.d > 0.0);
    }
    // Forced case: mu0 = -1, nu0 = 0.5 allows only d <= 35/15 - 1.
    const models::ThetaPoint edge{-1.0, 0.5};
    for (int i = 0; i < 100; ++i) {
        const auto h = sampling::sample_alternatives(edge, prior, m, rng);
        CHECK(m.valid_theta(h.alternatives[1]));
    }
}

TEST_CASE("assemble_minibatch")
{
    const auto prior = gaussian_prior();
    const models::GaussianModel m(correlated());
    const auto std_ = sampling::Standardizer::for_model(m, prior);
    Rng rng(5);
    const auto null = sampling::sample_null(prior, rng);
    const auto h = sampling::sample_alternatives(null, prior, m, rng);

    const auto batch = sampling::assemble_minibatch(m, h, 1000, std_, rng);
    REQUIRE(batch.features.cols() == 1000);
    REQUIRE(batch.features.rows() == 3);
    int zeros = 0;
    double label_sum = 0.0;
    for (double y : batch.labels) {
        zeros += y == 0.0 ? 1 : 0;
        label_sum += y;
    }
    CHECK(zeros == 500);
    CHECK(label_sum / 1000.0 == 0.5);
    const double mu0_feature = std_.apply({0.0, 0.0}, null.mu)[2];
    for (Eigen::Index c = 0; c < batch.features.cols(); ++c) {
        CHECK(batch.features(2, c) == mu0_feature);
    }
    CHECK(batch.mu0 == null.mu);

    CHECK_THROWS_AS(sampling::assemble_minibatch(m, h, 7, std_, rng), ConfigError);
    CHECK_THROWS_AS(sampling::assemble_minibatch(m, h, 0, std_, rng), ConfigError);
    CHECK_NOTHROW(sampling::assemble_minibatch(m, h, 4, std_, rng));
}

TEST_CASE("assemble_minibatch: row blocks come from the right hypotheses")
{
    // Well separated alternatives make the source of each block visible in x1.
    const models::GaussianModel m(Eigen::Matrix2d::Identity() * 1e-4);
    sampling::HypothesisDraw h;
    h.null = {0.0, 0.0};
    h.d = 1.0;
    h.alternatives = {models::ThetaPoint{1.0, 0.0}, models::ThetaPoint{-1.0, 0.0}};
    Rng rng(6);
    const auto batch = sampling::assemble_minibatch(m, h, 40, sampling::Standardizer::identity(), rng);
    int plus = 0;
    int minus = 0;
    for (Eigen::Index c = 0; c < 40; ++c) {
        const double x1 = batch.features(0, c);
        if (batch.labels[static_cast<std::size_t>(c)] == 0.0) {
            CHECK(std::abs(x1) < 0.1);
        } else {
            CHECK(std::abs(std::abs(x1) - 1.0) < 0.1);
            (x1 > 0 ? plus : minus) += 1;
        }
    }
    CHECK(plus == 10);
    CHECK(minus == 10);
}

TEST_CASE("Standardizer: round trip and fixed maps")
{
    const models::OnOffModel m({15.0, 70.0, 1.0});
    const auto prior = onoff_prior();
    const auto s = sampling::Standardizer::for_model(m, prior);
    const auto f = s.apply({85.0, 70.0}, 1.0);
    CHECK(f[2] == doctest::Approx(0.0)); // prior midpoint
    const auto back = s.invert(f);
    CHECK(back[0] == doctest::Approx(85.0).epsilon(1e-14));
    CHECK(back[1] == doctest::Approx(70.0).epsilon(1e-14));
    CHECK(back[2] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(s.apply({-1.0, 0.0}, 3.0)[2] == doctest::Approx(1.0));
    CHECK(s == sampling::Standardizer::for_model(m, prior));
}

TEST_CASE("sample_null_at and sample_mixture_at")
{
    const models::GaussianModel m(correlated());
    const auto prior = gaussian_prior();
    Rng rng(7);
    const auto null = sampling::sample_null_at(m, {-2.5, 2.5}, 0.0, 20000, rng);
    CHECK(null.size() == 20000);
    std::vector<double> t;
    for (const auto& x : null) {
        t.push_back(m.profile_t(x, 0.0));
    }
    CHECK(evaluation::ks_statistic(t, [](double q) { return std::erf(std::sqrt(q / 2.0)); }) <= 0.02);

    const auto mix = sampling::sample_mixture_at(m, prior, {-2.5, 2.5}, 0.0, 1000, rng);
    CHECK(mix.size() == 1000);
}
