// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "plr/errors.hpp"
#include "plr/evaluation.hpp"
#include "plr/training.hpp"

using namespace plr;
using models::Observation;

namespace {

training::TrainConfig small_gaussian(long steps)
{
    training::TrainConfig c;
    c.learning_rate = 1e-3;
    c.batch_size = 200;
    c.steps = steps;
    c.hidden_dims = {16, 16};
    c.seed = 17;
    c.eval_every = 100;
    c.prior = {{-5.0, 5.0}, {-5.0, 5.0}, {0.0, 3.0}};
    c.model = "gaussian";
    return c;
}

Eigen::Matrix2d correlated()
{
    Eigen::Matrix2d s;
    s << 1.0, 0.8, 0.8, 1.0;
    return s;
}

// Emits NaN counts once the inner call budget is spent.
class NanModel final : public models::StatModel {
public:
    explicit NanModel(int good_samples) : inner_(Eigen::Matrix2d::Identity()), budget_(good_samples) {}
    std::string name() const override { return "nan"; }
    Observation sample(const models::ThetaPoint& theta, Rng& rng) const override
    {
        if (budget_ > 0) {
            --budget_;
            return inner_.sample(theta, rng);
        }
        return {std::numeric_limits<double>::quiet_NaN(), 0.0};
    }
    double loglik(const Observation& x, const models::ThetaPoint& t) const override { return inner_.loglik(x, t); }
    double profile_t(const Observation& x, double mu0) const override { return inner_.profile_t(x, mu0); }
    models::ThetaPoint mle(const Observation& x) const override { return inner_.mle(x); }
    bool valid_theta(const models::ThetaPoint&) const override { return true; }
    bool valid_observation(const Observation&) const override { return true; }
    Observation expected(const models::ThetaPoint& t) const override { return inner_.expected(t); }

private:
    models::GaussianModel inner_;
    mutable int budget_;
};

} // namespace

TEST_CASE("TrainConfig::validate")
{
    auto c = small_gaussian(10);
    CHECK_NOTHROW(c.validate());
    c.batch_size = 7;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_gaussian(10);
    c.learning_rate = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_gaussian(0);
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_gaussian(10);
    c.hidden_dims.clear();
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK(small_gaussian(10).layer_dims() == std::vector<int>{3, 16, 16, 1});
}

TEST_CASE("build_features")
{
    const auto id = sampling::Standardizer::identity();
    const auto f = training::build_features({2.0, 5.0}, 1.0, id);
    CHECK(f == std::array<double, 3>{2.0, 5.0, 1.0});

    const models::GaussianModel m(correlated());
    const auto s = sampling::Standardizer::for_model(m, small_gaussian(1).prior);
    const auto a = training::build_features({0.4, -1.3}, 0.5, s);
    const auto b = training::build_features({0.4, -1.3}, -2.0, s);
    CHECK(a[0] == b[0]);
    CHECK(a[1] == b[1]);
    CHECK(a[2] != b[2]);
    const auto back = s.invert(a);
    CHECK(std::abs(back[0] - 0.4) <= 1e-12);
    CHECK(std::abs(back[1] + 1.3) <= 1e-12);
    CHECK(std::abs(back[2] - 0.5) <= 1e-12);
    CHECK_THROWS_AS(training::build_features({std::nan(""), 0.0}, 0.0, id), InputError);
    CHECK_THROWS_AS(training::build_features({0.0, 0.0}, INFINITY, id), InputError);
}

TEST_CASE("score")
{
    Rng rng(1);
    auto p = nn::init_params(rng, std::vector<int>{3, 8, 1});
    for (auto& l : p.layers) {
        l.weight.setZero();
    }
    const auto id = sampling::Standardizer::identity();
    CHECK(training::score(p, {3.0, -2.0}, 1.0, id) == 0.5);

    const auto q = nn::init_params(rng, std::vector<int>{3, 8, 1});
    std::vector<Observation> xs;
    for (int i = 0; i < 5000; ++i) {
        xs.push_back({rng.normal(), rng.normal()});
    }
    const auto batch = training::score_batch(q, xs, 0.3, id);
    REQUIRE(batch.size() == xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        CHECK(batch[i] == training::score(q, xs[i], 0.3, id));
    }
}

TEST_CASE("train: log shape, step-0 loss and determinism")
{
    const models::GaussianModel m(correlated());
    const auto c = small_gaussian(1000);
    std::vector<long> seen;
    const auto r = training::train(m, c, [&](const training::EvalRecord& e) { seen.push_back(e.step); });
    REQUIRE(!r.log.records.empty());
    CHECK(r.log.records.front().step == 0);
    CHECK(r.log.records.front().loss == doctest::Approx(std::numbers::ln2).epsilon(0.05 / std::numbers::ln2));
    CHECK(r.log.records.back().step == 1000);
    for (std::size_t i = 1; i < r.log.records.size(); ++i) {
        CHECK(r.log.records[i].step > r.log.records[i - 1].step);
    }
    CHECK(seen.size() == r.log.records.size());
    CHECK(r.log.final_loss == r.log.records.back().loss);
    CHECK(r.log.final_loss < r.log.records.front().loss);

    const auto again = training::train(m, c);
    CHECK(again.params == r.params);
    auto other = c;
    other.seed = 18;
    CHECK_FALSE(training::train(m, other).params == r.params);
}

TEST_CASE("train: a non-finite simulator aborts with the last good parameters")
{
    const NanModel m(5 * 200);
    auto c = small_gaussian(100);
    c.prior = {{-1.0, 1.0}, {-1.0, 1.0}, {0.0, 1.0}};
    try {
        training::train(m, c);
        FAIL("expected TrainingAborted");
    } catch (const training::TrainingAborted& e) {
        CHECK(e.step() == 5);
        CHECK_NOTHROW(e.last_good().validate());
    }
}

TEST_CASE("train: flipped labels mirror the learned score")
{
    const models::GaussianModel m(correlated());
    auto c = small_gaussian(1500);
    const auto plain = training::train(m, c);
    c.flip_labels = true;
    const auto flipped = training::train(m, c);

    Rng rng(21);
    const double mu0 = 0.0;
    std::vector<Observation> null;
    std::vector<Observation> alt;
    for (int i = 0; i < 20000; ++i) {
        const double nu = rng.uniform(-2.5, 2.5);
        null.push_back(m.sample({mu0, nu}, rng));
        alt.push_back(m.sample({mu0 + (i % 2 == 0 ? 1.0 : -1.0), nu}, rng));
    }
    const auto auc = [&](const training::TrainResult& r) {
        const auto sn = training::score_batch(r.params, null, mu0, r.standardizer);
        const auto sa = training::score_batch(r.params, alt, mu0, r.standardizer);
        return evaluation::roc_curve(sn, sa).auc;
    };
    const double a = auc(plain);
    const double b = auc(flipped);
    CHECK(a > 0.6);
    CHECK(std::abs(b - (1.0 - a)) <= 0.01);
}
