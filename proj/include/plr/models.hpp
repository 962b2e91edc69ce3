// SPDX-License-Identifier: Apache-2.0
//
// The two tractable models used for validation: a bivariate Gaussian with unknown mean and
// the Poisson on-off counting experiment. Each exposes a sampler, the exact log-likelihood
// and the exact profile likelihood ratio statistic
//
//     t(x; mu0) = -2 [ sup_nu log L(mu0, nu) - sup_{mu,nu} log L(mu, nu) ].

#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include <Eigen/Dense>

#include "plr/rng.hpp"

namespace plr::models {

/// Log-likelihood sentinel for impossible data (rate 0 with a positive count).
inline constexpr double kLogZero = -1e300;

struct ThetaPoint {
    double mu = 0.0; // parameter of interest
    double nu = 0.0; // nuisance parameter

    bool operator==(const ThetaPoint&) const = default;
};

struct Observation {
    double x1 = 0.0;
    double x2 = 0.0;

    bool operator==(const Observation&) const = default;
};

/// x -> (x - location) / scale.
struct AffineScale {
    double location = 0.0;
    double scale = 1.0;

    double apply(double v) const { return (v - location) / scale; }
    double invert(double v) const { return v * scale + location; }
    bool operator==(const AffineScale&) const = default;
};

class StatModel {
public:
    virtual ~StatModel() = default;

    virtual std::string name() const = 0;
    virtual Observation sample(const ThetaPoint& theta, Rng& rng) const = 0;
    virtual double loglik(const Observation& x, const ThetaPoint& theta) const = 0;
    virtual double profile_t(const Observation& x, double mu0) const = 0;
    /// Unconstrained maximum-likelihood estimate (mu_hat, nu_hat).
    virtual ThetaPoint mle(const Observation& x) const = 0;
    /// Whether data can be simulated at theta (e.g. nonnegative Poisson rates).
    virtual bool valid_theta(const ThetaPoint& theta) const = 0;
    virtual bool valid_observation(const Observation& x) const = 0;
    /// E[x | theta]; used to standardize x1 and x2 over a prior box before they enter the network.
    virtual Observation expected(const ThetaPoint& theta) const = 0;
};

// ---------------------------------------------------------------------------------------------
// Gaussian

class GaussianModel final : public StatModel {
public:
    /// Throws DomainError unless cov is symmetric positive definite.
    explicit GaussianModel(const Eigen::Matrix2d& cov);

    const Eigen::Matrix2d& covariance() const { return cov_; }

    std::string name() const override { return "gaussian"; }
    Observation sample(const ThetaPoint& theta, Rng& rng) const override;
    double loglik(const Observation& x, const ThetaPoint& theta) const override;
    double profile_t(const Observation& x, double mu0) const override;
    ThetaPoint mle(const Observation& x) const override { return {x.x1, x.x2}; }
    bool valid_theta(const ThetaPoint& theta) const override;
    bool valid_observation(const Observation& x) const override;
    Observation expected(const ThetaPoint& theta) const override { return {theta.mu, theta.nu}; }

    /// argmax_nu log L(mu0, nu).
    double conditional_nu(const Observation& x, double mu0) const;

private:
    Eigen::Matrix2d cov_;
    Eigen::Matrix2d chol_; // lower triangular
    Eigen::Matrix2d precision_;
    double log_det_ = 0.0;
};

Observation gaussian_sample(const GaussianModel& model, const ThetaPoint& theta, Rng& rng);
double gaussian_loglik(const GaussianModel& model, const Observation& x, const ThetaPoint& theta);
double gaussian_profile_t(const GaussianModel& model, const Observation& x, double mu0);

// ---------------------------------------------------------------------------------------------
// On-off: x1 ~ Pois(mu s + nu b), x2 ~ Pois(nu tau b)

struct OnOffSpec {
    double s = 15.0;
    double b = 70.0;
    double tau = 1.0;

    bool operator==(const OnOffSpec&) const = default;
};

class OnOffModel final : public StatModel {
public:
    /// Throws DomainError unless s, b, tau are all strictly positive.
    explicit OnOffModel(const OnOffSpec& spec);

    const OnOffSpec& spec() const { return spec_; }

    std::string name() const override { return "onoff"; }
    Observation sample(const ThetaPoint& theta, Rng& rng) const override;
    double loglik(const Observation& x, const ThetaPoint& theta) const override;
    double profile_t(const Observation& x, double mu0) const override;
    ThetaPoint mle(const Observation& x) const override;
    bool valid_theta(const ThetaPoint& theta) const override;
    bool valid_observation(const Observation& x) const override;
    Observation expected(const ThetaPoint& theta) const override;

    /// argmax_nu log L(mu0, nu) over nu >= max(0, -mu0 s / b), from the stationarity quadratic.
    double conditional_nu(const Observation& x, double mu0) const;

private:
    OnOffSpec spec_;
};

/// Poisson variate: sequential inversion below lambda = 30, PTRS transformed rejection above.
std::int64_t poisson_draw(double lambda, Rng& rng);

/// k log(lambda) - lambda - log k!, with 0 log 0 = 0 and kLogZero for impossible counts.
double poisson_logpmf(double k, double lambda);

Observation onoff_sample(const OnOffModel& model, const ThetaPoint& theta, Rng& rng);
double onoff_loglik(const OnOffModel& model, const Observation& x, const ThetaPoint& theta);
double onoff_profile_t(const OnOffModel& model, const Observation& x, double mu0);

} // namespace plr::models
