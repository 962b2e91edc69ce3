// SPDX-License-Identifier: Apache-2.0

#include "plr/models.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "plr/errors.hpp"

namespace plr::models {

namespace {

bool finite(const ThetaPoint& t) { return std::isfinite(t.mu) && std::isfinite(t.nu); }

// Poisson deviance contribution 2 [lambda - k + k log(k / lambda)] = -2 [log P(k|lambda) - log P(k|k)].
double poisson_deviance(double k, double lambda)
{
    if (lambda <= 0.0) {
        return k > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    }
    if (k == 0.0) {
        return 2.0 * lambda;
    }
    return 2.0 * (lambda - k + k * std::log(k / lambda));
}

} // namespace

// ---------------------------------------------------------------------------------------------
// Gaussian

GaussianModel::GaussianModel(const Eigen::Matrix2d& cov) : cov_(cov)
{
    if (!cov.allFinite()) {
        throw DomainError("covariance has non-finite entries");
    }
    const double scale = cov.cwiseAbs().maxCoeff();
    if (std::abs(cov(0, 1) - cov(1, 0)) > 1e-12 * scale) {
        throw DomainError("covariance is not symmetric");
    }
    Eigen::LLT<Eigen::Matrix2d> llt(cov);
    if (llt.info() != Eigen::Success) {
        throw DomainError("covariance is not positive definite (Cholesky failed)");
    }
    chol_ = llt.matrixL();
    if (!(chol_(0, 0) > 0.0 && chol_(1, 1) > 0.0)) {
        throw DomainError("covariance is not positive definite (Cholesky failed)");
    }
    precision_ = llt.solve(Eigen::Matrix2d::Identity());
    log_det_ = 2.0 * (std::log(chol_(0, 0)) + std::log(chol_(1, 1)));
}

Observation GaussianModel::sample(const ThetaPoint& theta, Rng& rng) const
{
    if (!finite(theta)) {
        throw InputError("non-finite parameter point");
    }
    const double z1 = rng.normal();
    const double z2 = rng.normal();
    return {theta.mu + chol_(0, 0) * z1, theta.nu + chol_(1, 0) * z1 + chol_(1, 1) * z2};
}

double GaussianModel::loglik(const Observation& x, const ThetaPoint& theta) const
{
    const Eigen::Vector2d r(x.x1 - theta.mu, x.x2 - theta.nu);
    return -0.5 * r.dot(precision_ * r) - std::log(2.0 * std::numbers::pi) - 0.5 * log_det_;
}

double GaussianModel::conditional_nu(const Observation& x, double mu0) const
{
    return x.x2 - cov_(1, 0) / cov_(0, 0) * (x.x1 - mu0);
}

double GaussianModel::profile_t(const Observation& x, double mu0) const
{
    const double nu_cond = conditional_nu(x, mu0);
    return -2.0 * (loglik(x, {mu0, nu_cond}) - loglik(x, mle(x)));
}

bool GaussianModel::valid_theta(const ThetaPoint& theta) const { return finite(theta); }

bool GaussianModel::valid_observation(const Observation& x) const
{
    return std::isfinite(x.x1) && std::isfinite(x.x2);
}

Observation gaussian_sample(const GaussianModel& model, const ThetaPoint& theta, Rng& rng)
{
    return model.sample(theta, rng);
}

double gaussian_loglik(const GaussianModel& model, const Observation& x, const ThetaPoint& theta)
{
    return model.loglik(x, theta);
}

double gaussian_profile_t(const GaussianModel& model, const Observation& x, double mu0)
{
    return model.profile_t(x, mu0);
}

// ---------------------------------------------------------------------------------------------
// Poisson

std::int64_t poisson_draw(double lambda, Rng& rng)
{
    if (!std::isfinite(lambda) || lambda < 0.0) {
        throw DomainError("Poisson rate must be finite and nonnegative");
    }
    if (lambda == 0.0) {
        return 0;
    }
    if (lambda < 30.0) {
        const double u = rng.uniform();
        double p = std::exp(-lambda);
        double cdf = p;
        std::int64_t k = 0;
        // cdf can stall just below 1 through rounding; the cap sits far past any real tail.
        while (u > cdf && k < 1000) {
            ++k;
            p *= lambda / static_cast<double>(k);
            cdf += p;
        }
        return k;
    }
    // Hoermann (1993), "The transformed rejection method for generating Poisson random variables".
    const double slam = std::sqrt(lambda);
    const double loglam = std::log(lambda);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double vr = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
        const double u = rng.uniform() - 0.5;
        const double v = rng.uniform();
        const double us = 0.5 - std::abs(u);
        const double k = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
        if (us >= 0.07 && v <= vr) {
            return static_cast<std::int64_t>(k);
        }
        if (k < 0.0 || (us < 0.013 && v > us)) {
            continue;
        }
        if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
            -lambda + k * loglam - std::lgamma(k + 1.0)) {
            return static_cast<std::int64_t>(k);
        }
    }
}

double poisson_logpmf(double k, double lambda)
{
    if (lambda <= 0.0) {
        return k > 0.0 ? kLogZero : 0.0;
    }
    return k * std::log(lambda) - lambda - std::lgamma(k + 1.0);
}

// ---------------------------------------------------------------------------------------------
// On-off

OnOffModel::OnOffModel(const OnOffSpec& spec) : spec_(spec)
{
    if (!(spec.s > 0.0 && spec.b > 0.0 && spec.tau > 0.0) || !std::isfinite(spec.s) || !std::isfinite(spec.b) ||
        !std::isfinite(spec.tau)) {
        throw DomainError("on-off hyperparameters s, b, tau must be finite and strictly positive");
    }
}

Observation OnOffModel::sample(const ThetaPoint& theta, Rng& rng) const
{
    const double on_rate = theta.mu * spec_.s + theta.nu * spec_.b;
    const double off_rate = theta.nu * spec_.tau * spec_.b;
    if (!(on_rate >= 0.0) || !(off_rate >= 0.0)) {
        throw DomainError("on-off rates must be nonnegative (mu=" + std::to_string(theta.mu) +
                          ", nu=" + std::to_string(theta.nu) + ")");
    }
    const auto n_on = poisson_draw(on_rate, rng);
    const auto n_off = poisson_draw(off_rate, rng);
    return {static_cast<double>(n_on), static_cast<double>(n_off)};
}

double OnOffModel::loglik(const Observation& x, const ThetaPoint& theta) const
{
    const double on_rate = theta.mu * spec_.s + theta.nu * spec_.b;
    const double off_rate = theta.nu * spec_.tau * spec_.b;
    const double a = poisson_logpmf(x.x1, on_rate);
    const double b = poisson_logpmf(x.x2, off_rate);
    if (a == kLogZero || b == kLogZero) {
        return kLogZero;
    }
    return a + b;
}

ThetaPoint OnOffModel::mle(const Observation& x) const
{
    const double nu_hat = x.x2 / (spec_.tau * spec_.b);
    return {(x.x1 - nu_hat * spec_.b) / spec_.s, nu_hat};
}

double OnOffModel::conditional_nu(const Observation& x, double mu0) const
{
    const double s = spec_.s;
    const double b = spec_.b;
    const double tau = spec_.tau;
    const double lower = std::max(0.0, -mu0 * s / b);

    // d logL / d nu = 0  <=>  A nu^2 + B nu + C = 0 after clearing the denominators nu and (mu0 s + nu b).
    const double qa = (1.0 + tau) * b * b;
    const double qb = (1.0 + tau) * b * mu0 * s - (x.x1 + x.x2) * b;
    const double qc = -x.x2 * mu0 * s;

    auto deviance = [&](double nu) {
        return poisson_deviance(x.x1, mu0 * s + nu * b) + poisson_deviance(x.x2, nu * tau * b);
    };

    double best_nu = lower;
    double best_dev = deviance(lower);
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc >= 0.0) {
        const double q = -0.5 * (qb + std::copysign(std::sqrt(disc), qb));
        std::vector<double> roots;
        if (q != 0.0) {
            roots.push_back(q / qa);
            roots.push_back(qc / q);
        } else {
            roots.push_back(0.0);
        }
        for (double nu : roots) {
            if (nu > lower && std::isfinite(nu)) {
                const double dev = deviance(nu);
                if (dev < best_dev) {
                    best_dev = dev;
                    best_nu = nu;
                }
            }
        }
    }
    return best_nu;
}

double OnOffModel::profile_t(const Observation& x, double mu0) const
{
    // The unconstrained maximum reproduces both counts exactly, so t is the Poisson deviance
    // of the conditional fit.
    const double nu = conditional_nu(x, mu0);
    return poisson_deviance(x.x1, mu0 * spec_.s + nu * spec_.b) + poisson_deviance(x.x2, nu * spec_.tau * spec_.b);
}

bool OnOffModel::valid_theta(const ThetaPoint& theta) const
{
    return finite(theta) && theta.mu * spec_.s + theta.nu * spec_.b >= 0.0 && theta.nu >= 0.0;
}

bool OnOffModel::valid_observation(const Observation& x) const
{
    return std::isfinite(x.x1) && std::isfinite(x.x2) && x.x1 >= 0.0 && x.x2 >= 0.0 && std::floor(x.x1) == x.x1 &&
           std::floor(x.x2) == x.x2;
}

Observation OnOffModel::expected(const ThetaPoint& theta) const
{
    return {theta.mu * spec_.s + theta.nu * spec_.b, theta.nu * spec_.tau * spec_.b};
}

Observation onoff_sample(const OnOffModel& model, const ThetaPoint& theta, Rng& rng)
{
    return model.sample(theta, rng);
}

double onoff_loglik(const OnOffModel& model, const Observation& x, const ThetaPoint& theta)
{
    return model.loglik(x, theta);
}

double onoff_profile_t(const OnOffModel& model, const Observation& x, double mu0)
{
    return model.profile_t(x, mu0);
}

} // namespace plr::models
