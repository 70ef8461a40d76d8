#pragma once

#include <string>
#include <vector>

#include "ligdiff/schedule.hpp"

namespace ligdiff {

// Closed-form 1D world: x0 ~ N(mu0, sigma0^2) with a linear observed
// property y(x) = a x + b. Every distribution in play stays Gaussian, so the
// guided-score identities can be checked against exact expressions.
struct ToyGaussianWorld {
    double mu0 = 0.0;
    double sigma0 = 1.0;
    double a = 1.0;
    double b = 0.0;
    double sigma_y = 1.0;  // observation width of P(y | x_t)

    double marginal_mean(const NoiseSchedule& s, int t) const;
    double marginal_var(const NoiseSchedule& s, int t) const;
    double optimal_x0_hat(const NoiseSchedule& s, int t, double x_t) const;
};

// Implemented guided score  (x0-parameterized marginal score minus
// S * d(y-c)^2/dx with S = s / (2 sigma_y^2))  versus the exact conditional
// Gaussian score. Returns the sup-norm deviation over a 101-point grid.
double check_conditional_score_identity(const ToyGaussianWorld& world, const NoiseSchedule& sched,
                                        int t, double c, double s);

// (1-s) * uncond + s * cond  ==  uncond + s * (cond - uncond), evaluated
// through the production cfg_combine.
double check_cfg_identity(const ToyGaussianWorld& world, const NoiseSchedule& sched, int t,
                          double s);

// -x_t/(1-abar) + sqrt(abar) x0_hat/(1-abar) with the analytically optimal
// x0_hat reproduces the true marginal score.
double check_x0_parameterization(const ToyGaussianWorld& world, const NoiseSchedule& sched,
                                 int t);

struct SelfTestReport {
    struct Entry {
        std::string name;
        double deviation;
        double tolerance;
        bool pass;
    };
    std::vector<Entry> entries;
    bool all_pass() const;
};

// The full battery across several steps and random worlds.
SelfTestReport run_derivation_checks(std::uint64_t seed = 7);

}  // namespace ligdiff
