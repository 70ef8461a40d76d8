#include "ligdiff/schedule.hpp"

#include <cmath>

#include "ligdiff/errors.hpp"

namespace ligdiff {

NoiseSchedule NoiseSchedule::sigmoid(int T, double beta_min, double beta_max, double steepness) {
    if (T < 1) throw DomainError("schedule: T must be >= 1");
    if (!(beta_min > 0.0) || !(beta_max < 1.0) || !(beta_min <= beta_max))
        throw DomainError("schedule: need 0 < beta_min <= beta_max < 1");
    if (!(steepness > 0.0)) throw DomainError("schedule: steepness must be > 0");

    NoiseSchedule s;
    s.T_ = T;
    s.beta_.resize(T);
    s.alpha_.resize(T);
    s.alpha_bar_.resize(T);

    double running = 1.0;
    for (int t = 1; t <= T; ++t) {
        const double arg = steepness * (2.0 * t / T - 1.0);
        const double logistic = 1.0 / (1.0 + std::exp(-arg));
        const double b = beta_min + (beta_max - beta_min) * logistic;
        s.beta_[t - 1] = b;
        s.alpha_[t - 1] = 1.0 - b;
        running *= 1.0 - b;
        s.alpha_bar_[t - 1] = running;
    }
    return s;
}

std::size_t NoiseSchedule::check(int t) const {
    if (t < 1 || t > T_) throw DomainError("schedule: step index out of range");
    return static_cast<std::size_t>(t - 1);
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t == 0) return 1.0;
    return alpha_bar_[check(t)];
}

NoiseSchedule::PosteriorCoeffs NoiseSchedule::posterior_coeffs(int t) const {
    check(t);
    const double b = beta(t);
    const double a = alpha(t);
    const double abar = alpha_bar(t);
    const double abar_prev = alpha_bar(t - 1);
    const double denom = 1.0 - abar;
    PosteriorCoeffs c;
    c.c0 = std::sqrt(abar_prev) * b / denom;
    c.ct = std::sqrt(a) * (1.0 - abar_prev) / denom;
    c.beta_tilde = (1.0 - abar_prev) / denom * b;
    return c;
}

}  // namespace ligdiff
