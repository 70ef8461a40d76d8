#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ligdiff/errors.hpp"
#include "ligdiff/schedule.hpp"

using namespace ligdiff;

TEST_CASE("sigmoid schedule basic shape") {
    const auto s = NoiseSchedule::sigmoid(1000, 1e-7, 2e-2, 6.0);
    CHECK(s.steps() == 1000);
    for (int t = 1; t <= 1000; ++t) {
        CHECK(s.beta(t) > 0.0);
        CHECK(s.beta(t) < 1.0);
        if (t > 1) CHECK(s.beta(t) >= s.beta(t - 1));
    }
    // near-total noising at the default settings
    CHECK(s.alpha_bar(1000) < 1e-3);
    for (int t = 1; t <= 1000; ++t) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
}

TEST_CASE("constant schedule when beta_min == beta_max") {
    const double b = 0.05;
    const auto s = NoiseSchedule::sigmoid(12, b, b, 6.0);
    for (int t = 1; t <= 12; ++t) {
        CHECK(s.beta(t) == doctest::Approx(b).epsilon(1e-15));
        CHECK(s.alpha_bar(t) == doctest::Approx(std::pow(1.0 - b, t)).epsilon(1e-12));
    }
}

TEST_CASE("alpha_bar matches explicit product") {
    const auto s = NoiseSchedule::sigmoid(4, 1e-4, 2e-2, 6.0);
    double prod = 1.0;
    for (int t = 1; t <= 4; ++t) {
        prod *= 1.0 - s.beta(t);
        CHECK(std::abs(s.alpha_bar(t) - prod) <= 1e-12 * std::abs(prod));
    }
    // recursion exact to unit roundoff on a long schedule
    const auto s2 = NoiseSchedule::sigmoid(500, 1e-5, 1e-2, 6.0);
    double running = 1.0;
    for (int t = 1; t <= 500; ++t) {
        running *= s2.alpha(t);
        CHECK(std::abs(s2.alpha_bar(t) - running) <= 1e-12 * running + 1e-300);
    }
}

TEST_CASE("invalid schedule parameters are rejected") {
    CHECK_THROWS_AS(NoiseSchedule::sigmoid(0, 1e-4, 1e-2, 6.0), DomainError);
    CHECK_THROWS_AS(NoiseSchedule::sigmoid(10, 0.0, 1e-2, 6.0), DomainError);
    CHECK_THROWS_AS(NoiseSchedule::sigmoid(10, 1e-4, 1.0, 6.0), DomainError);
    CHECK_THROWS_AS(NoiseSchedule::sigmoid(10, 1e-2, 1e-4, 6.0), DomainError);
    CHECK_THROWS_AS(NoiseSchedule::sigmoid(10, 1e-4, 1e-2, 0.0), DomainError);
}

TEST_CASE("posterior coefficients at t=1") {
    const auto s = NoiseSchedule::sigmoid(16, 1e-4, 2e-2, 6.0);
    const auto c = s.posterior_coeffs(1);
    CHECK(c.ct == 0.0);          // alpha_bar(0) == 1 forces the x_t weight to zero
    CHECK(c.beta_tilde == 0.0);  // and zero posterior variance
    CHECK(c.c0 == doctest::Approx(s.beta(1) / (1.0 - s.alpha_bar(1))).epsilon(1e-15));
}

TEST_CASE("posterior coefficients by direct substitution, constant beta") {
    const double b = 0.1;
    const auto s = NoiseSchedule::sigmoid(4, b, b, 6.0);
    // alpha_bar(1) = 0.9, alpha_bar(2) = 0.81
    const auto c = s.posterior_coeffs(2);
    const double abar1 = 0.9, abar2 = 0.81;
    CHECK(c.c0 == doctest::Approx(std::sqrt(abar1) * b / (1.0 - abar2)).epsilon(1e-12));
    CHECK(c.ct == doctest::Approx(std::sqrt(0.9) * (1.0 - abar1) / (1.0 - abar2)).epsilon(1e-12));
    CHECK(c.beta_tilde == doctest::Approx((1.0 - abar1) / (1.0 - abar2) * b).epsilon(1e-12));
}

TEST_CASE("posterior coefficient positivity and variance bound") {
    const auto s = NoiseSchedule::sigmoid(64, 1e-4, 5e-2, 6.0);
    for (int t = 2; t <= 64; ++t) {
        const auto c = s.posterior_coeffs(t);
        CHECK(c.c0 > 0.0);
        CHECK(c.ct > 0.0);
        CHECK(c.beta_tilde > 0.0);
        CHECK(c.beta_tilde < s.beta(t));
    }
    CHECK_THROWS_AS(s.posterior_coeffs(0), DomainError);
    CHECK_THROWS_AS(s.posterior_coeffs(65), DomainError);
}

// Brute-force Bayes check on scalar data: the posterior mean of
// q(x_{t-1} | x_t, x0) integrated numerically matches c0*x0 + ct*x_t.
TEST_CASE("reverse mean matches quadrature posterior on scalar toy") {
    const auto s = NoiseSchedule::sigmoid(8, 5e-3, 8e-2, 6.0);
    const double x0 = 1.3;
    for (int t : {2, 5, 8}) {
        const double xt = 0.7;
        const double a = s.alpha(t);
        const double abar_prev = s.alpha_bar(t - 1);
        // densities: q(x_t | x_{t-1}) = N(sqrt(alpha_t) x_{t-1}, beta_t)
        //            q(x_{t-1} | x0) = N(sqrt(abar_{t-1}) x0, 1 - abar_{t-1})
        const double var1 = s.beta(t);
        const double var2 = 1.0 - abar_prev;
        double znum = 0.0, zden = 0.0;
        const int n = 400001;
        const double lo = -8.0, hi = 8.0, dx = (hi - lo) / (n - 1);
        for (int i = 0; i < n; ++i) {
            const double x = lo + i * dx;
            const double g1 = std::exp(-0.5 * (xt - std::sqrt(a) * x) * (xt - std::sqrt(a) * x) / var1);
            const double g2 = std::exp(-0.5 * (x - std::sqrt(abar_prev) * x0) * (x - std::sqrt(abar_prev) * x0) / var2);
            znum += x * g1 * g2;
            zden += g1 * g2;
        }
        const double quad_mean = znum / zden;
        const auto c = s.posterior_coeffs(t);
        CHECK(c.c0 * x0 + c.ct * xt == doctest::Approx(quad_mean).epsilon(1e-7));
    }
}
