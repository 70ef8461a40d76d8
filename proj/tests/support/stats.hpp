#pragma once

// Small self-contained statistics helpers for the test suites: chi-square and
// Student-t tail probabilities via the regularized incomplete gamma/beta
// functions, a one-sided two-sample KS tail bound, and an exact binomial
// sign-test tail.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace ligdiff::stats {

inline double gammaln(double x) { return std::lgamma(x); }

// regularized lower incomplete gamma P(a, x) by series / continued fraction
inline double gamma_p(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_p domain");
    if (x == 0.0) return 0.0;
    if (x < a + 1.0) {
        double ap = a, sum = 1.0 / a, del = sum;
        for (int n = 0; n < 500; ++n) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::abs(del) < std::abs(sum) * 1e-15) break;
        }
        return sum * std::exp(-x + a * std::log(x) - gammaln(a));
    }
    // continued fraction for Q, return 1 - Q
    double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
    for (int i = 1; i < 500; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < 1e-300) d = 1e-300;
        c = b + an / c;
        if (std::abs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-15) break;
    }
    return 1.0 - std::exp(-x + a * std::log(x) - gammaln(a)) * h;
}

// upper-tail probability of a chi-square with df degrees of freedom
inline double chi2_sf(double stat, int df) { return 1.0 - gamma_p(df / 2.0, stat / 2.0); }

inline double betacf(double a, double b, double x) {
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::abs(d) < 1e-300) d = 1e-300;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < 1e-300) d = 1e-300;
        c = 1.0 + aa / c;
        if (std::abs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < 1e-300) d = 1e-300;
        c = 1.0 + aa / c;
        if (std::abs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-14) break;
    }
    return h;
}

inline double beta_inc(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double bt =
        std::exp(gammaln(a + b) - gammaln(a) - gammaln(b) + a * std::log(x) + b * std::log1p(-x));
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
    return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

// one-sided upper-tail p of Student's t with nu degrees of freedom
inline double t_sf(double t, double nu) {
    const double p2 = beta_inc(nu / 2.0, 0.5, nu / (nu + t * t));  // two-sided
    return t >= 0.0 ? p2 / 2.0 : 1.0 - p2 / 2.0;
}

// paired one-sided t-test that mean(a - b) < 0; returns the p-value
inline double paired_t_less(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("paired_t_less");
    const auto n = a.size();
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += a[i] - b[i];
    m /= static_cast<double>(n);
    double s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i] - m;
        s2 += d * d;
    }
    s2 /= static_cast<double>(n - 1);
    if (s2 == 0.0) return m < 0.0 ? 0.0 : 1.0;
    const double t = m / std::sqrt(s2 / static_cast<double>(n));
    return t_sf(-t, static_cast<double>(n - 1));  // small p when m << 0
}

// one-sided two-sample KS: tests whether `low` is stochastically smaller
// (its CDF sits above). Asymptotic tail bound p = exp(-2 d+^2 mn/(m+n)).
inline double ks_less(std::vector<double> low, std::vector<double> high) {
    std::sort(low.begin(), low.end());
    std::sort(high.begin(), high.end());
    const auto m = low.size(), n = high.size();
    if (m == 0 || n == 0) throw std::invalid_argument("ks_less");
    double dplus = 0.0;
    std::size_t i = 0, j = 0;
    while (i < m && j < n) {
        const double x = low[i] <= high[j] ? low[i] : high[j];
        while (i < m && low[i] <= x) ++i;
        while (j < n && high[j] <= x) ++j;
        const double f_low = static_cast<double>(i) / m;
        const double f_high = static_cast<double>(j) / n;
        dplus = std::max(dplus, f_low - f_high);
    }
    const double mn = static_cast<double>(m) * n / (m + n);
    return std::exp(-2.0 * dplus * dplus * mn);
}

// exact one-sided sign test: p = P(Bin(n, 1/2) >= wins)
inline double sign_test_geq(int wins, int n) {
    if (n == 0) return 1.0;
    double p = 0.0;
    for (int k = wins; k <= n; ++k)
        p += std::exp(gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0) -
                      n * std::log(2.0));
    return std::min(1.0, p);
}

// Pearson chi-square goodness of fit p-value against expected counts
inline double chi2_gof(const std::vector<double>& observed,
                       const std::vector<double>& expected) {
    if (observed.size() != expected.size()) throw std::invalid_argument("chi2_gof");
    double stat = 0.0;
    int df = -1;
    for (std::size_t k = 0; k < observed.size(); ++k) {
        if (expected[k] <= 0.0) continue;
        const double d = observed[k] - expected[k];
        stat += d * d / expected[k];
        ++df;
    }
    if (df < 1) return 1.0;
    return chi2_sf(stat, df);
}

}  // namespace ligdiff::stats
