#include "ligdiff/derivation_checks.hpp"

#include <cmath>
#include <cstdio>

#include "ligdiff/guidance.hpp"
#include "ligdiff/rng.hpp"

namespace ligdiff {

double ToyGaussianWorld::marginal_mean(const NoiseSchedule& s, int t) const {
    return std::sqrt(s.alpha_bar(t)) * mu0;
}

double ToyGaussianWorld::marginal_var(const NoiseSchedule& s, int t) const {
    const double abar = s.alpha_bar(t);
    return abar * sigma0 * sigma0 + (1.0 - abar);
}

double ToyGaussianWorld::optimal_x0_hat(const NoiseSchedule& s, int t, double x_t) const {
    // Gaussian posterior mean E[x0 | x_t]
    const double abar = s.alpha_bar(t);
    const double v = marginal_var(s, t);
    return mu0 + std::sqrt(abar) * sigma0 * sigma0 / v * (x_t - marginal_mean(s, t));
}

namespace {

std::vector<double> grid_around(double mean, double sd, int n = 101) {
    std::vector<double> g(n);
    for (int i = 0; i < n; ++i) g[i] = mean + sd * (-4.0 + 8.0 * i / (n - 1));
    return g;
}

}  // namespace

double check_conditional_score_identity(const ToyGaussianWorld& w, const NoiseSchedule& sched,
                                        int t, double c, double s) {
    const double abar = sched.alpha_bar(t);
    const double mean = w.marginal_mean(sched, t);
    const double var = w.marginal_var(sched, t);
    const double S = s / (2.0 * w.sigma_y * w.sigma_y);

    // exact conditional: product of the marginal and the s-weighted Gaussian
    // likelihood N(c; a x + b, sigma_y^2) is Gaussian in x
    const double prec_cond = 1.0 / var + s * w.a * w.a / (w.sigma_y * w.sigma_y);
    const double mean_cond =
        (mean / var + s * w.a * (c - w.b) / (w.sigma_y * w.sigma_y)) / prec_cond;

    double worst = 0.0;
    for (const double x : grid_around(mean, std::sqrt(var))) {
        // implemented route: x0-parameterized marginal score plus the
        // energy-loss gradient with all constants folded into S
        const double x0_hat = w.optimal_x0_hat(sched, t, x);
        const double score_marginal = -x / (1.0 - abar) + std::sqrt(abar) * x0_hat / (1.0 - abar);
        const double y = w.a * x + w.b;
        const double dloss_dx = energy_loss(y, c, LossKind::gaussian).dvalue_dy * w.a;
        const double implemented = score_marginal - S * dloss_dx;

        const double exact = -(x - mean_cond) * prec_cond;
        worst = std::max(worst, std::abs(implemented - exact));
    }
    return worst;
}

double check_cfg_identity(const ToyGaussianWorld& w, const NoiseSchedule& sched, int t,
                          double s) {
    const double mean = w.marginal_mean(sched, t);
    const double var = w.marginal_var(sched, t);
    const double c = w.mu0 - 2.0;
    const double prec_cond = 1.0 / var + w.a * w.a / (w.sigma_y * w.sigma_y);
    const double mean_cond = (mean / var + w.a * (c - w.b) / (w.sigma_y * w.sigma_y)) / prec_cond;

    const auto grid = grid_around(mean, std::sqrt(var));
    std::vector<double> uncond(grid.size()), cond(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        uncond[i] = -(grid[i] - mean) / var;
        cond[i] = -(grid[i] - mean_cond) * prec_cond;
    }

    const auto lhs = cfg_combine(uncond, cond, s);
    double worst = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double rhs = uncond[i] + s * (cond[i] - uncond[i]);
        worst = std::max(worst, std::abs(lhs[i] - rhs));
    }
    return worst;
}

double check_x0_parameterization(const ToyGaussianWorld& w, const NoiseSchedule& sched, int t) {
    const double abar = sched.alpha_bar(t);
    const double mean = w.marginal_mean(sched, t);
    const double var = w.marginal_var(sched, t);
    double worst = 0.0;
    for (const double x : grid_around(mean, std::sqrt(var))) {
        const double x0_hat = w.optimal_x0_hat(sched, t, x);
        const double implemented = -x / (1.0 - abar) + std::sqrt(abar) * x0_hat / (1.0 - abar);
        const double exact = -(x - mean) / var;
        if (!std::isfinite(implemented)) return std::numeric_limits<double>::infinity();
        worst = std::max(worst, std::abs(implemented - exact));
    }
    return worst;
}

bool SelfTestReport::all_pass() const {
    for (const auto& e : entries)
        if (!e.pass) return false;
    return true;
}

SelfTestReport run_derivation_checks(std::uint64_t seed) {
    SelfTestReport report;
    const auto sched = NoiseSchedule::sigmoid(100, 1e-5, 2e-1, 6.0);
    const int steps[4] = {1, 25, 50, 100};
    Rng rng(seed);

    auto add = [&report](const std::string& name, double dev, double tol) {
        report.entries.push_back({name, dev, tol, dev <= tol});
    };

    for (int world_i = 0; world_i < 5; ++world_i) {
        ToyGaussianWorld w;
        w.mu0 = rng.uniform(-2.0, 2.0);
        w.sigma0 = rng.uniform(0.5, 2.0);
        w.a = rng.uniform(0.5, 2.0);
        w.b = rng.uniform(-1.0, 1.0);
        w.sigma_y = rng.uniform(0.5, 2.0);
        const double c = rng.uniform(-4.0, 0.0);
        const double s = rng.uniform(0.1, 3.0);
        char name[96];
        for (const int t : steps) {
            std::snprintf(name, sizeof(name), "conditional_score[w%d,t%d]", world_i, t);
            add(name, check_conditional_score_identity(w, sched, t, c, s), 1e-10);
            std::snprintf(name, sizeof(name), "cfg_identity[w%d,t%d]", world_i, t);
            add(name, check_cfg_identity(w, sched, t, s), 1e-12);
            std::snprintf(name, sizeof(name), "x0_parameterization[w%d,t%d]", world_i, t);
            add(name, check_x0_parameterization(w, sched, t), 1e-10);
        }
    }

    // degenerate corners: zero guidance and property independent of x
    ToyGaussianWorld w;
    add("conditional_score[s=0]", check_conditional_score_identity(w, sched, 50, -2.0, 0.0),
        1e-12);
    ToyGaussianWorld w_flat;
    w_flat.a = 0.0;
    add("conditional_score[a=0]", check_conditional_score_identity(w_flat, sched, 50, -2.0, 1.5),
        1e-12);
    return report;
}

}  // namespace ligdiff
