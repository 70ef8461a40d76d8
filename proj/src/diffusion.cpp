#include "ligdiff/diffusion.hpp"

#include <cmath>
#include <limits>

#include "ligdiff/errors.hpp"

namespace ligdiff {

std::vector<double> perturb_coords(const std::vector<double>& x0, const NoiseSchedule& sched,
                                   int t, const std::vector<double>& noise) {
    if (noise.size() != x0.size()) throw DomainError("perturb_coords: noise shape mismatch");
    const double abar = sched.alpha_bar(t);
    const double signal = std::sqrt(abar);
    const double spread = std::sqrt(1.0 - abar);
    std::vector<double> x_t(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) x_t[i] = signal * x0[i] + spread * noise[i];
    return x_t;
}

std::vector<double> perturb_types(const std::vector<double>& v0, int n_types,
                                  const NoiseSchedule& sched, int t,
                                  const std::vector<double>& gumbel) {
    if (gumbel.size() != v0.size()) throw DomainError("perturb_types: noise shape mismatch");
    const double abar = sched.alpha_bar(t);
    const double off = (1.0 - abar) / n_types;
    const auto n = v0.size() / n_types;
    std::vector<double> v_t(v0.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = &v0[i * n_types];
        const double* g = &gumbel[i * n_types];
        int best = 0;
        double best_val = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < n_types; ++k) {
            // log(0) = -inf handles the abar = 1 limit exactly
            const double val = g[k] + std::log(abar * row[k] + off);
            if (val > best_val) {
                best_val = val;
                best = k;
            }
        }
        v_t[i * n_types + best] = 1.0;
    }
    return v_t;
}

std::vector<double> categorical_posterior(const std::vector<double>& v_t,
                                          const std::vector<double>& v0_hat, int n_types,
                                          const NoiseSchedule& sched, int t) {
    if (v_t.size() != v0_hat.size()) throw DomainError("categorical_posterior: shape mismatch");
    const double a = sched.alpha(t);
    const double abar_prev = sched.alpha_bar(t - 1);
    const double off_t = (1.0 - a) / n_types;
    const double off_0 = (1.0 - abar_prev) / n_types;
    const auto n = v_t.size() / n_types;
    std::vector<double> prob(v_t.size());
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (int k = 0; k < n_types; ++k) {
            const double c = (a * v_t[i * n_types + k] + off_t) *
                             (abar_prev * v0_hat[i * n_types + k] + off_0);
            prob[i * n_types + k] = c;
            sum += c;
        }
        if (!(sum > 0.0)) throw NumericError("categorical_posterior: degenerate row");
        for (int k = 0; k < n_types; ++k) prob[i * n_types + k] /= sum;
    }
    return prob;
}

std::vector<double> reverse_coord_step(const std::vector<double>& x_t,
                                       const std::vector<double>& x0_hat,
                                       const NoiseSchedule& sched, int t,
                                       const std::vector<double>& noise,
                                       const std::vector<double>& guidance_disp) {
    if (x0_hat.size() != x_t.size() || noise.size() != x_t.size() ||
        guidance_disp.size() != x_t.size())
        throw DomainError("reverse_coord_step: shape mismatch");
    const auto c = sched.posterior_coeffs(t);
    const double sigma = std::sqrt(c.beta_tilde);
    std::vector<double> out(x_t.size());
    for (std::size_t i = 0; i < x_t.size(); ++i)
        out[i] = c.c0 * x0_hat[i] + c.ct * x_t[i] - guidance_disp[i] + sigma * noise[i];
    return out;
}

std::vector<double> decode_types(const std::vector<double>& prob, int n_types, TypeDecode mode,
                                 NoiseSource* noise) {
    const auto n = prob.size() / n_types;
    std::vector<double> v(prob.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = &prob[i * n_types];
        int pick = 0;
        if (mode == TypeDecode::argmax) {
            for (int k = 1; k < n_types; ++k)
                if (row[k] > row[pick]) pick = k;
        } else {
            if (!noise) throw DomainError("decode_types: stochastic mode needs a noise source");
            double u = noise->uniform();
            pick = n_types - 1;
            for (int k = 0; k < n_types; ++k) {
                u -= row[k];
                if (u <= 0.0) {
                    pick = k;
                    break;
                }
            }
        }
        v[i * n_types + pick] = 1.0;
    }
    return v;
}

DiffusionState init_state(int n_atoms, int n_types, const NoiseSchedule& sched,
                          NoiseSource& noise) {
    if (n_atoms < 1) throw DomainError("init_state: need at least one atom");
    DiffusionState s;
    s.n_atoms = n_atoms;
    s.n_types = n_types;
    s.t = sched.steps();
    s.x = noise.normal3(static_cast<std::size_t>(n_atoms));
    s.v.assign(static_cast<std::size_t>(n_atoms) * n_types, 0.0);
    for (int i = 0; i < n_atoms; ++i) {
        int best = 0;
        double best_val = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < n_types; ++k) {
            const double g = noise.gumbel();
            if (g > best_val) {
                best_val = g;
                best = k;
            }
        }
        s.v[static_cast<std::size_t>(i) * n_types + best] = 1.0;
    }
    return s;
}

}  // namespace ligdiff
