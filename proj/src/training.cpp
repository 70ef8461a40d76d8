#include "ligdiff/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "ligdiff/diffusion.hpp"
#include "ligdiff/errors.hpp"
#include "ligdiff/guidance.hpp"

namespace ligdiff {

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw DomainError("train: lr must be > 0");
    if (p_unconditional < 0.0 || p_unconditional > 1.0)
        throw DomainError("train: p_unconditional must be in [0,1]");
    if (epochs < 1) throw DomainError("train: epochs must be >= 1");
    if (batch_size < 1) throw DomainError("train: batch_size must be >= 1");
    if (val_fraction < 0.0 || val_fraction >= 1.0)
        throw DomainError("train: val_fraction must be in [0,1)");
}

void Adam::step(std::vector<double>& params, const std::vector<double>& grad,
                const TrainConfig& cfg, double lr) {
    ++step_count;
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double bc1 = 1.0 - std::pow(b1, step_count);
    const double bc2 = 1.0 - std::pow(b2, step_count);
    for (std::size_t i = 0; i < params.size(); ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
        v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
        if (lr == 0.0) continue;  // keep parameters bitwise intact (no -0.0 flips)
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        params[i] -= lr * (mhat / (std::sqrt(vhat) + 1e-8) + cfg.weight_decay * params[i]);
    }
}

double PlateauScheduler::observe(double val_loss) {
    if (val_loss < best_) {
        best_ = val_loss;
        since_improve_ = 0;
    } else {
        ++since_improve_;
        if (since_improve_ >= patience_) {
            lr_ = std::max(lr_min_, lr_ * factor_);
            since_improve_ = 0;
        }
    }
    return lr_;
}

double classifier_loss(double pred, double truth_deltaG) {
    if (truth_deltaG > 0.0) return 0.0;  // invalid binding label: masked out
    const double r = pred - truth_deltaG;
    return r * r;
}

bool is_validation_index(std::size_t index, double val_fraction) {
    std::uint64_t z = index + 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return static_cast<double>(z % 100000) < val_fraction * 100000.0;
}

std::string log_to_csv(const std::vector<LogRow>& log) {
    std::string out = "epoch,split,loss,lr\n";
    char row[128];
    for (const auto& r : log) {
        std::snprintf(row, sizeof(row), "%d,%s,%.10g,%.10g\n", r.epoch, r.split.c_str(), r.loss,
                      r.lr);
        out += row;
    }
    return out;
}

namespace {

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.below(i))]);
}

struct RegressionTargets {
    double y[3];
    bool masked;
};

RegressionTargets regression_targets(const ComplexRecord& rec, int out_dim) {
    RegressionTargets t{};
    t.masked = rec.labels.delta_g > 0.0;
    if (out_dim == 1) {
        t.y[0] = rec.labels.delta_g;
    } else {
        t.y[0] = rec.labels.delta_g * kAffinityRescale;
        t.y[1] = rec.labels.qed;
        t.y[2] = rec.labels.sa;
    }
    return t;
}

MoleculeCloud perturb_for_classifier(const ComplexRecord& rec, const NoiseSchedule& sched,
                                     Rng& rng) {
    MoleculeCloud lig = rec.ligand;
    const int t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(sched.steps())));
    std::vector<double> eps(lig.x.size());
    for (auto& e : eps) e = rng.normal();
    lig.x = perturb_coords(lig.x, sched, t, eps);
    std::vector<double> gum(lig.v.size());
    for (auto& g : gum) g = rng.gumbel();
    lig.v = perturb_types(lig.v, lig.n_types, sched, t, gum);
    return lig;
}

// returns the example loss; accumulates parameter gradients when grad != nullptr
double classifier_example(const Egnn& net, const ParameterSet& params, const ComplexRecord& rec,
                          const TrainConfig& cfg, const NoiseSchedule* sched, Rng& rng,
                          ParameterSet* grad) {
    const auto tgt = regression_targets(rec, net.config().out_dim);
    if (tgt.masked) return 0.0;  // contributes exactly zero loss and gradient

    MoleculeCloud lig = cfg.classifier_noise_mode == ClassifierNoiseMode::noisy_xt
                            ? perturb_for_classifier(rec, *sched, rng)
                            : rec.ligand;
    PocketCloud pocket = rec.pocket;
    center_complex(pocket, lig);

    TapeHandle tape;
    const auto y = net.regressor_forward(params, pocket, lig, tape.get());
    double loss = 0.0;
    std::vector<double> d_y(y.size(), 0.0);
    for (std::size_t k = 0; k < y.size(); ++k) {
        const double r = y[k] - tgt.y[k];
        if (cfg.regression_loss == RegressionLoss::mse) {
            loss += r * r;
            d_y[k] = 2.0 * r;
        } else {
            loss += std::abs(r);
            d_y[k] = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
        }
    }
    if (grad) {
        std::vector<double> d_coords;
        net.regressor_backward(params, *tape.get(), d_y, d_coords, grad);
    }
    return loss;
}

double diffusion_example(const Egnn& net, const ParameterSet& params, const ComplexRecord& rec,
                         const NoiseSchedule& sched, Rng& rng, double kl_weight,
                         ConditionMode condition_mode, double p_unconditional,
                         ParameterSet* grad) {
    MoleculeCloud lig = rec.ligand;
    PocketCloud pocket = rec.pocket;
    center_complex(pocket, lig);
    const int K = lig.n_types;
    const int T = sched.steps();
    const int t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(T)));

    std::vector<double> eps(lig.x.size());
    for (auto& e : eps) e = rng.normal();
    const auto x_t = perturb_coords(lig.x, sched, t, eps);
    std::vector<double> gum(lig.v.size());
    for (auto& g : gum) g = rng.gumbel();
    const auto v_t = perturb_types(lig.v, K, sched, t, gum);

    std::optional<CondInput> cond;
    if (condition_mode == ConditionMode::cfg) {
        CondInput c;
        if (rng.uniform() < p_unconditional) {
            c.present = false;  // null token
        } else {
            c.present = true;
            c.g_norm = rec.labels.delta_g * kAffinityRescale;
        }
        cond = c;
    }

    TapeHandle tape;
    const auto out = net.score_forward(params, x_t, v_t, t, T, pocket, cond,
                                       grad ? tape.get() : nullptr);
    const auto v0_hat = softmax_rows(out.v0_logits, K);

    double loss = 0.0;
    std::vector<double> d_x0(out.x0_hat.size());
    for (std::size_t i = 0; i < out.x0_hat.size(); ++i) {
        const double r = lig.x[i] - out.x0_hat[i];
        loss += r * r;
        d_x0[i] = -2.0 * r;
    }

    // categorical KL between the true and predicted reverse-type posteriors
    const double a = sched.alpha(t);
    const double abar_prev = sched.alpha_bar(t - 1);
    const double off_t = (1.0 - a) / K;
    const double off_0 = (1.0 - abar_prev) / K;
    const auto p_true = categorical_posterior(v_t, lig.v, K, sched, t);
    std::vector<double> d_logits(out.v0_logits.size(), 0.0);
    std::vector<double> d_v0h(K, 0.0);
    for (int i = 0; i < lig.n_atoms; ++i) {
        const double* vt = &v_t[static_cast<std::size_t>(i) * K];
        const double* v0h = &v0_hat[static_cast<std::size_t>(i) * K];
        const double* p = &p_true[static_cast<std::size_t>(i) * K];
        double S = 0.0;
        for (int k = 0; k < K; ++k) S += (a * vt[k] + off_t) * (abar_prev * v0h[k] + off_0);
        double kl = 0.0;
        for (int k = 0; k < K; ++k) {
            const double u = a * vt[k] + off_t;
            const double b = abar_prev * v0h[k] + off_0;
            const double q = u * b / S;
            if (p[k] > 0.0) kl += p[k] * std::log(p[k] / q);
            d_v0h[k] = kl_weight * abar_prev * (u / S - p[k] / b);
        }
        loss += kl_weight * kl;
        // softmax backward
        double dot = 0.0;
        for (int k = 0; k < K; ++k) dot += d_v0h[k] * v0h[k];
        for (int k = 0; k < K; ++k)
            d_logits[static_cast<std::size_t>(i) * K + k] = v0h[k] * (d_v0h[k] - dot);
    }

    if (grad) {
        std::vector<double> d_xt;
        net.score_backward(params, *tape.get(), d_x0, d_logits, d_xt, grad);
    }
    return loss;
}

// Shared epoch loop. Example evaluators receive the live parameter vector.
template <typename EvalLoss, typename EvalGrad>
TrainResult run_training(const std::vector<ComplexRecord>& dataset, const TrainConfig& cfg,
                         std::uint64_t seed, ParameterSet params, EvalLoss eval_loss,
                         EvalGrad eval_grad) {
    cfg.validate();
    if (dataset.empty()) throw DomainError("train: empty dataset");

    std::vector<std::size_t> train_idx, val_idx;
    for (std::size_t i = 0; i < dataset.size(); ++i)
        (is_validation_index(i, cfg.val_fraction) ? val_idx : train_idx).push_back(i);
    if (train_idx.empty()) train_idx = val_idx;

    Rng rng(seed);
    Adam adam(params.size());
    PlateauScheduler plateau(cfg.lr, cfg.plateau_factor, cfg.plateau_patience, cfg.lr_min);
    TrainResult result;
    double lr = cfg.lr;

    auto grad = params.zeros_like();
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_indices(train_idx, rng);
        double train_loss = 0.0;
        std::size_t pos = 0;
        while (pos < train_idx.size()) {
            const std::size_t end = std::min(pos + cfg.batch_size, train_idx.size());
            grad.fill(0.0);
            for (std::size_t b = pos; b < end; ++b)
                train_loss += eval_grad(params, dataset[train_idx[b]], rng, &grad);
            const double inv = 1.0 / static_cast<double>(end - pos);
            for (auto& g : grad.values()) g *= inv;
            adam.step(params.values(), grad.values(), cfg, lr);
            pos = end;
        }
        train_loss /= static_cast<double>(train_idx.size());
        if (!std::isfinite(train_loss)) throw NumericError("train: loss diverged");

        double val_loss = 0.0;
        if (!val_idx.empty()) {
            for (const auto i : val_idx) {
                Rng vr(Rng::mix(seed ^ 0x5555AAAA5555AAAAULL, i));
                val_loss += eval_loss(params, dataset[i], vr);
            }
            val_loss /= static_cast<double>(val_idx.size());
        } else {
            val_loss = train_loss;
        }
        if (!std::isfinite(val_loss)) throw NumericError("train: validation loss diverged");

        result.log.push_back({epoch, "train", train_loss, lr});
        result.log.push_back({epoch, "val", val_loss, lr});
        lr = plateau.observe(val_loss);
    }
    result.params = std::move(params);
    return result;
}

}  // namespace

TrainResult train_classifier(const std::vector<ComplexRecord>& dataset, const NetConfig& net_cfg,
                             const TrainConfig& train_cfg, std::uint64_t seed,
                             const NoiseSchedule* sched) {
    if (net_cfg.role != NetRole::regressor)
        throw DomainError("train_classifier: config must be a regressor");
    if (train_cfg.classifier_noise_mode == ClassifierNoiseMode::noisy_xt && !sched)
        throw DomainError("train_classifier: noisy_xt mode needs a schedule");
    Egnn net(net_cfg);
    return run_training(
        dataset, train_cfg, seed, net.init_params(seed),
        [&net, &train_cfg, sched](const ParameterSet& p, const ComplexRecord& rec, Rng& rng) {
            return classifier_example(net, p, rec, train_cfg, sched, rng, nullptr);
        },
        [&net, &train_cfg, sched](const ParameterSet& p, const ComplexRecord& rec, Rng& rng,
                                  ParameterSet* grad) {
            return classifier_example(net, p, rec, train_cfg, sched, rng, grad);
        });
}

double diffusion_loss(const std::vector<ComplexRecord>& batch, const Egnn& net,
                      const ParameterSet& params, const NoiseSchedule& sched, Rng& rng,
                      double kl_weight, ConditionMode condition_mode, double p_unconditional) {
    if (batch.empty()) throw DomainError("diffusion_loss: empty batch");
    double total = 0.0;
    for (const auto& rec : batch)
        total += diffusion_example(net, params, rec, sched, rng, kl_weight, condition_mode,
                                   p_unconditional, nullptr);
    return total / static_cast<double>(batch.size());
}

TrainResult train_diffusion(const std::vector<ComplexRecord>& dataset, const NetConfig& net_cfg,
                            const TrainConfig& train_cfg, const NoiseSchedule& sched,
                            std::uint64_t seed, ConditionMode condition_mode) {
    if (net_cfg.role != NetRole::denoiser)
        throw DomainError("train_diffusion: config must be a denoiser");
    if (condition_mode == ConditionMode::cfg && net_cfg.cond_channels != 2)
        throw DomainError("train_diffusion: cfg conditioning needs cond_channels = 2");
    if (condition_mode == ConditionMode::off && net_cfg.cond_channels != 0)
        throw DomainError("train_diffusion: unconditional training needs cond_channels = 0");

    Egnn net(net_cfg);
    return run_training(
        dataset, train_cfg, seed, net.init_params(seed),
        [&net, &sched, &train_cfg, condition_mode](const ParameterSet& p,
                                                   const ComplexRecord& rec, Rng& rng) {
            return diffusion_example(net, p, rec, sched, rng, train_cfg.kl_weight,
                                     condition_mode, train_cfg.p_unconditional, nullptr);
        },
        [&net, &sched, &train_cfg, condition_mode](const ParameterSet& p,
                                                   const ComplexRecord& rec, Rng& rng,
                                                   ParameterSet* grad) {
            return diffusion_example(net, p, rec, sched, rng, train_cfg.kl_weight,
                                     condition_mode, train_cfg.p_unconditional, grad);
        });
}

}  // namespace ligdiff
