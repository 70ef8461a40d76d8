#include "ligdiff/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ligdiff/errors.hpp"

namespace ligdiff {

void GuidanceConfig::validate() const {
    if (s < 0.0) throw DomainError("guidance: scale must be >= 0");
    if (!(clip > 0.0)) throw DomainError("guidance: clip bound must be positive");
    for (double w : weights_multi)
        if (w < 0.0) throw DomainError("guidance: multi-constraint weights must be >= 0");
    if (stop_at_step < 0) throw DomainError("guidance: stop_at_step must be >= 0");
}

EnergyEval energy_loss(double y, double c, LossKind kind) {
    const double r = y - c;
    if (kind == LossKind::gaussian) return {r * r, 2.0 * r};
    // subgradient 0 at the kink
    const double sign = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
    return {std::abs(r), sign};
}

MultiEval multi_loss(const double y[3], const double targets[3], const double weights[3],
                     LossKind kind) {
    MultiEval out{0.0, {0.0, 0.0, 0.0}};
    for (int k = 0; k < 3; ++k) {
        const auto e = energy_loss(y[k], targets[k], kind);
        out.value += weights[k] * e.value;
        out.grad[k] = weights[k] * e.dvalue_dy;
    }
    return out;
}

std::vector<double> clip_elementwise(std::vector<double> d, double clip) {
    for (auto& v : d) v = std::clamp(v, -clip, clip);
    return d;
}

std::vector<double> clip_rows_by_norm(std::vector<double> d, double clip) {
    for (std::size_t i = 0; i + 2 < d.size(); i += 3) {
        const double n = std::sqrt(d[i] * d[i] + d[i + 1] * d[i + 1] + d[i + 2] * d[i + 2]);
        if (n > clip) {
            const double f = clip / n;
            d[i] *= f;
            d[i + 1] *= f;
            d[i + 2] *= f;
        }
    }
    return d;
}

std::vector<double> cfg_combine(const std::vector<double>& x0_uncond,
                                const std::vector<double>& x0_cond, double s) {
    if (x0_uncond.size() != x0_cond.size()) throw DomainError("cfg_combine: shape mismatch");
    std::vector<double> out(x0_uncond.size());
    const double u = 1.0 - s;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = u * x0_uncond[i] + s * x0_cond[i];
    return out;
}

std::vector<double> softmax_rows(const std::vector<double>& logits, int n_types) {
    std::vector<double> out(logits.size());
    const auto n = logits.size() / n_types;
    for (std::size_t i = 0; i < n; ++i) {
        const double* z = &logits[i * n_types];
        double zmax = z[0];
        for (int k = 1; k < n_types; ++k) zmax = std::max(zmax, z[k]);
        double sum = 0.0;
        for (int k = 0; k < n_types; ++k) {
            const double e = std::exp(z[k] - zmax);
            out[i * n_types + k] = e;
            sum += e;
        }
        for (int k = 0; k < n_types; ++k) out[i * n_types + k] /= sum;
    }
    return out;
}

namespace {

MoleculeCloud classifier_input(const DiffusionState& state, const std::vector<double>& x0_hat,
                               const std::vector<double>& v0_hat, const GuidanceConfig& cfg) {
    MoleculeCloud m;
    m.n_atoms = state.n_atoms;
    m.n_types = state.n_types;
    if (cfg.classify_on == ClassifyOn::x_t) {
        m.x = state.x;
        m.v = state.v;
        return m;
    }
    m.x = x0_hat;
    if (cfg.classifier_simplex_types) {
        m.v = v0_hat;
    } else {
        // regressors train on one-hot rows; decode by argmax
        m.v.assign(v0_hat.size(), 0.0);
        for (int i = 0; i < m.n_atoms; ++i) {
            const double* row = &v0_hat[static_cast<std::size_t>(i) * m.n_types];
            int best = 0;
            for (int k = 1; k < m.n_types; ++k)
                if (row[k] > row[best]) best = k;
            m.v[static_cast<std::size_t>(i) * m.n_types + best] = 1.0;
        }
    }
    return m;
}

}  // namespace

std::vector<double> guidance_displacement(const Egnn& classifier,
                                          const ParameterSet& classifier_params,
                                          const PocketCloud& pocket, const DiffusionState& state,
                                          const std::vector<double>& x0_hat,
                                          const std::vector<double>& v0_hat,
                                          const NoiseSchedule& sched, int t,
                                          const GuidanceConfig& cfg,
                                          const DenoiserChain* chain) {
    if (cfg.mode != GuidanceMode::classifier && cfg.mode != GuidanceMode::multi_constraint)
        throw DomainError("guidance_displacement: wrong guidance mode");

    const auto input = classifier_input(state, x0_hat, v0_hat, cfg);

    TapeHandle tape;
    const auto y = classifier.regressor_forward(classifier_params, pocket, input, tape.get());

    std::vector<double> d_y;
    if (cfg.mode == GuidanceMode::classifier) {
        if (y.size() != 1) throw DomainError("guidance: affinity classifier must output 1 value");
        d_y = {energy_loss(y[0], cfg.target_deltaG, cfg.loss_kind).dvalue_dy};
    } else {
        if (y.size() != 3) throw DomainError("guidance: multi-constraint head must output 3");
        double targets[3] = {cfg.targets_multi[0] * kAffinityRescale, cfg.targets_multi[1],
                             cfg.targets_multi[2]};
        const auto me = multi_loss(y.data(), targets, cfg.weights_multi, cfg.loss_kind);
        d_y = {me.grad[0], me.grad[1], me.grad[2]};
    }

    std::vector<double> grad;
    classifier.regressor_backward(classifier_params, *tape.get(), d_y, grad);

    if (cfg.grad_path == GradPath::full_chain && cfg.classify_on == ClassifyOn::x0_hat) {
        if (!chain || !chain->net || !chain->tape)
            throw DomainError("guidance: full_chain path needs the denoiser tape");
        std::vector<double> zero_logits(v0_hat.size(), 0.0);
        std::vector<double> chained;
        chain->net->score_backward(*chain->params, *chain->tape, grad, zero_logits, chained);
        grad = std::move(chained);
    }

    const double factor = sched.beta(t) / std::sqrt(sched.alpha(t)) * cfg.s;
    for (auto& g : grad) {
        g *= factor;
        if (!std::isfinite(g))
            throw NumericError("guidance: non-finite displacement at step " + std::to_string(t));
    }
    return cfg.clip_mode == ClipMode::elementwise ? clip_elementwise(std::move(grad), cfg.clip)
                                                  : clip_rows_by_norm(std::move(grad), cfg.clip);
}

MoleculeCloud sample_guided(const SamplerInputs& nets, const PocketCloud& pocket, int n_atoms,
                            const NoiseSchedule& sched, const GuidanceConfig& cfg,
                            NoiseSource& noise) {
    cfg.validate();
    if (!nets.denoiser || !nets.denoiser_params) throw DomainError("sample_guided: no denoiser");
    const bool needs_classifier =
        cfg.mode == GuidanceMode::classifier || cfg.mode == GuidanceMode::multi_constraint;
    if (needs_classifier && (!nets.classifier || !nets.classifier_params))
        throw DomainError("sample_guided: this guidance mode requires a classifier");
    const bool is_cfg = cfg.mode == GuidanceMode::classifier_free;
    if (is_cfg && nets.denoiser->config().cond_channels != 2)
        throw DomainError("sample_guided: classifier-free mode needs a conditional denoiser");
    if (!is_cfg && nets.denoiser->config().cond_channels != 0)
        throw DomainError("sample_guided: unconditional modes need cond_channels = 0");
    if (n_atoms < 1) throw DomainError("sample_guided: need at least one atom");
    if (cfg.stop_at_step >= sched.steps())
        throw DomainError("sample_guided: stop_at_step beyond schedule start");

    const int K = nets.denoiser->config().n_types;
    PocketCloud centered = pocket;
    MoleculeCloud dummy = MoleculeCloud::zeros(1, K);
    const auto offset = center_complex(centered, dummy);

    const int T = sched.steps();
    auto state = init_state(n_atoms, K, sched, noise);

    const CondInput cond_present{cfg.target_deltaG * kAffinityRescale, true};
    const CondInput cond_absent{0.0, false};

    const bool full_chain = cfg.grad_path == GradPath::full_chain && needs_classifier &&
                            cfg.classify_on == ClassifyOn::x0_hat;
    TapeHandle tape;

    for (int t = T; t > cfg.stop_at_step; --t) {
        std::vector<double> x0_hat, v0_logits;
        if (is_cfg) {
            const auto cond_out = nets.denoiser->score_forward(*nets.denoiser_params, state.x,
                                                               state.v, t, T, centered,
                                                               cond_present);
            if (cfg.cfg_eval == CfgEval::conditional) {
                x0_hat = cond_out.x0_hat;
                v0_logits = cond_out.v0_logits;
            } else {
                const auto uncond_out = nets.denoiser->score_forward(
                    *nets.denoiser_params, state.x, state.v, t, T, centered, cond_absent);
                if (cfg.cfg_eval == CfgEval::unconditional) {
                    x0_hat = uncond_out.x0_hat;
                    v0_logits = uncond_out.v0_logits;
                } else {
                    x0_hat = cfg_combine(uncond_out.x0_hat, cond_out.x0_hat, cfg.s);
                    v0_logits = cfg_combine(uncond_out.v0_logits, cond_out.v0_logits, cfg.s);
                }
            }
        } else {
            const auto out = nets.denoiser->score_forward(*nets.denoiser_params, state.x,
                                                          state.v, t, T, centered, std::nullopt,
                                                          full_chain ? tape.get() : nullptr);
            x0_hat = out.x0_hat;
            v0_logits = out.v0_logits;
        }
        const auto v0_hat = softmax_rows(v0_logits, K);

        std::vector<double> disp(state.x.size(), 0.0);
        if (needs_classifier) {
            DenoiserChain chain{nets.denoiser, nets.denoiser_params, tape.get()};
            disp = guidance_displacement(*nets.classifier, *nets.classifier_params, centered,
                                         state, x0_hat, v0_hat, sched, t, cfg,
                                         full_chain ? &chain : nullptr);
        }

        const auto eps = noise.normal3(static_cast<std::size_t>(n_atoms));
        const auto x_prev = reverse_coord_step(state.x, x0_hat, sched, t, eps, disp);

        if (cfg.debug_checks) {
            const std::vector<double> zero(disp.size(), 0.0);
            const auto mean_guided = reverse_coord_step(state.x, x0_hat, sched, t, zero, disp);
            const auto mean_unguided = reverse_coord_step(state.x, x0_hat, sched, t, zero, zero);
            for (std::size_t i = 0; i < mean_guided.size(); ++i)
                if (mean_unguided[i] - disp[i] != mean_guided[i])
                    throw NumericError("sample_guided: guided-mean identity violated");
        }

        const auto prob = categorical_posterior(state.v, v0_hat, K, sched, t);
        state.v = decode_types(prob, K, cfg.type_decode, &noise);
        state.x = x_prev;
        state.t = t - 1;

        for (double c : state.x)
            if (!std::isfinite(c))
                throw NumericError("sample_guided: non-finite coordinates at step " +
                                   std::to_string(t));
    }

    MoleculeCloud out;
    out.n_atoms = n_atoms;
    out.n_types = K;
    out.x = state.x;
    out.v = state.v;
    for (int i = 0; i < n_atoms; ++i)
        for (int a = 0; a < 3; ++a) out.x[3 * static_cast<std::size_t>(i) + a] += offset[a];
    return out;
}

}  // namespace ligdiff
