#include "ligdiff/config.hpp"

#include <cmath>
#include <set>

#include <json.hpp>

#include "ligdiff/errors.hpp"
#include "ligdiff/xyz_io.hpp"

namespace ligdiff {

using nlohmann::json;

namespace {

void expect_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

double read_clip(const json& j, double fallback) {
    if (!j.contains("clip")) return fallback;
    const auto& v = j.at("clip");
    if (v.is_string()) {
        if (v.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
        throw ConfigError("config: clip must be a positive number or \"inf\"");
    }
    return v.get<double>();
}

json clip_to_json(double clip) {
    if (std::isinf(clip)) return json("inf");
    return json(clip);
}

void parse_net(const json& j, const std::string& where, NetConfig& c) {
    expect_keys(j, where,
                {"layers", "hidden_dim", "k_nn", "heads", "cond_channels", "out_dim", "rbf_bins",
                 "rbf_max", "cond_null", "cond_sentinel"});
    get_if(j, "layers", c.layers);
    get_if(j, "hidden_dim", c.hidden_dim);
    get_if(j, "k_nn", c.k_nn);
    get_if(j, "heads", c.heads);
    get_if(j, "cond_channels", c.cond_channels);
    get_if(j, "out_dim", c.out_dim);
    get_if(j, "rbf_bins", c.rbf_bins);
    get_if(j, "rbf_max", c.rbf_max);
    if (j.contains("cond_null")) {
        const auto s = j.at("cond_null").get<std::string>();
        if (s == "mask")
            c.cond_null = CondNullMode::mask;
        else if (s == "sentinel")
            c.cond_null = CondNullMode::sentinel;
        else
            throw ConfigError("config: cond_null must be mask or sentinel");
    }
    get_if(j, "cond_sentinel", c.cond_sentinel);
}

json net_to_json(const NetConfig& c) {
    json j;
    j["layers"] = c.layers;
    j["hidden_dim"] = c.hidden_dim;
    j["k_nn"] = c.k_nn;
    j["heads"] = c.heads;
    j["cond_channels"] = c.cond_channels;
    j["out_dim"] = c.out_dim;
    j["rbf_bins"] = c.rbf_bins;
    j["rbf_max"] = c.rbf_max;
    j["cond_null"] = c.cond_null == CondNullMode::mask ? "mask" : "sentinel";
    j["cond_sentinel"] = c.cond_sentinel;
    return j;
}

template <typename Enum>
Enum parse_enum(const json& j, const char* key, Enum fallback,
                const std::vector<std::pair<std::string, Enum>>& table) {
    if (!j.contains(key)) return fallback;
    const auto s = j.at(key).get<std::string>();
    for (const auto& [name, value] : table)
        if (name == s) return value;
    throw ConfigError(std::string("config: bad value for ") + key + ": " + s);
}

template <typename Enum>
std::string enum_name(Enum v, const std::vector<std::pair<std::string, Enum>>& table) {
    for (const auto& [name, value] : table)
        if (value == v) return name;
    return "?";
}

const std::vector<std::pair<std::string, GuidanceMode>> kModes = {
    {"none", GuidanceMode::none},
    {"classifier", GuidanceMode::classifier},
    {"classifier_free", GuidanceMode::classifier_free},
    {"multi_constraint", GuidanceMode::multi_constraint}};
const std::vector<std::pair<std::string, LossKind>> kLossKinds = {
    {"gaussian", LossKind::gaussian}, {"exponential", LossKind::exponential}};
const std::vector<std::pair<std::string, GradPath>> kGradPaths = {
    {"approx_identity", GradPath::approx_identity}, {"full_chain", GradPath::full_chain}};
const std::vector<std::pair<std::string, ClassifyOn>> kClassifyOn = {
    {"x0_hat", ClassifyOn::x0_hat}, {"x_t", ClassifyOn::x_t}};
const std::vector<std::pair<std::string, TypeDecode>> kTypeDecode = {
    {"argmax", TypeDecode::argmax}, {"stochastic", TypeDecode::stochastic}};
const std::vector<std::pair<std::string, ClipMode>> kClipModes = {
    {"elementwise", ClipMode::elementwise}, {"norm", ClipMode::norm}};
const std::vector<std::pair<std::string, CfgEval>> kCfgEval = {
    {"paired", CfgEval::paired},
    {"conditional", CfgEval::conditional},
    {"unconditional", CfgEval::unconditional}};
const std::vector<std::pair<std::string, ClassifierNoiseMode>> kNoiseModes = {
    {"clean_x0", ClassifierNoiseMode::clean_x0}, {"noisy_xt", ClassifierNoiseMode::noisy_xt}};
const std::vector<std::pair<std::string, RegressionLoss>> kRegLoss = {
    {"mse", RegressionLoss::mse}, {"mae", RegressionLoss::mae}};

}  // namespace

RunConfig RunConfig::defaults() {
    RunConfig c;
    c.denoiser.role = NetRole::denoiser;
    c.denoiser.layers = 4;
    c.denoiser.hidden_dim = 64;
    c.denoiser.k_nn = 8;
    c.classifier.role = NetRole::regressor;
    c.classifier.layers = 2;
    c.classifier.hidden_dim = 128;
    c.classifier.k_nn = 8;
    return c;
}

void RunConfig::validate() const {
    try {
        if (vocabulary.empty()) throw ConfigError("config: empty vocabulary");
        vocab();
        schedule.build();
        NetConfig d = denoiser;
        d.role = NetRole::denoiser;
        d.n_types = static_cast<int>(vocabulary.size());
        d.validate();
        NetConfig r = classifier;
        r.role = NetRole::regressor;
        r.n_types = static_cast<int>(vocabulary.size());
        r.validate();
        guidance.validate();
        training.validate();
        if (n_per_pocket < 1) throw ConfigError("config: n_per_pocket must be >= 1");
        if (threads < 1) throw ConfigError("config: threads must be >= 1");
        if (gen.pocket_atoms_min < 1 || gen.pocket_atoms_max < gen.pocket_atoms_min ||
            gen.ligand_atoms_min < 1 || gen.ligand_atoms_max < gen.ligand_atoms_min)
            throw ConfigError("config: bad generator atom ranges");
        if (!(oracle.cutoff > 0.0)) throw ConfigError("config: oracle cutoff must be positive");
    } catch (const DomainError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

RunConfig RunConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: JSON parse error: ") + e.what());
    }
    RunConfig c = defaults();
    expect_keys(j, "root",
                {"seed", "threads", "vocabulary", "schedule", "denoiser", "classifier",
                 "guidance", "training", "oracle", "gen", "n_per_pocket"});
    get_if(j, "seed", c.seed);
    get_if(j, "threads", c.threads);
    get_if(j, "vocabulary", c.vocabulary);
    get_if(j, "n_per_pocket", c.n_per_pocket);

    if (j.contains("schedule")) {
        const auto& s = j.at("schedule");
        expect_keys(s, "schedule", {"T", "beta_min", "beta_max", "steepness"});
        get_if(s, "T", c.schedule.T);
        get_if(s, "beta_min", c.schedule.beta_min);
        get_if(s, "beta_max", c.schedule.beta_max);
        get_if(s, "steepness", c.schedule.steepness);
    }
    if (j.contains("denoiser")) parse_net(j.at("denoiser"), "denoiser", c.denoiser);
    if (j.contains("classifier")) parse_net(j.at("classifier"), "classifier", c.classifier);

    if (j.contains("guidance")) {
        const auto& g = j.at("guidance");
        expect_keys(g, "guidance",
                    {"mode", "s", "target_deltaG", "targets_multi", "weights_multi", "clip",
                     "loss_kind", "grad_path", "classify_on", "stop_at_step", "type_decode",
                     "clip_mode", "classifier_simplex_types", "cfg_eval", "debug_checks"});
        c.guidance.mode = parse_enum(g, "mode", c.guidance.mode, kModes);
        get_if(g, "s", c.guidance.s);
        get_if(g, "target_deltaG", c.guidance.target_deltaG);
        if (g.contains("targets_multi")) {
            const auto& t = g.at("targets_multi");
            expect_keys(t, "targets_multi", {"deltaG", "qed", "sa"});
            get_if(t, "deltaG", c.guidance.targets_multi[0]);
            get_if(t, "qed", c.guidance.targets_multi[1]);
            get_if(t, "sa", c.guidance.targets_multi[2]);
        }
        if (g.contains("weights_multi")) {
            const auto& w = g.at("weights_multi");
            expect_keys(w, "weights_multi", {"affinity", "qed", "sa"});
            get_if(w, "affinity", c.guidance.weights_multi[0]);
            get_if(w, "qed", c.guidance.weights_multi[1]);
            get_if(w, "sa", c.guidance.weights_multi[2]);
        }
        c.guidance.clip = read_clip(g, c.guidance.clip);
        c.guidance.loss_kind = parse_enum(g, "loss_kind", c.guidance.loss_kind, kLossKinds);
        c.guidance.grad_path = parse_enum(g, "grad_path", c.guidance.grad_path, kGradPaths);
        c.guidance.classify_on = parse_enum(g, "classify_on", c.guidance.classify_on, kClassifyOn);
        get_if(g, "stop_at_step", c.guidance.stop_at_step);
        c.guidance.type_decode = parse_enum(g, "type_decode", c.guidance.type_decode, kTypeDecode);
        c.guidance.clip_mode = parse_enum(g, "clip_mode", c.guidance.clip_mode, kClipModes);
        get_if(g, "classifier_simplex_types", c.guidance.classifier_simplex_types);
        c.guidance.cfg_eval = parse_enum(g, "cfg_eval", c.guidance.cfg_eval, kCfgEval);
        get_if(g, "debug_checks", c.guidance.debug_checks);
    }

    if (j.contains("training")) {
        const auto& t = j.at("training");
        expect_keys(t, "training",
                    {"lr", "adam_beta1", "adam_beta2", "weight_decay", "plateau_factor",
                     "plateau_patience", "lr_min", "epochs", "batch_size", "p_unconditional",
                     "kl_weight", "classifier_noise_mode", "regression_loss", "val_fraction"});
        get_if(t, "lr", c.training.lr);
        get_if(t, "adam_beta1", c.training.adam_beta1);
        get_if(t, "adam_beta2", c.training.adam_beta2);
        get_if(t, "weight_decay", c.training.weight_decay);
        get_if(t, "plateau_factor", c.training.plateau_factor);
        get_if(t, "plateau_patience", c.training.plateau_patience);
        get_if(t, "lr_min", c.training.lr_min);
        get_if(t, "epochs", c.training.epochs);
        get_if(t, "batch_size", c.training.batch_size);
        get_if(t, "p_unconditional", c.training.p_unconditional);
        get_if(t, "kl_weight", c.training.kl_weight);
        c.training.classifier_noise_mode =
            parse_enum(t, "classifier_noise_mode", c.training.classifier_noise_mode, kNoiseModes);
        c.training.regression_loss =
            parse_enum(t, "regression_loss", c.training.regression_loss, kRegLoss);
        get_if(t, "val_fraction", c.training.val_fraction);
    }

    if (j.contains("oracle")) {
        const auto& o = j.at("oracle");
        expect_keys(o, "oracle",
                    {"w_gauss1", "w_gauss2", "w_repulsion", "cutoff", "taper_width", "scale"});
        get_if(o, "w_gauss1", c.oracle.w_gauss1);
        get_if(o, "w_gauss2", c.oracle.w_gauss2);
        get_if(o, "w_repulsion", c.oracle.w_repulsion);
        get_if(o, "cutoff", c.oracle.cutoff);
        get_if(o, "taper_width", c.oracle.taper_width);
        get_if(o, "scale", c.oracle.scale);
    }

    if (j.contains("gen")) {
        const auto& g = j.at("gen");
        expect_keys(g, "gen",
                    {"n_complexes", "pocket_atoms_min", "pocket_atoms_max", "ligand_atoms_min",
                     "ligand_atoms_max", "pocket_radius_min", "pocket_radius_max",
                     "clash_fraction", "relax_steps", "relax_step_size"});
        get_if(g, "pocket_atoms_min", c.gen.pocket_atoms_min);
        get_if(g, "pocket_atoms_max", c.gen.pocket_atoms_max);
        get_if(g, "ligand_atoms_min", c.gen.ligand_atoms_min);
        get_if(g, "ligand_atoms_max", c.gen.ligand_atoms_max);
        get_if(g, "pocket_radius_min", c.gen.pocket_radius_min);
        get_if(g, "pocket_radius_max", c.gen.pocket_radius_max);
        get_if(g, "clash_fraction", c.gen.clash_fraction);
        get_if(g, "relax_steps", c.gen.relax_steps);
        get_if(g, "relax_step_size", c.gen.relax_step_size);
        get_if(g, "n_complexes", c.gen_n_complexes);
    }

    c.validate();
    return c;
}

std::string RunConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["threads"] = threads;
    j["vocabulary"] = vocabulary;
    j["n_per_pocket"] = n_per_pocket;
    j["schedule"] = {{"T", schedule.T},
                     {"beta_min", schedule.beta_min},
                     {"beta_max", schedule.beta_max},
                     {"steepness", schedule.steepness}};
    j["denoiser"] = net_to_json(denoiser);
    j["classifier"] = net_to_json(classifier);
    j["guidance"] = {{"mode", enum_name(guidance.mode, kModes)},
                     {"s", guidance.s},
                     {"target_deltaG", guidance.target_deltaG},
                     {"targets_multi",
                      {{"deltaG", guidance.targets_multi[0]},
                       {"qed", guidance.targets_multi[1]},
                       {"sa", guidance.targets_multi[2]}}},
                     {"weights_multi",
                      {{"affinity", guidance.weights_multi[0]},
                       {"qed", guidance.weights_multi[1]},
                       {"sa", guidance.weights_multi[2]}}},
                     {"clip", clip_to_json(guidance.clip)},
                     {"loss_kind", enum_name(guidance.loss_kind, kLossKinds)},
                     {"grad_path", enum_name(guidance.grad_path, kGradPaths)},
                     {"classify_on", enum_name(guidance.classify_on, kClassifyOn)},
                     {"stop_at_step", guidance.stop_at_step},
                     {"type_decode", enum_name(guidance.type_decode, kTypeDecode)},
                     {"clip_mode", enum_name(guidance.clip_mode, kClipModes)},
                     {"classifier_simplex_types", guidance.classifier_simplex_types},
                     {"cfg_eval", enum_name(guidance.cfg_eval, kCfgEval)},
                     {"debug_checks", guidance.debug_checks}};
    j["training"] = {{"lr", training.lr},
                     {"adam_beta1", training.adam_beta1},
                     {"adam_beta2", training.adam_beta2},
                     {"weight_decay", training.weight_decay},
                     {"plateau_factor", training.plateau_factor},
                     {"plateau_patience", training.plateau_patience},
                     {"lr_min", training.lr_min},
                     {"epochs", training.epochs},
                     {"batch_size", training.batch_size},
                     {"p_unconditional", training.p_unconditional},
                     {"kl_weight", training.kl_weight},
                     {"classifier_noise_mode",
                      enum_name(training.classifier_noise_mode, kNoiseModes)},
                     {"regression_loss", enum_name(training.regression_loss, kRegLoss)},
                     {"val_fraction", training.val_fraction}};
    j["oracle"] = {{"w_gauss1", oracle.w_gauss1},   {"w_gauss2", oracle.w_gauss2},
                   {"w_repulsion", oracle.w_repulsion}, {"cutoff", oracle.cutoff},
                   {"taper_width", oracle.taper_width}, {"scale", oracle.scale}};
    j["gen"] = {{"n_complexes", gen_n_complexes},
                {"pocket_atoms_min", gen.pocket_atoms_min},
                {"pocket_atoms_max", gen.pocket_atoms_max},
                {"ligand_atoms_min", gen.ligand_atoms_min},
                {"ligand_atoms_max", gen.ligand_atoms_max},
                {"pocket_radius_min", gen.pocket_radius_min},
                {"pocket_radius_max", gen.pocket_radius_max},
                {"clash_fraction", gen.clash_fraction},
                {"relax_steps", gen.relax_steps},
                {"relax_step_size", gen.relax_step_size}};
    return j.dump(2);
}

RunConfig RunConfig::from_file(const std::string& path) {
    return from_json_text(read_text_file(path));
}

}  // namespace ligdiff
