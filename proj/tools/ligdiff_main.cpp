#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ligdiff/commands.hpp"
#include "ligdiff/errors.hpp"

using namespace ligdiff;

namespace {

// precedence: flag > config file > built-in default
struct CommonOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
};

RunConfig resolve_config(const CommonOpts& opts) {
    RunConfig cfg =
        opts.config_path.empty() ? RunConfig::defaults() : RunConfig::from_file(opts.config_path);
    if (opts.seed) cfg.seed = *opts.seed;
    if (opts.threads) {
        cfg.threads = *opts.threads;
    } else if (const char* env = std::getenv("LIGDIFF_THREADS")) {
        cfg.threads = std::max(1, std::atoi(env));
    }
    return cfg;
}

void add_common(CLI::App* app, CommonOpts& opts) {
    app->add_option("--config", opts.config_path, "JSON run configuration");
    app->add_option("--seed", opts.seed, "override the config seed");
    app->add_option("--threads", opts.threads, "worker threads (or LIGDIFF_THREADS)");
}

void error_json(const char* kind, const std::string& what) {
    nlohmann::json j;
    j["error"] = kind;
    j["message"] = what;
    std::cerr << j.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"guided point-cloud ligand generation in protein pockets"};
    app.require_subcommand(1);

    CommonOpts gen_opts, tc_opts, td_opts, sm_opts, ev_opts;

    auto* gen = app.add_subcommand("gen", "generate a synthetic labeled dataset");
    std::string gen_out;
    add_common(gen, gen_opts);
    gen->add_option("--out", gen_out, "output dataset directory")->required();
    std::optional<int> gen_n;
    gen->add_option("--n", gen_n, "number of complexes (overrides config)");

    auto* tc = app.add_subcommand("train-classifier", "train the affinity regressor");
    std::string tc_data, tc_out;
    bool tc_multi = false;
    add_common(tc, tc_opts);
    tc->add_option("--dataset", tc_data, "dataset directory")->required();
    tc->add_option("--out", tc_out, "output checkpoint path")->required();
    tc->add_flag("--multi", tc_multi, "3-channel multi-constraint head");

    auto* td = app.add_subcommand("train-diffusion", "train the denoiser");
    std::string td_data, td_out;
    bool td_cfg_mode = false;
    add_common(td, td_opts);
    td->add_option("--dataset", td_data, "dataset directory")->required();
    td->add_option("--out", td_out, "output checkpoint path")->required();
    td->add_flag("--cfg-mode", td_cfg_mode, "train with affinity conditioning and dropout");

    auto* sm = app.add_subcommand("sample", "run guided reverse diffusion");
    SampleArgs sm_args;
    std::string sm_mode, sm_from_manifest;
    std::optional<double> sm_s, sm_target, sm_clip;
    std::optional<int> sm_stop, sm_nper;
    std::string sm_type_sampling;
    add_common(sm, sm_opts);
    sm->add_option("--denoiser", sm_args.denoiser_ckpt, "denoiser checkpoint");
    sm->add_option("--classifier", sm_args.classifier_ckpt, "classifier checkpoint");
    sm->add_option("--pockets", sm_args.pocket_files, "pocket xyz files");
    sm->add_option("--prior", sm_args.prior_path, "atom-count prior json");
    sm->add_option("--out", sm_args.out_dir, "output directory");
    sm->add_option("--mode", sm_mode, "none | classifier | cfg | multi");
    sm->add_option("--s", sm_s, "guidance scale");
    sm->add_option("--target", sm_target, "target deltaG (kcal/mol)");
    sm->add_option("--clip", sm_clip, "displacement clip bound");
    sm->add_option("--stop-at-step", sm_stop, "halt the chain at this step index");
    sm->add_option("--n-per-pocket", sm_nper, "samples per pocket");
    sm->add_option("--type-sampling", sm_type_sampling, "argmax | stochastic");
    sm->add_option("--from-manifest", sm_from_manifest, "re-run a previous sample manifest");

    auto* ev = app.add_subcommand("eval", "score a sampled set and compare to a reference");
    std::string ev_sampled, ev_ref, ev_out;
    add_common(ev, ev_opts);
    ev->add_option("--sampled", ev_sampled, "sample output directory")->required();
    ev->add_option("--reference", ev_ref, "reference dataset or sample directory")->required();
    ev->add_option("--out", ev_out, "report directory")->required();

    auto* st = app.add_subcommand("selftest", "run the analytic identity battery");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            auto cfg = resolve_config(gen_opts);
            if (gen_n) cfg.gen_n_complexes = *gen_n;
            cmd_gen(cfg, gen_out);
        } else if (tc->parsed()) {
            cmd_train_classifier(resolve_config(tc_opts), tc_data, tc_out, tc_multi);
        } else if (td->parsed()) {
            cmd_train_diffusion(resolve_config(td_opts), td_data, td_out, td_cfg_mode);
        } else if (sm->parsed()) {
            if (!sm_from_manifest.empty()) {
                if (sm_args.out_dir.empty())
                    throw ConfigError("sample: --out is required with --from-manifest");
                cmd_sample_from_manifest(sm_from_manifest, sm_args.out_dir);
            } else {
                auto cfg = resolve_config(sm_opts);
                if (!sm_mode.empty()) {
                    if (sm_mode == "none")
                        cfg.guidance.mode = GuidanceMode::none;
                    else if (sm_mode == "classifier")
                        cfg.guidance.mode = GuidanceMode::classifier;
                    else if (sm_mode == "cfg")
                        cfg.guidance.mode = GuidanceMode::classifier_free;
                    else if (sm_mode == "multi")
                        cfg.guidance.mode = GuidanceMode::multi_constraint;
                    else
                        throw ConfigError("sample: bad --mode: " + sm_mode);
                }
                if (sm_s) cfg.guidance.s = *sm_s;
                if (sm_target) cfg.guidance.target_deltaG = *sm_target;
                if (sm_clip) cfg.guidance.clip = *sm_clip;
                if (sm_stop) cfg.guidance.stop_at_step = *sm_stop;
                if (sm_nper) cfg.n_per_pocket = *sm_nper;
                if (!sm_type_sampling.empty()) {
                    if (sm_type_sampling == "argmax")
                        cfg.guidance.type_decode = TypeDecode::argmax;
                    else if (sm_type_sampling == "stochastic")
                        cfg.guidance.type_decode = TypeDecode::stochastic;
                    else
                        throw ConfigError("sample: bad --type-sampling: " + sm_type_sampling);
                }
                if (sm_args.denoiser_ckpt.empty())
                    throw ConfigError("sample: --denoiser is required");
                if (sm_args.out_dir.empty()) throw ConfigError("sample: --out is required");
                cmd_sample(cfg, sm_args);
            }
        } else if (ev->parsed()) {
            cmd_eval(resolve_config(ev_opts), ev_sampled, ev_ref, ev_out);
        } else if (st->parsed()) {
            return cmd_selftest();
        }
    } catch (const ConfigError& e) {
        error_json("config", e.what());
        return 2;
    } catch (const IoError& e) {
        error_json("io", e.what());
        return 3;
    } catch (const NumericError& e) {
        error_json("numeric", e.what());
        return 4;
    } catch (const DomainError& e) {
        error_json("config", e.what());
        return 2;
    } catch (const std::exception& e) {
        error_json("internal", e.what());
        return 1;
    }
    return 0;
}
