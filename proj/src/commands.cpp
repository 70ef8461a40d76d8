#include "ligdiff/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>

#include <json.hpp>

#include "ligdiff/derivation_checks.hpp"
#include "ligdiff/errors.hpp"
#include "ligdiff/metrics.hpp"
#include "ligdiff/threadpool.hpp"
#include "ligdiff/xyz_io.hpp"

namespace ligdiff {

using nlohmann::json;

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (const double x : v) s += x;
    return s / static_cast<double>(v.size());
}

json checkpoint_extra(const RunConfig& cfg) {
    json x;
    x["vocabulary"] = cfg.vocabulary;
    x["schedule"] = {{"T", cfg.schedule.T},
                     {"beta_min", cfg.schedule.beta_min},
                     {"beta_max", cfg.schedule.beta_max},
                     {"steepness", cfg.schedule.steepness}};
    return x;
}

void check_checkpoint_compat(const Checkpoint& ck, const RunConfig& cfg,
                             const std::string& what) {
    const auto extra = json::parse(ck.extra_json);
    if (extra.contains("vocabulary") &&
        extra.at("vocabulary").get<std::vector<std::string>>() != cfg.vocabulary)
        throw ConfigError("checkpoint mismatch: " + what + " was trained on a different vocabulary");
    if (ck.cfg.n_types != static_cast<int>(cfg.vocabulary.size()))
        throw ConfigError("checkpoint mismatch: " + what + " type count differs from config");
    if (extra.contains("schedule")) {
        const auto& s = extra.at("schedule");
        if (s.at("T").get<int>() != cfg.schedule.T ||
            s.at("beta_min").get<double>() != cfg.schedule.beta_min ||
            s.at("beta_max").get<double>() != cfg.schedule.beta_max ||
            s.at("steepness").get<double>() != cfg.schedule.steepness)
            throw ConfigError("checkpoint mismatch: " + what +
                              " was trained under a different schedule");
    }
}

struct ManifestRow {
    std::string pocket_file;
    std::string mol_file;
    std::string pocket_id;
    int chain = 0;
    std::uint64_t chain_seed = 0;
    int n_atoms = 0;
    double delta_g = 0.0, qed = 0.0, sa = 0.0;
    int clash = 0;
    bool valid = false;
};

json row_to_json(const ManifestRow& r, const GuidanceConfig& g) {
    json j;
    j["pocket"] = r.pocket_file;
    j["pocket_id"] = r.pocket_id;
    j["molecule"] = r.mol_file;
    j["chain"] = r.chain;
    j["chain_seed"] = r.chain_seed;
    j["n_atoms"] = r.n_atoms;
    j["mode"] = static_cast<int>(g.mode);
    j["s"] = g.s;
    j["target_deltaG"] = g.target_deltaG;
    j["deltaG"] = r.delta_g;
    j["qed"] = r.qed;
    j["sa"] = r.sa;
    j["clash"] = r.clash;
    j["valid"] = r.valid;
    return j;
}

}  // namespace

void cmd_gen(const RunConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    const auto vocab = cfg.vocab();
    const auto records =
        generate_dataset(cfg.seed, cfg.gen_n_complexes, cfg.gen, cfg.oracle, vocab);
    const auto prior = build_atom_count_prior(records, cfg.gen);
    write_dataset(out_dir, records, prior, vocab);

    int negative = 0;
    for (const auto& r : records)
        if (r.labels.delta_g < 0.0) ++negative;
    std::printf("gen: wrote %zu complexes to %s (%.1f%% with negative deltaG)\n", records.size(),
                out_dir.c_str(), 100.0 * negative / static_cast<double>(records.size()));
}

void cmd_train_classifier(const RunConfig& cfg, const std::string& dataset_dir,
                          const std::string& out_ckpt, bool multi_constraint) {
    cfg.validate();
    const auto vocab = cfg.vocab();
    const auto ds = load_dataset(dataset_dir, vocab);

    NetConfig net_cfg = cfg.classifier;
    net_cfg.role = NetRole::regressor;
    net_cfg.n_types = vocab.size();
    net_cfg.out_dim = multi_constraint ? 3 : 1;
    net_cfg.cond_channels = 0;
    net_cfg.validate();

    const auto sched = cfg.schedule.build();
    const auto result = train_classifier(ds.records, net_cfg, cfg.training, cfg.seed, &sched);

    auto extra = checkpoint_extra(cfg);
    extra["kind"] = multi_constraint ? "classifier_multi" : "classifier";
    save_checkpoint(out_ckpt, net_cfg, result.params, extra.dump());
    write_text_file(out_ckpt + ".log.csv", log_to_csv(result.log));
    std::printf("train-classifier: final val loss %.6g, checkpoint %s\n",
                result.log.empty() ? 0.0 : result.log.back().loss, out_ckpt.c_str());
}

void cmd_train_diffusion(const RunConfig& cfg, const std::string& dataset_dir,
                         const std::string& out_ckpt, bool cfg_mode) {
    cfg.validate();
    const auto vocab = cfg.vocab();
    const auto ds = load_dataset(dataset_dir, vocab);

    NetConfig net_cfg = cfg.denoiser;
    net_cfg.role = NetRole::denoiser;
    net_cfg.n_types = vocab.size();
    net_cfg.cond_channels = cfg_mode ? 2 : 0;
    net_cfg.validate();

    if (cfg_mode && cfg.training.p_unconditional == 0.0)
        std::cerr << "train-diffusion: warning: p_unconditional = 0 leaves the null-condition "
                     "path untrained\n";

    const auto sched = cfg.schedule.build();
    const auto result = train_diffusion(ds.records, net_cfg, cfg.training, sched, cfg.seed,
                                        cfg_mode ? ConditionMode::cfg : ConditionMode::off);

    auto extra = checkpoint_extra(cfg);
    extra["kind"] = cfg_mode ? "denoiser_cfg" : "denoiser";
    save_checkpoint(out_ckpt, net_cfg, result.params, extra.dump());
    write_text_file(out_ckpt + ".log.csv", log_to_csv(result.log));
    std::printf("train-diffusion: final val loss %.6g, checkpoint %s\n",
                result.log.empty() ? 0.0 : result.log.back().loss, out_ckpt.c_str());
}

void cmd_sample(const RunConfig& cfg, const SampleArgs& args) {
    cfg.validate();
    const auto vocab = cfg.vocab();
    const auto& g = cfg.guidance;
    const bool needs_classifier =
        g.mode == GuidanceMode::classifier || g.mode == GuidanceMode::multi_constraint;

    const auto den_ck = load_checkpoint(args.denoiser_ckpt);
    check_checkpoint_compat(den_ck, cfg, "denoiser");
    if (den_ck.cfg.role != NetRole::denoiser)
        throw ConfigError("checkpoint mismatch: not a denoiser: " + args.denoiser_ckpt);
    const bool want_cond = g.mode == GuidanceMode::classifier_free;
    if (want_cond != (den_ck.cfg.cond_channels == 2))
        throw ConfigError("checkpoint mismatch: denoiser conditioning does not fit the mode");
    Egnn denoiser(den_ck.cfg);

    std::optional<Checkpoint> cls_ck;
    std::optional<Egnn> classifier;
    if (needs_classifier) {
        if (args.classifier_ckpt.empty())
            throw ConfigError("sample: classifier checkpoint required for this mode");
        cls_ck = load_checkpoint(args.classifier_ckpt);
        check_checkpoint_compat(*cls_ck, cfg, "classifier");
        if (cls_ck->cfg.role != NetRole::regressor)
            throw ConfigError("checkpoint mismatch: not a regressor: " + args.classifier_ckpt);
        const int want_out = g.mode == GuidanceMode::multi_constraint ? 3 : 1;
        if (cls_ck->cfg.out_dim != want_out)
            throw ConfigError("checkpoint mismatch: classifier output width does not fit mode");
        classifier.emplace(cls_ck->cfg);
    }

    AtomCountPrior prior;
    if (!args.prior_path.empty()) {
        prior = AtomCountPrior::from_json(read_text_file(args.prior_path));
    } else {
        prior = AtomCountPrior(1.0, cfg.gen.ligand_atoms_min, cfg.gen.ligand_atoms_max);
        for (int n = cfg.gen.ligand_atoms_min; n <= cfg.gen.ligand_atoms_max; ++n)
            prior.add(0.0, n);  // uniform fallback when no dataset prior is supplied
    }

    if (args.pocket_files.empty()) throw ConfigError("sample: no pocket files given");
    const auto sched = cfg.schedule.build();

    namespace fs = std::filesystem;
    fs::create_directories(args.out_dir);

    struct ChainResult {
        MoleculeCloud mol;
        ManifestRow row;
    };
    const std::size_t total =
        args.pocket_files.size() * static_cast<std::size_t>(cfg.n_per_pocket);
    std::vector<ChainResult> results(total);

    std::vector<PocketCloud> pockets;
    std::vector<std::string> pocket_ids;
    for (const auto& pf : args.pocket_files) {
        const auto frame = parse_xyz(read_text_file(pf));
        pockets.push_back(frame_to_pocket(frame, vocab));
        auto id = frame.meta("id");
        if (id.empty()) id = fs::path(pf).stem().string();
        pocket_ids.push_back(id);
    }

    parallel_for(total, cfg.threads, [&](std::size_t gidx) {
        const auto p_idx = gidx / static_cast<std::size_t>(cfg.n_per_pocket);
        const int chain = static_cast<int>(gidx % static_cast<std::size_t>(cfg.n_per_pocket));
        const auto& pocket = pockets[p_idx];

        const std::uint64_t chain_seed = Rng::mix(cfg.seed, gidx);
        Rng rng(chain_seed);
        const int n_atoms = sample_atom_count(prior, pocket, rng);
        NoiseSource noise(rng);

        SamplerInputs nets;
        nets.denoiser = &denoiser;
        nets.denoiser_params = &den_ck.params;
        if (classifier) {
            nets.classifier = &*classifier;
            nets.classifier_params = &cls_ck->params;
        }
        auto mol = sample_guided(nets, pocket, n_atoms, sched, g, noise);

        ChainResult& out = results[gidx];
        out.row.pocket_file = args.pocket_files[p_idx];
        out.row.pocket_id = pocket_ids[p_idx];
        out.row.chain = chain;
        out.row.chain_seed = chain_seed;
        out.row.n_atoms = n_atoms;
        const auto aff = pseudo_affinity(pocket, mol, cfg.oracle, vocab);
        out.row.delta_g = aff.delta_g;
        out.row.qed = qed_proxy(mol, vocab);
        out.row.sa = sa_proxy(mol, vocab);
        out.row.clash = clash_score(pocket, mol, vocab);
        out.row.valid = validity(mol, vocab);
        out.mol = std::move(mol);
    });

    json header;
    header["type"] = "ligdiff-manifest";
    header["command"] = "sample";
    header["config"] = json::parse(cfg.to_json());
    header["args"] = {{"denoiser_ckpt", args.denoiser_ckpt},
                      {"classifier_ckpt", args.classifier_ckpt},
                      {"pocket_files", args.pocket_files},
                      {"prior_path", args.prior_path}};
    std::string manifest = header.dump() + "\n";

    for (std::size_t gidx = 0; gidx < total; ++gidx) {
        auto& r = results[gidx];
        char name[128];
        std::snprintf(name, sizeof(name), "mol_%s_%04d.xyz", r.row.pocket_id.c_str(),
                      r.row.chain);
        r.row.mol_file = name;
        const auto frame =
            to_frame(r.mol, vocab,
                     {{"id", r.row.pocket_id + "_" + std::to_string(r.row.chain)},
                      {"source", "sample"},
                      {"t", std::to_string(cfg.guidance.stop_at_step)}});
        write_text_file(args.out_dir + "/" + name, write_xyz(frame));
        manifest += row_to_json(r.row, g).dump();
        manifest += '\n';
    }
    write_text_file(args.out_dir + "/manifest.jsonl", manifest);
    std::printf("sample: wrote %zu molecules to %s\n", total, args.out_dir.c_str());
}

void cmd_sample_from_manifest(const std::string& manifest_path, const std::string& out_dir) {
    const auto text = read_text_file(manifest_path);
    const auto nl = text.find('\n');
    const auto header = json::parse(text.substr(0, nl));
    if (header.value("type", "") != "ligdiff-manifest")
        throw ConfigError("not a sample manifest: " + manifest_path);
    const auto cfg = RunConfig::from_json_text(header.at("config").dump());
    SampleArgs args;
    args.denoiser_ckpt = header.at("args").at("denoiser_ckpt").get<std::string>();
    args.classifier_ckpt = header.at("args").at("classifier_ckpt").get<std::string>();
    args.pocket_files = header.at("args").at("pocket_files").get<std::vector<std::string>>();
    args.prior_path = header.at("args").at("prior_path").get<std::string>();
    args.out_dir = out_dir;
    cmd_sample(cfg, args);
}

namespace {

struct EvalEntry {
    std::string id;
    std::string pocket_file;
    MoleculeCloud mol;
    double delta_g, qed, sa;
    int clash;
    bool valid;
};

std::vector<EvalEntry> load_sampled(const std::string& dir, const RunConfig& cfg,
                                    const Vocabulary& vocab) {
    const auto text = read_text_file(dir + "/manifest.jsonl");
    std::vector<EvalEntry> entries;
    std::size_t pos = 0;
    bool first = true;
    std::map<std::string, PocketCloud> pocket_cache;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        const auto line = text.substr(pos, end - pos);
        pos = end + 1;
        if (line.empty()) continue;
        const auto j = json::parse(line);
        if (first) {
            first = false;
            if (j.value("type", "") == "ligdiff-manifest") continue;
        }
        EvalEntry e;
        e.pocket_file = j.at("pocket").get<std::string>();
        e.id = j.at("pocket_id").get<std::string>() + "_" + std::to_string(j.at("chain").get<int>());
        e.mol = frame_to_molecule(
            parse_xyz(read_text_file(dir + "/" + j.at("molecule").get<std::string>())), vocab);
        if (!pocket_cache.count(e.pocket_file))
            pocket_cache[e.pocket_file] =
                frame_to_pocket(parse_xyz(read_text_file(e.pocket_file)), vocab);
        const auto& pocket = pocket_cache[e.pocket_file];
        e.delta_g = pseudo_affinity(pocket, e.mol, cfg.oracle, vocab).delta_g;
        e.qed = qed_proxy(e.mol, vocab);
        e.sa = sa_proxy(e.mol, vocab);
        e.clash = clash_score(pocket, e.mol, vocab);
        e.valid = validity(e.mol, vocab);
        entries.push_back(std::move(e));
    }
    return entries;
}

std::vector<MoleculeCloud> load_reference_molecules(const std::string& dir,
                                                    const Vocabulary& vocab) {
    namespace fs = std::filesystem;
    std::vector<MoleculeCloud> mols;
    if (fs::exists(dir + "/records.jsonl")) {
        const auto ds = load_dataset(dir, vocab);
        for (const auto& r : ds.records) mols.push_back(r.ligand);
        return mols;
    }
    if (fs::exists(dir + "/manifest.jsonl")) {
        const auto text = read_text_file(dir + "/manifest.jsonl");
        std::size_t pos = 0;
        bool first = true;
        while (pos < text.size()) {
            auto end = text.find('\n', pos);
            if (end == std::string::npos) end = text.size();
            const auto line = text.substr(pos, end - pos);
            pos = end + 1;
            if (line.empty()) continue;
            const auto j = json::parse(line);
            if (first) {
                first = false;
                if (j.value("type", "") == "ligdiff-manifest") continue;
            }
            mols.push_back(frame_to_molecule(
                parse_xyz(read_text_file(dir + "/" + j.at("molecule").get<std::string>())),
                vocab));
        }
        return mols;
    }
    throw IoError("eval: reference dir has neither records.jsonl nor manifest.jsonl: " + dir);
}

std::string histogram_to_csv(const Histogram& h) {
    std::string out = "bin_lo,bin_hi,count\n";
    char row[96];
    const auto n = h.counts.size();
    for (std::size_t b = 0; b < n; ++b) {
        std::snprintf(row, sizeof(row), "%.6f,%.6f,%.0f\n", h.lo + (h.hi - h.lo) * b / n,
                      h.lo + (h.hi - h.lo) * (b + 1) / n, h.counts[b]);
        out += row;
    }
    return out;
}

std::string histogram_csv(const std::vector<double>& values, double lo, double hi, int bins) {
    std::vector<int> counts(bins, 0);
    for (const double v : values) {
        if (v < lo || v >= hi) continue;
        const auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * bins);
        ++counts[std::min(b, static_cast<std::size_t>(bins - 1))];
    }
    std::string out = "bin_lo,bin_hi,count\n";
    char row[96];
    for (int b = 0; b < bins; ++b) {
        std::snprintf(row, sizeof(row), "%.6f,%.6f,%d\n", lo + (hi - lo) * b / bins,
                      lo + (hi - lo) * (b + 1) / bins, counts[b]);
        out += row;
    }
    return out;
}

}  // namespace

void cmd_eval(const RunConfig& cfg, const std::string& sampled_dir,
              const std::string& reference_dir, const std::string& out_dir) {
    cfg.validate();
    const auto vocab = cfg.vocab();
    const auto entries = load_sampled(sampled_dir, cfg, vocab);
    if (entries.empty()) throw IoError("eval: no sampled molecules found in " + sampled_dir);

    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    std::vector<double> affinities, qeds, sas, clashes;
    int n_valid = 0;
    for (const auto& e : entries) {
        affinities.push_back(e.delta_g);
        qeds.push_back(e.qed);
        sas.push_back(e.sa);
        clashes.push_back(e.clash);
        if (e.valid) ++n_valid;
    }

    // diversity over the whole sampled set
    double div = 0.0;
    if (entries.size() >= 2) {
        std::vector<FingerprintBits> fps;
        fps.reserve(entries.size());
        for (const auto& e : entries) fps.push_back(fingerprint(e.mol, vocab));
        div = diversity(fps);
    }

    // specificity: top 10 per pocket, 5 seeded off-target pockets
    std::map<std::string, std::vector<const EvalEntry*>> by_pocket;
    for (const auto& e : entries) by_pocket[e.pocket_file].push_back(&e);
    double specificity = 0.0;
    bool have_specificity = false;
    std::map<std::string, PocketCloud> pockets;
    for (const auto& [pf, list] : by_pocket) {
        (void)list;
        pockets[pf] = frame_to_pocket(parse_xyz(read_text_file(pf)), vocab);
    }
    if (pockets.size() >= 2) {
        std::vector<const PocketCloud*> all_pockets;
        for (const auto& [pf, p] : pockets) all_pockets.push_back(&p);
        Rng rng(cfg.seed ^ 0xA5A5A5A5ULL);
        std::vector<const PocketCloud*> off;
        const int n_off = static_cast<int>(std::min<std::size_t>(5, all_pockets.size()));
        for (int k = 0; k < n_off; ++k)
            off.push_back(all_pockets[static_cast<std::size_t>(rng.below(all_pockets.size()))]);

        std::vector<SpecificityInput> inputs;
        for (auto& [pf, list] : by_pocket) {
            auto sorted = list;
            std::sort(sorted.begin(), sorted.end(), [](const EvalEntry* a, const EvalEntry* b) {
                return a->delta_g < b->delta_g;
            });
            SpecificityInput in;
            in.on_pocket = &pockets[pf];
            for (std::size_t k = 0; k < std::min<std::size_t>(10, sorted.size()); ++k)
                in.top_ligands.push_back(&sorted[k]->mol);
            inputs.push_back(std::move(in));
        }
        const auto scorer = [&cfg, &vocab](const PocketCloud& p, const MoleculeCloud& m) {
            return pseudo_affinity(p, m, cfg.oracle, vocab).delta_g;
        };
        specificity = specificity_score(inputs, off, scorer);
        have_specificity = true;
    }

    // bond-geometry JSD against the reference set
    const auto reference = load_reference_molecules(reference_dir, vocab);
    std::vector<MoleculeCloud> sampled_mols;
    sampled_mols.reserve(entries.size());
    for (const auto& e : entries) sampled_mols.push_back(e.mol);

    json jsd_block;
    const std::vector<std::string> pair_patterns = {"C-C", "C-N", "C-O", "C=C"};
    const std::vector<std::string> triple_patterns = {"CCC", "CCN", "CCO"};
    for (const auto& pat : pair_patterns) {
        const auto f = parse_pair_filter(pat);
        const auto hs = bond_length_hist(sampled_mols, vocab, f);
        const auto hr = bond_length_hist(reference, vocab, f);
        if (hs.empty() || hr.empty()) continue;  // absent metric
        jsd_block[pat] = jsd(hs, hr);
        write_text_file(out_dir + "/hist_length_" + pat + "_sampled.csv", histogram_to_csv(hs));
        write_text_file(out_dir + "/hist_length_" + pat + "_reference.csv", histogram_to_csv(hr));
    }
    for (const auto& pat : triple_patterns) {
        const auto f = parse_triple_filter(pat);
        const auto hs = bond_angle_hist(sampled_mols, vocab, f);
        const auto hr = bond_angle_hist(reference, vocab, f);
        if (hs.empty() || hr.empty()) continue;
        jsd_block[pat] = jsd(hs, hr);
        write_text_file(out_dir + "/hist_angle_" + pat + "_sampled.csv", histogram_to_csv(hs));
        write_text_file(out_dir + "/hist_angle_" + pat + "_reference.csv", histogram_to_csv(hr));
    }

    json report;
    report["n_molecules"] = entries.size();
    report["affinity"] = {{"mean", mean(affinities)}, {"median", median(affinities)}};
    report["qed"] = {{"mean", mean(qeds)}, {"median", median(qeds)}};
    report["sa"] = {{"mean", mean(sas)}, {"median", median(sas)}};
    report["clash"] = {{"mean", mean(clashes)}, {"median", median(clashes)}};
    report["validity_fraction"] = static_cast<double>(n_valid) / entries.size();
    if (entries.size() >= 2) report["diversity"] = div;
    if (have_specificity) report["specificity"] = specificity;
    report["jsd"] = jsd_block;

    auto& rows = report["molecules"] = json::array();
    std::string csv = "id,deltaG,qed,sa,clash,valid\n";
    for (const auto& e : entries) {
        rows.push_back({{"id", e.id},
                        {"deltaG", e.delta_g},
                        {"qed", e.qed},
                        {"sa", e.sa},
                        {"clash", e.clash},
                        {"valid", e.valid}});
        csv += e.id + "," + fmt_double(e.delta_g) + "," + fmt_double(e.qed) + "," +
               fmt_double(e.sa) + "," + std::to_string(e.clash) + "," +
               (e.valid ? "1" : "0") + "\n";
    }

    write_text_file(out_dir + "/metrics.json", report.dump(2));
    write_text_file(out_dir + "/metrics.csv", csv);
    write_text_file(out_dir + "/hist_affinity.csv", histogram_csv(affinities, -20.0, 20.0, 80));
    write_text_file(out_dir + "/hist_qed.csv", histogram_csv(qeds, 0.0, 1.0, 40));
    write_text_file(out_dir + "/hist_sa.csv", histogram_csv(sas, 0.0, 1.0, 40));
    write_text_file(out_dir + "/hist_clash.csv", histogram_csv(clashes, 0.0, 80.0, 80));
    std::printf("eval: %zu molecules, mean deltaG %.3f, report in %s\n", entries.size(),
                mean(affinities), out_dir.c_str());
}

int cmd_selftest() {
    const auto report = run_derivation_checks();
    for (const auto& e : report.entries)
        std::printf("%-40s deviation %.3e (tol %.0e) %s\n", e.name.c_str(), e.deviation,
                    e.tolerance, e.pass ? "ok" : "FAIL");
    std::printf("selftest: %zu checks, %s\n", report.entries.size(),
                report.all_pass() ? "all passed" : "FAILURES");
    return report.all_pass() ? 0 : 1;
}

}  // namespace ligdiff
