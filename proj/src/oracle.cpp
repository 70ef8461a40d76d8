#include "ligdiff/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "ligdiff/errors.hpp"
#include "ligdiff/xyz_io.hpp"

namespace ligdiff {

namespace {

// smoothstep taper: 1 well inside the cutoff, 0 beyond it, C1 at both ends
void taper(double d, double cutoff, double width, double& f, double& dfdd) {
    const double start = cutoff - width;
    if (d <= start) {
        f = 1.0;
        dfdd = 0.0;
    } else if (d >= cutoff) {
        f = 0.0;
        dfdd = 0.0;
    } else {
        const double u = (cutoff - d) / width;
        f = u * u * (3.0 - 2.0 * u);
        dfdd = -(6.0 * u - 6.0 * u * u) / width;
    }
}

void pair_terms(double s, const OracleParams& p, double& e, double& deds) {
    const double g1 = std::exp(-(s / 0.5) * (s / 0.5));
    const double a2 = (s - 3.0) / 2.0;
    const double g2 = std::exp(-a2 * a2);
    e = p.w_gauss1 * g1 + p.w_gauss2 * g2;
    deds = p.w_gauss1 * g1 * (-8.0 * s) + p.w_gauss2 * g2 * (-(s - 3.0) / 2.0);
    if (s < 0.0) {
        e += p.w_repulsion * s * s;
        deds += 2.0 * p.w_repulsion * s;
    }
}

}  // namespace

AffinityResult pseudo_affinity(const PocketCloud& pocket, const MoleculeCloud& ligand,
                               const OracleParams& params, const Vocabulary& vocab) {
    AffinityResult res;
    res.grad.assign(static_cast<std::size_t>(ligand.n_atoms) * 3, 0.0);
    double total = 0.0;
    for (int i = 0; i < ligand.n_atoms; ++i) {
        const double ri = params.vdw(vocab, ligand.argmax_type(i));
        const double* xi = ligand.coord(i);
        double* gi = &res.grad[3 * static_cast<std::size_t>(i)];
        for (int j = 0; j < pocket.n_atoms; ++j) {
            const double* xj = pocket.coord(j);
            const double dx = xi[0] - xj[0], dy = xi[1] - xj[1], dz = xi[2] - xj[2];
            const double d2 = dx * dx + dy * dy + dz * dz;
            if (d2 >= params.cutoff * params.cutoff) continue;
            const double d = std::sqrt(d2) + 1e-300;
            const double rj = params.vdw(vocab, pocket.argmax_type(j));
            const double s = d - (ri + rj);
            double e, deds, f, dfdd;
            pair_terms(s, params, e, deds);
            taper(d, params.cutoff, params.taper_width, f, dfdd);
            total += e * f;
            const double dEdd = deds * f + e * dfdd;  // ds/dd = 1
            const double c = dEdd / d;
            gi[0] += c * dx;
            gi[1] += c * dy;
            gi[2] += c * dz;
        }
    }
    res.delta_g = params.scale * total;
    for (auto& g : res.grad) g *= params.scale;
    return res;
}

double qed_proxy(const MoleculeCloud& ligand, const Vocabulary& vocab) {
    const int n = ligand.n_atoms;
    int hetero = 0;
    const int carbon = [&] {
        for (int k = 0; k < vocab.size(); ++k)
            if (vocab.symbol(k) == "C") return k;
        return -1;
    }();
    for (int i = 0; i < n; ++i)
        if (ligand.argmax_type(i) != carbon) ++hetero;
    const double frac = static_cast<double>(hetero) / n;

    // fixed desirability curves: size centered at 18 atoms, heteroatom
    // fraction centered at 0.3
    const double d_size = std::exp(-0.5 * ((n - 18.0) / 7.0) * ((n - 18.0) / 7.0));
    const double d_het = std::exp(-0.5 * ((frac - 0.3) / 0.18) * ((frac - 0.3) / 0.18));
    return std::sqrt(d_size * d_het);
}

double sa_proxy(const MoleculeCloud& ligand, const Vocabulary& vocab) {
    const auto bonds = infer_bonds(ligand, vocab);
    const int n = ligand.n_atoms;
    std::vector<int> degree(n, 0);
    for (const auto& b : bonds) {
        ++degree[b.i];
        ++degree[b.j];
    }
    double branch = 0.0;
    for (int i = 0; i < n; ++i) branch += std::max(0, degree[i] - 2);
    branch /= n;
    const double ring_excess =
        std::max(0.0, static_cast<double>(bonds.size()) - (n - 1)) / n;
    const double size_penalty = 0.015 * std::max(0, n - 10);
    return std::exp(-(0.9 * branch + 1.2 * ring_excess + size_penalty));
}

double deltaG_from_K(double k_dissoc, double temperature_kelvin) {
    if (!(k_dissoc > 0.0)) throw DomainError("deltaG_from_K: K must be positive");
    if (!(temperature_kelvin > 0.0)) throw DomainError("deltaG_from_K: T must be positive");
    constexpr double kGasConstant = 1.98720425864e-3;  // kcal/(mol K)
    return kGasConstant * temperature_kelvin * std::log(k_dissoc);
}

namespace {

// gradient relaxation that removes overlaps: pocket repulsion plus a soft
// sphere between ligand atoms and a weak tether keeping atoms in the cavity
void relax_ligand(MoleculeCloud& lig, const PocketCloud& pocket, const OracleParams& oracle,
                  const Vocabulary& vocab, const GenConfig& gen, double free_radius) {
    OracleParams rep = oracle;
    rep.w_gauss1 = 0.0;
    rep.w_gauss2 = 0.0;
    rep.scale = 1.0;
    const double d_min = 1.35;  // ligand-ligand soft-sphere contact
    for (int step = 0; step < gen.relax_steps; ++step) {
        auto res = pseudo_affinity(pocket, lig, rep, vocab);
        auto& g = res.grad;
        for (int i = 0; i < lig.n_atoms; ++i) {
            const double* xi = lig.coord(i);
            for (int j = i + 1; j < lig.n_atoms; ++j) {
                const double* xj = lig.coord(j);
                const double dx = xi[0] - xj[0], dy = xi[1] - xj[1], dz = xi[2] - xj[2];
                const double d = std::sqrt(dx * dx + dy * dy + dz * dz) + 1e-9;
                if (d >= d_min) continue;
                const double c = 2.0 * (d - d_min) / d;  // d/dx of (d - d_min)^2
                g[3 * static_cast<std::size_t>(i)] += c * dx;
                g[3 * static_cast<std::size_t>(i) + 1] += c * dy;
                g[3 * static_cast<std::size_t>(i) + 2] += c * dz;
                g[3 * static_cast<std::size_t>(j)] -= c * dx;
                g[3 * static_cast<std::size_t>(j) + 1] -= c * dy;
                g[3 * static_cast<std::size_t>(j) + 2] -= c * dz;
            }
            const double r = std::sqrt(xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]) + 1e-9;
            if (r > free_radius) {
                const double c = 2.0 * (r - free_radius) / r;
                for (int a = 0; a < 3; ++a) g[3 * static_cast<std::size_t>(i) + a] += c * xi[a];
            }
        }
        double norm2 = 0.0;
        for (double v : g) norm2 += v * v;
        if (norm2 < 1e-12) break;
        for (std::size_t c = 0; c < g.size(); ++c) lig.x[c] -= gen.relax_step_size * g[c];
    }
}

void quantize_coords(std::vector<double>& x) {
    for (auto& c : x) c = std::round(c * 1e6) / 1e6;
}

PocketCloud sample_pocket(Rng& rng, const GenConfig& gen, const Vocabulary& vocab) {
    const int n = gen.pocket_atoms_min +
                  static_cast<int>(rng.below(gen.pocket_atoms_max - gen.pocket_atoms_min + 1));
    const double radius = rng.uniform(gen.pocket_radius_min, gen.pocket_radius_max);
    const double z_cut = rng.uniform(-0.6, 0.1);  // cap opening
    auto p = PocketCloud::zeros(n, vocab.size());
    for (int i = 0; i < n; ++i) {
        const double z = rng.uniform(z_cut, 1.0);
        const double phi = rng.uniform(0.0, 2.0 * M_PI);
        const double rxy = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double r = radius + 0.25 * rng.normal();
        p.x[3 * static_cast<std::size_t>(i)] = r * rxy * std::cos(phi);
        p.x[3 * static_cast<std::size_t>(i) + 1] = r * rxy * std::sin(phi);
        p.x[3 * static_cast<std::size_t>(i) + 2] = r * z;
        // carbon-rich composition
        const double u = rng.uniform();
        int k = 0;
        if (u > 0.55 && vocab.size() > 1) k = 1 + static_cast<int>(rng.below(vocab.size() - 1));
        p.v[static_cast<std::size_t>(i) * vocab.size() + k] = 1.0;
    }
    return p;
}

// Grows a compact bonded cluster: each atom sits ~1.5 A from a previously
// placed atom and at least 1.25 A from the rest, so inferred bond graphs are
// connected and the packing does not scale with pocket size.
MoleculeCloud sample_ligand_geometry(Rng& rng, const GenConfig& gen, const Vocabulary& vocab,
                                     double free_radius) {
    const int n = gen.ligand_atoms_min +
                  static_cast<int>(rng.below(gen.ligand_atoms_max - gen.ligand_atoms_min + 1));
    auto m = MoleculeCloud::zeros(n, vocab.size());
    const double bond = 1.5;
    const double min_sep = 1.25;
    for (int i = 0; i < n; ++i) {
        double pos[3] = {0.0, 0.0, 0.0};
        if (i > 0) {
            bool placed = false;
            for (int attempt = 0; attempt < 24 && !placed; ++attempt) {
                const int anchor = static_cast<int>(rng.below(static_cast<std::uint64_t>(i)));
                double dir[3], norm = 0.0;
                for (auto& d : dir) {
                    d = rng.normal();
                    norm += d * d;
                }
                norm = std::sqrt(norm) + 1e-12;
                for (int a = 0; a < 3; ++a)
                    pos[a] = m.coord(anchor)[a] + dir[a] / norm * (bond + 0.08 * rng.normal());
                placed = true;
                for (int j = 0; j < i && placed; ++j) {
                    double d2 = 0.0;
                    for (int a = 0; a < 3; ++a) {
                        const double d = pos[a] - m.coord(j)[a];
                        d2 += d * d;
                    }
                    if (d2 < min_sep * min_sep) placed = false;
                }
                double r2 = pos[0] * pos[0] + pos[1] * pos[1] + pos[2] * pos[2];
                if (r2 > free_radius * free_radius) placed = false;
                if (attempt == 23) placed = true;  // accept the last try
            }
        }
        for (int a = 0; a < 3; ++a) m.x[3 * static_cast<std::size_t>(i) + a] = pos[a];
        const double u = rng.uniform();
        int k = 0;
        if (u > 0.6 && vocab.size() > 1) k = 1 + static_cast<int>(rng.below(vocab.size() - 1));
        m.v[static_cast<std::size_t>(i) * vocab.size() + k] = 1.0;
    }
    return m;
}

}  // namespace

std::vector<ComplexRecord> generate_dataset(std::uint64_t seed, int n_complexes,
                                            const GenConfig& gen, const OracleParams& oracle,
                                            const Vocabulary& vocab) {
    if (n_complexes < 1) throw DomainError("generate_dataset: need at least one complex");
    std::vector<ComplexRecord> out;
    out.reserve(static_cast<std::size_t>(n_complexes));
    for (int r = 0; r < n_complexes; ++r) {
        Rng rng(seed, static_cast<std::uint64_t>(r));
        ComplexRecord rec;
        char id[32];
        std::snprintf(id, sizeof(id), "cplx-%06d", r);
        rec.id = id;
        rec.pocket = sample_pocket(rng, gen, vocab);
        const double free_radius =
            std::max(1.0, pocket_radius(rec.pocket) - 3.0);

        const bool force_clash = rng.uniform() < gen.clash_fraction;
        bool done = false;
        for (int attempt = 0; attempt < 8 && !done; ++attempt) {
            rec.ligand = sample_ligand_geometry(rng, gen, vocab, free_radius);
            if (force_clash) {
                // park the first atoms on pocket atoms until the label flips positive
                for (int i = 0; i < rec.ligand.n_atoms; ++i) {
                    const int j = static_cast<int>(rng.below(rec.pocket.n_atoms));
                    for (int a = 0; a < 3; ++a)
                        rec.ligand.x[3 * static_cast<std::size_t>(i) + a] =
                            rec.pocket.coord(j)[a] + 0.05 * rng.normal();
                    quantize_coords(rec.ligand.x);
                    if (pseudo_affinity(rec.pocket, rec.ligand, oracle, vocab).delta_g > 0.0)
                        break;
                }
                done = pseudo_affinity(rec.pocket, rec.ligand, oracle, vocab).delta_g > 0.0;
            } else {
                // vary the relaxation depth and add a rigid radial nudge so the
                // labels cover the whole distance-affinity field, not just the
                // optimum shell; the regressor needs both sides of the well
                GenConfig varied = gen;
                varied.relax_steps =
                    8 + static_cast<int>(rng.below(std::max(1, gen.relax_steps - 7)));
                relax_ligand(rec.ligand, rec.pocket, oracle, vocab, varied, free_radius);
                if (rng.uniform() < 0.5) {
                    const auto com = center_of_mass(rec.ligand.x, rec.ligand.n_atoms);
                    const double norm =
                        std::sqrt(com[0] * com[0] + com[1] * com[1] + com[2] * com[2]) + 1e-9;
                    const double shift = rng.uniform(-0.8, 0.8);
                    for (int i = 0; i < rec.ligand.n_atoms; ++i)
                        for (int a = 0; a < 3; ++a)
                            rec.ligand.x[3 * static_cast<std::size_t>(i) + a] +=
                                shift * com[a] / norm;
                }
                quantize_coords(rec.ligand.x);
                done = pseudo_affinity(rec.pocket, rec.ligand, oracle, vocab).delta_g <= 0.0;
            }
            if (!done && attempt == 7) {
                std::cerr << "generate_dataset: resample limit hit for " << rec.id
                          << ", keeping last geometry\n";
                done = true;
            }
        }
        quantize_coords(rec.pocket.x);
        quantize_coords(rec.ligand.x);

        const auto aff = pseudo_affinity(rec.pocket, rec.ligand, oracle, vocab);
        rec.labels.delta_g = aff.delta_g;
        rec.labels.qed = qed_proxy(rec.ligand, vocab);
        rec.labels.sa = sa_proxy(rec.ligand, vocab);
        out.push_back(std::move(rec));
    }
    return out;
}

AtomCountPrior build_atom_count_prior(const std::vector<ComplexRecord>& records,
                                      const GenConfig& gen) {
    AtomCountPrior prior(1.0, gen.ligand_atoms_min, gen.ligand_atoms_max);
    for (const auto& r : records) {
        if (r.labels.delta_g > 0.0) continue;  // clashing records are not size exemplars
        prior.add(pocket_radius(r.pocket), r.ligand.n_atoms);
    }
    return prior;
}

void write_dataset(const std::string& dir, const std::vector<ComplexRecord>& records,
                   const AtomCountPrior& prior, const Vocabulary& vocab) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::string index;
    for (const auto& r : records) {
        const std::string pf = r.id + "_pocket.xyz";
        const std::string lf = r.id + "_ligand.xyz";
        write_text_file(dir + "/" + pf, write_xyz(to_frame(r.pocket, vocab, {{"id", r.id},
                                                                             {"source", "gen"}})));
        write_text_file(dir + "/" + lf, write_xyz(to_frame(r.ligand, vocab, {{"id", r.id},
                                                                             {"source", "gen"}})));
        nlohmann::json j;
        j["id"] = r.id;
        j["pocket"] = pf;
        j["ligand"] = lf;
        j["deltaG"] = r.labels.delta_g;
        j["qed"] = r.labels.qed;
        j["sa"] = r.labels.sa;
        index += j.dump();
        index += '\n';
    }
    write_text_file(dir + "/records.jsonl", index);
    write_text_file(dir + "/prior.json", prior.to_json());
    nlohmann::json meta;
    auto& syms = meta["vocabulary"] = nlohmann::json::array();
    for (int k = 0; k < vocab.size(); ++k) syms.push_back(vocab.symbol(k));
    write_text_file(dir + "/meta.json", meta.dump(2));
}

Dataset load_dataset(const std::string& dir, const Vocabulary& vocab) {
    Dataset ds;
    const auto index = read_text_file(dir + "/records.jsonl");
    std::size_t pos = 0;
    while (pos < index.size()) {
        auto end = index.find('\n', pos);
        if (end == std::string::npos) end = index.size();
        const auto line = index.substr(pos, end - pos);
        pos = end + 1;
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        ComplexRecord r;
        r.id = j.at("id").get<std::string>();
        r.pocket = frame_to_pocket(
            parse_xyz(read_text_file(dir + "/" + j.at("pocket").get<std::string>())), vocab);
        r.ligand = frame_to_molecule(
            parse_xyz(read_text_file(dir + "/" + j.at("ligand").get<std::string>())), vocab);
        r.labels.delta_g = j.at("deltaG").get<double>();
        r.labels.qed = j.at("qed").get<double>();
        r.labels.sa = j.at("sa").get<double>();
        ds.records.push_back(std::move(r));
    }
    ds.prior = AtomCountPrior::from_json(read_text_file(dir + "/prior.json"));
    return ds;
}

}  // namespace ligdiff
