#pragma once

#include <string>
#include <vector>

#include "ligdiff/molsys.hpp"

namespace ligdiff {

// Synthetic affinity function with the gauss1/gauss2/repulsion shape of
// empirical docking scores. Differentiable everywhere, C1-tapered to zero at
// the interaction cutoff. Not calibrated against any real docking program.
struct OracleParams {
    double w_gauss1 = -0.035;
    double w_gauss2 = -0.005;
    double w_repulsion = 0.84;
    double cutoff = 8.0;       // Angstrom, center-to-center
    double taper_width = 1.0;  // smoothstep window below the cutoff
    double scale = 7.0;        // pair-sum -> kcal/mol; typical labels in [-12, -2]
    std::vector<double> vdw_override;  // per-type radii; empty = vocabulary table

    double vdw(const Vocabulary& vocab, int k) const {
        return vdw_override.empty() ? vocab.vdw_radius(k) : vdw_override.at(k);
    }
};

struct AffinityResult {
    double delta_g = 0.0;      // kcal/mol
    std::vector<double> grad;  // N x 3 w.r.t. ligand coordinates
};

AffinityResult pseudo_affinity(const PocketCloud& pocket, const MoleculeCloud& ligand,
                               const OracleParams& params, const Vocabulary& vocab);

// Drug-likeness proxy from atom count and heteroatom fraction through fixed
// Gaussian desirability curves; in [0,1], deterministic.
double qed_proxy(const MoleculeCloud& ligand, const Vocabulary& vocab);

// Synthesizability proxy from bond-graph branching statistics; in [0,1].
double sa_proxy(const MoleculeCloud& ligand, const Vocabulary& vocab);

// deltaG = R T ln K, R in kcal/(mol K). Throws DomainError for K <= 0.
double deltaG_from_K(double k_dissoc, double temperature_kelvin);

struct GenConfig {
    int pocket_atoms_min = 30;
    int pocket_atoms_max = 80;
    int ligand_atoms_min = 8;
    int ligand_atoms_max = 30;
    double pocket_radius_min = 4.0;
    double pocket_radius_max = 7.0;
    double clash_fraction = 0.02;  // fraction of records forced to deltaG > 0
    int relax_steps = 60;
    double relax_step_size = 0.05;
};

// Deterministic synthetic pocket-ligand corpus with oracle labels.
std::vector<ComplexRecord> generate_dataset(std::uint64_t seed, int n_complexes,
                                            const GenConfig& gen, const OracleParams& oracle,
                                            const Vocabulary& vocab);

AtomCountPrior build_atom_count_prior(const std::vector<ComplexRecord>& records,
                                      const GenConfig& gen);

// On-disk layout: records.jsonl + per-record extended-XYZ files + prior.json.
void write_dataset(const std::string& dir, const std::vector<ComplexRecord>& records,
                   const AtomCountPrior& prior, const Vocabulary& vocab);
struct Dataset {
    std::vector<ComplexRecord> records;
    AtomCountPrior prior;
};
Dataset load_dataset(const std::string& dir, const Vocabulary& vocab);

}  // namespace ligdiff
