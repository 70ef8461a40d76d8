#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "ligdiff/rng.hpp"

namespace ligdiff {

// Element vocabulary for the one-hot type channels. Default desk vocabulary
// is {C,N,O,S}; the full supported set is {C,N,O,F,P,S,Cl}.
class Vocabulary {
public:
    static Vocabulary standard(int k = 4);
    static Vocabulary from_symbols(const std::vector<std::string>& symbols);

    int size() const { return static_cast<int>(symbols_.size()); }
    const std::string& symbol(int k) const { return symbols_.at(k); }
    int index(const std::string& symbol) const;  // throws DomainError if unknown
    double covalent_radius(int k) const { return r_cov_.at(k); }
    double vdw_radius(int k) const { return r_vdw_.at(k); }
    int max_valence(int k) const { return valence_.at(k); }
    bool operator==(const Vocabulary& o) const { return symbols_ == o.symbols_; }

private:
    std::vector<std::string> symbols_;
    std::vector<double> r_cov_;
    std::vector<double> r_vdw_;
    std::vector<int> valence_;
};

// Point cloud of atoms: coordinates in Angstrom plus per-atom type rows.
// Type rows are one-hot for real molecules; during diffusion a relaxed
// variant keeps rows on the K-simplex.
struct MoleculeCloud {
    std::vector<double> x;  // N x 3, row-major
    std::vector<double> v;  // N x K, row-major
    int n_atoms = 0;
    int n_types = 0;

    double* coord(int i) { return &x[3 * static_cast<std::size_t>(i)]; }
    const double* coord(int i) const { return &x[3 * static_cast<std::size_t>(i)]; }
    double* types(int i) { return &v[static_cast<std::size_t>(i) * n_types]; }
    const double* types(int i) const { return &v[static_cast<std::size_t>(i) * n_types]; }
    int argmax_type(int i) const;

    static MoleculeCloud zeros(int n, int k);
    void validate(bool strict_one_hot) const;  // throws DomainError
};

// The pocket never moves during sampling; same layout as MoleculeCloud.
struct PocketCloud {
    std::vector<double> x;
    std::vector<double> v;
    int n_atoms = 0;
    int n_types = 0;

    const double* coord(int i) const { return &x[3 * static_cast<std::size_t>(i)]; }
    const double* types(int i) const { return &v[static_cast<std::size_t>(i) * n_types]; }
    int argmax_type(int i) const;

    static PocketCloud zeros(int n, int k);
};

struct ComplexLabels {
    double delta_g = 0.0;  // kcal/mol; positive means invalid binding
    double qed = 0.0;      // [0,1]
    double sa = 0.0;       // [0,1]
};

struct ComplexRecord {
    std::string id;
    PocketCloud pocket;
    MoleculeCloud ligand;
    ComplexLabels labels;
};

// Histogram of ligand atom counts keyed by pocket radius bins.
class AtomCountPrior {
public:
    AtomCountPrior() = default;
    AtomCountPrior(double radius_bin_width, int n_min, int n_max);

    void add(double pocket_radius, int atom_count);
    int sample(double pocket_radius, Rng& rng) const;  // throws DomainError if empty
    bool empty() const { return bins_.empty(); }
    int n_min() const { return n_min_; }
    int n_max() const { return n_max_; }

    std::string to_json() const;
    static AtomCountPrior from_json(const std::string& text);

private:
    struct Bin {
        std::vector<double> counts;  // index = atom count - n_min
        double total = 0.0;
    };
    const Bin* nearest_bin(double radius) const;

    double bin_width_ = 2.0;
    int n_min_ = 1;
    int n_max_ = 1;
    std::vector<Bin> bins_;  // bin b covers radius [b*w, (b+1)*w)
};

struct Bond {
    int i;          // i < j always
    int j;
    int order_bin;  // 0 = single-like, 1 = short
};

// --- geometry helpers -------------------------------------------------------

std::array<double, 3> center_of_mass(const std::vector<double>& coords, int n);

// max atom distance from the cloud's center of mass
double pocket_radius(const PocketCloud& p);

// Shift the complex so the pocket center of mass sits at the origin.
// Returns the applied offset (original pocket CoM).
std::array<double, 3> center_complex(PocketCloud& pocket, MoleculeCloud& ligand);

int sample_atom_count(const AtomCountPrior& prior, const PocketCloud& pocket, Rng& rng);

// Distance-based bond perception against a fixed covalent-radius table.
// Output is canonicalized to i < j with no self bonds.
std::vector<Bond> infer_bonds(const MoleculeCloud& m, const Vocabulary& vocab,
                              double tolerance = 0.4);

}  // namespace ligdiff
