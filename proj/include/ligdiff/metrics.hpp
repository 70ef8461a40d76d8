#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ligdiff/molsys.hpp"

namespace ligdiff {

// Hashed bond-environment bit vector.
class FingerprintBits {
public:
    explicit FingerprintBits(int width = 1024) : bits_((width + 63) / 64, 0), width_(width) {}

    void set(std::uint64_t hash) { bits_[(hash % width_) / 64] |= 1ULL << ((hash % width_) % 64); }
    int popcount() const;
    int width() const { return static_cast<int>(width_); }
    const std::vector<std::uint64_t>& words() const { return bits_; }

private:
    std::vector<std::uint64_t> bits_;
    std::uint64_t width_;
};

// Bits from (elem_i, elem_j, distance bin) bonded pairs and
// (elem_i, elem_j, elem_k, angle bin) bonded angle triples.
FingerprintBits fingerprint(const MoleculeCloud& m, const Vocabulary& vocab, int width = 1024);

// |a & b| / |a | b|; 1 when both empty.
double tanimoto(const FingerprintBits& a, const FingerprintBits& b);

// mean over unordered pairs of (1 - tanimoto); throws DomainError for n < 2
double diversity(const std::vector<FingerprintBits>& fps);

struct Histogram {
    double lo = 0.0;
    double hi = 1.0;
    std::vector<double> counts;

    void add(double value);
    double total() const;
    bool empty() const { return total() <= 0.0; }
};

Histogram make_bond_length_hist();  // 0-3 Angstrom at 0.02
Histogram make_bond_angle_hist();   // 0-180 degrees at 2

// Jensen-Shannon divergence, base 2 so the range is [0, 1].
// Throws DomainError on empty histograms or mismatched binning.
double jsd(const Histogram& p, const Histogram& q);

// Pattern grammar: pairs "C-C" (single-like) / "C=C" (short); angle triples
// are bare element symbols, middle atom second, e.g. "CCC".
struct PairFilter {
    std::string elem_a, elem_b;
    int order_bin = 0;
};
struct TripleFilter {
    std::string elem_a, elem_center, elem_c;
};
PairFilter parse_pair_filter(const std::string& pattern);
TripleFilter parse_triple_filter(const std::string& pattern);

Histogram bond_length_hist(const std::vector<MoleculeCloud>& mols, const Vocabulary& vocab,
                           const PairFilter& filter);
Histogram bond_angle_hist(const std::vector<MoleculeCloud>& mols, const Vocabulary& vocab,
                          const TripleFilter& filter);

// Count of nonbonded pairs (ligand-pocket plus ligand-ligand) closer than
// the vdW contact distance minus the tolerance.
int clash_score(const PocketCloud& pocket, const MoleculeCloud& ligand, const Vocabulary& vocab,
                double tolerance = 0.5);

// Valence-table proxy for sanitization: every inferred-bond degree within the
// element maximum, and a connected pair exists for n >= 2.
bool validity(const MoleculeCloud& m, const Vocabulary& vocab);

// Mean on-target minus off-target affinity gap over top ligands and off
// pockets; off-target placements scoring >= 0 are discarded. The scorer
// receives the ligand re-centered at the off-pocket's center of mass.
using PocketScorer = std::function<double(const PocketCloud&, const MoleculeCloud&)>;

struct SpecificityInput {
    const PocketCloud* on_pocket;
    std::vector<const MoleculeCloud*> top_ligands;
};

double specificity_score(const std::vector<SpecificityInput>& per_pocket,
                         const std::vector<const PocketCloud*>& off_pockets,
                         const PocketScorer& scorer);

// rigid re-centering of a ligand to a target pocket's center of mass
MoleculeCloud recenter_to_pocket(const MoleculeCloud& ligand, const PocketCloud& target);

}  // namespace ligdiff
