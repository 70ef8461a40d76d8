#include "ligdiff/molsys.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "ligdiff/errors.hpp"

namespace ligdiff {

namespace {

struct ElementInfo {
    const char* symbol;
    double r_cov;   // Angstrom
    double r_vdw;   // Angstrom
    int valence;
};

// Covalent radii (Cordero), vdW radii (Bondi), max valences for the
// supported element set.
constexpr ElementInfo kElements[] = {
    {"C", 0.76, 1.70, 4}, {"N", 0.71, 1.55, 3}, {"O", 0.66, 1.52, 2},
    {"F", 0.57, 1.47, 1}, {"P", 1.07, 1.80, 5}, {"S", 1.05, 1.80, 6},
    {"Cl", 1.02, 1.75, 1},
};

const ElementInfo& element_info(const std::string& symbol) {
    for (const auto& e : kElements)
        if (symbol == e.symbol) return e;
    throw DomainError("unknown element symbol: " + symbol);
}

}  // namespace

Vocabulary Vocabulary::standard(int k) {
    static const std::vector<std::string> order = {"C", "N", "O", "S", "F", "P", "Cl"};
    if (k < 1 || k > static_cast<int>(order.size()))
        throw DomainError("vocabulary size out of range");
    return from_symbols({order.begin(), order.begin() + k});
}

Vocabulary Vocabulary::from_symbols(const std::vector<std::string>& symbols) {
    if (symbols.empty()) throw DomainError("empty element vocabulary");
    Vocabulary v;
    for (const auto& s : symbols) {
        const auto& info = element_info(s);
        v.symbols_.push_back(s);
        v.r_cov_.push_back(info.r_cov);
        v.r_vdw_.push_back(info.r_vdw);
        v.valence_.push_back(info.valence);
    }
    return v;
}

int Vocabulary::index(const std::string& symbol) const {
    for (int k = 0; k < size(); ++k)
        if (symbols_[k] == symbol) return k;
    throw DomainError("element not in vocabulary: " + symbol);
}

namespace {

int argmax_row(const double* row, int k) {
    int best = 0;
    for (int i = 1; i < k; ++i)
        if (row[i] > row[best]) best = i;
    return best;
}

}  // namespace

int MoleculeCloud::argmax_type(int i) const { return argmax_row(types(i), n_types); }
int PocketCloud::argmax_type(int i) const { return argmax_row(types(i), n_types); }

MoleculeCloud MoleculeCloud::zeros(int n, int k) {
    MoleculeCloud m;
    m.n_atoms = n;
    m.n_types = k;
    m.x.assign(static_cast<std::size_t>(n) * 3, 0.0);
    m.v.assign(static_cast<std::size_t>(n) * k, 0.0);
    return m;
}

PocketCloud PocketCloud::zeros(int n, int k) {
    PocketCloud p;
    p.n_atoms = n;
    p.n_types = k;
    p.x.assign(static_cast<std::size_t>(n) * 3, 0.0);
    p.v.assign(static_cast<std::size_t>(n) * k, 0.0);
    return p;
}

void MoleculeCloud::validate(bool strict_one_hot) const {
    if (n_atoms < 1) throw DomainError("molecule must have at least one atom");
    for (double c : x)
        if (!std::isfinite(c)) throw DomainError("non-finite coordinate");
    for (int i = 0; i < n_atoms; ++i) {
        double sum = 0.0;
        for (int k = 0; k < n_types; ++k) {
            const double p = types(i)[k];
            if (!std::isfinite(p) || p < 0.0) throw DomainError("invalid type row");
            if (strict_one_hot && p != 0.0 && p != 1.0)
                throw DomainError("type row is not one-hot");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw DomainError("type row does not sum to 1");
    }
}

std::array<double, 3> center_of_mass(const std::vector<double>& coords, int n) {
    std::array<double, 3> com{0.0, 0.0, 0.0};
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < 3; ++a) com[a] += coords[3 * static_cast<std::size_t>(i) + a];
    for (auto& c : com) c /= n;
    return com;
}

double pocket_radius(const PocketCloud& p) {
    const auto com = center_of_mass(p.x, p.n_atoms);
    double r2max = 0.0;
    for (int i = 0; i < p.n_atoms; ++i) {
        double r2 = 0.0;
        for (int a = 0; a < 3; ++a) {
            const double d = p.coord(i)[a] - com[a];
            r2 += d * d;
        }
        r2max = std::max(r2max, r2);
    }
    return std::sqrt(r2max);
}

std::array<double, 3> center_complex(PocketCloud& pocket, MoleculeCloud& ligand) {
    if (pocket.n_atoms < 1) throw DomainError("center_complex: empty pocket");
    const auto offset = center_of_mass(pocket.x, pocket.n_atoms);
    for (int i = 0; i < pocket.n_atoms; ++i)
        for (int a = 0; a < 3; ++a) pocket.x[3 * static_cast<std::size_t>(i) + a] -= offset[a];
    for (int i = 0; i < ligand.n_atoms; ++i)
        for (int a = 0; a < 3; ++a) ligand.x[3 * static_cast<std::size_t>(i) + a] -= offset[a];
    return offset;
}

AtomCountPrior::AtomCountPrior(double radius_bin_width, int n_min, int n_max)
    : bin_width_(radius_bin_width), n_min_(n_min), n_max_(n_max) {
    if (radius_bin_width <= 0.0 || n_min < 1 || n_max < n_min)
        throw DomainError("invalid atom count prior parameters");
}

void AtomCountPrior::add(double pocket_radius, int atom_count) {
    atom_count = std::clamp(atom_count, n_min_, n_max_);
    const auto b = static_cast<std::size_t>(std::max(0.0, pocket_radius / bin_width_));
    if (b >= bins_.size()) bins_.resize(b + 1);
    auto& bin = bins_[b];
    bin.counts.resize(static_cast<std::size_t>(n_max_ - n_min_ + 1), 0.0);
    bin.counts[static_cast<std::size_t>(atom_count - n_min_)] += 1.0;
    bin.total += 1.0;
}

const AtomCountPrior::Bin* AtomCountPrior::nearest_bin(double radius) const {
    if (bins_.empty()) return nullptr;
    const auto want = static_cast<long>(std::max(0.0, radius / bin_width_));
    const Bin* best = nullptr;
    long best_dist = 0;
    for (std::size_t b = 0; b < bins_.size(); ++b) {
        if (bins_[b].total <= 0.0) continue;
        const long dist = std::abs(static_cast<long>(b) - want);
        if (!best || dist < best_dist) {
            best = &bins_[b];
            best_dist = dist;
        }
    }
    return best;
}

int AtomCountPrior::sample(double pocket_radius, Rng& rng) const {
    const Bin* bin = nearest_bin(pocket_radius);
    if (!bin) throw DomainError("atom count prior is empty");
    double u = rng.uniform() * bin->total;
    for (std::size_t k = 0; k < bin->counts.size(); ++k) {
        u -= bin->counts[k];
        if (u <= 0.0) return n_min_ + static_cast<int>(k);
    }
    return n_max_;
}

std::string AtomCountPrior::to_json() const {
    nlohmann::json j;
    j["bin_width"] = bin_width_;
    j["n_min"] = n_min_;
    j["n_max"] = n_max_;
    auto& arr = j["bins"] = nlohmann::json::array();
    for (const auto& b : bins_) arr.push_back(b.counts);
    return j.dump(2);
}

AtomCountPrior AtomCountPrior::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    AtomCountPrior p(j.at("bin_width").get<double>(), j.at("n_min").get<int>(),
                     j.at("n_max").get<int>());
    for (const auto& counts : j.at("bins")) {
        Bin b;
        b.counts = counts.get<std::vector<double>>();
        for (double c : b.counts) b.total += c;
        p.bins_.push_back(std::move(b));
    }
    return p;
}

int sample_atom_count(const AtomCountPrior& prior, const PocketCloud& pocket, Rng& rng) {
    return prior.sample(pocket_radius(pocket), rng);
}

std::vector<Bond> infer_bonds(const MoleculeCloud& m, const Vocabulary& vocab,
                              double tolerance) {
    // Pairs closer than 0.87x the covalent-length sum land in the "short"
    // order bin; everything else bonded is "single-like".
    constexpr double kShortFraction = 0.87;
    std::vector<Bond> bonds;
    for (int i = 0; i < m.n_atoms; ++i) {
        const int ei = m.argmax_type(i);
        for (int j = i + 1; j < m.n_atoms; ++j) {
            const int ej = m.argmax_type(j);
            double d2 = 0.0;
            for (int a = 0; a < 3; ++a) {
                const double d = m.coord(i)[a] - m.coord(j)[a];
                d2 += d * d;
            }
            const double d = std::sqrt(d2);
            const double rsum = vocab.covalent_radius(ei) + vocab.covalent_radius(ej);
            if (d < rsum + tolerance) {
                const int order = d < kShortFraction * rsum ? 1 : 0;
                bonds.push_back({i, j, order});
            }
        }
    }
    return bonds;
}

}  // namespace ligdiff
