#include "ligdiff/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <iostream>

#include "ligdiff/errors.hpp"

namespace ligdiff {

namespace {

std::uint64_t fnv1a_mix(const int* vals, int n) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (int i = 0; i < n; ++i) {
        const auto v = static_cast<std::uint64_t>(vals[i]);
        for (int b = 0; b < 8; ++b) {
            h ^= (v >> (8 * b)) & 0xFF;
            h *= 0x100000001B3ULL;
        }
    }
    return h;
}

double distance(const MoleculeCloud& m, int i, int j) {
    double d2 = 0.0;
    for (int a = 0; a < 3; ++a) {
        const double d = m.coord(i)[a] - m.coord(j)[a];
        d2 += d * d;
    }
    return std::sqrt(d2);
}

double angle_deg(const MoleculeCloud& m, int a, int center, int c) {
    double u[3], v[3], nu = 0.0, nv = 0.0, dot = 0.0;
    for (int k = 0; k < 3; ++k) {
        u[k] = m.coord(a)[k] - m.coord(center)[k];
        v[k] = m.coord(c)[k] - m.coord(center)[k];
        nu += u[k] * u[k];
        nv += v[k] * v[k];
        dot += u[k] * v[k];
    }
    const double cosv = std::clamp(dot / (std::sqrt(nu * nv) + 1e-300), -1.0, 1.0);
    return std::acos(cosv) * 180.0 / M_PI;
}

}  // namespace

int FingerprintBits::popcount() const {
    int n = 0;
    for (const auto w : bits_) n += std::popcount(w);
    return n;
}

FingerprintBits fingerprint(const MoleculeCloud& m, const Vocabulary& vocab, int width) {
    FingerprintBits fp(width);
    const auto bonds = infer_bonds(m, vocab);

    for (const auto& b : bonds) {
        int ei = m.argmax_type(b.i), ej = m.argmax_type(b.j);
        if (ei > ej) std::swap(ei, ej);
        const int dist_bin = static_cast<int>(distance(m, b.i, b.j) / 0.05);
        const int key[4] = {1, ei, ej, dist_bin};
        fp.set(fnv1a_mix(key, 4));
    }

    // angle triples around each bonded center
    std::vector<std::vector<int>> adj(m.n_atoms);
    for (const auto& b : bonds) {
        adj[b.i].push_back(b.j);
        adj[b.j].push_back(b.i);
    }
    for (int c = 0; c < m.n_atoms; ++c) {
        const auto& nb = adj[c];
        for (std::size_t p = 0; p < nb.size(); ++p) {
            for (std::size_t q = p + 1; q < nb.size(); ++q) {
                int ea = m.argmax_type(nb[p]), ec = m.argmax_type(nb[q]);
                if (ea > ec) std::swap(ea, ec);
                const int ang_bin = static_cast<int>(angle_deg(m, nb[p], c, nb[q]) / 5.0);
                const int key[5] = {2, ea, m.argmax_type(c), ec, ang_bin};
                fp.set(fnv1a_mix(key, 5));
            }
        }
    }
    return fp;
}

double tanimoto(const FingerprintBits& a, const FingerprintBits& b) {
    if (a.width() != b.width()) throw DomainError("tanimoto: width mismatch");
    int inter = 0, uni = 0;
    for (std::size_t w = 0; w < a.words().size(); ++w) {
        inter += std::popcount(a.words()[w] & b.words()[w]);
        uni += std::popcount(a.words()[w] | b.words()[w]);
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
}

double diversity(const std::vector<FingerprintBits>& fps) {
    if (fps.size() < 2) throw DomainError("diversity: undefined for fewer than two molecules");
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < fps.size(); ++i)
        for (std::size_t j = i + 1; j < fps.size(); ++j) {
            sum += 1.0 - tanimoto(fps[i], fps[j]);
            ++pairs;
        }
    return sum / static_cast<double>(pairs);
}

void Histogram::add(double value) {
    if (counts.empty()) throw DomainError("histogram: no bins");
    if (value < lo || value > hi) return;  // the right edge lands in the last bin
    const auto bin = static_cast<std::size_t>((value - lo) / (hi - lo) * counts.size());
    counts[std::min(bin, counts.size() - 1)] += 1.0;
}

double Histogram::total() const {
    double t = 0.0;
    for (const double c : counts) t += c;
    return t;
}

Histogram make_bond_length_hist() {
    Histogram h;
    h.lo = 0.0;
    h.hi = 3.0;
    h.counts.assign(150, 0.0);  // 0.02 Angstrom bins
    return h;
}

Histogram make_bond_angle_hist() {
    Histogram h;
    h.lo = 0.0;
    h.hi = 180.0;
    h.counts.assign(90, 0.0);  // 2 degree bins
    return h;
}

double jsd(const Histogram& p, const Histogram& q) {
    if (p.counts.size() != q.counts.size() || p.lo != q.lo || p.hi != q.hi)
        throw DomainError("jsd: histogram binning mismatch");
    const double tp = p.total(), tq = q.total();
    if (tp <= 0.0 || tq <= 0.0) throw DomainError("jsd: empty histogram");
    double acc = 0.0;
    for (std::size_t b = 0; b < p.counts.size(); ++b) {
        const double pb = p.counts[b] / tp;
        const double qb = q.counts[b] / tq;
        const double mb = 0.5 * (pb + qb);
        const double from_p = pb > 0.0 ? 0.5 * pb * std::log2(pb / mb) : 0.0;
        const double from_q = qb > 0.0 ? 0.5 * qb * std::log2(qb / mb) : 0.0;
        acc += from_p + from_q;  // single commutative add keeps jsd(p,q) == jsd(q,p) exact
    }
    return acc;
}

PairFilter parse_pair_filter(const std::string& pattern) {
    const auto dash = pattern.find_first_of("-=");
    if (dash == std::string::npos || dash == 0 || dash + 1 >= pattern.size())
        throw DomainError("bad pair pattern: " + pattern);
    PairFilter f;
    f.elem_a = pattern.substr(0, dash);
    f.elem_b = pattern.substr(dash + 1);
    f.order_bin = pattern[dash] == '=' ? 1 : 0;
    return f;
}

TripleFilter parse_triple_filter(const std::string& pattern) {
    // element symbols are one or two chars; second char lowercase (e.g. Cl)
    std::vector<std::string> elems;
    for (std::size_t i = 0; i < pattern.size();) {
        std::size_t len = 1;
        if (i + 1 < pattern.size() && std::islower(static_cast<unsigned char>(pattern[i + 1])))
            len = 2;
        elems.push_back(pattern.substr(i, len));
        i += len;
    }
    if (elems.size() != 3) throw DomainError("bad triple pattern: " + pattern);
    return {elems[0], elems[1], elems[2]};
}

Histogram bond_length_hist(const std::vector<MoleculeCloud>& mols, const Vocabulary& vocab,
                           const PairFilter& filter) {
    Histogram h = make_bond_length_hist();
    const int ka = vocab.index(filter.elem_a);
    const int kb = vocab.index(filter.elem_b);
    for (const auto& m : mols) {
        for (const auto& b : infer_bonds(m, vocab)) {
            if (b.order_bin != filter.order_bin) continue;
            const int ei = m.argmax_type(b.i), ej = m.argmax_type(b.j);
            if ((ei == ka && ej == kb) || (ei == kb && ej == ka)) h.add(distance(m, b.i, b.j));
        }
    }
    return h;
}

Histogram bond_angle_hist(const std::vector<MoleculeCloud>& mols, const Vocabulary& vocab,
                          const TripleFilter& filter) {
    Histogram h = make_bond_angle_hist();
    const int ka = vocab.index(filter.elem_a);
    const int kc = vocab.index(filter.elem_center);
    const int ke = vocab.index(filter.elem_c);
    for (const auto& m : mols) {
        const auto bonds = infer_bonds(m, vocab);
        std::vector<std::vector<int>> adj(m.n_atoms);
        for (const auto& b : bonds) {
            adj[b.i].push_back(b.j);
            adj[b.j].push_back(b.i);
        }
        for (int c = 0; c < m.n_atoms; ++c) {
            if (m.argmax_type(c) != kc) continue;
            const auto& nb = adj[c];
            for (std::size_t p = 0; p < nb.size(); ++p)
                for (std::size_t q = p + 1; q < nb.size(); ++q) {
                    const int ea = m.argmax_type(nb[p]), eb = m.argmax_type(nb[q]);
                    if ((ea == ka && eb == ke) || (ea == ke && eb == ka))
                        h.add(angle_deg(m, nb[p], c, nb[q]));
                }
        }
    }
    return h;
}

int clash_score(const PocketCloud& pocket, const MoleculeCloud& ligand, const Vocabulary& vocab,
                double tolerance) {
    int clashes = 0;
    for (int i = 0; i < ligand.n_atoms; ++i) {
        const double ri = vocab.vdw_radius(ligand.argmax_type(i));
        for (int j = 0; j < pocket.n_atoms; ++j) {
            const double rj = vocab.vdw_radius(pocket.argmax_type(j));
            double d2 = 0.0;
            for (int a = 0; a < 3; ++a) {
                const double d = ligand.coord(i)[a] - pocket.coord(j)[a];
                d2 += d * d;
            }
            const double lim = ri + rj - tolerance;
            if (lim > 0.0 && d2 < lim * lim) ++clashes;
        }
    }
    const auto bonds = infer_bonds(ligand, vocab);
    auto bonded = [&bonds](int i, int j) {
        for (const auto& b : bonds)
            if (b.i == i && b.j == j) return true;
        return false;
    };
    for (int i = 0; i < ligand.n_atoms; ++i) {
        const double ri = vocab.vdw_radius(ligand.argmax_type(i));
        for (int j = i + 1; j < ligand.n_atoms; ++j) {
            if (bonded(i, j)) continue;
            const double rj = vocab.vdw_radius(ligand.argmax_type(j));
            const double lim = ri + rj - tolerance;
            if (lim > 0.0 && distance(ligand, i, j) < lim) ++clashes;
        }
    }
    return clashes;
}

bool validity(const MoleculeCloud& m, const Vocabulary& vocab) {
    if (m.n_atoms == 1) return true;
    const auto bonds = infer_bonds(m, vocab);
    if (bonds.empty()) return false;  // n >= 2 atoms with no connectivity
    std::vector<int> degree(m.n_atoms, 0);
    for (const auto& b : bonds) {
        ++degree[b.i];
        ++degree[b.j];
    }
    for (int i = 0; i < m.n_atoms; ++i)
        if (degree[i] > vocab.max_valence(m.argmax_type(i))) return false;
    return true;
}

MoleculeCloud recenter_to_pocket(const MoleculeCloud& ligand, const PocketCloud& target) {
    const auto lig_com = center_of_mass(ligand.x, ligand.n_atoms);
    const auto tgt_com = center_of_mass(target.x, target.n_atoms);
    MoleculeCloud out = ligand;
    for (int i = 0; i < out.n_atoms; ++i)
        for (int a = 0; a < 3; ++a)
            out.x[3 * static_cast<std::size_t>(i) + a] += tgt_com[a] - lig_com[a];
    return out;
}

double specificity_score(const std::vector<SpecificityInput>& per_pocket,
                         const std::vector<const PocketCloud*>& off_pockets,
                         const PocketScorer& scorer) {
    double sum = 0.0;
    std::size_t n_pairs = 0;
    for (const auto& entry : per_pocket) {
        std::size_t pocket_pairs = 0;
        for (const auto* lig : entry.top_ligands) {
            const double on = scorer(*entry.on_pocket, *lig);
            if (!std::isfinite(on)) throw DomainError("specificity: non-finite on-target score");
            for (const auto* off : off_pockets) {
                if (off == entry.on_pocket) continue;
                const auto moved = recenter_to_pocket(*lig, *off);
                const double off_score = scorer(*off, moved);
                if (off_score >= 0.0) continue;  // invalid placements are discarded
                sum += on - off_score;
                ++n_pairs;
                ++pocket_pairs;
            }
        }
        if (pocket_pairs == 0)
            std::cerr << "specificity: all off-target scores invalid for a pocket, skipping\n";
    }
    if (n_pairs == 0) return 0.0;
    return sum / static_cast<double>(n_pairs);
}

}  // namespace ligdiff
