#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "ligdiff/molsys.hpp"
#include "ligdiff/rng.hpp"

namespace ligdiff::testutil {

using Rot = std::array<double, 9>;  // row-major 3x3

// Random rotation from a normalized quaternion.
inline Rot random_rotation(Rng& rng) {
    double q[4];
    double norm = 0.0;
    for (auto& c : q) {
        c = rng.normal();
        norm += c * c;
    }
    norm = std::sqrt(norm);
    for (auto& c : q) c /= norm;
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
            2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
            2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
}

inline void apply_rotation(const Rot& R, std::vector<double>& coords) {
    for (std::size_t i = 0; i + 2 < coords.size(); i += 3) {
        const double x = coords[i], y = coords[i + 1], z = coords[i + 2];
        coords[i] = R[0] * x + R[1] * y + R[2] * z;
        coords[i + 1] = R[3] * x + R[4] * y + R[5] * z;
        coords[i + 2] = R[6] * x + R[7] * y + R[8] * z;
    }
}

inline void translate(std::vector<double>& coords, double ux, double uy, double uz) {
    for (std::size_t i = 0; i + 2 < coords.size(); i += 3) {
        coords[i] += ux;
        coords[i + 1] += uy;
        coords[i + 2] += uz;
    }
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// Random pocket shell around the origin.
inline PocketCloud random_pocket(Rng& rng, int n_atoms, int k_types, double radius = 5.0) {
    auto p = PocketCloud::zeros(n_atoms, k_types);
    for (int i = 0; i < n_atoms; ++i) {
        double v[3], norm = 0.0;
        for (auto& c : v) {
            c = rng.normal();
            norm += c * c;
        }
        norm = std::sqrt(norm) + 1e-12;
        const double r = radius + 0.3 * rng.normal();
        for (int a = 0; a < 3; ++a) p.x[3 * static_cast<std::size_t>(i) + a] = v[a] / norm * r;
        p.v[static_cast<std::size_t>(i) * k_types +
            static_cast<std::size_t>(rng.below(k_types))] = 1.0;
    }
    return p;
}

inline MoleculeCloud random_ligand(Rng& rng, int n_atoms, int k_types, double spread = 2.0) {
    auto m = MoleculeCloud::zeros(n_atoms, k_types);
    for (int i = 0; i < n_atoms; ++i) {
        for (int a = 0; a < 3; ++a)
            m.x[3 * static_cast<std::size_t>(i) + a] = spread * rng.normal();
        m.v[static_cast<std::size_t>(i) * k_types +
            static_cast<std::size_t>(rng.below(k_types))] = 1.0;
    }
    return m;
}

}  // namespace ligdiff::testutil
