#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "ligdiff/errors.hpp"
#include "ligdiff/net.hpp"
#include "support/testutil.hpp"

using namespace ligdiff;
using namespace ligdiff::testutil;

namespace {

NetConfig small_denoiser() {
    NetConfig c;
    c.role = NetRole::denoiser;
    c.layers = 2;
    c.hidden_dim = 16;
    c.k_nn = 5;
    c.n_types = 4;
    c.rbf_bins = 8;
    return c;
}

NetConfig small_regressor(int out_dim = 1) {
    NetConfig c;
    c.role = NetRole::regressor;
    c.layers = 2;
    c.hidden_dim = 16;
    c.k_nn = 5;
    c.n_types = 4;
    c.rbf_bins = 8;
    c.out_dim = out_dim;
    return c;
}

void randomize_all(ParameterSet& p, Rng& rng, double scale = 0.3) {
    for (auto& v : p.values()) v = scale * rng.normal();
}

}  // namespace

TEST_CASE("fresh denoiser is an identity map on coordinates") {
    const auto cfg = small_denoiser();
    Egnn net(cfg);
    auto params = net.init_params(7);
    Rng rng(11);
    const auto pocket = random_pocket(rng, 12, 4);
    const auto lig = random_ligand(rng, 6, 4);
    const auto out = net.score_forward(params, lig.x, lig.v, 3, 10, pocket);
    // coordinate-update output layers are zero at init
    for (std::size_t i = 0; i < lig.x.size(); ++i) CHECK(out.x0_hat[i] == lig.x[i]);
}

TEST_CASE("denoiser forward is deterministic") {
    const auto cfg = small_denoiser();
    Egnn net(cfg);
    auto params = net.init_params(3);
    Rng rng(5);
    randomize_all(params, rng);
    const auto pocket = random_pocket(rng, 14, 4);
    const auto lig = random_ligand(rng, 7, 4);
    const auto a = net.score_forward(params, lig.x, lig.v, 4, 10, pocket);
    const auto b = net.score_forward(params, lig.x, lig.v, 4, 10, pocket);
    CHECK(std::memcmp(a.x0_hat.data(), b.x0_hat.data(), a.x0_hat.size() * 8) == 0);
    CHECK(std::memcmp(a.v0_logits.data(), b.v0_logits.data(), a.v0_logits.size() * 8) == 0);
}

TEST_CASE("denoiser equivariance under rotation and translation") {
    const auto cfg = small_denoiser();
    Egnn net(cfg);
    auto params = net.init_params(3);
    Rng rng(17);
    randomize_all(params, rng);

    for (int rep = 0; rep < 3; ++rep) {
        auto pocket = random_pocket(rng, 15, 4);
        auto lig = random_ligand(rng, 8, 4);
        const auto base = net.score_forward(params, lig.x, lig.v, 5, 10, pocket);

        const auto R = random_rotation(rng);
        auto pocket_r = pocket;
        apply_rotation(R, pocket_r.x);
        auto x_r = lig.x;
        apply_rotation(R, x_r);
        const auto rot = net.score_forward(params, x_r, lig.v, 5, 10, pocket_r);

        auto expect = base.x0_hat;
        apply_rotation(R, expect);
        CHECK(max_abs_diff(rot.x0_hat, expect) <= 1e-8);
        CHECK(max_abs_diff(rot.v0_logits, base.v0_logits) <= 1e-8);

        // joint translation shifts x0_hat and leaves logits untouched
        auto pocket_t = pocket;
        translate(pocket_t.x, 1.5, -2.0, 0.5);
        auto x_t = lig.x;
        translate(x_t, 1.5, -2.0, 0.5);
        const auto tr = net.score_forward(params, x_t, lig.v, 5, 10, pocket_t);
        auto expect_t = base.x0_hat;
        translate(expect_t, 1.5, -2.0, 0.5);
        CHECK(max_abs_diff(tr.x0_hat, expect_t) <= 1e-8);
        CHECK(max_abs_diff(tr.v0_logits, base.v0_logits) <= 1e-8);
    }
}

TEST_CASE("regressor invariance under rigid motion and atom permutation") {
    const auto cfg = small_regressor();
    Egnn net(cfg);
    auto params = net.init_params(9);
    Rng rng(23);
    randomize_all(params, rng);

    auto pocket = random_pocket(rng, 16, 4);
    auto lig = random_ligand(rng, 9, 4);
    const auto y0 = net.regressor_forward(params, pocket, lig);

    auto pocket_m = pocket;
    auto lig_m = lig;
    const auto R = random_rotation(rng);
    apply_rotation(R, pocket_m.x);
    apply_rotation(R, lig_m.x);
    translate(pocket_m.x, 5, 5, 5);
    translate(lig_m.x, 5, 5, 5);
    const auto y1 = net.regressor_forward(params, pocket_m, lig_m);
    CHECK(std::abs(y1[0] - y0[0]) <= 1e-8);

    // permute ligand atoms: reverse order
    auto lig_p = MoleculeCloud::zeros(lig.n_atoms, 4);
    for (int i = 0; i < lig.n_atoms; ++i) {
        const int s = lig.n_atoms - 1 - i;
        for (int a = 0; a < 3; ++a) lig_p.coord(i)[a] = lig.coord(s)[a];
        for (int kk = 0; kk < 4; ++kk) lig_p.types(i)[kk] = lig.types(s)[kk];
    }
    const auto y2 = net.regressor_forward(params, pocket, lig_p);
    CHECK(std::abs(y2[0] - y0[0]) <= 1e-10);
}

TEST_CASE("multi-constraint head has output length 3") {
    const auto cfg = small_regressor(3);
    Egnn net(cfg);
    auto params = net.init_params(2);
    Rng rng(31);
    randomize_all(params, rng);
    const auto pocket = random_pocket(rng, 10, 4);
    const auto lig = random_ligand(rng, 5, 4);
    const auto y = net.regressor_forward(params, pocket, lig);
    CHECK(y.size() == 3);
    for (double v : y) CHECK(std::isfinite(v));
}

TEST_CASE("regressor input gradient matches central finite differences") {
    const auto cfg = small_regressor();
    Egnn net(cfg);
    Rng rng(41);

    for (int rep = 0; rep < 3; ++rep) {
        auto params = net.init_params(100 + rep);
        randomize_all(params, rng);
        auto pocket = random_pocket(rng, 12, 4);
        auto lig = random_ligand(rng, 6, 4);

        TapeHandle tape;
        const auto y = net.regressor_forward(params, pocket, lig, tape.get());
        std::vector<double> d_coords;
        net.regressor_backward(params, *tape.get(), {1.0}, d_coords);
        REQUIRE(d_coords.size() == lig.x.size());

        const double h = 1e-5;
        double max_rel = 0.0;
        for (int probe = 0; probe < 5; ++probe) {
            const auto idx = static_cast<std::size_t>(rng.below(lig.x.size()));
            auto lp = lig, lm = lig;
            lp.x[idx] += h;
            lm.x[idx] -= h;
            const double fd =
                (net.regressor_forward(params, pocket, lp)[0] -
                 net.regressor_forward(params, pocket, lm)[0]) /
                (2 * h);
            const double rel = std::abs(fd - d_coords[idx]) /
                               std::max({std::abs(fd), std::abs(d_coords[idx]), 1e-6});
            max_rel = std::max(max_rel, rel);
        }
        CHECK(max_rel <= 1e-4);
        (void)y;
    }
}

TEST_CASE("constant loss gives exactly zero input gradient") {
    const auto cfg = small_regressor();
    Egnn net(cfg);
    auto params = net.init_params(5);
    Rng rng(43);
    randomize_all(params, rng);
    const auto pocket = random_pocket(rng, 10, 4);
    const auto lig = random_ligand(rng, 5, 4);
    TapeHandle tape;
    net.regressor_forward(params, pocket, lig, tape.get());
    std::vector<double> d_coords;
    net.regressor_backward(params, *tape.get(), {0.0}, d_coords);
    for (double v : d_coords) CHECK(v == 0.0);
}

TEST_CASE("rigid rotation of inputs rotates the input gradient") {
    const auto cfg = small_regressor();
    Egnn net(cfg);
    auto params = net.init_params(8);
    Rng rng(47);
    randomize_all(params, rng);
    auto pocket = random_pocket(rng, 12, 4);
    auto lig = random_ligand(rng, 6, 4);

    TapeHandle tape;
    net.regressor_forward(params, pocket, lig, tape.get());
    std::vector<double> g0;
    net.regressor_backward(params, *tape.get(), {1.0}, g0);

    const auto R = random_rotation(rng);
    auto pocket_r = pocket;
    auto lig_r = lig;
    apply_rotation(R, pocket_r.x);
    apply_rotation(R, lig_r.x);
    TapeHandle tape_r;
    net.regressor_forward(params, pocket_r, lig_r, tape_r.get());
    std::vector<double> g1;
    net.regressor_backward(params, *tape_r.get(), {1.0}, g1);

    auto expect = g0;
    apply_rotation(R, expect);
    CHECK(max_abs_diff(g1, expect) <= 1e-8);
}

TEST_CASE("regressor parameter gradient matches finite differences") {
    const auto cfg = small_regressor();
    Egnn net(cfg);
    Rng rng(53);

    for (int rep = 0; rep < 3; ++rep) {
        auto params = net.init_params(200 + rep);
        randomize_all(params, rng);
        auto pocket = random_pocket(rng, 10, 4);
        auto lig = random_ligand(rng, 6, 4);

        // loss = 0.5 * y^2 so d(loss)/dy = y
        TapeHandle tape;
        const auto y = net.regressor_forward(params, pocket, lig, tape.get());
        auto grad = params.zeros_like();
        std::vector<double> d_coords;
        net.regressor_backward(params, *tape.get(), {y[0]}, d_coords, &grad);

        const double h = 1e-5;
        double max_rel = 0.0;
        for (int probe = 0; probe < 10; ++probe) {
            const auto idx = static_cast<std::size_t>(rng.below(params.size()));
            auto pp = params, pm = params;
            pp.values()[idx] += h;
            pm.values()[idx] -= h;
            const double yp = net.regressor_forward(pp, pocket, lig)[0];
            const double ym = net.regressor_forward(pm, pocket, lig)[0];
            const double fd = (0.5 * yp * yp - 0.5 * ym * ym) / (2 * h);
            const double an = grad.values()[idx];
            const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
            max_rel = std::max(max_rel, rel);
        }
        CHECK(max_rel <= 1e-4);
    }
}

TEST_CASE("denoiser backward param gradient matches finite differences") {
    const auto cfg = small_denoiser();
    Egnn net(cfg);
    Rng rng(59);
    auto params = net.init_params(300);
    randomize_all(params, rng);
    auto pocket = random_pocket(rng, 10, 4);
    auto lig = random_ligand(rng, 5, 4);

    // loss = 0.5*|x0_hat|^2 + 0.5*|logits|^2
    auto loss_of = [&](const ParameterSet& p) {
        const auto out = net.score_forward(p, lig.x, lig.v, 3, 8, pocket);
        double L = 0.0;
        for (double v : out.x0_hat) L += 0.5 * v * v;
        for (double v : out.v0_logits) L += 0.5 * v * v;
        return L;
    };

    TapeHandle tape;
    const auto out = net.score_forward(params, lig.x, lig.v, 3, 8, pocket, std::nullopt,
                                       tape.get());
    auto grad = params.zeros_like();
    std::vector<double> d_xt;
    net.score_backward(params, *tape.get(), out.x0_hat, out.v0_logits, d_xt, &grad);

    const double h = 1e-5;
    double max_rel = 0.0;
    for (int probe = 0; probe < 10; ++probe) {
        const auto idx = static_cast<std::size_t>(rng.below(params.size()));
        auto pp = params, pm = params;
        pp.values()[idx] += h;
        pm.values()[idx] -= h;
        const double fd = (loss_of(pp) - loss_of(pm)) / (2 * h);
        const double an = grad.values()[idx];
        const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
        max_rel = std::max(max_rel, rel);
    }
    CHECK(max_rel <= 1e-4);
}

TEST_CASE("denoiser backward input gradient matches finite differences") {
    const auto cfg = small_denoiser();
    Egnn net(cfg);
    Rng rng(61);
    auto params = net.init_params(400);
    randomize_all(params, rng);
    auto pocket = random_pocket(rng, 10, 4);
    auto lig = random_ligand(rng, 5, 4);

    auto loss_of = [&](const std::vector<double>& x) {
        const auto out = net.score_forward(params, x, lig.v, 3, 8, pocket);
        double L = 0.0;
        for (double v : out.x0_hat) L += 0.5 * v * v;
        for (double v : out.v0_logits) L += 0.5 * v * v;
        return L;
    };

    TapeHandle tape;
    const auto out = net.score_forward(params, lig.x, lig.v, 3, 8, pocket, std::nullopt,
                                       tape.get());
    std::vector<double> d_xt;
    net.score_backward(params, *tape.get(), out.x0_hat, out.v0_logits, d_xt);

    const double h = 1e-5;
    double max_rel = 0.0;
    for (int probe = 0; probe < 5; ++probe) {
        const auto idx = static_cast<std::size_t>(rng.below(lig.x.size()));
        auto xp = lig.x, xm = lig.x;
        xp[idx] += h;
        xm[idx] -= h;
        const double fd = (loss_of(xp) - loss_of(xm)) / (2 * h);
        const double rel =
            std::abs(fd - d_xt[idx]) / std::max({std::abs(fd), std::abs(d_xt[idx]), 1e-6});
        max_rel = std::max(max_rel, rel);
    }
    CHECK(max_rel <= 1e-4);
}

TEST_CASE("conditional channels distinguish null from zero target") {
    auto cfg = small_denoiser();
    cfg.cond_channels = 2;
    Egnn net(cfg);
    auto params = net.init_params(77);
    Rng rng(67);
    randomize_all(params, rng);
    const auto pocket = random_pocket(rng, 10, 4);
    const auto lig = random_ligand(rng, 5, 4);

    CondInput null_cond;  // absent
    CondInput zero_cond{0.0, true};
    const auto a = net.score_forward(params, lig.x, lig.v, 3, 8, pocket, null_cond);
    const auto b = net.score_forward(params, lig.x, lig.v, 3, 8, pocket, zero_cond);
    // mask channel separates (0, absent) from (0, present)
    CHECK(max_abs_diff(a.v0_logits, b.v0_logits) > 0.0);

    CHECK_THROWS_AS(net.score_forward(params, lig.x, lig.v, 3, 8, pocket, std::nullopt),
                    DomainError);
}

TEST_CASE("shape mismatches are rejected") {
    const auto cfg = small_denoiser();
    Egnn net(cfg);
    auto params = net.init_params(1);
    Rng rng(71);
    const auto pocket = random_pocket(rng, 8, 4);
    const auto lig = random_ligand(rng, 5, 4);
    auto bad_v = lig.v;
    bad_v.pop_back();
    CHECK_THROWS_AS(net.score_forward(params, lig.x, bad_v, 3, 8, pocket), DomainError);
    CHECK_THROWS_AS(net.score_forward(params, lig.x, lig.v, 0, 8, pocket), DomainError);
    CHECK_THROWS_AS(net.score_forward(params, lig.x, lig.v, 9, 8, pocket), DomainError);
}

TEST_CASE("knn clamps to the joint cloud size on tiny systems") {
    auto cfg = small_denoiser();
    cfg.k_nn = 50;  // far more than the atoms available
    Egnn net(cfg);
    auto params = net.init_params(4);
    Rng rng(81);
    randomize_all(params, rng);
    const auto pocket = random_pocket(rng, 3, 4);
    const auto lig = random_ligand(rng, 2, 4);
    const auto out = net.score_forward(params, lig.x, lig.v, 2, 5, pocket);
    CHECK(out.x0_hat.size() == lig.x.size());
    for (double v : out.x0_hat) CHECK(std::isfinite(v));

    // single ligand atom in a one-atom pocket still runs
    const auto pocket1 = random_pocket(rng, 1, 4);
    const auto lig1 = random_ligand(rng, 1, 4);
    const auto out1 = net.score_forward(params, lig1.x, lig1.v, 2, 5, pocket1);
    CHECK(out1.v0_logits.size() == 4);
}

TEST_CASE("checkpoint save/load round-trips bitwise") {
    const auto cfg = small_regressor(3);
    Egnn net(cfg);
    auto params = net.init_params(123);
    Rng rng(73);
    randomize_all(params, rng);

    const std::string path = "test_ckpt_roundtrip.bin";
    save_checkpoint(path, cfg, params, "{\"note\":\"unit\"}");
    const auto ck = load_checkpoint(path);
    REQUIRE(ck.params.size() == params.size());
    CHECK(std::memcmp(ck.params.data(), params.data(), params.size() * 8) == 0);
    CHECK(ck.cfg.out_dim == 3);
    CHECK(ck.cfg.role == NetRole::regressor);
    CHECK(ck.params.layout_hash() == params.layout_hash());
    std::remove(path.c_str());
}
