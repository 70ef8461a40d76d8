#include "ligdiff/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "ligdiff/errors.hpp"

namespace ligdiff {

void NetConfig::validate() const {
    if (layers < 1) throw DomainError("net: layers must be >= 1");
    if (hidden_dim < 4) throw DomainError("net: hidden_dim must be >= 4");
    if (k_nn < 1) throw DomainError("net: k_nn must be >= 1");
    if (n_types < 1) throw DomainError("net: n_types must be >= 1");
    if (cond_channels != 0 && cond_channels != 2)
        throw DomainError("net: cond_channels must be 0 or 2");
    if (role == NetRole::regressor && cond_channels != 0)
        throw DomainError("net: regressor takes no conditioning channels");
    if (out_dim < 1) throw DomainError("net: out_dim must be >= 1");
    if (rbf_bins < 2 || rbf_max <= 0.0) throw DomainError("net: bad rbf settings");
}

int NetConfig::feature_dim() const {
    // one-hot types + is_ligand flag (+ time channel and conditioning for the denoiser)
    int f = n_types + 1;
    if (role == NetRole::denoiser) f += 1 + cond_channels;
    return f;
}

std::string NetConfig::to_json() const {
    nlohmann::json j;
    j["layers"] = layers;
    j["hidden_dim"] = hidden_dim;
    j["k_nn"] = k_nn;
    j["heads"] = heads;
    j["role"] = role == NetRole::denoiser ? "denoiser" : "regressor";
    j["cond_channels"] = cond_channels;
    j["n_types"] = n_types;
    j["out_dim"] = out_dim;
    j["rbf_bins"] = rbf_bins;
    j["rbf_max"] = rbf_max;
    j["cond_null"] = cond_null == CondNullMode::mask ? "mask" : "sentinel";
    j["cond_sentinel"] = cond_sentinel;
    return j.dump();
}

NetConfig NetConfig::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    NetConfig c;
    c.layers = j.at("layers").get<int>();
    c.hidden_dim = j.at("hidden_dim").get<int>();
    c.k_nn = j.at("k_nn").get<int>();
    c.heads = j.at("heads").get<int>();
    c.role = j.at("role").get<std::string>() == "denoiser" ? NetRole::denoiser
                                                           : NetRole::regressor;
    c.cond_channels = j.at("cond_channels").get<int>();
    c.n_types = j.at("n_types").get<int>();
    c.out_dim = j.at("out_dim").get<int>();
    c.rbf_bins = j.at("rbf_bins").get<int>();
    c.rbf_max = j.at("rbf_max").get<double>();
    c.cond_null = j.at("cond_null").get<std::string>() == "mask" ? CondNullMode::mask
                                                                 : CondNullMode::sentinel;
    c.cond_sentinel = j.at("cond_sentinel").get<double>();
    c.validate();
    return c;
}

// --- ParameterSet ------------------------------------------------------------

ParameterSet::ParameterSet(std::vector<Segment> layout) : layout_(std::move(layout)) {
    std::size_t total = 0;
    for (auto& s : layout_) {
        s.offset = total;
        total += s.count();
    }
    data_.assign(total, 0.0);
}

const ParameterSet::Segment& ParameterSet::segment(const std::string& name) const {
    for (const auto& s : layout_)
        if (s.name == name) return s;
    throw DomainError("parameter segment not found: " + name);
}

namespace {

std::uint64_t fnv1a(const void* bytes, std::size_t n, std::uint64_t h = 0xCBF29CE484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace

std::uint64_t ParameterSet::layout_hash() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const auto& s : layout_) {
        h = fnv1a(s.name.data(), s.name.size(), h);
        const int dims[2] = {s.rows, s.cols};
        h = fnv1a(dims, sizeof(dims), h);
    }
    return h;
}

std::uint64_t ParameterSet::content_hash() const {
    return fnv1a(data_.data(), data_.size() * sizeof(double));
}

bool ParameterSet::finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

ParameterSet ParameterSet::zeros_like() const {
    ParameterSet p;
    p.layout_ = layout_;
    p.data_.assign(data_.size(), 0.0);
    return p;
}

// --- dense helpers -----------------------------------------------------------

namespace {

inline double silu(double z) { return z / (1.0 + std::exp(-z)); }

inline double silu_grad(double z) {
    const double s = 1.0 / (1.0 + std::exp(-z));
    return s * (1.0 + z * (1.0 - s));
}

// y = W x + b, W is rows x cols row-major
inline void affine(const double* W, const double* b, const double* x, double* y, int rows,
                   int cols) {
    for (int r = 0; r < rows; ++r) {
        double acc = b[r];
        const double* w = W + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) acc += w[c] * x[c];
        y[r] = acc;
    }
}

// dx += W^T dy ; dW += dy x^T ; db += dy
inline void affine_backward(const double* W, const double* x, const double* dy, double* dx,
                            double* dW, double* db, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        const double g = dy[r];
        const double* w = W + static_cast<std::size_t>(r) * cols;
        if (dx)
            for (int c = 0; c < cols; ++c) dx[c] += w[c] * g;
        if (dW) {
            double* dwr = dW + static_cast<std::size_t>(r) * cols;
            for (int c = 0; c < cols; ++c) dwr[c] += g * x[c];
        }
        if (db) db[r] += g;
    }
}

}  // namespace

// --- tape --------------------------------------------------------------------

struct LayerTape {
    std::vector<double> x_in;   // n_lig x 3 ligand coords at layer entry
    std::vector<double> h_in;   // n_lig x H ligand features at layer entry
    std::vector<double> rbf;    // E x M
    std::vector<double> d;      // E
    std::vector<double> r;      // E x 3
    std::vector<double> m1pre, m1, m2pre, msg;  // E x H
    std::vector<double> g1pre, g1;              // E x H
    std::vector<double> w;                      // E
    std::vector<double> s;                      // n_lig x H message sums
    std::vector<double> n1pre, n1;              // n_lig x H
};

struct Tape {
    int n_lig = 0;
    int n_all = 0;
    int k = 0;
    std::vector<double> coords;     // n_all x 3 input coords (ligand rows first)
    std::vector<double> feats_raw;  // n_all x F0
    std::vector<int> nbr;           // n_lig x k global node indices
    std::vector<double> h0;         // n_all x H embedded features
    std::vector<LayerTape> layers;
    std::vector<double> x_out;  // n_lig x 3
    std::vector<double> h_out;  // n_lig x H
    std::vector<double> pool, z1pre, z1;  // regressor head intermediates
};

Tape* tape_alloc() { return new Tape(); }
void tape_free(Tape* t) { delete t; }

// --- Egnn --------------------------------------------------------------------

Egnn::Egnn(NetConfig cfg) : cfg_(cfg) { cfg_.validate(); }

ParameterSet Egnn::make_layout() const {
    const int H = cfg_.hidden_dim;
    const int M = cfg_.rbf_bins;
    const int F0 = cfg_.feature_dim();
    std::vector<ParameterSet::Segment> layout;
    auto mat = [&](const std::string& n, int r, int c) { layout.push_back({n, r, c, 0}); };
    auto vec = [&](const std::string& n, int r) { layout.push_back({n, r, 0, 0}); };

    mat("embed.W", H, F0);
    vec("embed.b", H);
    for (int l = 0; l < cfg_.layers; ++l) {
        const std::string p = "L" + std::to_string(l) + ".";
        mat(p + "msg.W1", H, 2 * H + M);
        vec(p + "msg.b1", H);
        mat(p + "msg.W2", H, H);
        vec(p + "msg.b2", H);
        mat(p + "crd.W1", H, H);
        vec(p + "crd.b1", H);
        mat(p + "crd.W2", 1, H);
        vec(p + "crd.b2", 1);
        mat(p + "nod.W1", H, 2 * H);
        vec(p + "nod.b1", H);
        mat(p + "nod.W2", H, H);
        vec(p + "nod.b2", H);
    }
    if (cfg_.role == NetRole::denoiser) {
        mat("head.type.W", cfg_.n_types, H);
        vec("head.type.b", cfg_.n_types);
    } else {
        mat("head.reg.W1", H, H);
        vec("head.reg.b1", H);
        mat("head.reg.W2", cfg_.out_dim, H);
        vec("head.reg.b2", cfg_.out_dim);
    }
    return ParameterSet(std::move(layout));
}

ParameterSet Egnn::init_params(std::uint64_t seed) const {
    ParameterSet p = make_layout();
    Rng rng(seed);
    for (const auto& s : p.layout()) {
        double* d = p.segment_data(s);
        if (s.cols == 0) continue;  // biases stay zero
        // coordinate-update output layers start at zero: identity on coords
        if (s.name.find("crd.W2") != std::string::npos) continue;
        const double a = std::sqrt(6.0 / (s.rows + s.cols));
        for (std::size_t i = 0; i < s.count(); ++i) d[i] = rng.uniform(-a, a);
    }
    return p;
}

namespace {

struct TrunkParams {
    const double *eW, *eb;
    struct Layer {
        const double *mW1, *mb1, *mW2, *mb2;
        const double *cW1, *cb1, *cW2, *cb2;
        const double *nW1, *nb1, *nW2, *nb2;
    };
    std::vector<Layer> layers;
};

TrunkParams bind_trunk(const NetConfig& cfg, const ParameterSet& p) {
    TrunkParams t;
    t.eW = p.segment_data(p.segment("embed.W"));
    t.eb = p.segment_data(p.segment("embed.b"));
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string pr = "L" + std::to_string(l) + ".";
        TrunkParams::Layer lay;
        lay.mW1 = p.segment_data(p.segment(pr + "msg.W1"));
        lay.mb1 = p.segment_data(p.segment(pr + "msg.b1"));
        lay.mW2 = p.segment_data(p.segment(pr + "msg.W2"));
        lay.mb2 = p.segment_data(p.segment(pr + "msg.b2"));
        lay.cW1 = p.segment_data(p.segment(pr + "crd.W1"));
        lay.cb1 = p.segment_data(p.segment(pr + "crd.b1"));
        lay.cW2 = p.segment_data(p.segment(pr + "crd.W2"));
        lay.cb2 = p.segment_data(p.segment(pr + "crd.b2"));
        lay.nW1 = p.segment_data(p.segment(pr + "nod.W1"));
        lay.nb1 = p.segment_data(p.segment(pr + "nod.b1"));
        lay.nW2 = p.segment_data(p.segment(pr + "nod.W2"));
        lay.nb2 = p.segment_data(p.segment(pr + "nod.b2"));
        t.layers.push_back(lay);
    }
    return t;
}

struct TrunkGrads {
    double *eW, *eb;
    struct Layer {
        double *mW1, *mb1, *mW2, *mb2;
        double *cW1, *cb1, *cW2, *cb2;
        double *nW1, *nb1, *nW2, *nb2;
    };
    std::vector<Layer> layers;
};

TrunkGrads bind_trunk_grads(const NetConfig& cfg, ParameterSet& p) {
    TrunkGrads t;
    t.eW = p.segment_data(p.segment("embed.W"));
    t.eb = p.segment_data(p.segment("embed.b"));
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string pr = "L" + std::to_string(l) + ".";
        TrunkGrads::Layer lay;
        lay.mW1 = p.segment_data(p.segment(pr + "msg.W1"));
        lay.mb1 = p.segment_data(p.segment(pr + "msg.b1"));
        lay.mW2 = p.segment_data(p.segment(pr + "msg.W2"));
        lay.mb2 = p.segment_data(p.segment(pr + "msg.b2"));
        lay.cW1 = p.segment_data(p.segment(pr + "crd.W1"));
        lay.cb1 = p.segment_data(p.segment(pr + "crd.b1"));
        lay.cW2 = p.segment_data(p.segment(pr + "crd.W2"));
        lay.cb2 = p.segment_data(p.segment(pr + "crd.b2"));
        lay.nW1 = p.segment_data(p.segment(pr + "nod.W1"));
        lay.nb1 = p.segment_data(p.segment(pr + "nod.b1"));
        lay.nW2 = p.segment_data(p.segment(pr + "nod.W2"));
        lay.nb2 = p.segment_data(p.segment(pr + "nod.b2"));
        t.layers.push_back(lay);
    }
    return t;
}

// k nearest neighbors of every ligand atom over the joint cloud, ties broken
// by node index, sorted ascending so aggregation order is reproducible.
void build_knn(Tape& tp, int k_nn) {
    const int n_all = tp.n_all;
    const int n_lig = tp.n_lig;
    const int k = std::min(k_nn, n_all - 1);
    tp.k = k;
    tp.nbr.assign(static_cast<std::size_t>(n_lig) * k, 0);
    std::vector<std::pair<double, int>> cand(n_all);
    for (int i = 0; i < n_lig; ++i) {
        const double* xi = &tp.coords[3 * static_cast<std::size_t>(i)];
        for (int j = 0; j < n_all; ++j) {
            const double* xj = &tp.coords[3 * static_cast<std::size_t>(j)];
            const double dx = xi[0] - xj[0], dy = xi[1] - xj[1], dz = xi[2] - xj[2];
            cand[j] = {dx * dx + dy * dy + dz * dz, j};
        }
        cand[i].first = std::numeric_limits<double>::infinity();  // exclude self
        std::sort(cand.begin(), cand.end());
        for (int m = 0; m < k; ++m) tp.nbr[static_cast<std::size_t>(i) * k + m] = cand[m].second;
    }
}

void run_trunk(const NetConfig& cfg, const TrunkParams& P, Tape& tp) {
    const int H = cfg.hidden_dim;
    const int M = cfg.rbf_bins;
    const int F0 = cfg.feature_dim();
    const int n_lig = tp.n_lig;
    const int n_all = tp.n_all;
    const double mu_step = cfg.rbf_max / (M - 1);
    const double inv_two_sig2 = 1.0 / (2.0 * mu_step * mu_step);

    build_knn(tp, cfg.k_nn);
    const int k = tp.k;
    const std::size_t E = static_cast<std::size_t>(n_lig) * k;

    tp.h0.assign(static_cast<std::size_t>(n_all) * H, 0.0);
    for (int n = 0; n < n_all; ++n)
        affine(P.eW, P.eb, &tp.feats_raw[static_cast<std::size_t>(n) * F0],
               &tp.h0[static_cast<std::size_t>(n) * H], H, F0);

    std::vector<double> x(tp.coords.begin(), tp.coords.begin() + 3 * n_lig);
    std::vector<double> h(tp.h0.begin(), tp.h0.begin() + static_cast<std::size_t>(n_lig) * H);

    tp.layers.assign(cfg.layers, LayerTape{});
    std::vector<double> a(2 * H + M), q(2 * H), upd(H);

    for (int l = 0; l < cfg.layers; ++l) {
        auto& L = tp.layers[l];
        const auto& W = P.layers[l];
        L.x_in = x;
        L.h_in = h;
        L.rbf.assign(E * M, 0.0);
        L.d.assign(E, 0.0);
        L.r.assign(E * 3, 0.0);
        L.m1pre.assign(E * H, 0.0);
        L.m1.assign(E * H, 0.0);
        L.m2pre.assign(E * H, 0.0);
        L.msg.assign(E * H, 0.0);
        L.g1pre.assign(E * H, 0.0);
        L.g1.assign(E * H, 0.0);
        L.w.assign(E, 0.0);
        L.s.assign(static_cast<std::size_t>(n_lig) * H, 0.0);
        L.n1pre.assign(static_cast<std::size_t>(n_lig) * H, 0.0);
        L.n1.assign(static_cast<std::size_t>(n_lig) * H, 0.0);

        std::vector<double> dx(static_cast<std::size_t>(n_lig) * 3, 0.0);

        for (int i = 0; i < n_lig; ++i) {
            const double* xi = &L.x_in[3 * static_cast<std::size_t>(i)];
            const double* hi = &L.h_in[static_cast<std::size_t>(i) * H];
            double* si = &L.s[static_cast<std::size_t>(i) * H];
            for (int m = 0; m < k; ++m) {
                const std::size_t e = static_cast<std::size_t>(i) * k + m;
                const int j = tp.nbr[e];
                const double* xj = j < n_lig ? &L.x_in[3 * static_cast<std::size_t>(j)]
                                             : &tp.coords[3 * static_cast<std::size_t>(j)];
                const double* hj = j < n_lig ? &L.h_in[static_cast<std::size_t>(j) * H]
                                             : &tp.h0[static_cast<std::size_t>(j) * H];
                double* r = &L.r[3 * e];
                r[0] = xi[0] - xj[0];
                r[1] = xi[1] - xj[1];
                r[2] = xi[2] - xj[2];
                const double d2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
                const double d = std::sqrt(d2 + 1e-12);
                L.d[e] = d;
                double* rbf = &L.rbf[e * M];
                for (int b = 0; b < M; ++b) {
                    const double u = d - b * mu_step;
                    rbf[b] = std::exp(-u * u * inv_two_sig2);
                }

                std::copy(hi, hi + H, a.begin());
                std::copy(hj, hj + H, a.begin() + H);
                std::copy(rbf, rbf + M, a.begin() + 2 * H);

                double* m1pre = &L.m1pre[e * H];
                double* m1 = &L.m1[e * H];
                double* m2pre = &L.m2pre[e * H];
                double* msg = &L.msg[e * H];
                double* g1pre = &L.g1pre[e * H];
                double* g1 = &L.g1[e * H];
                affine(W.mW1, W.mb1, a.data(), m1pre, H, 2 * H + M);
                for (int c = 0; c < H; ++c) m1[c] = silu(m1pre[c]);
                affine(W.mW2, W.mb2, m1, m2pre, H, H);
                for (int c = 0; c < H; ++c) msg[c] = silu(m2pre[c]);
                affine(W.cW1, W.cb1, msg, g1pre, H, H);
                for (int c = 0; c < H; ++c) g1[c] = silu(g1pre[c]);
                double wsc = W.cb2[0];
                for (int c = 0; c < H; ++c) wsc += W.cW2[c] * g1[c];
                L.w[e] = wsc;

                double* dxi = &dx[3 * static_cast<std::size_t>(i)];
                dxi[0] += r[0] * wsc;
                dxi[1] += r[1] * wsc;
                dxi[2] += r[2] * wsc;
                for (int c = 0; c < H; ++c) si[c] += msg[c];
            }
        }

        for (int i = 0; i < n_lig; ++i) {
            const double* hi = &L.h_in[static_cast<std::size_t>(i) * H];
            std::copy(hi, hi + H, q.begin());
            std::copy(&L.s[static_cast<std::size_t>(i) * H],
                      &L.s[static_cast<std::size_t>(i) * H] + H, q.begin() + H);
            double* n1pre = &L.n1pre[static_cast<std::size_t>(i) * H];
            double* n1 = &L.n1[static_cast<std::size_t>(i) * H];
            affine(W.nW1, W.nb1, q.data(), n1pre, H, 2 * H);
            for (int c = 0; c < H; ++c) n1[c] = silu(n1pre[c]);
            affine(W.nW2, W.nb2, n1, upd.data(), H, H);
            double* hout = &h[static_cast<std::size_t>(i) * H];
            for (int c = 0; c < H; ++c) hout[c] = hi[c] + upd[c];
            double* xout = &x[3 * static_cast<std::size_t>(i)];
            const double* dxi = &dx[3 * static_cast<std::size_t>(i)];
            xout[0] = L.x_in[3 * static_cast<std::size_t>(i)] + dxi[0];
            xout[1] = L.x_in[3 * static_cast<std::size_t>(i) + 1] + dxi[1];
            xout[2] = L.x_in[3 * static_cast<std::size_t>(i) + 2] + dxi[2];
        }
    }

    tp.x_out = std::move(x);
    tp.h_out = std::move(h);
}

// Reverse sweep. d_x / d_h arrive as gradients on the trunk outputs and leave
// as gradients on the input ligand coordinates / embedded features.
void trunk_backward(const NetConfig& cfg, const TrunkParams& P, const Tape& tp,
                    std::vector<double>& d_x, std::vector<double>& d_h,
                    std::vector<double>& d_h0_pocket, TrunkGrads* G) {
    const int H = cfg.hidden_dim;
    const int M = cfg.rbf_bins;
    const int n_lig = tp.n_lig;
    const int k = tp.k;
    const double mu_step = cfg.rbf_max / (M - 1);
    const double inv_sig2 = 1.0 / (mu_step * mu_step);

    std::vector<double> q(2 * H), dq(2 * H), d_n1(H), d_n1pre(H), d_upd(H);
    std::vector<double> a(2 * H + M), da(2 * H + M);
    std::vector<double> d_msg(H), d_m2pre(H), d_m1(H), d_m1pre(H), d_g1(H), d_g1pre(H);
    std::vector<double> d_s(static_cast<std::size_t>(n_lig) * H);
    std::vector<double> d_h_in(static_cast<std::size_t>(n_lig) * H);
    std::vector<double> d_x_in(static_cast<std::size_t>(n_lig) * 3);

    for (int l = cfg.layers - 1; l >= 0; --l) {
        const auto& L = tp.layers[l];
        const auto& W = P.layers[l];
        TrunkGrads::Layer* g = G ? &G->layers[l] : nullptr;

        std::fill(d_s.begin(), d_s.end(), 0.0);
        std::fill(d_h_in.begin(), d_h_in.end(), 0.0);
        std::fill(d_x_in.begin(), d_x_in.end(), 0.0);

        // node-update backward
        for (int i = 0; i < n_lig; ++i) {
            const double* dh_out = &d_h[static_cast<std::size_t>(i) * H];
            const double* n1 = &L.n1[static_cast<std::size_t>(i) * H];
            const double* n1pre = &L.n1pre[static_cast<std::size_t>(i) * H];
            std::fill(d_n1.begin(), d_n1.end(), 0.0);
            affine_backward(W.nW2, n1, dh_out, d_n1.data(), g ? g->nW2 : nullptr,
                            g ? g->nb2 : nullptr, H, H);
            for (int c = 0; c < H; ++c) d_n1pre[c] = silu_grad(n1pre[c]) * d_n1[c];
            std::copy(&L.h_in[static_cast<std::size_t>(i) * H],
                      &L.h_in[static_cast<std::size_t>(i) * H] + H, q.begin());
            std::copy(&L.s[static_cast<std::size_t>(i) * H],
                      &L.s[static_cast<std::size_t>(i) * H] + H, q.begin() + H);
            std::fill(dq.begin(), dq.end(), 0.0);
            affine_backward(W.nW1, q.data(), d_n1pre.data(), dq.data(), g ? g->nW1 : nullptr,
                            g ? g->nb1 : nullptr, H, 2 * H);
            double* dhi = &d_h_in[static_cast<std::size_t>(i) * H];
            for (int c = 0; c < H; ++c) dhi[c] += dh_out[c] + dq[c];  // residual + MLP path
            double* dsi = &d_s[static_cast<std::size_t>(i) * H];
            for (int c = 0; c < H; ++c) dsi[c] += dq[H + c];
            for (int c = 0; c < 3; ++c)
                d_x_in[3 * static_cast<std::size_t>(i) + c] +=
                    d_x[3 * static_cast<std::size_t>(i) + c];  // coord residual
        }

        // edge backward
        for (int i = 0; i < n_lig; ++i) {
            const double* dxi_out = &d_x[3 * static_cast<std::size_t>(i)];
            const double* hi = &L.h_in[static_cast<std::size_t>(i) * H];
            for (int m = 0; m < k; ++m) {
                const std::size_t e = static_cast<std::size_t>(i) * k + m;
                const int j = tp.nbr[e];
                const double* r = &L.r[3 * e];
                const double* rbf = &L.rbf[e * M];
                const double* m1 = &L.m1[e * H];
                const double* m1pre = &L.m1pre[e * H];
                const double* m2pre = &L.m2pre[e * H];
                const double* msg = &L.msg[e * H];
                const double* g1 = &L.g1[e * H];
                const double* g1pre = &L.g1pre[e * H];
                const double* hj = j < n_lig ? &L.h_in[static_cast<std::size_t>(j) * H]
                                             : &tp.h0[static_cast<std::size_t>(j) * H];

                // coordinate increment: dx_i += r * w
                const double d_w = r[0] * dxi_out[0] + r[1] * dxi_out[1] + r[2] * dxi_out[2];
                double d_r[3] = {L.w[e] * dxi_out[0], L.w[e] * dxi_out[1], L.w[e] * dxi_out[2]};

                // coordinate MLP
                std::fill(d_g1.begin(), d_g1.end(), 0.0);
                for (int c = 0; c < H; ++c) d_g1[c] += W.cW2[c] * d_w;
                if (g) {
                    for (int c = 0; c < H; ++c) g->cW2[c] += d_w * g1[c];
                    g->cb2[0] += d_w;
                }
                for (int c = 0; c < H; ++c) d_g1pre[c] = silu_grad(g1pre[c]) * d_g1[c];
                std::fill(d_msg.begin(), d_msg.end(), 0.0);
                affine_backward(W.cW1, msg, d_g1pre.data(), d_msg.data(), g ? g->cW1 : nullptr,
                                g ? g->cb1 : nullptr, H, H);

                // message sum path
                const double* dsi = &d_s[static_cast<std::size_t>(i) * H];
                for (int c = 0; c < H; ++c) d_msg[c] += dsi[c];

                // message MLP
                for (int c = 0; c < H; ++c) d_m2pre[c] = silu_grad(m2pre[c]) * d_msg[c];
                std::fill(d_m1.begin(), d_m1.end(), 0.0);
                affine_backward(W.mW2, m1, d_m2pre.data(), d_m1.data(), g ? g->mW2 : nullptr,
                                g ? g->mb2 : nullptr, H, H);
                for (int c = 0; c < H; ++c) d_m1pre[c] = silu_grad(m1pre[c]) * d_m1[c];
                std::copy(hi, hi + H, a.begin());
                std::copy(hj, hj + H, a.begin() + H);
                std::copy(rbf, rbf + M, a.begin() + 2 * H);
                std::fill(da.begin(), da.end(), 0.0);
                affine_backward(W.mW1, a.data(), d_m1pre.data(), da.data(), g ? g->mW1 : nullptr,
                                g ? g->mb1 : nullptr, H, 2 * H + M);

                double* dhi = &d_h_in[static_cast<std::size_t>(i) * H];
                for (int c = 0; c < H; ++c) dhi[c] += da[c];
                if (j < n_lig) {
                    double* dhj = &d_h_in[static_cast<std::size_t>(j) * H];
                    for (int c = 0; c < H; ++c) dhj[c] += da[H + c];
                } else {
                    double* dh0j = &d_h0_pocket[static_cast<std::size_t>(j) * H];
                    for (int c = 0; c < H; ++c) dh0j[c] += da[H + c];
                }

                // rbf -> distance -> relative vector
                double d_d = 0.0;
                for (int b = 0; b < M; ++b) {
                    const double u = L.d[e] - b * mu_step;
                    d_d += da[2 * H + b] * (-u * inv_sig2) * rbf[b];
                }
                const double scale = d_d / L.d[e];
                d_r[0] += scale * r[0];
                d_r[1] += scale * r[1];
                d_r[2] += scale * r[2];

                double* dxi_in = &d_x_in[3 * static_cast<std::size_t>(i)];
                dxi_in[0] += d_r[0];
                dxi_in[1] += d_r[1];
                dxi_in[2] += d_r[2];
                if (j < n_lig) {
                    double* dxj_in = &d_x_in[3 * static_cast<std::size_t>(j)];
                    dxj_in[0] -= d_r[0];
                    dxj_in[1] -= d_r[1];
                    dxj_in[2] -= d_r[2];
                }
            }
        }

        d_x = d_x_in;
        d_h = d_h_in;
    }
}

void embed_backward(const NetConfig& cfg, const Tape& tp, const std::vector<double>& d_h0_lig,
                    const std::vector<double>& d_h0_pocket, TrunkGrads& G) {
    const int H = cfg.hidden_dim;
    const int F0 = cfg.feature_dim();
    for (int n = 0; n < tp.n_all; ++n) {
        const double* dh = n < tp.n_lig ? &d_h0_lig[static_cast<std::size_t>(n) * H]
                                        : &d_h0_pocket[static_cast<std::size_t>(n) * H];
        const double* u = &tp.feats_raw[static_cast<std::size_t>(n) * F0];
        for (int r = 0; r < H; ++r) {
            const double gr = dh[r];
            if (gr == 0.0) continue;
            double* w = G.eW + static_cast<std::size_t>(r) * F0;
            for (int c = 0; c < F0; ++c) w[c] += gr * u[c];
            G.eb[r] += gr;
        }
    }
}

void fill_features(const NetConfig& cfg, Tape& tp, const std::vector<double>& lig_types,
                   const PocketCloud& pocket, int t, int T,
                   const std::optional<CondInput>& cond) {
    const int K = cfg.n_types;
    const int F0 = cfg.feature_dim();
    const int n_lig = tp.n_lig;
    tp.feats_raw.assign(static_cast<std::size_t>(tp.n_all) * F0, 0.0);

    double cond_vals[2] = {0.0, 0.0};
    if (cfg.cond_channels == 2) {
        if (!cond) throw DomainError("net: conditional denoiser requires a condition input");
        if (cfg.cond_null == CondNullMode::mask) {
            if (cond->present) {
                cond_vals[0] = cond->g_norm;
                cond_vals[1] = 1.0;
            }
        } else {
            cond_vals[0] = cond->present ? cond->g_norm : cfg.cond_sentinel;
        }
    } else if (cond && cond->present) {
        throw DomainError("net: condition given to an unconditional network");
    }

    const double t_norm = static_cast<double>(t) / T;
    for (int n = 0; n < tp.n_all; ++n) {
        double* u = &tp.feats_raw[static_cast<std::size_t>(n) * F0];
        const double* types = n < n_lig ? &lig_types[static_cast<std::size_t>(n) * K]
                                        : pocket.types(n - n_lig);
        for (int c = 0; c < K; ++c) u[c] = types[c];
        u[K] = n < n_lig ? 1.0 : 0.0;  // is_ligand
        int at = K + 1;
        if (cfg.role == NetRole::denoiser) {
            u[at++] = t_norm;
            for (int c = 0; c < cfg.cond_channels; ++c) u[at++] = cond_vals[c];
        }
    }
}

void fill_coords(Tape& tp, const std::vector<double>& lig_coords, const PocketCloud& pocket) {
    tp.coords.resize(static_cast<std::size_t>(tp.n_all) * 3);
    std::copy(lig_coords.begin(), lig_coords.end(), tp.coords.begin());
    std::copy(pocket.x.begin(), pocket.x.end(),
              tp.coords.begin() + static_cast<std::size_t>(tp.n_lig) * 3);
}

}  // namespace

ScoreOutput Egnn::score_forward(const ParameterSet& params, const std::vector<double>& x_t,
                                const std::vector<double>& v_t, int t, int T,
                                const PocketCloud& pocket, const std::optional<CondInput>& cond,
                                Tape* tape) const {
    if (cfg_.role != NetRole::denoiser) throw DomainError("net: score_forward needs a denoiser");
    const int n_lig = static_cast<int>(x_t.size() / 3);
    if (x_t.size() != static_cast<std::size_t>(n_lig) * 3 || n_lig < 1 ||
        v_t.size() != static_cast<std::size_t>(n_lig) * cfg_.n_types ||
        pocket.n_types != cfg_.n_types)
        throw DomainError("net: shape mismatch in score_forward");
    if (t < 1 || t > T) throw DomainError("net: step index out of range");

    TapeHandle local;
    Tape& tp = tape ? *tape : *local.get();
    tp.n_lig = n_lig;
    tp.n_all = n_lig + pocket.n_atoms;
    fill_coords(tp, x_t, pocket);
    fill_features(cfg_, tp, v_t, pocket, t, T, cond);

    const auto P = bind_trunk(cfg_, params);
    run_trunk(cfg_, P, tp);

    ScoreOutput out;
    out.x0_hat = tp.x_out;
    out.v0_logits.assign(static_cast<std::size_t>(n_lig) * cfg_.n_types, 0.0);
    const auto& Wv = params.segment("head.type.W");
    const auto& bv = params.segment("head.type.b");
    for (int i = 0; i < n_lig; ++i)
        affine(params.segment_data(Wv), params.segment_data(bv),
               &tp.h_out[static_cast<std::size_t>(i) * cfg_.hidden_dim],
               &out.v0_logits[static_cast<std::size_t>(i) * cfg_.n_types], cfg_.n_types,
               cfg_.hidden_dim);
    return out;
}

void Egnn::score_backward(const ParameterSet& params, const Tape& tp,
                          const std::vector<double>& d_x0_hat,
                          const std::vector<double>& d_v0_logits, std::vector<double>& d_xt,
                          ParameterSet* d_params) const {
    const int H = cfg_.hidden_dim;
    const int K = cfg_.n_types;
    const int n_lig = tp.n_lig;

    std::vector<double> d_x = d_x0_hat;
    std::vector<double> d_h(static_cast<std::size_t>(n_lig) * H, 0.0);

    TrunkGrads G;
    ParameterSet* gp = d_params;
    if (gp) G = bind_trunk_grads(cfg_, *gp);

    // type head backward
    const double* Wv = params.segment_data(params.segment("head.type.W"));
    for (int i = 0; i < n_lig; ++i) {
        const double* dy = &d_v0_logits[static_cast<std::size_t>(i) * K];
        const double* hin = &tp.h_out[static_cast<std::size_t>(i) * H];
        affine_backward(Wv, hin, dy, &d_h[static_cast<std::size_t>(i) * H],
                        gp ? gp->segment_data(gp->segment("head.type.W")) : nullptr,
                        gp ? gp->segment_data(gp->segment("head.type.b")) : nullptr, K, H);
    }

    std::vector<double> d_h0_pocket(static_cast<std::size_t>(tp.n_all) * H, 0.0);
    const auto P = bind_trunk(cfg_, params);
    trunk_backward(cfg_, P, tp, d_x, d_h, d_h0_pocket, gp ? &G : nullptr);
    if (gp) embed_backward(cfg_, tp, d_h, d_h0_pocket, G);

    d_xt = std::move(d_x);
    for (double v : d_xt)
        if (!std::isfinite(v)) throw NumericError("net: non-finite input gradient");
}

std::vector<double> Egnn::regressor_forward(const ParameterSet& params, const PocketCloud& pocket,
                                            const MoleculeCloud& ligand, Tape* tape) const {
    if (cfg_.role != NetRole::regressor)
        throw DomainError("net: regressor_forward needs a regressor");
    if (ligand.n_types != cfg_.n_types || pocket.n_types != cfg_.n_types || ligand.n_atoms < 1)
        throw DomainError("net: shape mismatch in regressor_forward");

    TapeHandle local;
    Tape& tp = tape ? *tape : *local.get();
    tp.n_lig = ligand.n_atoms;
    tp.n_all = ligand.n_atoms + pocket.n_atoms;
    fill_coords(tp, ligand.x, pocket);
    fill_features(cfg_, tp, ligand.v, pocket, 1, 1, std::nullopt);

    const auto P = bind_trunk(cfg_, params);
    run_trunk(cfg_, P, tp);

    const int H = cfg_.hidden_dim;
    tp.pool.assign(H, 0.0);
    for (int i = 0; i < tp.n_lig; ++i)
        for (int c = 0; c < H; ++c) tp.pool[c] += tp.h_out[static_cast<std::size_t>(i) * H + c];

    tp.z1pre.assign(H, 0.0);
    tp.z1.assign(H, 0.0);
    affine(params.segment_data(params.segment("head.reg.W1")),
           params.segment_data(params.segment("head.reg.b1")), tp.pool.data(), tp.z1pre.data(),
           H, H);
    for (int c = 0; c < H; ++c) tp.z1[c] = silu(tp.z1pre[c]);

    std::vector<double> y(cfg_.out_dim, 0.0);
    affine(params.segment_data(params.segment("head.reg.W2")),
           params.segment_data(params.segment("head.reg.b2")), tp.z1.data(), y.data(),
           cfg_.out_dim, H);
    for (double v : y)
        if (!std::isfinite(v)) throw NumericError("net: non-finite regressor output");
    return y;
}

void Egnn::regressor_backward(const ParameterSet& params, const Tape& tp,
                              const std::vector<double>& d_y, std::vector<double>& d_coords,
                              ParameterSet* d_params) const {
    const int H = cfg_.hidden_dim;
    const int n_lig = tp.n_lig;

    TrunkGrads G;
    if (d_params) G = bind_trunk_grads(cfg_, *d_params);

    std::vector<double> d_z1(H, 0.0);
    affine_backward(params.segment_data(params.segment("head.reg.W2")), tp.z1.data(), d_y.data(),
                    d_z1.data(),
                    d_params ? d_params->segment_data(d_params->segment("head.reg.W2")) : nullptr,
                    d_params ? d_params->segment_data(d_params->segment("head.reg.b2")) : nullptr,
                    cfg_.out_dim, H);
    std::vector<double> d_z1pre(H);
    for (int c = 0; c < H; ++c) d_z1pre[c] = silu_grad(tp.z1pre[c]) * d_z1[c];
    std::vector<double> d_pool(H, 0.0);
    affine_backward(params.segment_data(params.segment("head.reg.W1")), tp.pool.data(),
                    d_z1pre.data(), d_pool.data(),
                    d_params ? d_params->segment_data(d_params->segment("head.reg.W1")) : nullptr,
                    d_params ? d_params->segment_data(d_params->segment("head.reg.b1")) : nullptr,
                    H, H);

    std::vector<double> d_h(static_cast<std::size_t>(n_lig) * H);
    for (int i = 0; i < n_lig; ++i)
        std::copy(d_pool.begin(), d_pool.end(), d_h.begin() + static_cast<std::size_t>(i) * H);
    std::vector<double> d_x(static_cast<std::size_t>(n_lig) * 3, 0.0);

    std::vector<double> d_h0_pocket(static_cast<std::size_t>(tp.n_all) * H, 0.0);
    const auto P = bind_trunk(cfg_, params);
    trunk_backward(cfg_, P, tp, d_x, d_h, d_h0_pocket, d_params ? &G : nullptr);
    if (d_params) embed_backward(cfg_, tp, d_h, d_h0_pocket, G);

    d_coords = std::move(d_x);
    for (double v : d_coords)
        if (!std::isfinite(v)) throw NumericError("net: non-finite coordinate gradient");
}

// --- checkpoint io -----------------------------------------------------------

void save_checkpoint(const std::string& path, const NetConfig& cfg, const ParameterSet& params,
                     const std::string& extra_json) {
    nlohmann::json header;
    header["format"] = "ligdiff-ckpt-1";
    header["net"] = nlohmann::json::parse(cfg.to_json());
    auto& layout = header["layout"] = nlohmann::json::array();
    for (const auto& s : params.layout())
        layout.push_back({{"name", s.name}, {"rows", s.rows}, {"cols", s.cols}});
    header["count"] = params.size();
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(params.content_hash()));
    header["content_hash"] = hash;
    header["extra"] = nlohmann::json::parse(extra_json);

    const std::string htext = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out << "LIGDIFFCKPT1\n" << htext.size() << "\n" << htext;
    out.write(reinterpret_cast<const char*>(params.data()),
              static_cast<std::streamsize>(params.size() * sizeof(double)));
    if (!out) throw IoError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    std::string magic;
    std::getline(in, magic);
    if (magic != "LIGDIFFCKPT1") throw IoError("not a checkpoint file: " + path);
    std::string lenline;
    std::getline(in, lenline);
    const std::size_t hlen = std::stoul(lenline);
    std::string htext(hlen, '\0');
    in.read(htext.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw IoError("truncated checkpoint header: " + path);
    const auto header = nlohmann::json::parse(htext);

    Checkpoint ck;
    ck.cfg = NetConfig::from_json(header.at("net").dump());
    ck.extra_json = header.at("extra").dump();

    Egnn net(ck.cfg);
    ck.params = net.make_layout();
    const auto count = header.at("count").get<std::size_t>();
    if (count != ck.params.size()) throw IoError("checkpoint layout mismatch: " + path);
    in.read(reinterpret_cast<char*>(ck.params.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw IoError("truncated checkpoint data: " + path);

    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(ck.params.content_hash()));
    if (header.at("content_hash").get<std::string>() != hash)
        throw IoError("checkpoint hash mismatch: " + path);
    return ck;
}

}  // namespace ligdiff
