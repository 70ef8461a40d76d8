#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ligdiff/molsys.hpp"

namespace ligdiff {

enum class NetRole { denoiser, regressor };
enum class CondNullMode { mask, sentinel };

// Architecture knobs for the equivariant message-passing trunk. The same
// trunk serves as the diffusion denoiser (predicts clean coordinates and
// type logits) and as the scalar property regressor.
struct NetConfig {
    int layers = 4;
    int hidden_dim = 64;
    int k_nn = 8;
    int heads = 1;  // reserved; pooling is a deterministic sum
    NetRole role = NetRole::denoiser;
    int cond_channels = 0;  // 0, or 2 for the conditional denoiser
    int n_types = 4;
    int out_dim = 1;  // regressor output channels (1 affinity, 3 multi)
    int rbf_bins = 16;
    double rbf_max = 10.0;
    CondNullMode cond_null = CondNullMode::mask;
    double cond_sentinel = 2.0;  // used when cond_null == sentinel

    void validate() const;  // throws DomainError
    int feature_dim() const;
    std::string to_json() const;
    static NetConfig from_json(const std::string& text);
};

// Flat parameter vector plus a named segment layout. The layout hash is
// stable across save/load and guards checkpoint compatibility.
class ParameterSet {
public:
    struct Segment {
        std::string name;
        int rows = 0;
        int cols = 0;  // cols == 0 marks a bias vector of length rows
        std::size_t offset = 0;
        std::size_t count() const {
            return static_cast<std::size_t>(rows) * (cols == 0 ? 1 : cols);
        }
    };

    ParameterSet() = default;
    explicit ParameterSet(std::vector<Segment> layout);

    std::size_t size() const { return data_.size(); }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    const std::vector<Segment>& layout() const { return layout_; }
    const Segment& segment(const std::string& name) const;
    double* segment_data(const Segment& s) { return data_.data() + s.offset; }
    const double* segment_data(const Segment& s) const { return data_.data() + s.offset; }

    std::uint64_t layout_hash() const;
    std::uint64_t content_hash() const;
    void fill(double v) { for (auto& x : data_) x = v; }
    bool finite() const;

    ParameterSet zeros_like() const;

private:
    std::vector<Segment> layout_;
    std::vector<double> data_;
};

// Optional scalar conditioning for the classifier-free denoiser.
struct CondInput {
    double g_norm = 0.0;  // rescaled target, e.g. deltaG * (-1/12)
    bool present = false;
};

struct ScoreOutput {
    std::vector<double> x0_hat;     // N x 3
    std::vector<double> v0_logits;  // N x K
};

// Opaque forward-pass record consumed by the backward passes.
struct Tape;
Tape* tape_alloc();
void tape_free(Tape*);

class TapeHandle {
public:
    TapeHandle() : t_(tape_alloc()) {}
    ~TapeHandle() { tape_free(t_); }
    TapeHandle(const TapeHandle&) = delete;
    TapeHandle& operator=(const TapeHandle&) = delete;
    Tape* get() const { return t_; }

private:
    Tape* t_;
};

class Egnn {
public:
    explicit Egnn(NetConfig cfg);

    const NetConfig& config() const { return cfg_; }

    // Fresh parameters: weights seeded Xavier-style, biases zero, and the
    // coordinate-update output layers zero so the trunk is an identity map
    // on coordinates at initialization.
    ParameterSet init_params(std::uint64_t seed) const;
    ParameterSet make_layout() const;  // zero-valued, for gradients

    // Denoiser pass: x_t (N x 3 ligand coords), v_t (N x K simplex rows).
    ScoreOutput score_forward(const ParameterSet& params, const std::vector<double>& x_t,
                              const std::vector<double>& v_t, int t, int T,
                              const PocketCloud& pocket,
                              const std::optional<CondInput>& cond = std::nullopt,
                              Tape* tape = nullptr) const;

    // Seeds the reverse pass with d(loss)/d(x0_hat) and d(loss)/d(v0_logits);
    // writes d(loss)/d(x_t) into d_xt and accumulates into d_params when given.
    void score_backward(const ParameterSet& params, const Tape& tape,
                        const std::vector<double>& d_x0_hat,
                        const std::vector<double>& d_v0_logits, std::vector<double>& d_xt,
                        ParameterSet* d_params = nullptr) const;

    // Regressor pass over a (pocket, ligand) pair.
    std::vector<double> regressor_forward(const ParameterSet& params, const PocketCloud& pocket,
                                          const MoleculeCloud& ligand,
                                          Tape* tape = nullptr) const;

    // Seeds with d(loss)/dy; writes the exact gradient w.r.t. ligand
    // coordinates and optionally accumulates parameter gradients.
    void regressor_backward(const ParameterSet& params, const Tape& tape,
                            const std::vector<double>& d_y, std::vector<double>& d_coords,
                            ParameterSet* d_params = nullptr) const;

private:
    NetConfig cfg_;
};

// Binary checkpoint: header JSON (net config echo, layout, hashes) followed
// by the little-endian float64 parameter block. Round-trips bitwise.
void save_checkpoint(const std::string& path, const NetConfig& cfg, const ParameterSet& params,
                     const std::string& extra_json = "{}");

struct Checkpoint {
    NetConfig cfg;
    ParameterSet params;
    std::string extra_json;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ligdiff
