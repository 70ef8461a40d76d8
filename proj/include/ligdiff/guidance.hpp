#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "ligdiff/diffusion.hpp"
#include "ligdiff/molsys.hpp"
#include "ligdiff/net.hpp"
#include "ligdiff/schedule.hpp"

namespace ligdiff {

enum class GuidanceMode { none, classifier, classifier_free, multi_constraint };
enum class LossKind { gaussian, exponential };
enum class GradPath { approx_identity, full_chain };
enum class ClassifyOn { x0_hat, x_t };
enum class ClipMode { elementwise, norm };
// classifier_free evaluation: paired runs both passes and interpolates;
// the single-pass modes exist for the algebraic reduction checks.
enum class CfgEval { paired, conditional, unconditional };

struct GuidanceConfig {
    GuidanceMode mode = GuidanceMode::none;
    double s = 0.0;                 // guidance scale
    double target_deltaG = -10.0;   // kcal/mol
    double targets_multi[3] = {-10.0, 0.8, 0.8};  // deltaG (kcal/mol), qed, sa
    double weights_multi[3] = {1.0, 1.0, 1.0};    // affinity, qed, sa channel weights
    double clip = std::numeric_limits<double>::infinity();
    LossKind loss_kind = LossKind::gaussian;
    GradPath grad_path = GradPath::approx_identity;
    ClassifyOn classify_on = ClassifyOn::x0_hat;
    int stop_at_step = 0;  // sampler returns the state at this t (0 = full chain)
    TypeDecode type_decode = TypeDecode::argmax;
    ClipMode clip_mode = ClipMode::elementwise;
    bool classifier_simplex_types = false;  // pass relaxed type rows to the classifier
    CfgEval cfg_eval = CfgEval::paired;
    bool debug_checks = false;  // in-loop mean/displacement identity assertion

    void validate() const;  // throws DomainError
};

// Rescaling applied to the affinity channel so conditioning inputs and
// multi-constraint targets land near [0, 1].
constexpr double kAffinityRescale = -1.0 / 12.0;

// value and d(value)/dy for the scalar energy term:
// gaussian -> ((y-c)^2, 2(y-c)); exponential -> (|y-c|, sign(y-c))
struct EnergyEval {
    double value;
    double dvalue_dy;
};
EnergyEval energy_loss(double y, double c, LossKind kind);

// weighted per-channel combination; grad is w.r.t. y
struct MultiEval {
    double value;
    double grad[3];
};
MultiEval multi_loss(const double y[3], const double targets[3], const double weights[3],
                     LossKind kind);

std::vector<double> clip_elementwise(std::vector<double> d, double clip);
std::vector<double> clip_rows_by_norm(std::vector<double> d, double clip);

// (1 - s) * a + s * b, elementwise
std::vector<double> cfg_combine(const std::vector<double>& x0_uncond,
                                const std::vector<double>& x0_cond, double s);

// Handle for chaining the guidance gradient through the denoiser when
// grad_path == full_chain.
struct DenoiserChain {
    const Egnn* net = nullptr;
    const ParameterSet* params = nullptr;
    const Tape* tape = nullptr;
};

// Clipped displacement subtracted from the reverse-step mean:
//   clip( (beta_t / sqrt(alpha_t)) * s * grad(loss) ).
std::vector<double> guidance_displacement(const Egnn& classifier,
                                          const ParameterSet& classifier_params,
                                          const PocketCloud& pocket, const DiffusionState& state,
                                          const std::vector<double>& x0_hat,
                                          const std::vector<double>& v0_hat,
                                          const NoiseSchedule& sched, int t,
                                          const GuidanceConfig& cfg,
                                          const DenoiserChain* chain = nullptr);

struct SamplerInputs {
    const Egnn* denoiser = nullptr;
    const ParameterSet* denoiser_params = nullptr;
    const Egnn* classifier = nullptr;            // required for (multi_)classifier modes
    const ParameterSet* classifier_params = nullptr;
};

// Full reverse chain: centers the pocket, initializes from noise, runs
// T -> (stop_at_step + 1), translates the ligand back into the input frame.
MoleculeCloud sample_guided(const SamplerInputs& nets, const PocketCloud& pocket, int n_atoms,
                            const NoiseSchedule& sched, const GuidanceConfig& cfg,
                            NoiseSource& noise);

std::vector<double> softmax_rows(const std::vector<double>& logits, int n_types);

}  // namespace ligdiff
