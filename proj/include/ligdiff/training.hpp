#pragma once

#include <string>
#include <vector>

#include "ligdiff/molsys.hpp"
#include "ligdiff/net.hpp"
#include "ligdiff/schedule.hpp"

namespace ligdiff {

enum class ClassifierNoiseMode { clean_x0, noisy_xt };
enum class RegressionLoss { mse, mae };
enum class ConditionMode { off, cfg };

struct TrainConfig {
    double lr = 5e-4;
    double adam_beta1 = 0.95;
    double adam_beta2 = 0.999;
    double weight_decay = 0.0;
    double plateau_factor = 0.5;
    int plateau_patience = 2;
    double lr_min = 1e-6;
    int epochs = 20;
    int batch_size = 32;
    double p_unconditional = 0.1;
    double kl_weight = 1.0;  // alpha on the categorical KL term
    ClassifierNoiseMode classifier_noise_mode = ClassifierNoiseMode::clean_x0;
    RegressionLoss regression_loss = RegressionLoss::mse;
    double val_fraction = 0.1;

    void validate() const;
};

struct Adam {
    explicit Adam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
    std::vector<double> m, v;
    long step_count = 0;

    void step(std::vector<double>& params, const std::vector<double>& grad,
              const TrainConfig& cfg, double lr);
};

// ReduceLROnPlateau: halve (by `factor`) after `patience` epochs without
// validation improvement, floored at lr_min.
class PlateauScheduler {
public:
    PlateauScheduler(double lr, double factor, int patience, double lr_min)
        : lr_(lr), factor_(factor), patience_(patience), lr_min_(lr_min) {}

    double observe(double val_loss);  // returns the lr for the next epoch
    double lr() const { return lr_; }

private:
    double lr_;
    double factor_;
    int patience_;
    double lr_min_;
    double best_ = std::numeric_limits<double>::infinity();
    int since_improve_ = 0;
};

struct LogRow {
    int epoch;
    std::string split;  // "train" or "val"
    double loss;
    double lr;
};

struct TrainResult {
    ParameterSet params;
    std::vector<LogRow> log;
};

// Masked squared error: zero (with zero gradient) when the ground truth
// binding affinity is invalid (deltaG > 0).
double classifier_loss(double pred, double truth_deltaG);

// Scalar affinity regressor (out_dim 1) or the 3-channel multi-constraint
// regressor (out_dim 3, affinity rescaled by -1/12 on both sides). In
// noisy_xt mode ligand coordinates are perturbed at a random step first.
TrainResult train_classifier(const std::vector<ComplexRecord>& dataset, const NetConfig& net_cfg,
                             const TrainConfig& train_cfg, std::uint64_t seed,
                             const NoiseSchedule* sched = nullptr);

// Mean over the batch of  |x0 - x0_hat|^2 + alpha * sum_i KL(c(v_t,v0) || c(v_t,v0_hat)).
double diffusion_loss(const std::vector<ComplexRecord>& batch, const Egnn& net,
                      const ParameterSet& params, const NoiseSchedule& sched, Rng& rng,
                      double kl_weight, ConditionMode condition_mode, double p_unconditional);

// Denoiser training; condition_mode cfg adds the affinity condition with
// random dropout to the null token (Algorithm-4 style), off trains the plain
// pocket-conditional objective.
TrainResult train_diffusion(const std::vector<ComplexRecord>& dataset, const NetConfig& net_cfg,
                            const TrainConfig& train_cfg, const NoiseSchedule& sched,
                            std::uint64_t seed, ConditionMode condition_mode);

std::string log_to_csv(const std::vector<LogRow>& log);

// deterministic validation membership by record-index hash
bool is_validation_index(std::size_t index, double val_fraction);

}  // namespace ligdiff
