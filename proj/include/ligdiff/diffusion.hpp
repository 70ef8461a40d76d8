#pragma once

#include <vector>

#include "ligdiff/rng.hpp"
#include "ligdiff/schedule.hpp"

namespace ligdiff {

enum class TypeDecode { argmax, stochastic };

// Ligand state mid-trajectory: coordinates plus one-hot type rows.
struct DiffusionState {
    std::vector<double> x;  // N x 3
    std::vector<double> v;  // N x K one-hot
    int n_atoms = 0;
    int n_types = 0;
    int t = 0;
};

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
std::vector<double> perturb_coords(const std::vector<double>& x0, const NoiseSchedule& sched,
                                   int t, const std::vector<double>& noise);

// Gumbel-max forward kernel for types:
//   log c = log(abar_t v0 + (1 - abar_t)/K);  v_t = onehot(argmax(g + log c))
std::vector<double> perturb_types(const std::vector<double>& v0, int n_types,
                                  const NoiseSchedule& sched, int t,
                                  const std::vector<double>& gumbel);

// c* = (alpha_t v_t + (1-alpha_t)/K) o (abar_{t-1} v0_hat + (1-abar_{t-1})/K),
// normalized per atom. Throws NumericError if a row degenerates.
std::vector<double> categorical_posterior(const std::vector<double>& v_t,
                                          const std::vector<double>& v0_hat, int n_types,
                                          const NoiseSchedule& sched, int t);

// x_{t-1} = c0 x0_hat + ct x_t - guidance_disp + sqrt(beta_tilde) eps.
// The displacement arrives fully scaled and clipped; pass zeros when unguided.
std::vector<double> reverse_coord_step(const std::vector<double>& x_t,
                                       const std::vector<double>& x0_hat,
                                       const NoiseSchedule& sched, int t,
                                       const std::vector<double>& noise,
                                       const std::vector<double>& guidance_disp);

// One-hot decode of per-atom distributions; stochastic mode draws one uniform
// per atom from the source, argmax consumes nothing.
std::vector<double> decode_types(const std::vector<double>& prob, int n_types, TypeDecode mode,
                                 NoiseSource* noise);

// x_T ~ N(0, I); v_T = onehot(argmax Gumbel) per atom (uniform over K).
DiffusionState init_state(int n_atoms, int n_types, const NoiseSchedule& sched,
                          NoiseSource& noise);

}  // namespace ligdiff
