#pragma once

#include <string>
#include <vector>

#include "ligdiff/guidance.hpp"
#include "ligdiff/net.hpp"
#include "ligdiff/oracle.hpp"
#include "ligdiff/schedule.hpp"
#include "ligdiff/training.hpp"

namespace ligdiff {

struct ScheduleConfig {
    int T = 1000;
    double beta_min = 1e-7;
    double beta_max = 2e-2;
    double steepness = 6.0;

    NoiseSchedule build() const { return NoiseSchedule::sigmoid(T, beta_min, beta_max, steepness); }
};

// Fully-defaulted run configuration. Every field can be set from JSON;
// unknown keys are rejected so typos fail loudly.
struct RunConfig {
    std::uint64_t seed = 1;
    int threads = 1;
    std::vector<std::string> vocabulary = {"C", "N", "O", "S"};
    ScheduleConfig schedule;
    NetConfig denoiser;    // role forced to denoiser
    NetConfig classifier;  // role forced to regressor
    GuidanceConfig guidance;
    TrainConfig training;
    OracleParams oracle;
    GenConfig gen;
    int gen_n_complexes = 2000;
    int n_per_pocket = 100;

    Vocabulary vocab() const { return Vocabulary::from_symbols(vocabulary); }
    void validate() const;  // throws ConfigError

    std::string to_json() const;  // fully resolved, round-trippable
    static RunConfig defaults();
    static RunConfig from_json_text(const std::string& text);  // merge onto defaults
    static RunConfig from_file(const std::string& path);
};

}  // namespace ligdiff
