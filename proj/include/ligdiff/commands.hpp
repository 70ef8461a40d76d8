#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ligdiff/config.hpp"

namespace ligdiff {

// CLI command bodies. Each throws ConfigError / IoError / NumericError on
// failure; the binary maps those to exit codes 2 / 3 / 4.

void cmd_gen(const RunConfig& cfg, const std::string& out_dir);

void cmd_train_classifier(const RunConfig& cfg, const std::string& dataset_dir,
                          const std::string& out_ckpt, bool multi_constraint);

void cmd_train_diffusion(const RunConfig& cfg, const std::string& dataset_dir,
                         const std::string& out_ckpt, bool cfg_mode);

struct SampleArgs {
    std::string denoiser_ckpt;
    std::string classifier_ckpt;           // empty unless a classifier mode is active
    std::vector<std::string> pocket_files;
    std::string prior_path;                // empty: uniform atom-count fallback
    std::string out_dir;
};

void cmd_sample(const RunConfig& cfg, const SampleArgs& args);

// Re-runs a sample command from the resolved header of a previous manifest.
void cmd_sample_from_manifest(const std::string& manifest_path, const std::string& out_dir);

void cmd_eval(const RunConfig& cfg, const std::string& sampled_dir,
              const std::string& reference_dir, const std::string& out_dir);

int cmd_selftest();  // 0 when every derivation check passes

}  // namespace ligdiff
