// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dpdlab/config.hpp"

namespace dpdlab::harness {

enum class Phase { kGen, kTrainTd, kTargets, kTrainHn, kTrainFdnn, kEval, kPsd };

Phase phase_from_string(const std::string& name);
std::string to_string(Phase phase);
std::vector<Phase> all_phases();

struct PipelineOptions {
  int threads = 1;
};

struct MethodResult {
  std::string method;  // no-dpd | fd-nn | hn-fd-nn | td-dpd
  double evm_pct = 0.0;
  double tx_nmse_db = 0.0;
};

struct StateResult {
  waveform::SignalState state;
  std::vector<MethodResult> methods;
};

struct RunReport {
  std::vector<StateResult> rows;
  std::uint64_t seed = 0;
  std::string config_hash;
  double runtime_s = 0.0;
};

/// Runs one phase; artifacts land under cfg.out_dir. Throws PrerequisiteError
/// when upstream artifacts are missing and TrainingDivergence when a training
/// phase reports a diverging loss.
void run_phase(const ExperimentConfig& cfg, Phase phase, const PipelineOptions& opts = {});
void run_pipeline(const ExperimentConfig& cfg, const std::vector<Phase>& phases,
                  const PipelineOptions& opts = {});

/// Loads the evaluation report back from disk (the CSV written by the eval phase).
RunReport load_report_csv(const std::filesystem::path& path);

void emit_report(const RunReport& report, const ExperimentConfig& cfg,
                 const std::filesystem::path& csv_path, const std::filesystem::path& json_path);

/// Gradient check on the configured topology; returns the worst relative error.
double run_gradcheck(const ExperimentConfig& cfg, int seeds = 3);

// artifact locations under cfg.out_dir
std::filesystem::path pa_array_path(const ExperimentConfig& cfg);
std::filesystem::path channel_path(const ExperimentConfig& cfg);
std::filesystem::path inputs_path(const ExperimentConfig& cfg, int state_id);
std::filesystem::path targets_path(const ExperimentConfig& cfg, int state_id);
std::filesystem::path td_dpd_path(const ExperimentConfig& cfg);
std::filesystem::path hn_model_path(const ExperimentConfig& cfg);
std::filesystem::path fdnn_model_path(const ExperimentConfig& cfg);
std::filesystem::path report_csv_path(const ExperimentConfig& cfg);
std::filesystem::path report_json_path(const ExperimentConfig& cfg);
std::filesystem::path psd_csv_path(const ExperimentConfig& cfg);

}  // namespace dpdlab::harness
