// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpdlab/mimo.hpp"
#include "dpdlab/mp_model.hpp"
#include "dpdlab/td_dpd.hpp"
#include "dpdlab/waveform.hpp"

namespace dpdlab::harness {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct PrerequisiteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TrainingDivergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainingConfig {
  double lr = 1e-3;
  int batch_per_state = 128;
  int max_epochs = 300;
  int patience = 40;
  int val_symbols = 2;
};

/// Everything one experiment needs; parsed from a JSON config file (comments
/// allowed) and validated against the dimension identities before any phase runs.
struct ExperimentConfig {
  int n_fft = 2048;
  double fs_mhz = 200.0;
  int qam_order = 16;
  int users = 1;
  int antennas = 16;

  std::vector<mimo::UserGeometry> geometry;
  double carrier_ghz = 30.0;
  double median_gain_db_at_1m = -61.9;
  double pathloss_exponent = 2.1;

  mimo::NoiseConfig noise;  // bandwidth_hz filled from fs_mhz
  std::string equalize = "ls-scalar";
  int noise_draws = 4;

  waveform::StateGrid grid;
  int fdnn_state_id = 3;
  int psd_state_id = 1;

  std::string pa_coeff_file;  // synth when empty
  pa::PaSynthSpec pa;
  bool pa_per_state = false;

  tddpd::IlaOptions ila;
  int ila_probe_symbols = 2;

  std::vector<int> main_layers{16, 50, 6, 2};
  std::vector<int> hn_layers{2, 40, 24, 14};
  int memory = 7;

  TrainingConfig train;
  TrainingConfig fdnn_train;

  int q_symbols = 20;
  int eval_symbols = 4;
  int psd_segment = 2048;

  std::uint64_t seed = 42;
  std::string out_dir = "out";
};

ExperimentConfig parse_config(const std::string& path);
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
void validate_config(const ExperimentConfig& cfg);

/// FNV-1a over the canonical serialized config; changes when any field changes.
std::string config_hash_hex(const ExperimentConfig& cfg);

}  // namespace dpdlab::harness
