// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "dpdlab/mimo.hpp"
#include "dpdlab/nn.hpp"
#include "dpdlab/waveform.hpp"

namespace dpdlab::fddpd {

using numerics::cdouble;
using numerics::ComplexMat;
using waveform::FdSymbolMatrix;
using waveform::SignalState;

/// One tap-sample row: [s_R[n..n−M], s_I[n..n−M]] over U user streams with
/// circular wrap inside the OFDM symbol; length 2(M+1)U. Samples are scaled
/// by a fixed model constant so the network operates near unit range.
nn::RealMat build_taps(const ComplexMat& td, int memory, double scale);
std::vector<double> build_tap(const ComplexMat& td, int n, int memory, double scale);

/// The deployable FD-DPD: the conditional network plus the tap geometry it
/// was trained with.
struct FdDpdModel {
  nn::HnFdnnModel net;
  int memory = 7;
  int users = 1;
  double tap_scale = 1.0;
};

/// Fixed-state FD-NN baseline (no hypernetwork, same tap geometry).
struct FdnnModel {
  nn::Mlp net;
  int memory = 7;
  int users = 1;
  double tap_scale = 1.0;
  int trained_state_id = -1;
};

/// Per-state tap/target scale: tap_scale/√c₁ (narrow bands carry less TD
/// power per sample, so one constant cannot fit all states).
double state_tap_scale(const FdDpdModel& model, std::array<double, 2> c);

/// Š → IDFT → taps → per-sample network (output layer emitted once per call)
/// → DFT → Š′.
ComplexMat fd_dpd_infer(const FdDpdModel& model, const ComplexMat& s_entries,
                        std::array<double, 2> c);
ComplexMat fdnn_infer(const FdnnModel& model, const ComplexMat& s_entries);

/// Projects the TD-DPD output back into the user-symbol domain:
/// š^tar[k] = W†·x̌″[k] with x̌″ the FD equivalent form of x″.
ComplexMat gen_targets(const ComplexMat& x_dd_td, const mimo::Precoder& precoder);

// ---------------------------------------------------------------------------
// Training data
// ---------------------------------------------------------------------------

struct StateDataset {
  SignalState state;
  std::array<double, 2> c{};
  std::vector<ComplexMat> inputs_fd;   // Q symbols of Š (N×U)
  std::vector<ComplexMat> targets_fd;  // Q symbols of Š^tar (N×U)
};

struct TrainingSet {
  int n_fft = 0;
  int users = 0;
  std::vector<StateDataset> states;
};

/// Per-state binary record file: fixed header (N, U, Q, state metadata) and
/// little-endian float64 interleaved re/im payload, symbol-major then
/// subcarrier-major then user.
void write_symbol_records(const std::string& path, const SignalState& state,
                          std::array<double, 2> c, const std::vector<ComplexMat>& symbols);

struct SymbolRecords {
  SignalState state;
  std::array<double, 2> c{};
  std::vector<ComplexMat> symbols;
};

SymbolRecords read_symbol_records(const std::string& path);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainHyper {
  double lr = 1e-3;
  int batch_per_state = 128;  // tap-samples drawn from every state per minibatch
  int max_epochs = 300;
  int patience = 40;       // epochs without validation improvement before halting
  int val_symbols = 2;     // per-state symbols reserved for validation
  std::uint64_t seed = 0;
};

struct TrainResult {
  std::vector<double> train_loss_fd;  // per epoch, FD-scale (N × TD loss)
  std::vector<double> val_loss_fd;
  int best_epoch = -1;
  bool early_stopped = false;
  bool diverged = false;
  long minibatches = 0;
  // audit: per-state sample counts seen by the optimizer must stay equal
  std::vector<long> samples_per_state;
};

/// Mixed-state training (every minibatch carries an equal number of
/// tap-samples from every training state); minimizes the summed FD Frobenius
/// loss, evaluated in TD via the Parseval identity. Restores the best
/// validation parameters before returning.
TrainResult train_hn_fdnn(const TrainingSet& data, FdDpdModel& model, const TrainHyper& hyper);

/// Single-state training of the FD-NN baseline on one state of the set.
TrainResult train_fdnn(const TrainingSet& data, int state_id, FdnnModel& model,
                       const TrainHyper& hyper);

// model files ---------------------------------------------------------------

void save_fd_dpd_model(const std::string& path, const FdDpdModel& model);
FdDpdModel load_fd_dpd_model(const std::string& path);
void save_fdnn_model(const std::string& path, const FdnnModel& model);
FdnnModel load_fdnn_model(const std::string& path);

/// Scale that brings tap samples of the widest configured band near unit RMS;
/// one constant per model so relative level differences between states stay
/// visible to the network.
double default_tap_scale(int n_fft, int max_data_subcarriers);

}  // namespace dpdlab::fddpd
