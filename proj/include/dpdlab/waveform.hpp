// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <vector>

#include "dpdlab/complex_mat.hpp"
#include "dpdlab/rng.hpp"

namespace dpdlab::waveform {

using numerics::cdouble;
using numerics::ComplexMat;

/// One operating point of the transmitter: occupied bandwidth and the RMS
/// power demanded at every PA input.
struct SignalState {
  double bandwidth_mhz = 0.0;
  double rms_power_dbm = 0.0;
  int id = 0;
};

/// The set of operating points an experiment covers, plus which of them are
/// used for training. Maxima normalize the conditioning vector.
struct StateGrid {
  std::vector<SignalState> states;
  std::vector<int> training_ids;
  double bw_max_mhz = 0.0;
  double p_max_mw = 0.0;

  const SignalState& find(int id) const;
  bool is_training(int id) const;
  void validate() const;  // throws std::invalid_argument on violations
};

double dbm_to_mw(double dbm);
double dbm_to_watt(double dbm);

/// Conditioning vector c = [BW/BW_max, P_mW/P_max_mW]; both components in (0,1].
std::array<double, 2> make_state_vector(const SignalState& state, const StateGrid& grid);

/// Data-subcarrier indices for an occupied band centered on DC, DC excluded,
/// in FFT bin order: 1..N_d/2 and N-N_d/2..N-1. N_d is rounded to the nearest
/// even count so the band stays symmetric.
std::vector<int> build_subcarrier_mask(int n_fft, double fs_mhz, double bandwidth_mhz);

/// N×U frequency-domain symbols, nonzero only on the data-subcarrier mask.
struct FdSymbolMatrix {
  ComplexMat entries;
  std::vector<int> mask;
};

/// I.i.d. uniform QAM (order 4/16/64, unit average power) on the mask, zeros
/// elsewhere.
FdSymbolMatrix gen_fd_symbols(int users, int n_fft, const std::vector<int>& mask, int qam_order,
                              numerics::RngStream& rng);

/// Per-column inverse DFT: FD matrix (N×C) -> one OFDM symbol of TD samples (N×C).
ComplexMat fd_to_td(const ComplexMat& fd);
/// Per-column forward DFT; exact inverse of fd_to_td ("FD equivalent form").
ComplexMat td_to_fd(const ComplexMat& td);

}  // namespace dpdlab::waveform
