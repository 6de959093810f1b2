// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "dpdlab/complex_mat.hpp"
#include "dpdlab/rng.hpp"

namespace dpdlab::pa {

using numerics::cdouble;
using numerics::ComplexMat;
using numerics::ComplexVec;

/// One memory-polynomial coefficient set: odd orders k ≤ K, taps m ≤ M,
///   y[n] = Σ_k Σ_m a_{k,m} · x[n−m] · |x[n−m]|^{k−1}.
/// Coefficients are stored k-major, m-minor.
struct MpCoeffs {
  int memory_len = 0;  // M ≥ 0
  int order = 1;       // K, odd
  ComplexVec coeffs;   // (K+1)/2 · (M+1) entries

  int num_orders() const { return (order + 1) / 2; }
  int num_coeffs() const { return num_orders() * (memory_len + 1); }
  cdouble& at(int k_idx, int m) { return coeffs[k_idx * (memory_len + 1) + m]; }
  const cdouble& at(int k_idx, int m) const { return coeffs[k_idx * (memory_len + 1) + m]; }
  void validate() const;  // throws on bad dims / non-finite coefficients
};

/// Identity predistorter / unit-gain PA: a_{1,0} = gain, all else zero.
MpCoeffs mp_identity(cdouble gain, int memory_len = 0, int order = 1);

/// Applies the model to a stream with zero initial history.
ComplexVec mp_apply(const MpCoeffs& c, std::span<const cdouble> x);

/// Per-branch model bank; state_id -1 resolves for every state (the shared
/// single-PA default).
struct PaArrayModel {
  struct Branch {
    std::map<int, MpCoeffs> states;
    const MpCoeffs& resolve(int state_id) const;
  };
  std::vector<Branch> branches;
  cdouble gain{1.0, 0.0};  // nominal small-signal gain of the array

  void validate() const;
};

/// Recipe for the synthetic ground-truth array. The nonlinearity level is
/// calibrated so AM/AM compression at the reference RMS drive is about 1 dB.
struct PaSynthSpec {
  int order = 7;
  int memory_len = 3;
  double gain_db = 40.0;            // nominal |a_{1,0}| in dB
  double gain_phase_deg = 15.0;     // nominal arg(a_{1,0})
  double ref_drive_dbm = -20.0;     // drive level the compression target refers to
  double compression_db = 1.0;      // AM/AM compression at the reference drive
  double memory_decay = 0.25;       // geometric decay of |a_{k,m}| in m
  double perturbation = 0.05;       // per-branch relative coefficient spread
};

PaArrayModel synth_pa_array(int antennas, const PaSynthSpec& spec, std::uint64_t seed);

/// Column b of the frame through branch b's coefficients for the given state.
ComplexMat pa_array_apply(const PaArrayModel& model, const ComplexMat& frame, int state_id);

/// Gain drop in dB between small-signal and the given RMS drive, measured on
/// a CW-envelope sweep of the model.
double am_am_compression_db(const MpCoeffs& c, double drive_rms_amplitude);

void save_pa_array(const PaArrayModel& model, const std::string& path);
PaArrayModel load_pa_array(const std::string& path);

}  // namespace dpdlab::pa
