// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "dpdlab/complex_mat.hpp"
#include "dpdlab/waveform.hpp"

namespace dpdlab::metrics {

using numerics::cdouble;
using numerics::ComplexMat;

struct EvmOptions {
  enum class Equalize { kKnownAlpha, kLsScalar };
  Equalize mode = Equalize::kLsScalar;
  cdouble known_scale{1.0, 0.0};  // full chain scale used by kKnownAlpha
};

struct EvmReport {
  std::vector<double> per_user_pct;
  double aggregate_pct = 0.0;  // RMS across users
  int state_id = 0;
  std::string dpd_label;
};

/// EVM% per user over the data mask: 100·√(Σ|ŷ−š|²/Σ|š|²) after equalization.
EvmReport evm(const ComplexMat& received, const waveform::FdSymbolMatrix& reference,
              const EvmOptions& options);

/// 10·log10(Σ‖actual−ideal‖²/Σ‖ideal‖²); batches accumulate before the log.
/// Identical in TD and FD (Parseval). Floors at -300 dB.
class NmseAccumulator {
 public:
  void add(const ComplexMat& actual, const ComplexMat& ideal);
  double db() const;

 private:
  double num_ = 0.0;
  double den_ = 0.0;
};

double tx_nmse_db(const ComplexMat& actual, const ComplexMat& ideal);

struct WelchConfig {
  int segment = 2048;      // power of two
  double overlap = 0.5;    // fraction of the segment
};

struct PsdEstimate {
  std::vector<double> freq_hz;         // fftshifted, −fs/2 .. fs/2
  std::vector<double> density_dbm_hz;  // 1-ohm dBm/Hz
  std::vector<double> density_w_hz;    // linear, same bins
  int segment = 0;
  std::string window = "hann";
  double overlap = 0.5;
};

/// Hann-windowed overlapped averaged periodogram, normalized as a density:
/// integrating over frequency recovers the signal power.
PsdEstimate welch_psd(std::span<const cdouble> stream, double fs_hz, const WelchConfig& cfg);

/// PSD of the per-branch difference signals, power-summed across branches.
PsdEstimate error_psd(const ComplexMat& actual, const ComplexMat& ideal, double fs_hz,
                      const WelchConfig& cfg);

}  // namespace dpdlab::metrics
