// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <utility>
#include <vector>

#include "dpdlab/complex_mat.hpp"
#include "dpdlab/rng.hpp"
#include "dpdlab/waveform.hpp"

namespace dpdlab::mimo {

using numerics::cdouble;
using numerics::ComplexMat;

struct UserGeometry {
  double distance_m = 25.0;
  double angle_deg = 70.0;
};

/// Frequency-flat LOS channel: row u is √g_u · e^{jφ_u} · a(θ_u) with a(·) the
/// half-wavelength ULA steering vector and g_u the distance pathloss gain.
struct ChannelModel {
  ComplexMat h;  // U×B
  std::vector<UserGeometry> geometry;
  double carrier_ghz = 30.0;
  double median_gain_db_at_1m = -61.9;
  double pathloss_exponent = 2.1;
};

ChannelModel los_channel(const std::vector<UserGeometry>& geometry, double carrier_ghz,
                         double median_gain_db_at_1m, double pathloss_exponent, int antennas,
                         numerics::RngStream& rng);

/// Zero-forcing precoder W = Hᴴ(HHᴴ)⁻¹ plus the scalar power normalization
/// factor; the effective precoder is alpha·W.
struct Precoder {
  ComplexMat w;  // B×U
  double alpha = 1.0;
};

Precoder zf_precoder(const ChannelModel& channel);

/// Per-subcarrier x̌[k] = alpha·W·š[k] for the frequency-flat precoder.
ComplexMat apply_precoding(const waveform::FdSymbolMatrix& s, const Precoder& p);
ComplexMat apply_precoding(const ComplexMat& s_entries, const Precoder& p);

/// Scales the frame so the mean per-branch RMS power equals the dBm target
/// (1-ohm convention); returns the scaled frame and the scalar applied.
std::pair<ComplexMat, double> normalize_power(const ComplexMat& frame, double target_dbm);

/// Mean over branches of the per-branch mean |x|² (watts under 1 ohm).
double mean_branch_power(const ComplexMat& frame);

/// Left inverse of the effective precoder: pinv·(alpha·W) = I_U.
ComplexMat precoder_pinv(const Precoder& p);

struct NoiseConfig {
  double noise_psd_dbm_hz = -174.0;
  double noise_figure_db = 7.0;
  double bandwidth_hz = 0.0;  // sampling rate
  bool enabled = true;
};

/// Per-bin complex noise variance in the FD equivalent form. The physical
/// noise power in one bin's bandwidth is PSD·NF·(fs/N); the unnormalized
/// forward DFT scales per-bin powers by N², hence the N·PSD·NF·fs result.
double fd_noise_variance_per_bin(const NoiseConfig& noise, int n_fft);

/// y̌[k] = H·x̌_out[k] + n[k] on masked subcarriers (zero elsewhere).
ComplexMat receive(const ComplexMat& x_fd_out, const ChannelModel& channel,
                   const NoiseConfig& noise, const std::vector<int>& mask,
                   numerics::RngStream& rng);

}  // namespace dpdlab::mimo
