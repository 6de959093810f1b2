// SPDX-License-Identifier: Apache-2.0
#include "dpdlab/mimo.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace dpdlab::mimo {

ChannelModel los_channel(const std::vector<UserGeometry>& geometry, double carrier_ghz,
                         double median_gain_db_at_1m, double pathloss_exponent, int antennas,
                         numerics::RngStream& rng) {
  const int users = static_cast<int>(geometry.size());
  if (users < 1 || antennas < users) {
    throw std::invalid_argument("los_channel: need antennas >= users >= 1");
  }
  for (int u = 0; u < users; ++u) {
    for (int v = u + 1; v < users; ++v) {
      if (std::abs(geometry[u].angle_deg - geometry[v].angle_deg) < 1e-9) {
        throw std::invalid_argument("los_channel: coincident user angles");
      }
    }
  }

  ChannelModel ch;
  ch.geometry = geometry;
  ch.carrier_ghz = carrier_ghz;
  ch.median_gain_db_at_1m = median_gain_db_at_1m;
  ch.pathloss_exponent = pathloss_exponent;
  ch.h = ComplexMat(static_cast<std::size_t>(users), static_cast<std::size_t>(antennas));

  for (int u = 0; u < users; ++u) {
    const double gain_db =
        median_gain_db_at_1m - 10.0 * pathloss_exponent * std::log10(geometry[u].distance_m);
    const double amp = std::pow(10.0, gain_db / 20.0);
    const double common_phase = 2.0 * std::numbers::pi * rng.uniform();
    const double sin_theta = std::sin(geometry[u].angle_deg * std::numbers::pi / 180.0);
    for (int b = 0; b < antennas; ++b) {
      // half-wavelength ULA: phase -π·b·sinθ per element
      const double phase = common_phase - std::numbers::pi * b * sin_theta;
      ch.h(static_cast<std::size_t>(u), static_cast<std::size_t>(b)) =
          amp * cdouble(std::cos(phase), std::sin(phase));
    }
  }

  const ComplexMat gram = numerics::matmul(ch.h, ch.h.hermitian());
  if (numerics::cond_estimate(gram) > 1e12) {
    throw std::runtime_error("los_channel: channel Gram matrix is ill-conditioned (cond > 1e12)");
  }
  return ch;
}

Precoder zf_precoder(const ChannelModel& channel) {
  const ComplexMat& h = channel.h;
  const ComplexMat gram = numerics::matmul(h, h.hermitian());  // U×U
  const double cond = numerics::cond_estimate(gram);
  if (!(cond < 1e12)) {
    throw std::runtime_error("zf_precoder: HH^H condition number " + std::to_string(cond) +
                             " exceeds 1e12");
  }
  // W = H^H (HH^H)^{-1}
  const ComplexMat inv = numerics::solve_square(gram, ComplexMat::identity(gram.rows()));
  return Precoder{numerics::matmul(h.hermitian(), inv), 1.0};
}

ComplexMat apply_precoding(const ComplexMat& s_entries, const Precoder& p) {
  const std::size_t users = p.w.cols();
  if (s_entries.cols() != users) {
    throw std::invalid_argument("apply_precoding: user count mismatch");
  }
  // frequency-flat: x̌ = alpha·Š·Wᵀ, one multiply for all subcarriers
  const std::size_t n = s_entries.rows();
  const std::size_t antennas = p.w.rows();
  ComplexMat x(n, antennas);
  for (std::size_t k = 0; k < n; ++k) {
    const cdouble* srow = s_entries.data() + k * users;
    cdouble* xrow = x.data() + k * antennas;
    for (std::size_t u = 0; u < users; ++u) {
      const cdouble s = srow[u] * p.alpha;
      if (s == cdouble{}) continue;
      for (std::size_t b = 0; b < antennas; ++b) {
        xrow[b] += p.w(b, u) * s;
      }
    }
  }
  return x;
}

ComplexMat apply_precoding(const waveform::FdSymbolMatrix& s, const Precoder& p) {
  return apply_precoding(s.entries, p);
}

double mean_branch_power(const ComplexMat& frame) {
  return frame.sum_abs2() / static_cast<double>(frame.rows() * frame.cols());
}

std::pair<ComplexMat, double> normalize_power(const ComplexMat& frame, double target_dbm) {
  const double current = mean_branch_power(frame);
  if (current <= 0.0) {
    throw std::invalid_argument("normalize_power: frame has no energy");
  }
  const double target_w = waveform::dbm_to_watt(target_dbm);
  const double alpha = std::sqrt(target_w / current);
  ComplexMat out = frame;
  out *= alpha;
  return {std::move(out), alpha};
}

ComplexMat precoder_pinv(const Precoder& p) {
  ComplexMat w_eff = p.w;
  w_eff *= p.alpha;
  const ComplexMat gram = numerics::matmul(w_eff.hermitian(), w_eff);  // U×U
  if (!(numerics::cond_estimate(gram) < 1e12)) {
    throw std::runtime_error("precoder_pinv: precoder is rank-deficient");
  }
  const ComplexMat inv = numerics::solve_square(gram, ComplexMat::identity(gram.rows()));
  return numerics::matmul(inv, w_eff.hermitian());  // U×B
}

double fd_noise_variance_per_bin(const NoiseConfig& noise, int n_fft) {
  if (noise.bandwidth_hz <= 0.0) {
    throw std::invalid_argument("NoiseConfig: bandwidth_hz must be positive");
  }
  const double psd_w_hz = std::pow(10.0, (noise.noise_psd_dbm_hz - 30.0) / 10.0);
  const double nf = std::pow(10.0, noise.noise_figure_db / 10.0);
  const double per_bin_physical = psd_w_hz * nf * (noise.bandwidth_hz / n_fft);
  return per_bin_physical * static_cast<double>(n_fft) * static_cast<double>(n_fft);
}

ComplexMat receive(const ComplexMat& x_fd_out, const ChannelModel& channel,
                   const NoiseConfig& noise, const std::vector<int>& mask,
                   numerics::RngStream& rng) {
  const std::size_t users = channel.h.rows();
  const std::size_t antennas = channel.h.cols();
  if (x_fd_out.cols() != antennas) {
    throw std::invalid_argument("receive: antenna count mismatch");
  }
  const int n_fft = static_cast<int>(x_fd_out.rows());
  const double sigma =
      noise.enabled ? std::sqrt(fd_noise_variance_per_bin(noise, n_fft)) : 0.0;

  ComplexMat y(x_fd_out.rows(), users);
  for (const int k : mask) {
    const cdouble* xrow = x_fd_out.data() + static_cast<std::size_t>(k) * antennas;
    cdouble* yrow = y.data() + static_cast<std::size_t>(k) * users;
    for (std::size_t u = 0; u < users; ++u) {
      cdouble acc{};
      for (std::size_t b = 0; b < antennas; ++b) acc += channel.h(u, b) * xrow[b];
      if (sigma > 0.0) acc += sigma * rng.complex_gaussian();
      yrow[u] = acc;
    }
  }
  return y;
}

}  // namespace dpdlab::mimo
