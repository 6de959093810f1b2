// SPDX-License-Identifier: Apache-2.0
#include "dpdlab/metrics.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "dpdlab/fft.hpp"

namespace dpdlab::metrics {

EvmReport evm(const ComplexMat& received, const waveform::FdSymbolMatrix& reference,
              const EvmOptions& options) {
  const std::size_t users = reference.entries.cols();
  if (received.cols() != users || received.rows() != reference.entries.rows()) {
    throw std::invalid_argument("evm: shape mismatch");
  }
  EvmReport report;
  double agg = 0.0;
  for (std::size_t u = 0; u < users; ++u) {
    cdouble g;
    if (options.mode == EvmOptions::Equalize::kKnownAlpha) {
      g = options.known_scale;
    } else {
      // least-squares complex scalar per user: g = <š, ŷ> / <š, š>
      cdouble num{};
      double den = 0.0;
      for (const int k : reference.mask) {
        const cdouble s = reference.entries(static_cast<std::size_t>(k), u);
        const cdouble y = received(static_cast<std::size_t>(k), u);
        num += std::conj(s) * y;
        den += std::norm(s);
      }
      if (den == 0.0) throw std::invalid_argument("evm: reference has zero power");
      g = num / den;
    }
    if (g == cdouble{}) g = 1.0;  // all-zero received: fall through to the 100% case

    double err = 0.0;
    double ref = 0.0;
    for (const int k : reference.mask) {
      const cdouble s = reference.entries(static_cast<std::size_t>(k), u);
      const cdouble y = received(static_cast<std::size_t>(k), u) / g;
      err += std::norm(y - s);
      ref += std::norm(s);
    }
    if (ref == 0.0) throw std::invalid_argument("evm: reference has zero power");
    const double pct = 100.0 * std::sqrt(err / ref);
    report.per_user_pct.push_back(pct);
    agg += pct * pct;
  }
  report.aggregate_pct = std::sqrt(agg / static_cast<double>(users));
  return report;
}

void NmseAccumulator::add(const ComplexMat& actual, const ComplexMat& ideal) {
  if (actual.rows() != ideal.rows() || actual.cols() != ideal.cols()) {
    throw std::invalid_argument("tx_nmse: shape mismatch");
  }
  for (std::size_t i = 0; i < actual.size(); ++i) {
    num_ += std::norm(actual.data()[i] - ideal.data()[i]);
    den_ += std::norm(ideal.data()[i]);
  }
}

double NmseAccumulator::db() const {
  if (den_ == 0.0) throw std::invalid_argument("tx_nmse: zero ideal signal");
  if (num_ == 0.0) return -300.0;
  return std::max(-300.0, 10.0 * std::log10(num_ / den_));
}

double tx_nmse_db(const ComplexMat& actual, const ComplexMat& ideal) {
  NmseAccumulator acc;
  acc.add(actual, ideal);
  return acc.db();
}

PsdEstimate welch_psd(std::span<const cdouble> stream, double fs_hz, const WelchConfig& cfg) {
  if (!numerics::is_power_of_two(static_cast<std::size_t>(cfg.segment))) {
    throw std::invalid_argument("welch_psd: segment must be a power of two");
  }
  const std::size_t seg = static_cast<std::size_t>(cfg.segment);
  if (stream.size() < seg) {
    throw std::invalid_argument("welch_psd: stream shorter than one segment");
  }
  if (cfg.overlap < 0.0 || cfg.overlap >= 1.0) {
    throw std::invalid_argument("welch_psd: overlap must be in [0, 1)");
  }
  const std::size_t hop =
      std::max<std::size_t>(1, static_cast<std::size_t>(seg * (1.0 - cfg.overlap)));

  // periodic Hann window and its power normalization
  std::vector<double> win(seg);
  double win_pow = 0.0;
  for (std::size_t n = 0; n < seg; ++n) {
    win[n] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * n / seg));
    win_pow += win[n] * win[n];
  }

  std::vector<double> acc(seg, 0.0);
  std::size_t segments = 0;
  numerics::ComplexVec buf(seg);
  for (std::size_t start = 0; start + seg <= stream.size(); start += hop) {
    for (std::size_t n = 0; n < seg; ++n) buf[n] = stream[start + n] * win[n];
    numerics::dft_inplace(buf, numerics::FftDirection::kForward);
    for (std::size_t k = 0; k < seg; ++k) acc[k] += std::norm(buf[k]);
    ++segments;
  }

  // density: Pxx[k] = mean|X[k]|² / (fs · Σw²); then Δf·ΣPxx = mean power
  const double norm = 1.0 / (static_cast<double>(segments) * fs_hz * win_pow);
  PsdEstimate psd;
  psd.segment = cfg.segment;
  psd.overlap = cfg.overlap;
  psd.freq_hz.resize(seg);
  psd.density_w_hz.resize(seg);
  psd.density_dbm_hz.resize(seg);
  const double df = fs_hz / static_cast<double>(seg);
  for (std::size_t i = 0; i < seg; ++i) {
    // fftshift: bin order −fs/2 .. fs/2
    const std::size_t k = (i + seg / 2) % seg;
    psd.freq_hz[i] = (static_cast<double>(i) - static_cast<double>(seg / 2)) * df;
    psd.density_w_hz[i] = acc[k] * norm;
    psd.density_dbm_hz[i] =
        psd.density_w_hz[i] > 0.0 ? 10.0 * std::log10(psd.density_w_hz[i] * 1e3) : -400.0;
  }
  return psd;
}

PsdEstimate error_psd(const ComplexMat& actual, const ComplexMat& ideal, double fs_hz,
                      const WelchConfig& cfg) {
  if (actual.rows() != ideal.rows() || actual.cols() != ideal.cols()) {
    throw std::invalid_argument("error_psd: shape mismatch");
  }
  PsdEstimate total;
  for (std::size_t b = 0; b < actual.cols(); ++b) {
    numerics::ComplexVec diff(actual.rows());
    for (std::size_t n = 0; n < actual.rows(); ++n) diff[n] = actual(n, b) - ideal(n, b);
    const PsdEstimate one = welch_psd(diff, fs_hz, cfg);
    if (b == 0) {
      total = one;
    } else {
      for (std::size_t i = 0; i < total.density_w_hz.size(); ++i) {
        total.density_w_hz[i] += one.density_w_hz[i];
      }
    }
  }
  for (std::size_t i = 0; i < total.density_w_hz.size(); ++i) {
    total.density_dbm_hz[i] =
        total.density_w_hz[i] > 0.0 ? 10.0 * std::log10(total.density_w_hz[i] * 1e3) : -400.0;
  }
  return total;
}

}  // namespace dpdlab::metrics
