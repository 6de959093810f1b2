// SPDX-License-Identifier: Apache-2.0
#include "dpdlab/td_dpd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dpdlab/lstsq.hpp"

namespace dpdlab::tddpd {

ComplexMat mp_regressor_matrix(std::span<const cdouble> x, int memory_len, int order) {
  if (order < 1 || order % 2 == 0) {
    throw std::invalid_argument("mp_regressor_matrix: order must be odd");
  }
  const int n_orders = (order + 1) / 2;
  const std::size_t p = static_cast<std::size_t>(n_orders) * (memory_len + 1);
  if (x.size() <= p) {
    throw std::invalid_argument("mp_regressor_matrix: stream shorter than parameter count");
  }
  ComplexMat reg(x.size(), p);
  for (std::size_t n = 0; n < x.size(); ++n) {
    for (int ki = 0; ki < n_orders; ++ki) {
      for (int m = 0; m <= memory_len; ++m) {
        if (static_cast<std::size_t>(m) > n) continue;  // zero history
        const cdouble xm = x[n - m];
        reg(n, static_cast<std::size_t>(ki) * (memory_len + 1) + m) =
            xm * std::pow(std::norm(xm), ki);
      }
    }
  }
  return reg;
}

double cascade_nmse_db(std::span<const cdouble> y, std::span<const cdouble> x, cdouble gain) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += std::norm(y[i] - gain * x[i]);
    den += std::norm(gain * x[i]);
  }
  if (den == 0.0) throw std::invalid_argument("cascade_nmse_db: zero reference");
  if (num == 0.0) return -300.0;
  return 10.0 * std::log10(num / den);
}

IlaResult ila_fit(const MpCoeffs& branch_pa, std::span<const cdouble> probe, const DpdSpec& spec,
                  const IlaOptions& options, cdouble target_gain) {
  if (options.iterations < 1) {
    throw std::invalid_argument("ila_fit: iterations must be >= 1");
  }
  const ComplexVec x(probe.begin(), probe.end());

  IlaResult best;
  best.coeffs = pa::mp_identity(cdouble{1.0, 0.0}, spec.memory_len, spec.order);
  {
    const ComplexVec y0 = mp_apply(branch_pa, x);
    best.cascade_nmse_db.push_back(cascade_nmse_db(y0, x, target_gain));
  }
  double prev_nmse = best.cascade_nmse_db.front();
  double best_nmse = prev_nmse;
  int rising = 0;

  // The regression is equilibrated to unit RMS so column norms are O(1) per
  // order and the ridge acts uniformly; coefficients are rescaled back to the
  // physical signal level afterwards.
  double probe_ms = 0.0;
  for (const auto& z : x) probe_ms += std::norm(z);
  const double sigma = std::sqrt(probe_ms / static_cast<double>(x.size()));
  if (sigma == 0.0) throw std::invalid_argument("ila_fit: probe has no energy");

  ComplexVec u = x;  // current predistorted PA input
  for (int it = 0; it < options.iterations; ++it) {
    const ComplexVec y = mp_apply(branch_pa, u);

    // postinverse: regressors of y/(g·σ) against the PA input that produced y
    ComplexVec y_scaled(y.size());
    ComplexVec u_scaled(u.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      y_scaled[i] = y[i] / (target_gain * sigma);
      u_scaled[i] = u[i] / sigma;
    }
    const ComplexMat reg = mp_regressor_matrix(y_scaled, spec.memory_len, spec.order);
    const ComplexVec sol =
        numerics::lstsq(reg, std::span<const cdouble>(u_scaled), options.ridge);

    MpCoeffs cand;
    cand.memory_len = spec.memory_len;
    cand.order = spec.order;
    cand.coeffs = sol;
    for (int ki = 0; ki < cand.num_orders(); ++ki) {
      for (int m = 0; m <= cand.memory_len; ++m) {
        cand.at(ki, m) /= std::pow(sigma, 2 * ki);
      }
    }
    cand.validate();

    u = pa::mp_apply(cand, x);
    const ComplexVec yc = mp_apply(branch_pa, u);
    const double nmse = cascade_nmse_db(yc, x, target_gain);

    if (nmse < best_nmse) {
      best_nmse = nmse;
      best.coeffs = cand;
      best.cascade_nmse_db.push_back(nmse);
    }
    if (nmse >= prev_nmse) {
      if (++rising >= 2) {
        throw std::runtime_error("ila_fit: cascade NMSE increased two iterations in a row");
      }
    } else {
      rising = 0;
    }
    if (nmse >= prev_nmse - 0.01) break;  // converged, stop early
    prev_nmse = nmse;
  }
  return best;
}

ComplexMat td_dpd_apply(const TdDpdModel& model, const ComplexMat& frame, int state_id) {
  return pa::pa_array_apply(model, frame, state_id);
}

int mp_schedule_memory(double bandwidth_mhz) {
  const int idx = static_cast<int>(std::llround(bandwidth_mhz / 10.0));
  return std::clamp(idx, 1, 5) + 2;  // 10 MHz -> 3, ..., 50 MHz -> 7
}

int mp_schedule_order(double rms_power_dbm) {
  // nearest of {-20, -22, -24} dBm -> {7, 7, 5}
  return (rms_power_dbm < -23.0) ? 5 : 7;
}

}  // namespace dpdlab::tddpd
