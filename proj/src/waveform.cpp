// SPDX-License-Identifier: Apache-2.0
#include "dpdlab/waveform.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "dpdlab/fft.hpp"

namespace dpdlab::waveform {

const SignalState& StateGrid::find(int id) const {
  for (const auto& s : states) {
    if (s.id == id) return s;
  }
  throw std::invalid_argument("StateGrid: unknown state id " + std::to_string(id));
}

bool StateGrid::is_training(int id) const {
  return std::find(training_ids.begin(), training_ids.end(), id) != training_ids.end();
}

void StateGrid::validate() const {
  if (states.empty()) throw std::invalid_argument("StateGrid: no states");
  if (training_ids.empty()) throw std::invalid_argument("StateGrid: no training states");
  double bw_max = 0.0;
  double p_max = 0.0;
  for (const auto& s : states) {
    if (s.bandwidth_mhz <= 0.0) {
      throw std::invalid_argument("StateGrid: state bandwidth must be positive");
    }
    bw_max = std::max(bw_max, s.bandwidth_mhz);
    p_max = std::max(p_max, dbm_to_mw(s.rms_power_dbm));
    for (const auto& t : states) {
      if (&s != &t && s.id == t.id) {
        throw std::invalid_argument("StateGrid: duplicate state id " + std::to_string(s.id));
      }
    }
  }
  if (std::abs(bw_max - bw_max_mhz) > 1e-9 * bw_max) {
    throw std::invalid_argument("StateGrid: bw_max_mhz does not equal the grid maximum");
  }
  if (std::abs(p_max - p_max_mw) > 1e-9 * p_max) {
    throw std::invalid_argument("StateGrid: p_max_mw does not equal the grid maximum");
  }
  for (const int id : training_ids) find(id);  // throws on unknown ids
}

double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }
double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

std::array<double, 2> make_state_vector(const SignalState& state, const StateGrid& grid) {
  const double c1 = state.bandwidth_mhz / grid.bw_max_mhz;
  const double c2 = dbm_to_mw(state.rms_power_dbm) / grid.p_max_mw;
  if (c1 <= 0.0 || c1 > 1.0 + 1e-12 || c2 <= 0.0 || c2 > 1.0 + 1e-12) {
    throw std::invalid_argument("make_state_vector: state outside grid ranges");
  }
  return {std::min(c1, 1.0), std::min(c2, 1.0)};
}

std::vector<int> build_subcarrier_mask(int n_fft, double fs_mhz, double bandwidth_mhz) {
  if (n_fft <= 0 || fs_mhz <= 0.0 || bandwidth_mhz <= 0.0) {
    throw std::invalid_argument("build_subcarrier_mask: invalid arguments");
  }
  // nearest even count, keeping the exact paper ratio when it divides evenly
  const int half = static_cast<int>(std::llround(n_fft * bandwidth_mhz / fs_mhz / 2.0));
  const int n_data = 2 * half;
  if (n_data <= 0) {
    throw std::invalid_argument("build_subcarrier_mask: band too narrow for this FFT size");
  }
  if (n_data >= n_fft) {
    throw std::invalid_argument("build_subcarrier_mask: band does not fit below fs");
  }
  std::vector<int> mask;
  mask.reserve(n_data);
  for (int k = 1; k <= half; ++k) mask.push_back(k);
  for (int k = n_fft - half; k < n_fft; ++k) mask.push_back(k);
  return mask;
}

namespace {

// Unit-average-power square QAM alphabet for order 4/16/64.
std::vector<double> qam_levels(int order) {
  int side = 0;
  switch (order) {
    case 4: side = 2; break;
    case 16: side = 4; break;
    case 64: side = 8; break;
    default:
      throw std::invalid_argument("gen_fd_symbols: qam order must be 4, 16, or 64");
  }
  // levels ±1, ±3, ... scaled to unit mean power: E|s|² = 2(side²-1)/3 before scaling
  std::vector<double> lv(side);
  const double scale = std::sqrt(3.0 / (2.0 * (side * side - 1)));
  for (int i = 0; i < side; ++i) lv[i] = (2 * i - (side - 1)) * scale;
  return lv;
}

}  // namespace

FdSymbolMatrix gen_fd_symbols(int users, int n_fft, const std::vector<int>& mask, int qam_order,
                              numerics::RngStream& rng) {
  if (users <= 0) throw std::invalid_argument("gen_fd_symbols: users must be positive");
  const std::vector<double> lv = qam_levels(qam_order);
  FdSymbolMatrix out{ComplexMat(static_cast<std::size_t>(n_fft), static_cast<std::size_t>(users)),
                     mask};
  for (const int k : mask) {
    for (int u = 0; u < users; ++u) {
      const double re = lv[rng.uniform_int(lv.size())];
      const double im = lv[rng.uniform_int(lv.size())];
      out.entries(static_cast<std::size_t>(k), static_cast<std::size_t>(u)) = {re, im};
    }
  }
  return out;
}

ComplexMat fd_to_td(const ComplexMat& fd) {
  ComplexMat td(fd.rows(), fd.cols());
  for (std::size_t c = 0; c < fd.cols(); ++c) {
    numerics::ComplexVec col = fd.col(c);
    numerics::dft_inplace(col, numerics::FftDirection::kInverse);
    td.set_col(c, col);
  }
  return td;
}

ComplexMat td_to_fd(const ComplexMat& td) {
  ComplexMat fd(td.rows(), td.cols());
  for (std::size_t c = 0; c < td.cols(); ++c) {
    numerics::ComplexVec col = td.col(c);
    numerics::dft_inplace(col, numerics::FftDirection::kForward);
    fd.set_col(c, col);
  }
  return fd;
}

}  // namespace dpdlab::waveform
