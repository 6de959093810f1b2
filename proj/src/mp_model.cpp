// SPDX-License-Identifier: Apache-2.0
#include "dpdlab/mp_model.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "dpdlab/lstsq.hpp"
#include "dpdlab/waveform.hpp"

namespace dpdlab::pa {

void MpCoeffs::validate() const {
  if (memory_len < 0) throw std::invalid_argument("MpCoeffs: memory_len must be >= 0");
  if (order < 1 || order % 2 == 0) {
    throw std::invalid_argument("MpCoeffs: order must be odd and >= 1");
  }
  if (static_cast<int>(coeffs.size()) != num_coeffs()) {
    throw std::invalid_argument("MpCoeffs: coefficient count does not match (order, memory)");
  }
  for (const auto& a : coeffs) {
    if (!std::isfinite(a.real()) || !std::isfinite(a.imag())) {
      throw std::invalid_argument("MpCoeffs: non-finite coefficient");
    }
  }
}

MpCoeffs mp_identity(cdouble gain, int memory_len, int order) {
  MpCoeffs c;
  c.memory_len = memory_len;
  c.order = order;
  c.coeffs.assign(static_cast<std::size_t>(c.num_coeffs()), cdouble{});
  c.at(0, 0) = gain;
  return c;
}

ComplexVec mp_apply(const MpCoeffs& c, std::span<const cdouble> x) {
  if (x.empty()) throw std::invalid_argument("mp_apply: empty stream");
  const int m_len = c.memory_len;
  const int n_orders = c.num_orders();
  const std::size_t n = x.size();
  ComplexVec y(n);
  for (std::size_t i = 0; i < n; ++i) {
    cdouble acc{};
    const int m_max = static_cast<int>(std::min<std::size_t>(m_len, i));
    for (int m = 0; m <= m_max; ++m) {
      const cdouble xm = x[i - m];
      const double env2 = std::norm(xm);
      double env_pow = 1.0;  // |x|^{k-1} for k = 1, 3, 5, ...
      cdouble basis_acc{};
      for (int ki = 0; ki < n_orders; ++ki) {
        basis_acc += c.at(ki, m) * env_pow;
        env_pow *= env2;
      }
      acc += basis_acc * xm;
    }
    y[i] = acc;
  }
  return y;
}

const MpCoeffs& PaArrayModel::Branch::resolve(int state_id) const {
  if (auto it = states.find(state_id); it != states.end()) return it->second;
  if (auto it = states.find(-1); it != states.end()) return it->second;
  throw std::runtime_error("PaArrayModel: no coefficients for state " + std::to_string(state_id));
}

void PaArrayModel::validate() const {
  if (branches.empty()) throw std::invalid_argument("PaArrayModel: no branches");
  for (const auto& br : branches) {
    if (br.states.empty()) throw std::invalid_argument("PaArrayModel: branch without coefficients");
    for (const auto& [id, c] : br.states) c.validate();
  }
  if (!std::isfinite(gain.real()) || !std::isfinite(gain.imag())) {
    throw std::invalid_argument("PaArrayModel: non-finite gain");
  }
}

namespace {

// Envelope range the synthetic device is fitted over, in units of the
// reference RMS amplitude. OFDM envelopes essentially never exceed it
// (Rayleigh tail: P(u > 4.5) ~ 1.6e-9), plus headroom for predistorted peaks.
constexpr double kEnvelopeRange = 5.5;
constexpr int kFitGrid = 256;
constexpr double kAmPmRad = 0.06;  // phase twist at the reference drive

// Compressive prototype the MP coefficients are fitted against, normalized so
// u = envelope / x_ref and the linear gain is 1:
//   AM/AM: u·(1 − beta·u²/(1 + kAmAmKnee·u²))
//   AM/PM: kAmPmRad · u² / (1 + 0.3 u²)
// The gain drop is bounded (no hard saturation), so the response stays
// monotone over the whole envelope range and an inverse with moderate peak
// expansion exists; beta sets the requested compression at u = 1.
constexpr double kAmAmKnee = 4.0;

cdouble prototype_response(double u, double beta) {
  const double amp = u * (1.0 - beta * u * u / (1.0 + kAmAmKnee * u * u));
  const double phase = kAmPmRad * u * u / (1.0 + 0.3 * u * u);
  return std::polar(amp, phase);
}

// Weighted LS fit of the odd-order envelope polynomial u + Σ_{k≥3} c_k·u^k to
// the prototype over the operating range, weighted by the Rayleigh envelope
// density so the fit is tightest where OFDM samples actually live. The linear
// coefficient is pinned to 1 so the small-signal gain is exactly the nominal
// gain.
std::vector<cdouble> fit_envelope_polynomial(int order, double compression_db) {
  const double beta =
      (1.0 - std::pow(10.0, -compression_db / 20.0)) * (1.0 + kAmAmKnee);
  const int n_orders = (order + 1) / 2;
  std::vector<cdouble> coeffs{cdouble{1.0, 0.0}};
  if (n_orders == 1) return coeffs;
  ComplexMat basis(kFitGrid, static_cast<std::size_t>(n_orders) - 1);
  ComplexVec rhs(kFitGrid);
  for (int i = 0; i < kFitGrid; ++i) {
    const double u = kEnvelopeRange * (i + 1) / static_cast<double>(kFitGrid);
    const double w = std::sqrt(2.0 * u * std::exp(-u * u) + 1e-3);
    double up = u * u * u;
    for (int ki = 1; ki < n_orders; ++ki) {
      basis(static_cast<std::size_t>(i), static_cast<std::size_t>(ki) - 1) = w * up;
      up *= u * u;
    }
    rhs[static_cast<std::size_t>(i)] = w * (prototype_response(u, beta) - u);
  }
  const ComplexVec fit = lstsq(basis, std::span<const cdouble>(rhs), 0.0);
  coeffs.insert(coeffs.end(), fit.begin(), fit.end());
  return coeffs;
}

MpCoeffs synth_base_coeffs(const PaSynthSpec& spec) {
  if (spec.order < 1 || spec.order % 2 == 0) {
    throw std::invalid_argument("PaSynthSpec: order must be odd");
  }
  const cdouble gain =
      std::polar(std::pow(10.0, spec.gain_db / 20.0), spec.gain_phase_deg * std::numbers::pi / 180.0);
  const double x_ref = std::sqrt(waveform::dbm_to_watt(spec.ref_drive_dbm));

  MpCoeffs c;
  c.memory_len = spec.memory_len;
  c.order = spec.order;
  c.coeffs.assign(static_cast<std::size_t>(c.num_coeffs()), cdouble{});

  std::vector<cdouble> rho;
  if (spec.order >= 3) {
    rho = fit_envelope_polynomial(spec.order, spec.compression_db);
  } else {
    rho = {cdouble{1.0, 0.0}};
  }

  for (int ki = 0; ki < c.num_orders(); ++ki) {
    // memory taps with mild deterministic phase twist, normalized so the taps
    // of each order sum to exactly the fitted CW envelope coefficient
    cdouble tap_sum{};
    std::vector<cdouble> taps(static_cast<std::size_t>(spec.memory_len) + 1);
    for (int m = 0; m <= spec.memory_len; ++m) {
      const double mag = std::pow(spec.memory_decay, m);
      const double ph = 0.4 * m * (1.0 + 0.15 * ki);
      taps[m] = std::polar(mag, m == 0 ? 0.0 : ph);
      tap_sum += taps[m];
    }
    const int k = 2 * ki + 1;
    const cdouble a_sum = gain * rho[static_cast<std::size_t>(ki)] / std::pow(x_ref, k - 1);
    for (int m = 0; m <= spec.memory_len; ++m) {
      c.at(ki, m) = a_sum * taps[m] / tap_sum;
    }
  }
  return c;
}

}  // namespace

PaArrayModel synth_pa_array(int antennas, const PaSynthSpec& spec, std::uint64_t seed) {
  if (antennas < 1) throw std::invalid_argument("synth_pa_array: antennas must be >= 1");
  if (spec.perturbation >= 1.0 || spec.perturbation < 0.0) {
    throw std::invalid_argument("synth_pa_array: perturbation must be in [0, 1)");
  }
  const MpCoeffs base = synth_base_coeffs(spec);

  PaArrayModel model;
  model.gain =
      std::polar(std::pow(10.0, spec.gain_db / 20.0), spec.gain_phase_deg * std::numbers::pi / 180.0);
  model.branches.resize(static_cast<std::size_t>(antennas));
  for (int b = 0; b < antennas; ++b) {
    MpCoeffs c = base;
    if (spec.perturbation > 0.0) {
      // Branch diversity lives in the nonlinear terms; the linear taps are
      // common to the array, as they would be after per-antenna gain/phase
      // calibration.
      numerics::RngStream rng(seed, numerics::derive_stream_id("pa-branch", b));
      for (int ki = 1; ki < c.num_orders(); ++ki) {
        for (int m = 0; m <= c.memory_len; ++m) {
          c.at(ki, m) *= 1.0 + spec.perturbation * rng.complex_gaussian();
        }
      }
    }
    model.branches[static_cast<std::size_t>(b)].states.emplace(-1, std::move(c));
  }
  model.validate();
  return model;
}

ComplexMat pa_array_apply(const PaArrayModel& model, const ComplexMat& frame, int state_id) {
  if (frame.cols() != model.branches.size()) {
    throw std::invalid_argument("pa_array_apply: frame columns != branch count");
  }
  ComplexMat out(frame.rows(), frame.cols());
  for (std::size_t b = 0; b < frame.cols(); ++b) {
    const ComplexVec in = frame.col(b);
    const ComplexVec y = mp_apply(model.branches[b].resolve(state_id), in);
    out.set_col(b, y);
  }
  return out;
}

double am_am_compression_db(const MpCoeffs& c, double drive_rms_amplitude) {
  // CW envelope: all memory taps see the same amplitude
  cdouble small{};
  cdouble at_drive{};
  const int n_orders = c.num_orders();
  for (int ki = 0; ki < n_orders; ++ki) {
    cdouble a_sum{};
    for (int m = 0; m <= c.memory_len; ++m) a_sum += c.at(ki, m);
    if (ki == 0) small = a_sum;
    at_drive += a_sum * std::pow(drive_rms_amplitude, 2 * ki);
  }
  return 20.0 * std::log10(std::abs(small) / std::abs(at_drive));
}

namespace {

nlohmann::json coeffs_to_json(const MpCoeffs& c) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& a : c.coeffs) arr.push_back({a.real(), a.imag()});
  return arr;
}

MpCoeffs coeffs_from_json(const nlohmann::json& j) {
  MpCoeffs c;
  c.memory_len = j.at("memory").get<int>();
  c.order = j.at("order").get<int>();
  for (const auto& pair : j.at("coeffs")) {
    if (!pair.is_array() || pair.size() != 2) {
      throw std::runtime_error("PA coefficient file: coeffs entries must be [re, im]");
    }
    c.coeffs.emplace_back(pair[0].get<double>(), pair[1].get<double>());
  }
  c.validate();
  return c;
}

}  // namespace

void save_pa_array(const PaArrayModel& model, const std::string& path) {
  model.validate();
  nlohmann::json j;
  j["gain"] = {model.gain.real(), model.gain.imag()};
  j["branches"] = nlohmann::json::array();
  for (const auto& br : model.branches) {
    nlohmann::json jb;
    jb["states"] = nlohmann::json::array();
    for (const auto& [id, c] : br.states) {
      nlohmann::json js;
      js["state_id"] = id;
      js["memory"] = c.memory_len;
      js["order"] = c.order;
      js["coeffs"] = coeffs_to_json(c);
      jb["states"].push_back(std::move(js));
    }
    j["branches"].push_back(std::move(jb));
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_pa_array: cannot open " + path);
  out << j.dump(2) << "\n";
}

PaArrayModel load_pa_array(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_pa_array: cannot open " + path);
  nlohmann::json j;
  in >> j;
  PaArrayModel model;
  const auto& g = j.at("gain");
  model.gain = {g.at(0).get<double>(), g.at(1).get<double>()};
  for (const auto& jb : j.at("branches")) {
    PaArrayModel::Branch br;
    for (const auto& js : jb.at("states")) {
      br.states.emplace(js.at("state_id").get<int>(), coeffs_from_json(js));
    }
    model.branches.push_back(std::move(br));
  }
  model.validate();
  return model;
}

}  // namespace dpdlab::pa
