// SPDX-License-Identifier: Apache-2.0
#include "dpdlab/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <thread>

#include "dpdlab/fd_dpd.hpp"
#include "dpdlab/fft.hpp"
#include "dpdlab/metrics.hpp"

namespace dpdlab::harness {

namespace fs = std::filesystem;

Phase phase_from_string(const std::string& name) {
  if (name == "gen") return Phase::kGen;
  if (name == "train-td") return Phase::kTrainTd;
  if (name == "targets") return Phase::kTargets;
  if (name == "train-hn") return Phase::kTrainHn;
  if (name == "train-fdnn") return Phase::kTrainFdnn;
  if (name == "eval") return Phase::kEval;
  if (name == "psd") return Phase::kPsd;
  throw ConfigError("unknown phase '" + name + "'");
}

std::string to_string(Phase phase) {
  switch (phase) {
    case Phase::kGen: return "gen";
    case Phase::kTrainTd: return "train-td";
    case Phase::kTargets: return "targets";
    case Phase::kTrainHn: return "train-hn";
    case Phase::kTrainFdnn: return "train-fdnn";
    case Phase::kEval: return "eval";
    case Phase::kPsd: return "psd";
  }
  return "?";
}

std::vector<Phase> all_phases() {
  return {Phase::kGen,     Phase::kTrainTd,   Phase::kTargets, Phase::kTrainHn,
          Phase::kTrainFdnn, Phase::kEval,      Phase::kPsd};
}

fs::path pa_array_path(const ExperimentConfig& cfg) { return fs::path(cfg.out_dir) / "pa_array.json"; }
fs::path channel_path(const ExperimentConfig& cfg) { return fs::path(cfg.out_dir) / "channel.json"; }
fs::path inputs_path(const ExperimentConfig& cfg, int state_id) {
  return fs::path(cfg.out_dir) / "data" / ("state_" + std::to_string(state_id) + "_inputs.bin");
}
fs::path targets_path(const ExperimentConfig& cfg, int state_id) {
  return fs::path(cfg.out_dir) / "data" / ("state_" + std::to_string(state_id) + "_targets.bin");
}
fs::path td_dpd_path(const ExperimentConfig& cfg) { return fs::path(cfg.out_dir) / "td_dpd.json"; }
fs::path hn_model_path(const ExperimentConfig& cfg) { return fs::path(cfg.out_dir) / "hn_fdnn.json"; }
fs::path fdnn_model_path(const ExperimentConfig& cfg) { return fs::path(cfg.out_dir) / "fdnn.json"; }
fs::path report_csv_path(const ExperimentConfig& cfg) { return fs::path(cfg.out_dir) / "report.csv"; }
fs::path report_json_path(const ExperimentConfig& cfg) { return fs::path(cfg.out_dir) / "report.json"; }
fs::path psd_csv_path(const ExperimentConfig& cfg) {
  return fs::path(cfg.out_dir) / ("psd_state_" + std::to_string(cfg.psd_state_id) + ".csv");
}

namespace {

using numerics::cdouble;
using numerics::ComplexMat;
using waveform::FdSymbolMatrix;
using waveform::SignalState;

void require_artifact(const fs::path& p, const std::string& producing_phase) {
  if (!fs::exists(p)) {
    throw PrerequisiteError("missing artifact " + p.string() + " (run the '" + producing_phase +
                            "' phase first)");
  }
}

/// index-sharded parallel map; every item writes only its own slot, so results
/// are independent of the thread count and schedule.
void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  const int workers = std::min(threads, n);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// deterministic per-purpose rng streams
numerics::RngStream data_rng(const ExperimentConfig& cfg, int state_id, int symbol) {
  return {cfg.seed, numerics::derive_stream_id("data", state_id, symbol)};
}
numerics::RngStream eval_rng(const ExperimentConfig& cfg, int state_id, int symbol) {
  return {cfg.seed, numerics::derive_stream_id("eval-data", state_id, symbol)};
}

mimo::ChannelModel generate_channel(const ExperimentConfig& cfg) {
  numerics::RngStream rng(cfg.seed, numerics::derive_stream_id("channel"));
  return mimo::los_channel(cfg.geometry, cfg.carrier_ghz, cfg.median_gain_db_at_1m,
                           cfg.pathloss_exponent, cfg.antennas, rng);
}

void save_channel(const mimo::ChannelModel& ch, const fs::path& path) {
  nlohmann::json j;
  j["carrier_ghz"] = ch.carrier_ghz;
  j["median_gain_db_at_1m"] = ch.median_gain_db_at_1m;
  j["pathloss_exponent"] = ch.pathloss_exponent;
  j["users"] = ch.h.rows();
  j["antennas"] = ch.h.cols();
  j["geometry"] = nlohmann::json::array();
  for (const auto& g : ch.geometry) {
    j["geometry"].push_back({{"distance_m", g.distance_m}, {"angle_deg", g.angle_deg}});
  }
  nlohmann::json h = nlohmann::json::array();
  for (std::size_t i = 0; i < ch.h.size(); ++i) {
    h.push_back({ch.h.data()[i].real(), ch.h.data()[i].imag()});
  }
  j["h"] = std::move(h);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump() << "\n";
}

mimo::ChannelModel load_channel(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw PrerequisiteError("cannot open " + path.string());
  nlohmann::json j;
  in >> j;
  mimo::ChannelModel ch;
  ch.carrier_ghz = j.at("carrier_ghz").get<double>();
  ch.median_gain_db_at_1m = j.at("median_gain_db_at_1m").get<double>();
  ch.pathloss_exponent = j.at("pathloss_exponent").get<double>();
  for (const auto& g : j.at("geometry")) {
    ch.geometry.push_back({g.at("distance_m").get<double>(), g.at("angle_deg").get<double>()});
  }
  const std::size_t users = j.at("users").get<std::size_t>();
  const std::size_t antennas = j.at("antennas").get<std::size_t>();
  ch.h = ComplexMat(users, antennas);
  const auto& h = j.at("h");
  if (h.size() != ch.h.size()) throw std::runtime_error("channel file: bad matrix size");
  for (std::size_t i = 0; i < ch.h.size(); ++i) {
    ch.h.data()[i] = cdouble(h[i][0].get<double>(), h[i][1].get<double>());
  }
  return ch;
}

int max_data_subcarriers(const ExperimentConfig& cfg) {
  int max_nd = 0;
  for (const auto& s : cfg.grid.states) {
    max_nd = std::max(
        max_nd,
        static_cast<int>(waveform::build_subcarrier_mask(cfg.n_fft, cfg.fs_mhz, s.bandwidth_mhz)
                             .size()));
  }
  return max_nd;
}

pa::PaArrayModel synth_per_state_array(const ExperimentConfig& cfg) {
  // one MP fit per state per branch, dimensions from the paper schedule,
  // compression calibrated at each state's own drive level
  pa::PaArrayModel model;
  bool first = true;
  for (const auto& st : cfg.grid.states) {
    pa::PaSynthSpec spec = cfg.pa;
    spec.memory_len = tddpd::mp_schedule_memory(st.bandwidth_mhz);
    spec.order = tddpd::mp_schedule_order(st.rms_power_dbm);
    spec.ref_drive_dbm = st.rms_power_dbm;
    pa::PaArrayModel one = pa::synth_pa_array(
        cfg.antennas, spec, cfg.seed ^ numerics::derive_stream_id("pa-state", st.id));
    if (first) {
      model.gain = one.gain;
      model.branches.resize(one.branches.size());
      first = false;
    }
    for (std::size_t b = 0; b < one.branches.size(); ++b) {
      model.branches[b].states.emplace(st.id, std::move(one.branches[b].states.at(-1)));
    }
  }
  model.validate();
  return model;
}

struct ChainContext {
  const ExperimentConfig& cfg;
  const pa::PaArrayModel& pa_model;
  const mimo::ChannelModel& channel;
  const mimo::Precoder& precoder;
};

/// One transmit pass: precode, power-normalize, amplify. Returns the PA input
/// scale alpha alongside the frames.
struct TxPass {
  ComplexMat pa_in_td;   // N×B, normalized to the state's RMS target
  ComplexMat pa_out_td;  // N×B
  double alpha = 1.0;
};

TxPass transmit(const ChainContext& ctx, const ComplexMat& s_entries, const SignalState& state) {
  const ComplexMat x_fd = mimo::apply_precoding(s_entries, ctx.precoder);
  const ComplexMat x_td = waveform::fd_to_td(x_fd);
  auto [x_norm, alpha] = mimo::normalize_power(x_td, state.rms_power_dbm);
  TxPass pass;
  pass.pa_out_td = pa::pa_array_apply(ctx.pa_model, x_norm, state.id);
  pass.pa_in_td = std::move(x_norm);
  pass.alpha = alpha;
  return pass;
}

std::vector<std::string> method_names() { return {"no-dpd", "fd-nn", "hn-fd-nn", "td-dpd"}; }

/// Deterministic per-state probe frame: a few OFDM symbols through the ideal
/// chain, normalized to the state's PA-input power. Narrow bands get
/// proportionally more symbols so every state's probe carries a comparable
/// number of independent samples.
ComplexMat build_state_probe(const ExperimentConfig& cfg, const mimo::Precoder& precoder,
                             const SignalState& st) {
  const auto mask = waveform::build_subcarrier_mask(cfg.n_fft, cfg.fs_mhz, st.bandwidth_mhz);
  const int bw_factor =
      std::max(1, static_cast<int>(std::lround(cfg.grid.bw_max_mhz / st.bandwidth_mhz)));
  const int symbols = std::max(1, cfg.ila_probe_symbols) * bw_factor;
  ComplexMat probe(static_cast<std::size_t>(cfg.n_fft) * symbols,
                   static_cast<std::size_t>(cfg.antennas));
  for (int q = 0; q < symbols; ++q) {
    numerics::RngStream rng(cfg.seed, numerics::derive_stream_id("ila-probe", st.id, q));
    const auto s = waveform::gen_fd_symbols(cfg.users, cfg.n_fft, mask, cfg.qam_order, rng);
    const ComplexMat x_fd = mimo::apply_precoding(s, precoder);
    const ComplexMat x_norm =
        mimo::normalize_power(waveform::fd_to_td(x_fd), st.rms_power_dbm).first;
    for (std::size_t n = 0; n < x_norm.rows(); ++n) {
      for (std::size_t b = 0; b < x_norm.cols(); ++b) {
        probe(static_cast<std::size_t>(q) * cfg.n_fft + n, b) = x_norm(n, b);
      }
    }
  }
  return probe;
}

/// Appends a slowly rotating amplitude ramp (0 to `peak_scale`× the branch
/// RMS) to each probe column. OFDM symbols only rarely visit their envelope
/// extremes, so a purely random probe leaves the postinverse polynomial
/// unconstrained exactly where fresh symbols will occasionally land; the ramp
/// pins it over the whole operating range.
ComplexMat append_envelope_ramp(const ComplexMat& probe, int ramp_len, double peak_scale) {
  const std::size_t antennas = probe.cols();
  ComplexMat out(probe.rows() + static_cast<std::size_t>(ramp_len), antennas);
  for (std::size_t b = 0; b < antennas; ++b) {
    double ms = 0.0;
    for (std::size_t n = 0; n < probe.rows(); ++n) ms += std::norm(probe(n, b));
    const double peak = peak_scale * std::sqrt(ms / static_cast<double>(probe.rows()));
    for (std::size_t n = 0; n < probe.rows(); ++n) out(n, b) = probe(n, b);
    for (int n = 0; n < ramp_len; ++n) {
      const double amp = peak * (n + 1) / static_cast<double>(ramp_len);
      const double phase = 2.0 * std::numbers::pi * 8.0 * n / static_cast<double>(ramp_len);
      out(probe.rows() + static_cast<std::size_t>(n), b) = std::polar(amp, phase);
    }
  }
  return out;
}

/// Linear gain of the PA array at this state's operating point: the LS scalar
/// fitting PA(x) ≈ g·x on the state probe. Under a fixed PA-input power this
/// is the right linearization target; the small-signal gain is unreachable
/// once the input is renormalized, since the array compresses on average.
cdouble operating_gain(const pa::PaArrayModel& pa_model, const ComplexMat& probe, int state_id) {
  const ComplexMat out = pa::pa_array_apply(pa_model, probe, state_id);
  cdouble num{};
  double den = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    num += std::conj(probe.data()[i]) * out.data()[i];
    den += std::norm(probe.data()[i]);
  }
  return num / den;
}

}  // namespace

// ---------------------------------------------------------------------------
// phases
// ---------------------------------------------------------------------------

namespace {

void run_gen(const ExperimentConfig& cfg, const PipelineOptions& opts) {
  fs::create_directories(fs::path(cfg.out_dir) / "data");

  pa::PaArrayModel pa_model;
  if (!cfg.pa_coeff_file.empty()) {
    pa_model = pa::load_pa_array(cfg.pa_coeff_file);
  } else if (cfg.pa_per_state) {
    pa_model = synth_per_state_array(cfg);
  } else {
    pa_model = pa::synth_pa_array(cfg.antennas, cfg.pa, cfg.seed);
  }
  pa::save_pa_array(pa_model, pa_array_path(cfg).string());

  save_channel(generate_channel(cfg), channel_path(cfg));

  const auto& ids = cfg.grid.training_ids;
  parallel_for(static_cast<int>(ids.size()), opts.threads, [&](int i) {
    const SignalState& st = cfg.grid.find(ids[static_cast<std::size_t>(i)]);
    const auto mask = waveform::build_subcarrier_mask(cfg.n_fft, cfg.fs_mhz, st.bandwidth_mhz);
    const auto c = waveform::make_state_vector(st, cfg.grid);
    std::vector<ComplexMat> symbols;
    symbols.reserve(static_cast<std::size_t>(cfg.q_symbols));
    for (int q = 0; q < cfg.q_symbols; ++q) {
      auto rng = data_rng(cfg, st.id, q);
      symbols.push_back(
          waveform::gen_fd_symbols(cfg.users, cfg.n_fft, mask, cfg.qam_order, rng).entries);
    }
    fddpd::write_symbol_records(inputs_path(cfg, st.id).string(), st, c, symbols);
  });
}

void run_train_td(const ExperimentConfig& cfg, const PipelineOptions& opts) {
  require_artifact(pa_array_path(cfg), "gen");
  require_artifact(channel_path(cfg), "gen");
  const pa::PaArrayModel pa_model = pa::load_pa_array(pa_array_path(cfg).string());
  const mimo::ChannelModel channel = load_channel(channel_path(cfg));
  const mimo::Precoder precoder = mimo::zf_precoder(channel);

  tddpd::TdDpdModel dpd;
  dpd.gain = pa_model.gain;
  dpd.branches.resize(pa_model.branches.size());

  const int n_states = static_cast<int>(cfg.grid.states.size());
  const int n_branches = cfg.antennas;

  std::vector<ComplexMat> probes(static_cast<std::size_t>(n_states));
  std::vector<cdouble> gains(static_cast<std::size_t>(n_states));
  for (int si = 0; si < n_states; ++si) {
    const SignalState& st = cfg.grid.states[static_cast<std::size_t>(si)];
    const ComplexMat ofdm = build_state_probe(cfg, precoder, st);
    // operating gain from the OFDM portion only; the fit probe adds the ramp
    gains[static_cast<std::size_t>(si)] = operating_gain(pa_model, ofdm, st.id);
    probes[static_cast<std::size_t>(si)] =
        append_envelope_ramp(ofdm, static_cast<int>(ofdm.rows()) / 16, 4.2);
  }

  std::vector<std::vector<pa::MpCoeffs>> fitted(
      static_cast<std::size_t>(n_states),
      std::vector<pa::MpCoeffs>(static_cast<std::size_t>(n_branches)));
  parallel_for(n_states * n_branches, opts.threads, [&](int idx) {
    const int si = idx / n_branches;
    const int b = idx % n_branches;
    const SignalState& st = cfg.grid.states[static_cast<std::size_t>(si)];
    tddpd::DpdSpec spec{tddpd::mp_schedule_memory(st.bandwidth_mhz),
                        tddpd::mp_schedule_order(st.rms_power_dbm)};
    const auto probe_col = probes[static_cast<std::size_t>(si)].col(static_cast<std::size_t>(b));
    const auto& branch_pa = pa_model.branches[static_cast<std::size_t>(b)].resolve(st.id);
    const auto result =
        tddpd::ila_fit(branch_pa, probe_col, spec, cfg.ila, gains[static_cast<std::size_t>(si)]);
    fitted[static_cast<std::size_t>(si)][static_cast<std::size_t>(b)] = result.coeffs;
  });
  for (int si = 0; si < n_states; ++si) {
    const int sid = cfg.grid.states[static_cast<std::size_t>(si)].id;
    for (int b = 0; b < n_branches; ++b) {
      dpd.branches[static_cast<std::size_t>(b)].states.emplace(
          sid, std::move(fitted[static_cast<std::size_t>(si)][static_cast<std::size_t>(b)]));
    }
  }
  pa::save_pa_array(dpd, td_dpd_path(cfg).string());
}

void run_targets(const ExperimentConfig& cfg, const PipelineOptions& opts) {
  require_artifact(channel_path(cfg), "gen");
  require_artifact(td_dpd_path(cfg), "train-td");
  const mimo::ChannelModel channel = load_channel(channel_path(cfg));
  const mimo::Precoder precoder = mimo::zf_precoder(channel);
  const tddpd::TdDpdModel dpd = pa::load_pa_array(td_dpd_path(cfg).string());

  const auto& ids = cfg.grid.training_ids;
  parallel_for(static_cast<int>(ids.size()), opts.threads, [&](int i) {
    const SignalState& st = cfg.grid.find(ids[static_cast<std::size_t>(i)]);
    require_artifact(inputs_path(cfg, st.id), "gen");
    const auto records = fddpd::read_symbol_records(inputs_path(cfg, st.id).string());
    std::vector<ComplexMat> targets;
    targets.reserve(records.symbols.size());
    for (const auto& s_entries : records.symbols) {
      const ComplexMat x_fd = mimo::apply_precoding(s_entries, precoder);
      auto [x_norm, alpha] = mimo::normalize_power(waveform::fd_to_td(x_fd), st.rms_power_dbm);
      ComplexMat x_dd = tddpd::td_dpd_apply(dpd, x_norm, st.id);
      x_dd = mimo::normalize_power(x_dd, st.rms_power_dbm).first;
      targets.push_back(
          fddpd::gen_targets(x_dd, mimo::Precoder{precoder.w, precoder.alpha * alpha}));
    }
    fddpd::write_symbol_records(targets_path(cfg, st.id).string(), records.state, records.c,
                                targets);
  });
}

fddpd::TrainingSet load_training_set(const ExperimentConfig& cfg) {
  fddpd::TrainingSet set;
  set.n_fft = cfg.n_fft;
  set.users = cfg.users;
  for (const int id : cfg.grid.training_ids) {
    require_artifact(inputs_path(cfg, id), "gen");
    require_artifact(targets_path(cfg, id), "targets");
    auto in_rec = fddpd::read_symbol_records(inputs_path(cfg, id).string());
    auto tar_rec = fddpd::read_symbol_records(targets_path(cfg, id).string());
    if (in_rec.symbols.size() != tar_rec.symbols.size()) {
      throw PrerequisiteError("inputs/targets symbol counts differ for state " +
                              std::to_string(id));
    }
    fddpd::StateDataset ds;
    ds.state = in_rec.state;
    ds.c = in_rec.c;
    ds.inputs_fd = std::move(in_rec.symbols);
    ds.targets_fd = std::move(tar_rec.symbols);
    set.states.push_back(std::move(ds));
  }
  return set;
}

fddpd::TrainHyper to_hyper(const TrainingConfig& t, std::uint64_t seed) {
  fddpd::TrainHyper h;
  h.lr = t.lr;
  h.batch_per_state = t.batch_per_state;
  h.max_epochs = t.max_epochs;
  h.patience = t.patience;
  h.val_symbols = t.val_symbols;
  h.seed = seed;
  return h;
}

void write_loss_csv(const fs::path& path, const fddpd::TrainResult& res) {
  std::ofstream out(path);
  out << "epoch,train_loss_fd,val_loss_fd\n";
  char buf[96];
  for (std::size_t e = 0; e < res.train_loss_fd.size(); ++e) {
    const double val = e < res.val_loss_fd.size() ? res.val_loss_fd[e] : res.train_loss_fd[e];
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g\n", e, res.train_loss_fd[e], val);
    out << buf;
  }
}

void run_train_hn(const ExperimentConfig& cfg, const PipelineOptions&) {
  const fddpd::TrainingSet set = load_training_set(cfg);

  fddpd::FdDpdModel model;
  model.memory = cfg.memory;
  model.users = cfg.users;
  model.tap_scale = fddpd::default_tap_scale(cfg.n_fft, max_data_subcarriers(cfg));
  nn::MlpSpec main_spec{cfg.main_layers, nn::Activation::kTanh};
  nn::MlpSpec hn_spec{cfg.hn_layers, nn::Activation::kRelu};
  numerics::RngStream rng(cfg.seed, numerics::derive_stream_id("hn-init"));
  model.net = nn::make_hn_fdnn(main_spec, hn_spec, rng);

  const auto res = fddpd::train_hn_fdnn(set, model, to_hyper(cfg.train, cfg.seed));
  write_loss_csv(fs::path(cfg.out_dir) / "hn_train_loss.csv", res);
  if (res.diverged) {
    throw TrainingDivergence("train-hn: loss diverged (see hn_train_loss.csv)");
  }
  fddpd::save_fd_dpd_model(hn_model_path(cfg).string(), model);
}

void run_train_fdnn(const ExperimentConfig& cfg, const PipelineOptions&) {
  const fddpd::TrainingSet set = load_training_set(cfg);

  fddpd::FdnnModel model;
  model.memory = cfg.memory;
  model.users = cfg.users;
  // fixed-state baseline: bake its own state's scale into the model
  const auto c_fdnn =
      waveform::make_state_vector(cfg.grid.find(cfg.fdnn_state_id), cfg.grid);
  model.tap_scale = fddpd::default_tap_scale(cfg.n_fft, max_data_subcarriers(cfg)) /
                    std::sqrt(c_fdnn[0]);
  nn::MlpSpec spec{cfg.main_layers, nn::Activation::kTanh};
  numerics::RngStream rng(cfg.seed, numerics::derive_stream_id("fdnn-init"));
  model.net = nn::make_mlp(spec, rng);

  const auto res = fddpd::train_fdnn(set, cfg.fdnn_state_id, model, to_hyper(cfg.fdnn_train, cfg.seed));
  write_loss_csv(fs::path(cfg.out_dir) / "fdnn_train_loss.csv", res);
  if (res.diverged) {
    throw TrainingDivergence("train-fdnn: loss diverged (see fdnn_train_loss.csv)");
  }
  fddpd::save_fdnn_model(fdnn_model_path(cfg).string(), model);
}

struct LoadedModels {
  pa::PaArrayModel pa_model;
  mimo::ChannelModel channel;
  mimo::Precoder precoder;
  tddpd::TdDpdModel td_dpd;
  fddpd::FdDpdModel hn;
  fddpd::FdnnModel fdnn;
};

LoadedModels load_models(const ExperimentConfig& cfg) {
  require_artifact(pa_array_path(cfg), "gen");
  require_artifact(channel_path(cfg), "gen");
  require_artifact(td_dpd_path(cfg), "train-td");
  require_artifact(hn_model_path(cfg), "train-hn");
  require_artifact(fdnn_model_path(cfg), "train-fdnn");
  LoadedModels m{pa::load_pa_array(pa_array_path(cfg).string()),
                 load_channel(channel_path(cfg)),
                 {},
                 pa::load_pa_array(td_dpd_path(cfg).string()),
                 fddpd::load_fd_dpd_model(hn_model_path(cfg).string()),
                 fddpd::load_fdnn_model(fdnn_model_path(cfg).string())};
  m.precoder = mimo::zf_precoder(m.channel);
  if (m.hn.users != cfg.users || m.hn.memory != cfg.memory) {
    throw PrerequisiteError("hn_fdnn.json does not match this config (users/memory)");
  }
  if (m.fdnn.users != cfg.users || m.fdnn.memory != cfg.memory) {
    throw PrerequisiteError("fdnn.json does not match this config (users/memory)");
  }
  return m;
}

StateResult eval_state(const ExperimentConfig& cfg, const LoadedModels& m, const SignalState& st) {
  const ChainContext ctx{cfg, m.pa_model, m.channel, m.precoder};
  const auto mask = waveform::build_subcarrier_mask(cfg.n_fft, cfg.fs_mhz, st.bandwidth_mhz);
  const auto c = waveform::make_state_vector(st, cfg.grid);
  const cdouble g_op =
      operating_gain(m.pa_model, build_state_probe(cfg, m.precoder, st), st.id);

  StateResult row;
  row.state = st;

  const auto names = method_names();
  std::vector<metrics::NmseAccumulator> nmse(names.size());
  std::vector<double> evm_sq(names.size(), 0.0);
  std::vector<long> evm_count(names.size(), 0);

  for (int q = 0; q < cfg.eval_symbols; ++q) {
    auto rng = eval_rng(cfg, st.id, q);
    const FdSymbolMatrix s = waveform::gen_fd_symbols(cfg.users, cfg.n_fft, mask, cfg.qam_order, rng);

    // reference chain: undistorted input, linearly amplified at the operating gain
    const TxPass ref = transmit(ctx, s.entries, st);
    ComplexMat ideal_out = ref.pa_in_td;
    ideal_out *= g_op;

    for (std::size_t mi = 0; mi < names.size(); ++mi) {
      TxPass pass;
      if (names[mi] == "no-dpd") {
        pass = ref;
      } else if (names[mi] == "fd-nn") {
        pass = transmit(ctx, fddpd::fdnn_infer(m.fdnn, s.entries), st);
      } else if (names[mi] == "hn-fd-nn") {
        pass = transmit(ctx, fddpd::fd_dpd_infer(m.hn, s.entries, c), st);
      } else {  // td-dpd
        ComplexMat x_dd = tddpd::td_dpd_apply(m.td_dpd, ref.pa_in_td, st.id);
        pass.pa_in_td = mimo::normalize_power(x_dd, st.rms_power_dbm).first;
        pass.pa_out_td = pa::pa_array_apply(m.pa_model, pass.pa_in_td, st.id);
        pass.alpha = ref.alpha;
      }
      nmse[mi].add(pass.pa_out_td, ideal_out);

      // receive + EVM, averaged over noise draws when noise is on
      const ComplexMat out_fd = waveform::td_to_fd(pass.pa_out_td);
      const int draws = cfg.noise.enabled ? cfg.noise_draws : 1;
      for (int d = 0; d < draws; ++d) {
        numerics::RngStream nrng(cfg.seed,
                                 numerics::derive_stream_id("noise", st.id * 1000 + q,
                                                            static_cast<std::uint64_t>(mi) * 64 + d));
        mimo::NoiseConfig noise = cfg.noise;
        noise.bandwidth_hz = cfg.fs_mhz * 1e6;
        const ComplexMat y = mimo::receive(out_fd, m.channel, noise, mask, nrng);
        metrics::EvmOptions evm_opts;
        if (cfg.equalize == "known-alpha") {
          evm_opts.mode = metrics::EvmOptions::Equalize::kKnownAlpha;
          evm_opts.known_scale = g_op * ref.alpha;
        }
        const auto rep = metrics::evm(y, s, evm_opts);
        evm_sq[mi] += rep.aggregate_pct * rep.aggregate_pct;
        evm_count[mi] += 1;
      }
    }
  }

  for (std::size_t mi = 0; mi < names.size(); ++mi) {
    MethodResult mr;
    mr.method = names[mi];
    mr.evm_pct = std::sqrt(evm_sq[mi] / static_cast<double>(evm_count[mi]));
    mr.tx_nmse_db = nmse[mi].db();
    row.methods.push_back(std::move(mr));
  }
  return row;
}

void run_eval(const ExperimentConfig& cfg, const PipelineOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  const LoadedModels m = load_models(cfg);

  const int n_states = static_cast<int>(cfg.grid.states.size());
  RunReport report;
  report.rows.resize(static_cast<std::size_t>(n_states));
  report.seed = cfg.seed;
  report.config_hash = config_hash_hex(cfg);

  parallel_for(n_states, opts.threads, [&](int i) {
    report.rows[static_cast<std::size_t>(i)] =
        eval_state(cfg, m, cfg.grid.states[static_cast<std::size_t>(i)]);
  });

  report.runtime_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  emit_report(report, cfg, report_csv_path(cfg), report_json_path(cfg));
}

void run_psd(const ExperimentConfig& cfg, const PipelineOptions&) {
  const LoadedModels m = load_models(cfg);
  const SignalState& st = cfg.grid.find(cfg.psd_state_id);
  const ChainContext ctx{cfg, m.pa_model, m.channel, m.precoder};
  const auto mask = waveform::build_subcarrier_mask(cfg.n_fft, cfg.fs_mhz, st.bandwidth_mhz);
  const auto c = waveform::make_state_vector(st, cfg.grid);

  const cdouble g_op =
      operating_gain(m.pa_model, build_state_probe(cfg, m.precoder, st), st.id);
  const std::size_t total = static_cast<std::size_t>(cfg.n_fft) * cfg.eval_symbols;
  ComplexMat tx_out(total, static_cast<std::size_t>(cfg.antennas));
  std::vector<ComplexMat> actual(4, ComplexMat(total, static_cast<std::size_t>(cfg.antennas)));
  ComplexMat ideal(total, static_cast<std::size_t>(cfg.antennas));

  const auto names = method_names();
  for (int q = 0; q < cfg.eval_symbols; ++q) {
    auto rng = eval_rng(cfg, st.id, q);
    const FdSymbolMatrix s = waveform::gen_fd_symbols(cfg.users, cfg.n_fft, mask, cfg.qam_order, rng);
    const TxPass ref = transmit(ctx, s.entries, st);
    ComplexMat ideal_out = ref.pa_in_td;
    ideal_out *= g_op;

    for (std::size_t mi = 0; mi < names.size(); ++mi) {
      TxPass pass;
      if (names[mi] == "no-dpd") {
        pass = ref;
      } else if (names[mi] == "fd-nn") {
        pass = transmit(ctx, fddpd::fdnn_infer(m.fdnn, s.entries), st);
      } else if (names[mi] == "hn-fd-nn") {
        pass = transmit(ctx, fddpd::fd_dpd_infer(m.hn, s.entries, c), st);
      } else {
        ComplexMat x_dd = tddpd::td_dpd_apply(m.td_dpd, ref.pa_in_td, st.id);
        pass.pa_in_td = mimo::normalize_power(x_dd, st.rms_power_dbm).first;
        pass.pa_out_td = pa::pa_array_apply(m.pa_model, pass.pa_in_td, st.id);
      }
      for (std::size_t n = 0; n < pass.pa_out_td.rows(); ++n) {
        for (std::size_t b = 0; b < pass.pa_out_td.cols(); ++b) {
          actual[mi](static_cast<std::size_t>(q) * cfg.n_fft + n, b) = pass.pa_out_td(n, b);
          if (mi == 0) {
            tx_out(static_cast<std::size_t>(q) * cfg.n_fft + n, b) = pass.pa_out_td(n, b);
            ideal(static_cast<std::size_t>(q) * cfg.n_fft + n, b) = ideal_out(n, b);
          }
        }
      }
    }
  }

  metrics::WelchConfig wcfg;
  wcfg.segment = std::min(cfg.psd_segment, cfg.n_fft);
  const double fs_hz = cfg.fs_mhz * 1e6;

  // TX output PSD: per-branch power sum of the undistorted-method output
  metrics::PsdEstimate tx_psd = metrics::error_psd(tx_out, ComplexMat(total, tx_out.cols()), fs_hz, wcfg);
  std::vector<metrics::PsdEstimate> err(names.size());
  for (std::size_t mi = 0; mi < names.size(); ++mi) {
    err[mi] = metrics::error_psd(actual[mi], ideal, fs_hz, wcfg);
  }

  std::ofstream out(psd_csv_path(cfg));
  out << "freq_mhz,tx_output_dbm_hz";
  for (const auto& nme : names) out << ",err_" << nme << "_dbm_hz";
  out << "\n";
  char buf[64];
  for (std::size_t i = 0; i < tx_psd.freq_hz.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.6g,%.6g", tx_psd.freq_hz[i] / 1e6, tx_psd.density_dbm_hz[i]);
    out << buf;
    for (std::size_t mi = 0; mi < names.size(); ++mi) {
      std::snprintf(buf, sizeof(buf), ",%.6g", err[mi].density_dbm_hz[i]);
      out << buf;
    }
    out << "\n";
  }
}

}  // namespace

void emit_report(const RunReport& report, const ExperimentConfig& cfg,
                 const fs::path& csv_path, const fs::path& json_path) {
  const auto names = method_names();
  for (const auto& row : report.rows) {
    if (row.methods.size() != names.size()) {
      throw std::runtime_error("emit_report: incomplete state/method matrix");
    }
  }

  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("emit_report: cannot write " + csv_path.string());
  csv << "state_id,bw_mhz,p_dbm,method,evm_pct,tx_nmse_db,seed,config_hash\n";
  char buf[192];
  for (const auto& row : report.rows) {
    for (const auto& mr : row.methods) {
      std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%s,%.9g,%.9g,%llu,%s\n", row.state.id,
                    row.state.bandwidth_mhz, row.state.rms_power_dbm, mr.method.c_str(),
                    mr.evm_pct, mr.tx_nmse_db, static_cast<unsigned long long>(report.seed),
                    report.config_hash.c_str());
      csv << buf;
    }
  }
  csv.close();

  nlohmann::json j;
  j["seed"] = report.seed;
  j["config_hash"] = report.config_hash;
  j["runtime_s"] = report.runtime_s;
  j["config"] = config_to_json(cfg);
  j["rows"] = nlohmann::json::array();
  for (const auto& row : report.rows) {
    for (const auto& mr : row.methods) {
      j["rows"].push_back({{"state_id", row.state.id},
                           {"bw_mhz", row.state.bandwidth_mhz},
                           {"p_dbm", row.state.rms_power_dbm},
                           {"method", mr.method},
                           {"evm_pct", mr.evm_pct},
                           {"tx_nmse_db", mr.tx_nmse_db}});
    }
  }
  std::ofstream js(json_path);
  js << j.dump(2) << "\n";
}

RunReport load_report_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw PrerequisiteError("cannot open report " + path.string());
  RunReport report;
  std::string line;
  std::getline(in, line);  // header
  std::map<int, StateResult> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 8) throw std::runtime_error("report csv: malformed line: " + line);
    const int sid = std::stoi(fields[0]);
    auto& row = rows[sid];
    row.state.id = sid;
    row.state.bandwidth_mhz = std::stod(fields[1]);
    row.state.rms_power_dbm = std::stod(fields[2]);
    row.methods.push_back({fields[3], std::stod(fields[4]), std::stod(fields[5])});
    report.seed = std::stoull(fields[6]);
    report.config_hash = fields[7];
  }
  for (auto& [sid, row] : rows) report.rows.push_back(std::move(row));
  return report;
}

void run_phase(const ExperimentConfig& cfg, Phase phase, const PipelineOptions& opts) {
  fs::create_directories(cfg.out_dir);
  switch (phase) {
    case Phase::kGen: run_gen(cfg, opts); break;
    case Phase::kTrainTd: run_train_td(cfg, opts); break;
    case Phase::kTargets: run_targets(cfg, opts); break;
    case Phase::kTrainHn: run_train_hn(cfg, opts); break;
    case Phase::kTrainFdnn: run_train_fdnn(cfg, opts); break;
    case Phase::kEval: run_eval(cfg, opts); break;
    case Phase::kPsd: run_psd(cfg, opts); break;
  }
}

void run_pipeline(const ExperimentConfig& cfg, const std::vector<Phase>& phases,
                  const PipelineOptions& opts) {
  for (const Phase p : phases) run_phase(cfg, p, opts);
}

double run_gradcheck(const ExperimentConfig& cfg, int seeds) {
  nn::MlpSpec main_spec{cfg.main_layers, nn::Activation::kTanh};
  nn::MlpSpec hn_spec{cfg.hn_layers, nn::Activation::kRelu};
  double worst = 0.0;
  for (int s = 0; s < seeds; ++s) {
    numerics::RngStream rng(cfg.seed + static_cast<std::uint64_t>(s),
                            numerics::derive_stream_id("gradcheck"));
    nn::HnFdnnModel model = nn::make_hn_fdnn(main_spec, hn_spec, rng);
    nn::GradCheckSample sample;
    sample.input = nn::RealMat(1, main_spec.input_dim());
    for (auto& v : sample.input.a) v = rng.gaussian();
    sample.c = {0.5 + 0.5 * rng.uniform(), 0.5 + 0.5 * rng.uniform()};
    sample.target = nn::RealMat(1, main_spec.output_dim());
    for (auto& v : sample.target.a) v = rng.gaussian();
    worst = std::max(worst, nn::grad_check(model, sample, 1e-6, 200,
                                           cfg.seed + static_cast<std::uint64_t>(s)));
  }
  return worst;
}

}  // namespace dpdlab::harness
