// SPDX-License-Identifier: Apache-2.0
#include "dpdlab/fd_dpd.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "dpdlab/fft.hpp"

namespace dpdlab::fddpd {

nn::RealMat build_taps(const ComplexMat& td, int memory, double scale) {
  const int n = static_cast<int>(td.rows());
  const int users = static_cast<int>(td.cols());
  if (memory < 0) throw std::invalid_argument("build_taps: memory must be >= 0");
  if (memory >= n) throw std::invalid_argument("build_taps: memory must be < symbol length");
  nn::RealMat taps(n, 2 * (memory + 1) * users);
  const int imag_off = (memory + 1) * users;
  for (int s = 0; s < n; ++s) {
    double* row = taps.row_ptr(s);
    for (int m = 0; m <= memory; ++m) {
      const int src = (s - m + n) % n;  // circular wrap within the OFDM symbol
      const cdouble* td_row = td.data() + static_cast<std::size_t>(src) * users;
      for (int u = 0; u < users; ++u) {
        row[m * users + u] = scale * td_row[u].real();
        row[imag_off + m * users + u] = scale * td_row[u].imag();
      }
    }
  }
  return taps;
}

std::vector<double> build_tap(const ComplexMat& td, int n, int memory, double scale) {
  const int rows = static_cast<int>(td.rows());
  const int users = static_cast<int>(td.cols());
  std::vector<double> z1(static_cast<std::size_t>(2 * (memory + 1) * users));
  const int imag_off = (memory + 1) * users;
  for (int m = 0; m <= memory; ++m) {
    const int src = (n - m + rows) % rows;
    for (int u = 0; u < users; ++u) {
      const cdouble v = td(static_cast<std::size_t>(src), static_cast<std::size_t>(u));
      z1[static_cast<std::size_t>(m * users + u)] = scale * v.real();
      z1[static_cast<std::size_t>(imag_off + m * users + u)] = scale * v.imag();
    }
  }
  return z1;
}

namespace {

ComplexMat real_out_to_fd(const nn::RealMat& out, int users, double scale) {
  ComplexMat td(static_cast<std::size_t>(out.rows), static_cast<std::size_t>(users));
  const double inv = 1.0 / scale;
  for (int s = 0; s < out.rows; ++s) {
    const double* row = out.row_ptr(s);
    for (int u = 0; u < users; ++u) {
      td(static_cast<std::size_t>(s), static_cast<std::size_t>(u)) =
          cdouble(row[u] * inv, row[users + u] * inv);
    }
  }
  return waveform::td_to_fd(td);
}

}  // namespace

double state_tap_scale(const FdDpdModel& model, std::array<double, 2> c) {
  if (!(c[0] > 0.0)) throw std::invalid_argument("fd_dpd_infer: c1 must be positive");
  // narrower bands carry less TD power per sample; c1 = BW/BW_max recovers a
  // per-state scale that keeps tap samples near unit RMS for every state
  return model.tap_scale / std::sqrt(c[0]);
}

ComplexMat fd_dpd_infer(const FdDpdModel& model, const ComplexMat& s_entries,
                        std::array<double, 2> c) {
  if (static_cast<int>(s_entries.cols()) != model.users) {
    throw std::invalid_argument("fd_dpd_infer: user count mismatch");
  }
  const double scale = state_tap_scale(model, c);
  const ComplexMat td = waveform::fd_to_td(s_entries);
  const nn::RealMat taps = build_taps(td, model.memory, scale);
  const nn::OutputLayer layer = nn::hn_emit(model.net, c);
  const nn::RealMat out = nn::hn_fdnn_forward_cached(model.net, taps, layer);
  return real_out_to_fd(out, model.users, scale);
}

ComplexMat fdnn_infer(const FdnnModel& model, const ComplexMat& s_entries) {
  if (static_cast<int>(s_entries.cols()) != model.users) {
    throw std::invalid_argument("fdnn_infer: user count mismatch");
  }
  const ComplexMat td = waveform::fd_to_td(s_entries);
  const nn::RealMat taps = build_taps(td, model.memory, model.tap_scale);
  const nn::RealMat out = nn::mlp_forward(model.net, taps);
  return real_out_to_fd(out, model.users, model.tap_scale);
}

ComplexMat gen_targets(const ComplexMat& x_dd_td, const mimo::Precoder& precoder) {
  const ComplexMat x_fd = waveform::td_to_fd(x_dd_td);
  const ComplexMat pinv = mimo::precoder_pinv(precoder);  // U×B
  const std::size_t users = pinv.rows();
  const std::size_t antennas = pinv.cols();
  if (x_fd.cols() != antennas) {
    throw std::invalid_argument("gen_targets: antenna count mismatch");
  }
  ComplexMat s_tar(x_fd.rows(), users);
  for (std::size_t k = 0; k < x_fd.rows(); ++k) {
    const cdouble* xrow = x_fd.data() + k * antennas;
    cdouble* srow = s_tar.data() + k * users;
    for (std::size_t u = 0; u < users; ++u) {
      cdouble acc{};
      for (std::size_t b = 0; b < antennas; ++b) acc += pinv(u, b) * xrow[b];
      srow[u] = acc;
    }
  }
  return s_tar;
}

// ---------------------------------------------------------------------------
// Binary symbol records
// ---------------------------------------------------------------------------

namespace {

constexpr char kRecordMagic[8] = {'D', 'P', 'D', 'R', 'E', 'C', '0', '1'};

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("symbol records: truncated file");
}

}  // namespace

void write_symbol_records(const std::string& path, const SignalState& state,
                          std::array<double, 2> c, const std::vector<ComplexMat>& symbols) {
  if (symbols.empty()) throw std::invalid_argument("write_symbol_records: no symbols");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_symbol_records: cannot open " + path);
  out.write(kRecordMagic, sizeof(kRecordMagic));
  const std::uint32_t n = static_cast<std::uint32_t>(symbols.front().rows());
  const std::uint32_t users = static_cast<std::uint32_t>(symbols.front().cols());
  const std::uint32_t q = static_cast<std::uint32_t>(symbols.size());
  write_pod(out, n);
  write_pod(out, users);
  write_pod(out, q);
  const std::int32_t sid = state.id;
  write_pod(out, sid);
  write_pod(out, state.bandwidth_mhz);
  write_pod(out, state.rms_power_dbm);
  write_pod(out, c[0]);
  write_pod(out, c[1]);
  for (const auto& sym : symbols) {
    if (sym.rows() != n || sym.cols() != users) {
      throw std::invalid_argument("write_symbol_records: inconsistent symbol shapes");
    }
    out.write(reinterpret_cast<const char*>(sym.data()),
              static_cast<std::streamsize>(sym.size() * sizeof(cdouble)));
  }
  if (!out) throw std::runtime_error("write_symbol_records: short write to " + path);
}

SymbolRecords read_symbol_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_symbol_records: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kRecordMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("read_symbol_records: bad magic in " + path);
  }
  std::uint32_t n = 0, users = 0, q = 0;
  std::int32_t sid = 0;
  read_pod(in, n);
  read_pod(in, users);
  read_pod(in, q);
  read_pod(in, sid);
  SymbolRecords rec;
  rec.state.id = sid;
  read_pod(in, rec.state.bandwidth_mhz);
  read_pod(in, rec.state.rms_power_dbm);
  read_pod(in, rec.c[0]);
  read_pod(in, rec.c[1]);
  if (n == 0 || users == 0 || q == 0) {
    throw std::runtime_error("read_symbol_records: empty record set in " + path);
  }
  for (std::uint32_t i = 0; i < q; ++i) {
    ComplexMat sym(n, users);
    in.read(reinterpret_cast<char*>(sym.data()),
            static_cast<std::streamsize>(sym.size() * sizeof(cdouble)));
    if (!in) throw std::runtime_error("read_symbol_records: truncated payload in " + path);
    rec.symbols.push_back(std::move(sym));
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

struct PreparedState {
  std::array<double, 2> c{};
  nn::RealMat x_train, t_train;
  nn::RealMat x_val, t_val;
  int train_rows = 0;
  double scale = 1.0;   // tap/target scale this state was prepared with
  double to_fd = 1.0;   // converts scaled SSE to the FD-equivalent loss value
};

nn::RealMat targets_to_real(const ComplexMat& td, double scale) {
  const int n = static_cast<int>(td.rows());
  const int users = static_cast<int>(td.cols());
  nn::RealMat t(n, 2 * users);
  for (int s = 0; s < n; ++s) {
    double* row = t.row_ptr(s);
    const cdouble* src = td.data() + static_cast<std::size_t>(s) * users;
    for (int u = 0; u < users; ++u) {
      row[u] = scale * src[u].real();
      row[users + u] = scale * src[u].imag();
    }
  }
  return t;
}

void append_rows(nn::RealMat& dst, const nn::RealMat& src) {
  if (dst.rows == 0) {
    dst = src;
    return;
  }
  if (dst.cols != src.cols) throw std::invalid_argument("append_rows: width mismatch");
  dst.a.insert(dst.a.end(), src.a.begin(), src.a.end());
  dst.rows += src.rows;
}

PreparedState prepare_state(const StateDataset& ds, int memory, double scale, int val_symbols,
                            int n_fft) {
  if (ds.inputs_fd.size() != ds.targets_fd.size() || ds.inputs_fd.empty()) {
    throw std::invalid_argument("train: state dataset needs matching inputs and targets");
  }
  const int q = static_cast<int>(ds.inputs_fd.size());
  const int q_val = std::min(val_symbols, q - 1);
  PreparedState ps;
  ps.c = ds.c;
  ps.scale = scale;
  ps.to_fd = static_cast<double>(n_fft) / (scale * scale);
  for (int i = 0; i < q; ++i) {
    const ComplexMat td_in = waveform::fd_to_td(ds.inputs_fd[i]);
    const ComplexMat td_tgt = waveform::fd_to_td(ds.targets_fd[i]);
    const nn::RealMat taps = build_taps(td_in, memory, scale);
    const nn::RealMat tgts = targets_to_real(td_tgt, scale);
    if (i < q - q_val) {
      append_rows(ps.x_train, taps);
      append_rows(ps.t_train, tgts);
    } else {
      append_rows(ps.x_val, taps);
      append_rows(ps.t_val, tgts);
    }
  }
  ps.train_rows = ps.x_train.rows;
  return ps;
}

void gather_rows(const nn::RealMat& src, const std::vector<int>& perm, int begin, int count,
                 nn::RealMat& dst) {
  if (dst.rows != count || dst.cols != src.cols) dst = nn::RealMat(count, src.cols);
  for (int i = 0; i < count; ++i) {
    const double* s = src.row_ptr(perm[static_cast<std::size_t>(begin + i)]);
    std::copy(s, s + src.cols, dst.row_ptr(i));
  }
}

void shuffle_indices(std::vector<int>& idx, numerics::RngStream& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::swap(idx[i - 1], idx[rng.uniform_int(i)]);
  }
}

double batch_sse(const nn::RealMat& out, const nn::RealMat& tgt, nn::RealMat& dout,
                 double grad_scale) {
  if (dout.rows != out.rows || dout.cols != out.cols) dout = nn::RealMat(out.rows, out.cols);
  double sse = 0.0;
  for (std::size_t i = 0; i < out.a.size(); ++i) {
    const double d = out.a[i] - tgt.a[i];
    sse += d * d;
    dout.a[i] = 2.0 * d * grad_scale;
  }
  return sse;
}

double eval_sse(const nn::RealMat& out, const nn::RealMat& tgt) {
  double sse = 0.0;
  for (std::size_t i = 0; i < out.a.size(); ++i) {
    const double d = out.a[i] - tgt.a[i];
    sse += d * d;
  }
  return sse;
}

// Generic epoch loop shared by the HN and the fixed-state trainer. The
// callbacks hide which network is being driven. `set_lr` implements a
// plateau schedule: the rate halves after patience/4 stagnant epochs.
template <typename ForwardTrain, typename Step, typename EvalVal, typename Snapshot,
          typename Restore, typename SetLr>
TrainResult run_training(std::vector<PreparedState>& states, const TrainHyper& hyper,
                         ForwardTrain&& forward_train, Step&& adam, EvalVal&& eval_val,
                         Snapshot&& snapshot, Restore&& restore, SetLr&& set_lr) {
  TrainResult res;
  res.samples_per_state.assign(states.size(), 0);
  int train_rows = states.front().train_rows;
  for (const auto& ps : states) train_rows = std::min(train_rows, ps.train_rows);
  const int batch = std::min(hyper.batch_per_state, train_rows);
  if (batch < 1) throw std::invalid_argument("train: no training samples");
  const int steps = train_rows / batch;

  double best_val = std::numeric_limits<double>::infinity();
  double best_train = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  bool have_val = true;
  for (const auto& ps : states) have_val = have_val && ps.x_val.rows > 0;

  std::vector<std::vector<int>> perms(states.size());
  for (std::size_t s = 0; s < states.size(); ++s) {
    perms[s].resize(static_cast<std::size_t>(states[s].train_rows));
    for (int i = 0; i < states[s].train_rows; ++i) perms[s][static_cast<std::size_t>(i)] = i;
  }

  const double grad_scale = 1.0 / (static_cast<double>(batch) * static_cast<double>(states.size()));
  nn::RealMat xb, tb, dout;

  const int lr_step = std::max(3, hyper.patience / 4);
  double lr = hyper.lr;
  int stagnant = 0;

  for (int epoch = 0; epoch < hyper.max_epochs; ++epoch) {
    for (std::size_t s = 0; s < states.size(); ++s) {
      numerics::RngStream rng(hyper.seed,
                              numerics::derive_stream_id("train-shuffle", epoch, s));
      shuffle_indices(perms[s], rng);
    }
    double epoch_sse_fd = 0.0;
    long epoch_samples = 0;
    for (int step = 0; step < steps; ++step) {
      for (std::size_t s = 0; s < states.size(); ++s) {
        gather_rows(states[s].x_train, perms[s], step * batch, batch, xb);
        gather_rows(states[s].t_train, perms[s], step * batch, batch, tb);
        const nn::RealMat out = forward_train(s, xb);
        epoch_sse_fd += batch_sse(out, tb, dout, grad_scale) * states[s].to_fd;
        forward_train.backward(s, dout);
        res.samples_per_state[s] += batch;
        epoch_samples += batch;
      }
      adam();
      res.minibatches += 1;
    }
    // logged as the per-tap-sample FD-equivalent loss so train/val compare
    const double train_fd = epoch_sse_fd / static_cast<double>(epoch_samples);
    res.train_loss_fd.push_back(train_fd);
    if (!std::isfinite(train_fd)) {
      res.diverged = true;
      break;
    }

    double val_fd = train_fd;
    if (have_val) {
      double val_sse_fd = 0.0;
      long val_samples = 0;
      for (std::size_t s = 0; s < states.size(); ++s) {
        val_sse_fd += eval_val(s) * states[s].to_fd;
        val_samples += states[s].x_val.rows;
      }
      val_fd = val_sse_fd / static_cast<double>(val_samples);
    }
    res.val_loss_fd.push_back(val_fd);

    best_train = std::min(best_train, train_fd);
    if (val_fd < best_val * (1.0 - 1e-6)) {
      best_val = val_fd;
      best_epoch = epoch;
      stagnant = 0;
      snapshot();
    } else {
      if (epoch - best_epoch >= hyper.patience) {
        res.early_stopped = true;
        break;
      }
      if (++stagnant >= lr_step && lr > hyper.lr / 256.0) {
        lr *= 0.5;
        set_lr(lr);
        stagnant = 0;
      }
    }
  }

  res.best_epoch = best_epoch;
  if (best_epoch >= 0) restore();
  if (!res.train_loss_fd.empty() && best_train > res.train_loss_fd.front()) {
    res.diverged = true;
  }
  return res;
}

}  // namespace

TrainResult train_hn_fdnn(const TrainingSet& data, FdDpdModel& model, const TrainHyper& hyper) {
  if (data.states.empty()) throw std::invalid_argument("train_hn_fdnn: no training states");
  std::vector<PreparedState> states;
  for (const auto& ds : data.states) {
    states.push_back(prepare_state(ds, model.memory, state_tap_scale(model, ds.c),
                                   hyper.val_symbols, data.n_fft));
  }

  nn::HnFdnnGrads grads = nn::make_grads(model.net);
  nn::AdamConfig acfg;
  acfg.lr = hyper.lr;
  nn::AdamState opt = nn::AdamState::init(nn::param_list(model.net), acfg);
  nn::HnFdnnModel best = model.net;

  struct Driver {
    nn::HnFdnnModel& net;
    std::vector<PreparedState>& states;
    nn::HnFdnnGrads& grads;
    nn::HnFdnnCache cache;

    nn::RealMat operator()(std::size_t s, const nn::RealMat& xb) {
      return nn::hn_fdnn_forward(net, xb, states[s].c, &cache);
    }
    void backward(std::size_t s, const nn::RealMat& dout) {
      (void)s;
      nn::hn_fdnn_backward(net, cache, dout, grads);
    }
  } driver{model.net, states, grads, {}};

  auto zero_grads = [&grads]() {
    for (auto* g : nn::param_list(grads)) g->zero();
  };
  auto adam = [&]() {
    auto params = nn::param_list(model.net);
    auto glist = nn::param_list(grads);
    nn::adam_step(opt, params, glist);
    zero_grads();
  };
  auto eval_val = [&](std::size_t s) {
    const nn::OutputLayer layer = nn::hn_emit(model.net, states[s].c);
    const nn::RealMat out = nn::hn_fdnn_forward_cached(model.net, states[s].x_val, layer);
    return eval_sse(out, states[s].t_val);
  };
  auto snapshot = [&]() { best = model.net; };
  auto restore = [&]() { model.net = best; };
  auto set_lr = [&](double lr) { opt.cfg.lr = lr; };

  zero_grads();
  return run_training(states, hyper, driver, adam, eval_val, snapshot, restore, set_lr);
}

TrainResult train_fdnn(const TrainingSet& data, int state_id, FdnnModel& model,
                       const TrainHyper& hyper) {
  const StateDataset* ds = nullptr;
  for (const auto& s : data.states) {
    if (s.state.id == state_id) ds = &s;
  }
  if (ds == nullptr) {
    throw std::invalid_argument("train_fdnn: state " + std::to_string(state_id) +
                                " not in training set");
  }
  model.trained_state_id = state_id;
  std::vector<PreparedState> states;
  states.push_back(
      prepare_state(*ds, model.memory, model.tap_scale, hyper.val_symbols, data.n_fft));

  nn::MlpGrads grads = nn::make_grads(model.net);
  nn::AdamConfig acfg;
  acfg.lr = hyper.lr;
  nn::AdamState opt = nn::AdamState::init(nn::param_list(model.net), acfg);
  nn::Mlp best = model.net;

  struct Driver {
    nn::Mlp& net;
    nn::MlpGrads& grads;
    nn::MlpCache cache;

    nn::RealMat operator()(std::size_t, const nn::RealMat& xb) {
      return nn::mlp_forward(net, xb, &cache);
    }
    void backward(std::size_t, const nn::RealMat& dout) {
      nn::mlp_backward(net, cache, dout, grads);
    }
  } driver{model.net, grads, {}};

  auto zero_grads = [&grads]() {
    for (auto* g : nn::param_list(grads)) g->zero();
  };
  auto adam = [&]() {
    auto params = nn::param_list(model.net);
    auto glist = nn::param_list(grads);
    nn::adam_step(opt, params, glist);
    zero_grads();
  };
  auto eval_val = [&](std::size_t s) {
    return eval_sse(nn::mlp_forward(model.net, states[s].x_val), states[s].t_val);
  };
  auto snapshot = [&]() { best = model.net; };
  auto restore = [&]() { model.net = best; };
  auto set_lr = [&](double lr) { opt.cfg.lr = lr; };

  zero_grads();
  return run_training(states, hyper, driver, adam, eval_val, snapshot, restore, set_lr);
}

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

namespace {

void check_tap_dims(int input_dim, int output_dim, int memory, int users) {
  if (input_dim != 2 * (memory + 1) * users) {
    throw std::runtime_error("fd-dpd model: input dim != 2(M+1)U");
  }
  if (output_dim != 2 * users) {
    throw std::runtime_error("fd-dpd model: output dim != 2U");
  }
}

}  // namespace

void save_fd_dpd_model(const std::string& path, const FdDpdModel& model) {
  nlohmann::json j;
  j["format"] = "fd-dpd-model";
  j["kind"] = "hn-fdnn";
  j["memory"] = model.memory;
  j["users"] = model.users;
  j["tap_scale"] = model.tap_scale;
  j["net"] = nn::checkpoint_to_json(model.net);
  nn::save_checkpoint(path, j);
}

FdDpdModel load_fd_dpd_model(const std::string& path) {
  const nlohmann::json j = nn::load_checkpoint(path);
  if (j.at("format").get<std::string>() != "fd-dpd-model" ||
      j.at("kind").get<std::string>() != "hn-fdnn") {
    throw std::runtime_error("load_fd_dpd_model: " + path + " is not an hn-fdnn model");
  }
  FdDpdModel model;
  model.memory = j.at("memory").get<int>();
  model.users = j.at("users").get<int>();
  model.tap_scale = j.at("tap_scale").get<double>();
  model.net = nn::checkpoint_from_json(j.at("net"));
  check_tap_dims(model.net.main_spec.input_dim(), model.net.main_spec.output_dim(), model.memory,
                 model.users);
  return model;
}

void save_fdnn_model(const std::string& path, const FdnnModel& model) {
  nlohmann::json j;
  j["format"] = "fd-dpd-model";
  j["kind"] = "fdnn";
  j["memory"] = model.memory;
  j["users"] = model.users;
  j["tap_scale"] = model.tap_scale;
  j["trained_state_id"] = model.trained_state_id;
  j["net"] = nn::checkpoint_to_json(model.net);
  nn::save_checkpoint(path, j);
}

FdnnModel load_fdnn_model(const std::string& path) {
  const nlohmann::json j = nn::load_checkpoint(path);
  if (j.at("format").get<std::string>() != "fd-dpd-model" ||
      j.at("kind").get<std::string>() != "fdnn") {
    throw std::runtime_error("load_fdnn_model: " + path + " is not an fdnn model");
  }
  FdnnModel model;
  model.memory = j.at("memory").get<int>();
  model.users = j.at("users").get<int>();
  model.tap_scale = j.at("tap_scale").get<double>();
  model.trained_state_id = j.at("trained_state_id").get<int>();
  model.net = nn::mlp_checkpoint_from_json(j.at("net"));
  check_tap_dims(model.net.spec.input_dim(), model.net.spec.output_dim(), model.memory,
                 model.users);
  return model;
}

double default_tap_scale(int n_fft, int max_data_subcarriers) {
  if (n_fft <= 0 || max_data_subcarriers <= 0) {
    throw std::invalid_argument("default_tap_scale: invalid arguments");
  }
  // unit-power mask => TD sample RMS is sqrt(N_d)/N
  return static_cast<double>(n_fft) / std::sqrt(static_cast<double>(max_data_subcarriers));
}

}  // namespace dpdlab::fddpd
