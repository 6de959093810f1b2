// SPDX-License-Identifier: Apache-2.0
#include "dpdlab/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

namespace dpdlab::nn {

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "relu") return Activation::kRelu;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

std::string to_string(Activation a) {
  return a == Activation::kTanh ? "tanh" : "relu";
}

void MlpSpec::validate() const {
  if (depth() < 3) throw std::invalid_argument("MlpSpec: need at least 3 layers");
  for (const int d : layers) {
    if (d < 1) throw std::invalid_argument("MlpSpec: layer widths must be >= 1");
  }
}

namespace {

void apply_activation(RealMat& m, Activation act) {
  if (act == Activation::kTanh) {
    for (auto& v : m.a) v = std::tanh(v);
  } else {
    for (auto& v : m.a) v = v > 0.0 ? v : 0.0;
  }
}

// derivative from the post-activation value: tanh' = 1-z², relu' = [z > 0]
void scale_by_activation_grad(RealMat& delta, const RealMat& z, Activation act) {
  if (act == Activation::kTanh) {
    for (std::size_t i = 0; i < delta.a.size(); ++i) delta.a[i] *= 1.0 - z.a[i] * z.a[i];
  } else {
    for (std::size_t i = 0; i < delta.a.size(); ++i) delta.a[i] *= z.a[i] > 0.0 ? 1.0 : 0.0;
  }
}

RealMat xavier_uniform(int fan_out, int fan_in, numerics::RngStream& rng, double scale = 1.0) {
  RealMat w(fan_out, fan_in);
  const double limit = scale * std::sqrt(6.0 / (fan_in + fan_out));
  for (auto& v : w.a) v = limit * (2.0 * rng.uniform() - 1.0);
  return w;
}

}  // namespace

Mlp make_mlp(const MlpSpec& spec, numerics::RngStream& rng) {
  spec.validate();
  Mlp net;
  net.spec = spec;
  for (int i = 0; i + 1 < spec.depth(); ++i) {
    net.w.push_back(xavier_uniform(spec.layers[i + 1], spec.layers[i], rng));
    net.b.emplace_back(1, spec.layers[i + 1]);
  }
  return net;
}

RealMat mlp_forward(const Mlp& net, const RealMat& input, MlpCache* cache) {
  if (input.cols != net.spec.input_dim()) {
    throw std::invalid_argument("mlp_forward: input dim mismatch");
  }
  if (cache != nullptr) {
    cache->z.assign(1, input);
  }
  RealMat z = input;
  for (std::size_t i = 0; i < net.w.size(); ++i) {
    RealMat next;
    linear_forward(z, net.w[i], net.b[i], next);
    if (i + 1 < net.w.size()) apply_activation(next, net.spec.hidden_activation);
    z = std::move(next);
    if (cache != nullptr) cache->z.push_back(z);
  }
  return z;
}

MlpGrads make_grads(const Mlp& net) {
  MlpGrads g;
  for (std::size_t i = 0; i < net.w.size(); ++i) {
    g.w.emplace_back(net.w[i].rows, net.w[i].cols);
    g.b.emplace_back(1, net.b[i].cols);
  }
  return g;
}

void mlp_backward(const Mlp& net, const MlpCache& cache, const RealMat& dout, MlpGrads& grads,
                  RealMat* dinput) {
  if (cache.z.size() != net.w.size() + 1) {
    throw std::invalid_argument("mlp_backward: stale or missing cache");
  }
  RealMat delta = dout;
  for (std::size_t i = net.w.size(); i-- > 0;) {
    RealMat dprev;
    const bool need_dprev = i > 0 || dinput != nullptr;
    linear_backward(cache.z[i], net.w[i], delta, grads.w[i], grads.b[i],
                    need_dprev ? &dprev : nullptr);
    if (i > 0) {
      scale_by_activation_grad(dprev, cache.z[i], net.spec.hidden_activation);
      delta = std::move(dprev);
    } else if (dinput != nullptr) {
      *dinput = std::move(dprev);
    }
  }
}

void HnFdnnModel::validate() const {
  main_spec.validate();
  hn.spec.validate();
  const int g = main_spec.depth();
  const int d_out = main_spec.layers[g - 1];
  const int d_prev = main_spec.layers[g - 2];
  if (hn.spec.input_dim() != 2) {
    throw std::invalid_argument("HnFdnnModel: hypernetwork input dim must be 2");
  }
  if (hn.spec.output_dim() != d_out * d_prev + d_out) {
    throw std::invalid_argument("HnFdnnModel: hypernetwork output dim must equal D_G*D_{G-1}+D_G");
  }
  if (static_cast<int>(main_w.size()) != g - 2) {
    throw std::invalid_argument("HnFdnnModel: wrong number of main hidden layers");
  }
}

HnFdnnModel make_hn_fdnn(const MlpSpec& main_spec, const MlpSpec& hn_spec,
                         numerics::RngStream& rng) {
  HnFdnnModel model;
  model.main_spec = main_spec;
  for (int i = 0; i + 2 < main_spec.depth(); ++i) {
    model.main_w.push_back(xavier_uniform(main_spec.layers[i + 1], main_spec.layers[i], rng));
    model.main_b.emplace_back(1, main_spec.layers[i + 1]);
  }
  model.hn = make_mlp(hn_spec, rng);
  // small final layer so the emitted output layer starts near zero
  const std::size_t last = model.hn.w.size() - 1;
  model.hn.w[last] = xavier_uniform(model.hn.w[last].rows, model.hn.w[last].cols, rng, 0.01);
  model.hn.b[last].zero();
  model.validate();
  return model;
}

OutputLayer hn_emit(const HnFdnnModel& model, std::array<double, 2> c) {
  RealMat cin(1, 2);
  cin(0, 0) = c[0];
  cin(0, 1) = c[1];
  const RealMat o = mlp_forward(model.hn, cin);
  const int g = model.main_spec.depth();
  const int d_out = model.main_spec.layers[g - 1];
  const int d_prev = model.main_spec.layers[g - 2];
  OutputLayer layer{RealMat(d_out, d_prev), RealMat(1, d_out)};
  for (int i = 0; i < d_out; ++i) {
    for (int j = 0; j < d_prev; ++j) layer.w(i, j) = o(0, i * d_prev + j);
    layer.b(0, i) = o(0, d_out * d_prev + i);
  }
  return layer;
}

RealMat hn_fdnn_forward(const HnFdnnModel& model, const RealMat& input, std::array<double, 2> c,
                        HnFdnnCache* cache) {
  if (input.cols != model.main_spec.input_dim()) {
    throw std::invalid_argument("hn_fdnn_forward: input dim mismatch");
  }
  HnFdnnCache local;
  HnFdnnCache& cc = cache != nullptr ? *cache : local;
  cc.z.assign(1, input);
  cc.c = c;

  RealMat z = input;
  for (std::size_t i = 0; i < model.main_w.size(); ++i) {
    RealMat next;
    linear_forward(z, model.main_w[i], model.main_b[i], next);
    apply_activation(next, model.main_spec.hidden_activation);
    z = std::move(next);
    cc.z.push_back(z);
  }

  RealMat cin(1, 2);
  cin(0, 0) = c[0];
  cin(0, 1) = c[1];
  const RealMat o = mlp_forward(model.hn, cin, &cc.hn_cache);
  const int g = model.main_spec.depth();
  const int d_out = model.main_spec.layers[g - 1];
  const int d_prev = model.main_spec.layers[g - 2];
  cc.out_layer = OutputLayer{RealMat(d_out, d_prev), RealMat(1, d_out)};
  for (int i = 0; i < d_out; ++i) {
    for (int j = 0; j < d_prev; ++j) cc.out_layer.w(i, j) = o(0, i * d_prev + j);
    cc.out_layer.b(0, i) = o(0, d_out * d_prev + i);
  }

  RealMat out;
  linear_forward(z, cc.out_layer.w, cc.out_layer.b, out);
  return out;
}

RealMat hn_fdnn_forward_cached(const HnFdnnModel& model, const RealMat& input,
                               const OutputLayer& out_layer) {
  RealMat z = input;
  for (std::size_t i = 0; i < model.main_w.size(); ++i) {
    RealMat next;
    linear_forward(z, model.main_w[i], model.main_b[i], next);
    apply_activation(next, model.main_spec.hidden_activation);
    z = std::move(next);
  }
  RealMat out;
  linear_forward(z, out_layer.w, out_layer.b, out);
  return out;
}

HnFdnnGrads make_grads(const HnFdnnModel& model) {
  HnFdnnGrads g;
  for (std::size_t i = 0; i < model.main_w.size(); ++i) {
    g.main_w.emplace_back(model.main_w[i].rows, model.main_w[i].cols);
    g.main_b.emplace_back(1, model.main_b[i].cols);
  }
  g.hn = make_grads(model.hn);
  return g;
}

void hn_fdnn_backward(const HnFdnnModel& model, const HnFdnnCache& cache, const RealMat& dout,
                      HnFdnnGrads& grads) {
  if (cache.z.size() != model.main_w.size() + 1) {
    throw std::invalid_argument("hn_fdnn_backward: stale or missing cache");
  }
  const int g = model.main_spec.depth();
  const int d_out = model.main_spec.layers[g - 1];
  const int d_prev = model.main_spec.layers[g - 2];

  // output layer: gradients w.r.t. the emitted (W_G, b_G), then through the hn
  RealMat dwg(d_out, d_prev);
  RealMat dbg(1, d_out);
  RealMat dz;
  linear_backward(cache.z.back(), cache.out_layer.w, dout, dwg, dbg, &dz);

  RealMat dhn_out(1, d_out * d_prev + d_out);
  for (int i = 0; i < d_out; ++i) {
    for (int j = 0; j < d_prev; ++j) dhn_out(0, i * d_prev + j) = dwg(i, j);
    dhn_out(0, d_out * d_prev + i) = dbg(0, i);
  }
  mlp_backward(model.hn, cache.hn_cache, dhn_out, grads.hn);

  // main hidden layers
  RealMat delta = std::move(dz);
  for (std::size_t i = model.main_w.size(); i-- > 0;) {
    scale_by_activation_grad(delta, cache.z[i + 1], model.main_spec.hidden_activation);
    RealMat dprev;
    linear_backward(cache.z[i], model.main_w[i], delta, grads.main_w[i], grads.main_b[i],
                    i > 0 ? &dprev : nullptr);
    if (i > 0) delta = std::move(dprev);
  }
}

std::vector<RealMat*> param_list(Mlp& net) {
  std::vector<RealMat*> out;
  for (auto& w : net.w) out.push_back(&w);
  for (auto& b : net.b) out.push_back(&b);
  return out;
}

std::vector<RealMat*> param_list(HnFdnnModel& model) {
  std::vector<RealMat*> out;
  for (auto& w : model.main_w) out.push_back(&w);
  for (auto& b : model.main_b) out.push_back(&b);
  for (auto* p : param_list(model.hn)) out.push_back(p);
  return out;
}

std::vector<RealMat*> param_list(MlpGrads& g) {
  std::vector<RealMat*> out;
  for (auto& w : g.w) out.push_back(&w);
  for (auto& b : g.b) out.push_back(&b);
  return out;
}

std::vector<RealMat*> param_list(HnFdnnGrads& g) {
  std::vector<RealMat*> out;
  for (auto& w : g.main_w) out.push_back(&w);
  for (auto& b : g.main_b) out.push_back(&b);
  for (auto* p : param_list(g.hn)) out.push_back(p);
  return out;
}

AdamState AdamState::init(const std::vector<RealMat*>& params, const AdamConfig& cfg) {
  AdamState st;
  st.cfg = cfg;
  for (const auto* p : params) {
    st.m.emplace_back(p->rows, p->cols);
    st.v.emplace_back(p->rows, p->cols);
  }
  return st;
}

void adam_step(AdamState& opt, const std::vector<RealMat*>& params,
               const std::vector<RealMat*>& grads) {
  if (params.size() != grads.size() || params.size() != opt.m.size()) {
    throw std::invalid_argument("adam_step: parameter/gradient list mismatch");
  }
  opt.step += 1;
  const double bc1 = 1.0 - std::pow(opt.cfg.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(opt.cfg.beta2, static_cast<double>(opt.step));
  for (std::size_t t = 0; t < params.size(); ++t) {
    RealMat& p = *params[t];
    const RealMat& g = *grads[t];
    RealMat& m = opt.m[t];
    RealMat& v = opt.v[t];
    if (!p.same_shape(g) || !p.same_shape(m)) {
      throw std::invalid_argument("adam_step: tensor shape mismatch");
    }
    for (std::size_t i = 0; i < p.a.size(); ++i) {
      m.a[i] = opt.cfg.beta1 * m.a[i] + (1.0 - opt.cfg.beta1) * g.a[i];
      v.a[i] = opt.cfg.beta2 * v.a[i] + (1.0 - opt.cfg.beta2) * g.a[i] * g.a[i];
      const double mhat = m.a[i] / bc1;
      const double vhat = v.a[i] / bc2;
      p.a[i] -= opt.cfg.lr * mhat / (std::sqrt(vhat) + opt.cfg.eps);
    }
  }
}

namespace {

double sq_loss(HnFdnnModel& model, const GradCheckSample& sample) {
  const RealMat out = hn_fdnn_forward(model, sample.input, sample.c);
  double loss = 0.0;
  for (std::size_t i = 0; i < out.a.size(); ++i) {
    const double d = out.a[i] - sample.target.a[i];
    loss += d * d;
  }
  return loss;
}

}  // namespace

double grad_check(HnFdnnModel& model, const GradCheckSample& sample, double h, int max_per_block,
                  std::uint64_t seed) {
  if (h < 1e-8 || h > 1e-4) {
    throw std::invalid_argument("grad_check: h must be in [1e-8, 1e-4]");
  }
  HnFdnnCache cache;
  const RealMat out = hn_fdnn_forward(model, sample.input, sample.c, &cache);
  RealMat dout(out.rows, out.cols);
  for (std::size_t i = 0; i < out.a.size(); ++i) {
    dout.a[i] = 2.0 * (out.a[i] - sample.target.a[i]);
  }
  HnFdnnGrads grads = make_grads(model);
  hn_fdnn_backward(model, cache, dout, grads);

  const std::vector<RealMat*> params = param_list(model);
  const std::vector<RealMat*> glist = param_list(grads);

  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    RealMat& p = *params[t];
    std::vector<std::size_t> idx;
    if (max_per_block <= 0 || static_cast<std::size_t>(max_per_block) >= p.a.size()) {
      idx.resize(p.a.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    } else {
      numerics::RngStream rng(seed, numerics::derive_stream_id("grad-check", t));
      std::set<std::size_t> chosen;
      while (chosen.size() < static_cast<std::size_t>(max_per_block)) {
        chosen.insert(rng.uniform_int(p.a.size()));
      }
      idx.assign(chosen.begin(), chosen.end());
    }
    for (const std::size_t i : idx) {
      const double saved = p.a[i];
      p.a[i] = saved + h;
      const double lp = sq_loss(model, sample);
      p.a[i] = saved - h;
      const double lm = sq_loss(model, sample);
      p.a[i] = saved;
      const double fd = (lp - lm) / (2.0 * h);
      const double an = glist[t]->a[i];
      const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-3});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

nlohmann::json mat_to_json(const RealMat& m) {
  return nlohmann::json(m.a);
}

void mat_from_json(const nlohmann::json& j, RealMat& m) {
  const auto vals = j.get<std::vector<double>>();
  if (vals.size() != m.a.size()) {
    throw std::runtime_error("checkpoint: parameter size mismatch");
  }
  m.a = vals;
}

nlohmann::json spec_to_json(const MlpSpec& s) {
  return {{"layers", s.layers}, {"activation", to_string(s.hidden_activation)}};
}

MlpSpec spec_from_json(const nlohmann::json& j) {
  MlpSpec s;
  s.layers = j.at("layers").get<std::vector<int>>();
  s.hidden_activation = activation_from_string(j.at("activation").get<std::string>());
  s.validate();
  return s;
}

nlohmann::json adam_to_json(const AdamState& st) {
  nlohmann::json j;
  j["step"] = st.step;
  j["lr"] = st.cfg.lr;
  j["beta1"] = st.cfg.beta1;
  j["beta2"] = st.cfg.beta2;
  j["eps"] = st.cfg.eps;
  nlohmann::json m = nlohmann::json::array();
  nlohmann::json v = nlohmann::json::array();
  for (std::size_t i = 0; i < st.m.size(); ++i) {
    m.push_back(mat_to_json(st.m[i]));
    v.push_back(mat_to_json(st.v[i]));
  }
  j["m"] = std::move(m);
  j["v"] = std::move(v);
  return j;
}

void adam_from_json(const nlohmann::json& j, const std::vector<RealMat*>& params, AdamState* opt) {
  opt->cfg.lr = j.at("lr").get<double>();
  opt->cfg.beta1 = j.at("beta1").get<double>();
  opt->cfg.beta2 = j.at("beta2").get<double>();
  opt->cfg.eps = j.at("eps").get<double>();
  *opt = AdamState::init(params, opt->cfg);
  opt->step = j.at("step").get<long>();
  const auto& m = j.at("m");
  const auto& v = j.at("v");
  if (m.size() != params.size() || v.size() != params.size()) {
    throw std::runtime_error("checkpoint: optimizer state tensor count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    mat_from_json(m[i], opt->m[i]);
    mat_from_json(v[i], opt->v[i]);
  }
}

}  // namespace

nlohmann::json checkpoint_to_json(const HnFdnnModel& model, const AdamState* opt) {
  nlohmann::json j;
  j["format"] = "hn-fdnn";
  j["spec"] = spec_to_json(model.main_spec);
  j["hn_spec"] = spec_to_json(model.hn.spec);
  j["reshape_convention"] = "row-major-wb";
  nlohmann::json params;
  for (std::size_t i = 0; i < model.main_w.size(); ++i) {
    params["main_w" + std::to_string(i + 2)] = mat_to_json(model.main_w[i]);
    params["main_b" + std::to_string(i + 2)] = mat_to_json(model.main_b[i]);
  }
  for (std::size_t i = 0; i < model.hn.w.size(); ++i) {
    params["hn_w" + std::to_string(i + 2)] = mat_to_json(model.hn.w[i]);
    params["hn_b" + std::to_string(i + 2)] = mat_to_json(model.hn.b[i]);
  }
  j["params"] = std::move(params);
  if (opt != nullptr) j["adam"] = adam_to_json(*opt);
  return j;
}

HnFdnnModel checkpoint_from_json(const nlohmann::json& j, AdamState* opt) {
  if (j.at("format").get<std::string>() != "hn-fdnn") {
    throw std::runtime_error("checkpoint: wrong format tag");
  }
  if (j.at("reshape_convention").get<std::string>() != "row-major-wb") {
    throw std::runtime_error("checkpoint: unsupported reshape convention");
  }
  HnFdnnModel model;
  model.main_spec = spec_from_json(j.at("spec"));
  const MlpSpec hn_spec = spec_from_json(j.at("hn_spec"));
  for (int i = 0; i + 2 < model.main_spec.depth(); ++i) {
    model.main_w.emplace_back(model.main_spec.layers[i + 1], model.main_spec.layers[i]);
    model.main_b.emplace_back(1, model.main_spec.layers[i + 1]);
  }
  model.hn.spec = hn_spec;
  for (int i = 0; i + 1 < hn_spec.depth(); ++i) {
    model.hn.w.emplace_back(hn_spec.layers[i + 1], hn_spec.layers[i]);
    model.hn.b.emplace_back(1, hn_spec.layers[i + 1]);
  }
  const auto& params = j.at("params");
  for (std::size_t i = 0; i < model.main_w.size(); ++i) {
    mat_from_json(params.at("main_w" + std::to_string(i + 2)), model.main_w[i]);
    mat_from_json(params.at("main_b" + std::to_string(i + 2)), model.main_b[i]);
  }
  for (std::size_t i = 0; i < model.hn.w.size(); ++i) {
    mat_from_json(params.at("hn_w" + std::to_string(i + 2)), model.hn.w[i]);
    mat_from_json(params.at("hn_b" + std::to_string(i + 2)), model.hn.b[i]);
  }
  model.validate();
  if (opt != nullptr && j.contains("adam")) {
    adam_from_json(j.at("adam"), param_list(model), opt);
  }
  return model;
}

nlohmann::json checkpoint_to_json(const Mlp& net, const AdamState* opt) {
  nlohmann::json j;
  j["format"] = "mlp";
  j["spec"] = spec_to_json(net.spec);
  nlohmann::json params;
  for (std::size_t i = 0; i < net.w.size(); ++i) {
    params["w" + std::to_string(i + 2)] = mat_to_json(net.w[i]);
    params["b" + std::to_string(i + 2)] = mat_to_json(net.b[i]);
  }
  j["params"] = std::move(params);
  if (opt != nullptr) j["adam"] = adam_to_json(*opt);
  return j;
}

Mlp mlp_checkpoint_from_json(const nlohmann::json& j, AdamState* opt) {
  if (j.at("format").get<std::string>() != "mlp") {
    throw std::runtime_error("checkpoint: wrong format tag");
  }
  Mlp net;
  net.spec = spec_from_json(j.at("spec"));
  for (int i = 0; i + 1 < net.spec.depth(); ++i) {
    net.w.emplace_back(net.spec.layers[i + 1], net.spec.layers[i]);
    net.b.emplace_back(1, net.spec.layers[i + 1]);
  }
  const auto& params = j.at("params");
  for (std::size_t i = 0; i < net.w.size(); ++i) {
    mat_from_json(params.at("w" + std::to_string(i + 2)), net.w[i]);
    mat_from_json(params.at("b" + std::to_string(i + 2)), net.b[i]);
  }
  if (opt != nullptr && j.contains("adam")) {
    adam_from_json(j.at("adam"), param_list(net), opt);
  }
  return net;
}

void save_checkpoint(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << j.dump() << "\n";
}

nlohmann::json load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("load_checkpoint: " + path + " is not a valid checkpoint: " +
                             e.what());
  }
  return j;
}

}  // namespace dpdlab::nn
