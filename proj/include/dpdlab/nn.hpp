// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpdlab/real_mat.hpp"
#include "dpdlab/rng.hpp"

namespace dpdlab::nn {

enum class Activation { kTanh, kRelu };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

struct MlpSpec {
  std::vector<int> layers;  // D1..DG
  Activation hidden_activation = Activation::kTanh;

  int depth() const { return static_cast<int>(layers.size()); }
  int input_dim() const { return layers.front(); }
  int output_dim() const { return layers.back(); }
  void validate() const;  // G >= 3, all widths >= 1
};

// ---------------------------------------------------------------------------
// Plain MLP with linear output (the hypernetwork, and the fixed-state FD-NN).
// ---------------------------------------------------------------------------

struct Mlp {
  MlpSpec spec;
  std::vector<RealMat> w;  // w[i]: layers[i+1]×layers[i]
  std::vector<RealMat> b;  // b[i]: 1×layers[i+1]
};

Mlp make_mlp(const MlpSpec& spec, numerics::RngStream& rng);

struct MlpCache {
  std::vector<RealMat> z;  // z[0] = input, z[i] = layer-i output (post-activation)
};

RealMat mlp_forward(const Mlp& net, const RealMat& input, MlpCache* cache = nullptr);

struct MlpGrads {
  std::vector<RealMat> w, b;
};

MlpGrads make_grads(const Mlp& net);

/// Accumulates parameter gradients given dL/d(output); optionally returns
/// dL/d(input). The cache must come from a matching forward pass.
void mlp_backward(const Mlp& net, const MlpCache& cache, const RealMat& dout, MlpGrads& grads,
                  RealMat* dinput = nullptr);

// ---------------------------------------------------------------------------
// Main network with hypernetwork-generated output layer.
// ---------------------------------------------------------------------------

/// Trainable parameters: the main network's hidden layers (W₂..W_{G−1}) and
/// the whole hypernetwork. The output layer (W_G, b_G) is the hypernetwork's
/// inference result for the conditioning vector c, not a parameter.
struct HnFdnnModel {
  MlpSpec main_spec;  // hidden activation applies to layers 2..G−1
  std::vector<RealMat> main_w;
  std::vector<RealMat> main_b;
  Mlp hn;  // input dim 2, output dim D_G·D_{G−1}+D_G

  void validate() const;
};

HnFdnnModel make_hn_fdnn(const MlpSpec& main_spec, const MlpSpec& hn_spec,
                         numerics::RngStream& rng);

/// Output-layer parameters emitted by the hypernetwork for one state vector,
/// unpacked row-major, weights first then biases ("row-major-wb").
struct OutputLayer {
  RealMat w;  // D_G×D_{G−1}
  RealMat b;  // 1×D_G
};

OutputLayer hn_emit(const HnFdnnModel& model, std::array<double, 2> c);

struct HnFdnnCache {
  std::vector<RealMat> z;  // z[0] = input .. z[G−2] = z_{G−1}
  MlpCache hn_cache;
  OutputLayer out_layer;
  std::array<double, 2> c{};
};

/// Batched forward; every row of `input` shares the conditioning vector c, so
/// the hypernetwork runs once per call and its output layer is reused.
RealMat hn_fdnn_forward(const HnFdnnModel& model, const RealMat& input, std::array<double, 2> c,
                        HnFdnnCache* cache = nullptr);

/// Forward with a previously emitted output layer; for a fixed state this is
/// exactly equal to hn_fdnn_forward and skips the hypernetwork entirely.
RealMat hn_fdnn_forward_cached(const HnFdnnModel& model, const RealMat& input,
                               const OutputLayer& out_layer);

struct HnFdnnGrads {
  std::vector<RealMat> main_w, main_b;
  MlpGrads hn;
};

HnFdnnGrads make_grads(const HnFdnnModel& model);

void hn_fdnn_backward(const HnFdnnModel& model, const HnFdnnCache& cache, const RealMat& dout,
                      HnFdnnGrads& grads);

// ---------------------------------------------------------------------------
// Optimizer, gradient checking, serialization.
// ---------------------------------------------------------------------------

/// Aligned traversal of trainable tensors; parameter and gradient lists use
/// the same order everywhere (main weights, main biases, hn weights, hn biases).
std::vector<RealMat*> param_list(Mlp& net);
std::vector<RealMat*> param_list(HnFdnnModel& model);
std::vector<RealMat*> param_list(MlpGrads& g);
std::vector<RealMat*> param_list(HnFdnnGrads& g);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  long step = 0;
  std::vector<RealMat> m, v;

  static AdamState init(const std::vector<RealMat*>& params, const AdamConfig& cfg);
};

/// Bias-corrected Adam update; zero gradients leave parameters untouched.
void adam_step(AdamState& opt, const std::vector<RealMat*>& params,
               const std::vector<RealMat*>& grads);

struct GradCheckSample {
  RealMat input;  // S×D₁
  std::array<double, 2> c{};
  RealMat target;  // S×D_G
};

/// Central-difference check of the analytic gradients on the squared-error
/// loss. Checks every parameter when max_per_block == 0, else a seeded random
/// subset of each tensor. Returns the worst relative error.
double grad_check(HnFdnnModel& model, const GradCheckSample& sample, double h,
                  int max_per_block = 0, std::uint64_t seed = 0);

nlohmann::json checkpoint_to_json(const HnFdnnModel& model, const AdamState* opt = nullptr);
HnFdnnModel checkpoint_from_json(const nlohmann::json& j, AdamState* opt = nullptr);
nlohmann::json checkpoint_to_json(const Mlp& net, const AdamState* opt = nullptr);
Mlp mlp_checkpoint_from_json(const nlohmann::json& j, AdamState* opt = nullptr);

void save_checkpoint(const std::string& path, const nlohmann::json& j);
nlohmann::json load_checkpoint(const std::string& path);

}  // namespace dpdlab::nn
