// SPDX-License-Identifier: Apache-2.0
#include "dpdlab/config.hpp"

#include <algorithm>
#include <fstream>

#include "dpdlab/fft.hpp"

namespace dpdlab::harness {

namespace {

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
  if (j.contains(key)) return j.at(key).get<T>();
  return fallback;
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  try {
    cfg.n_fft = j.at("n_fft").get<int>();
    cfg.fs_mhz = j.at("fs_mhz").get<double>();
    cfg.qam_order = get_or(j, "qam_order", 16);
    cfg.users = j.at("users").get<int>();
    cfg.antennas = j.at("antennas").get<int>();

    cfg.geometry.clear();
    for (const auto& g : j.at("geometry")) {
      cfg.geometry.push_back(
          {g.at("distance_m").get<double>(), g.at("angle_deg").get<double>()});
    }
    if (j.contains("channel")) {
      const auto& ch = j.at("channel");
      cfg.carrier_ghz = get_or(ch, "carrier_ghz", 30.0);
      cfg.median_gain_db_at_1m = get_or(ch, "median_gain_db_at_1m", -61.9);
      cfg.pathloss_exponent = get_or(ch, "pathloss_exponent", 2.1);
    }

    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      cfg.noise.enabled = get_or(n, "enabled", true);
      cfg.noise.noise_psd_dbm_hz = get_or(n, "psd_dbm_hz", -174.0);
      cfg.noise.noise_figure_db = get_or(n, "figure_db", 7.0);
    }
    cfg.noise.bandwidth_hz = cfg.fs_mhz * 1e6;
    cfg.equalize = get_or<std::string>(j, "equalize", "ls-scalar");
    cfg.noise_draws = get_or(j, "noise_draws", 4);

    cfg.grid.states.clear();
    for (const auto& s : j.at("states")) {
      cfg.grid.states.push_back({s.at("bandwidth_mhz").get<double>(),
                                 s.at("rms_power_dbm").get<double>(), s.at("id").get<int>()});
    }
    cfg.grid.training_ids = j.at("training_states").get<std::vector<int>>();
    cfg.grid.bw_max_mhz = 0.0;
    cfg.grid.p_max_mw = 0.0;
    for (const auto& s : cfg.grid.states) {
      cfg.grid.bw_max_mhz = std::max(cfg.grid.bw_max_mhz, s.bandwidth_mhz);
      cfg.grid.p_max_mw = std::max(cfg.grid.p_max_mw, waveform::dbm_to_mw(s.rms_power_dbm));
    }
    cfg.fdnn_state_id = j.at("fdnn_state").get<int>();
    cfg.psd_state_id = get_or(j, "psd_state", cfg.grid.states.front().id);

    if (j.contains("pa")) {
      const auto& p = j.at("pa");
      cfg.pa_coeff_file = get_or<std::string>(p, "coeff_file", "");
      cfg.pa.order = get_or(p, "order", 7);
      cfg.pa.memory_len = get_or(p, "memory", 3);
      cfg.pa.gain_db = get_or(p, "gain_db", 40.0);
      cfg.pa.gain_phase_deg = get_or(p, "gain_phase_deg", 15.0);
      cfg.pa.ref_drive_dbm = get_or(p, "ref_drive_dbm", -20.0);
      cfg.pa.compression_db = get_or(p, "compression_db", 1.0);
      cfg.pa.memory_decay = get_or(p, "memory_decay", 0.25);
      cfg.pa.perturbation = get_or(p, "perturbation", 0.05);
      cfg.pa_per_state = get_or(p, "per_state", false);
    }

    if (j.contains("ila")) {
      cfg.ila.iterations = get_or(j.at("ila"), "iterations", 2);
      cfg.ila.ridge = get_or(j.at("ila"), "ridge", 1e-8);
      cfg.ila_probe_symbols = get_or(j.at("ila"), "probe_symbols", 2);
    }

    const auto& nn = j.at("nn");
    cfg.main_layers = nn.at("main_layers").get<std::vector<int>>();
    cfg.hn_layers = nn.at("hn_layers").get<std::vector<int>>();
    cfg.memory = nn.at("memory").get<int>();

    auto read_train = [&](const std::string& key, TrainingConfig base) {
      if (!j.contains(key)) return base;
      const auto& t = j.at(key);
      base.lr = get_or(t, "lr", base.lr);
      base.batch_per_state = get_or(t, "batch_per_state", base.batch_per_state);
      base.max_epochs = get_or(t, "max_epochs", base.max_epochs);
      base.patience = get_or(t, "patience", base.patience);
      base.val_symbols = get_or(t, "val_symbols", base.val_symbols);
      return base;
    };
    cfg.train = read_train("train", TrainingConfig{});
    cfg.fdnn_train = read_train("fdnn_train", cfg.train);

    cfg.q_symbols = get_or(j, "q_symbols", 20);
    cfg.eval_symbols = get_or(j, "eval_symbols", 4);
    cfg.psd_segment = get_or(j, "psd_segment", 2048);
    cfg.seed = get_or<std::uint64_t>(j, "seed", 42);
    cfg.out_dir = get_or<std::string>(j, "out_dir", "out");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  validate_config(cfg);
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, /*allow comments*/ true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
  return config_from_json(j);
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["n_fft"] = cfg.n_fft;
  j["fs_mhz"] = cfg.fs_mhz;
  j["qam_order"] = cfg.qam_order;
  j["users"] = cfg.users;
  j["antennas"] = cfg.antennas;
  j["geometry"] = nlohmann::json::array();
  for (const auto& g : cfg.geometry) {
    j["geometry"].push_back({{"distance_m", g.distance_m}, {"angle_deg", g.angle_deg}});
  }
  j["channel"] = {{"carrier_ghz", cfg.carrier_ghz},
                  {"median_gain_db_at_1m", cfg.median_gain_db_at_1m},
                  {"pathloss_exponent", cfg.pathloss_exponent}};
  j["noise"] = {{"enabled", cfg.noise.enabled},
                {"psd_dbm_hz", cfg.noise.noise_psd_dbm_hz},
                {"figure_db", cfg.noise.noise_figure_db}};
  j["equalize"] = cfg.equalize;
  j["noise_draws"] = cfg.noise_draws;
  j["states"] = nlohmann::json::array();
  for (const auto& s : cfg.grid.states) {
    j["states"].push_back(
        {{"id", s.id}, {"bandwidth_mhz", s.bandwidth_mhz}, {"rms_power_dbm", s.rms_power_dbm}});
  }
  j["training_states"] = cfg.grid.training_ids;
  j["fdnn_state"] = cfg.fdnn_state_id;
  j["psd_state"] = cfg.psd_state_id;
  j["pa"] = {{"coeff_file", cfg.pa_coeff_file},
             {"order", cfg.pa.order},
             {"memory", cfg.pa.memory_len},
             {"gain_db", cfg.pa.gain_db},
             {"gain_phase_deg", cfg.pa.gain_phase_deg},
             {"ref_drive_dbm", cfg.pa.ref_drive_dbm},
             {"compression_db", cfg.pa.compression_db},
             {"memory_decay", cfg.pa.memory_decay},
             {"perturbation", cfg.pa.perturbation},
             {"per_state", cfg.pa_per_state}};
  j["ila"] = {{"iterations", cfg.ila.iterations},
              {"ridge", cfg.ila.ridge},
              {"probe_symbols", cfg.ila_probe_symbols}};
  j["nn"] = {{"main_layers", cfg.main_layers},
             {"hn_layers", cfg.hn_layers},
             {"memory", cfg.memory}};
  auto train_json = [](const TrainingConfig& t) {
    return nlohmann::json{{"lr", t.lr},
                          {"batch_per_state", t.batch_per_state},
                          {"max_epochs", t.max_epochs},
                          {"patience", t.patience},
                          {"val_symbols", t.val_symbols}};
  };
  j["train"] = train_json(cfg.train);
  j["fdnn_train"] = train_json(cfg.fdnn_train);
  j["q_symbols"] = cfg.q_symbols;
  j["eval_symbols"] = cfg.eval_symbols;
  j["psd_segment"] = cfg.psd_segment;
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  return j;
}

void validate_config(const ExperimentConfig& cfg) {
  try {
    if (!numerics::is_power_of_two(static_cast<std::size_t>(cfg.n_fft))) {
      throw ConfigError("config: n_fft must be a power of two");
    }
    if (cfg.qam_order != 4 && cfg.qam_order != 16 && cfg.qam_order != 64) {
      throw ConfigError("config: qam_order must be 4, 16, or 64");
    }
    if (cfg.users < 1 || cfg.antennas < cfg.users) {
      throw ConfigError("config: need antennas >= users >= 1");
    }
    if (static_cast<int>(cfg.geometry.size()) != cfg.users) {
      throw ConfigError("config: geometry entries must match the user count");
    }
    cfg.grid.validate();
    cfg.grid.find(cfg.psd_state_id);
    if (!cfg.grid.is_training(cfg.fdnn_state_id)) {
      throw ConfigError("config: fdnn_state must be one of the training states");
    }
    // every state's band must fit the FFT
    for (const auto& s : cfg.grid.states) {
      waveform::build_subcarrier_mask(cfg.n_fft, cfg.fs_mhz, s.bandwidth_mhz);
    }

    // Table-style dimension identities
    if (cfg.main_layers.size() < 3 || cfg.hn_layers.size() < 3) {
      throw ConfigError("config: networks need at least 3 layers");
    }
    const int d1 = cfg.main_layers.front();
    const int dg = cfg.main_layers.back();
    const int d_prev = cfg.main_layers[cfg.main_layers.size() - 2];
    if (d1 != 2 * (cfg.memory + 1) * cfg.users) {
      throw ConfigError("config: main input dim must equal 2(M+1)U = " +
                        std::to_string(2 * (cfg.memory + 1) * cfg.users) + ", got " +
                        std::to_string(d1));
    }
    if (dg != 2 * cfg.users) {
      throw ConfigError("config: main output dim must equal 2U = " +
                        std::to_string(2 * cfg.users) + ", got " + std::to_string(dg));
    }
    if (cfg.hn_layers.front() != 2) {
      throw ConfigError("config: hypernetwork input dim must be 2");
    }
    if (cfg.hn_layers.back() != dg * d_prev + dg) {
      throw ConfigError("config: hypernetwork output dim must equal D_G*D_{G-1}+D_G = " +
                        std::to_string(dg * d_prev + dg) + ", got " +
                        std::to_string(cfg.hn_layers.back()));
    }

    if (cfg.q_symbols < 2) throw ConfigError("config: q_symbols must be >= 2");
    if (cfg.eval_symbols < 1) throw ConfigError("config: eval_symbols must be >= 1");
    if (cfg.train.val_symbols >= cfg.q_symbols || cfg.fdnn_train.val_symbols >= cfg.q_symbols) {
      throw ConfigError("config: val_symbols must be < q_symbols");
    }
    if (cfg.noise_draws < 1) throw ConfigError("config: noise_draws must be >= 1");
    if (cfg.equalize != "ls-scalar" && cfg.equalize != "known-alpha") {
      throw ConfigError("config: equalize must be 'ls-scalar' or 'known-alpha'");
    }
    if (!numerics::is_power_of_two(static_cast<std::size_t>(cfg.psd_segment))) {
      throw ConfigError("config: psd_segment must be a power of two");
    }
    if (cfg.out_dir.empty()) throw ConfigError("config: out_dir must be set");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

std::string config_hash_hex(const ExperimentConfig& cfg) {
  const std::string canon = config_to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char ch : canon) {
    h = (h ^ static_cast<unsigned char>(ch)) * 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace dpdlab::harness
