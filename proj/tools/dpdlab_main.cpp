// SPDX-License-Identifier: Apache-2.0
//
// dpdlab: phased experiment pipeline for multi-state frequency-domain DPD.
//
//   dpdlab <phase> --config <file> [--out DIR] [--seed N] [--threads K]
//   dpdlab all --config <file> ...
//   dpdlab gradcheck --config <file>
//
// Exit codes: 0 success, 2 config error, 3 missing prerequisite artifact,
// 4 training divergence.

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "dpdlab/pipeline.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitPrereq = 3;
constexpr int kExitDiverged = 4;

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "experiment config file")->required();
  cmd->add_option("--out", args.out_dir, "override the config's output directory");
  cmd->add_option("--seed", args.seed, "override the config's seed")
      ->each([&args](const std::string&) { args.seed_set = true; });
  cmd->add_option("--threads", args.threads, "worker threads for parallel phases");
}

dpdlab::harness::ExperimentConfig load(const CommonArgs& args) {
  auto cfg = dpdlab::harness::parse_config(args.config_path);
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  if (args.seed_set) cfg.seed = args.seed;
  if (const char* env = std::getenv("DPDLAB_SEED")) {
    cfg.seed = std::stoull(env);
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-state frequency-domain DPD laboratory"};
  app.require_subcommand(1);

  const std::vector<std::string> phase_names = {"gen",      "train-td",   "targets", "train-hn",
                                                "train-fdnn", "eval",       "psd"};
  std::map<std::string, CommonArgs> args_by_cmd;
  for (const auto& name : phase_names) {
    auto* cmd = app.add_subcommand(name, "run the '" + name + "' phase");
    add_common(cmd, args_by_cmd[name]);
  }
  auto* all_cmd = app.add_subcommand("all", "run every phase in order");
  add_common(all_cmd, args_by_cmd["all"]);
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check");
  add_common(grad_cmd, args_by_cmd["gradcheck"]);

  CLI11_PARSE(app, argc, argv);
  const std::string sub = app.get_subcommands().front()->get_name();
  const CommonArgs& args = args_by_cmd[sub];

  try {
    const auto cfg = load(args);
    const dpdlab::harness::PipelineOptions opts{args.threads};
    if (sub == "gradcheck") {
      const double worst = dpdlab::harness::run_gradcheck(cfg);
      std::cout << "gradcheck: max relative error " << worst << "\n";
      return worst < 1e-5 ? 0 : 1;
    }
    if (sub == "all") {
      dpdlab::harness::run_pipeline(cfg, dpdlab::harness::all_phases(), opts);
    } else {
      dpdlab::harness::run_phase(cfg, dpdlab::harness::phase_from_string(sub), opts);
    }
    std::cout << sub << ": done (out: " << cfg.out_dir << ")\n";
    return 0;
  } catch (const dpdlab::harness::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const dpdlab::harness::PrerequisiteError& e) {
    std::cerr << "prerequisite error: " << e.what() << "\n";
    return kExitPrereq;
  } catch (const dpdlab::harness::TrainingDivergence& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
