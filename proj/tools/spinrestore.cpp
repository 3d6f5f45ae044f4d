// Batch front-end for the state-transfer/restoring pipeline.
//
// Subcommands:
//   t0               closed-system lambda curve and registration time
//   solve            multistart restoring solve per dephasing rate
//   perturb          Kraus perturbation sweep from a solve manifest
//   reproduce-paper  run the built-in table configurations end to end
//
// Exit codes: 0 success, 2 configuration error, 3 no accepted solution,
// 4 numerical failure.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "spinrestore/pipeline.hpp"

namespace {

using namespace spinrestore;

struct CommonArgs {
  std::string config_path;
  std::string out_override;
  std::int64_t seed_override = -1;
  int threads_override = -1;
};

ExperimentConfig load_with_overrides(const CommonArgs& args) {
  ExperimentConfig cfg = load_config(args.config_path);
  if (args.seed_override >= 0) cfg.master_seed = static_cast<std::uint64_t>(args.seed_override);
  if (args.threads_override >= 0) cfg.threads = args.threads_override;
  if (!args.out_override.empty()) cfg.out_dir = args.out_override;
  cfg.validate();
  return cfg;
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  json j;
  in >> j;
  return j;
}

int cmd_t0(const CommonArgs& args) {
  const ExperimentConfig cfg = load_with_overrides(args);
  const T0Outcome out = run_t0(cfg);
  write_t0_outputs(cfg, out);
  std::printf("t0 = %.6f  lambda = %.6f  (curve: %s/lambda_curve.csv)\n", out.curve.t0,
              out.curve.lambda0, cfg.out_dir.c_str());
  return 0;
}

int cmd_solve(const CommonArgs& args) {
  const ExperimentConfig cfg = load_with_overrides(args);
  const json manifest = run_solve(cfg);
  write_solve_outputs(cfg, manifest);
  for (const auto& jc : manifest.at("cases")) {
    const auto& sol = jc.at("solution");
    std::printf("gamma=%-8g accepted=%d lambda=%.6f nu=%.3e Lambda=%.4f p=%.4f residual=%.2e\n",
                jc.at("gamma").get<double>(), sol.at("accepted").get<bool>() ? 1 : 0,
                sol.at("lambda").get<double>(), sol.at("nu").get<double>(),
                sol.at("big_lambda").get<double>(), sol.at("p").get<double>(),
                sol.at("residual").get<double>());
  }
  if (!manifest.at("all_accepted").get<bool>()) {
    std::fprintf(stderr, "solve: at least one case produced no accepted solution\n");
    return 3;
  }
  return 0;
}

int cmd_perturb(const CommonArgs& args, const std::string& manifest_path) {
  const ExperimentConfig cfg = load_with_overrides(args);
  const json manifest = read_json(manifest_path);
  const json out = run_perturb(cfg, manifest);
  write_perturb_outputs(cfg, out);
  for (const auto& js : out.at("sweeps"))
    std::printf("gamma=%-8g kappa_T=%.4f C_T=%+.4f kappa_K=%.4f C_K=%+.4f\n",
                js.at("gamma").get<double>(), js.at("kappa_T").get<double>(),
                js.at("C_T").get<double>(), js.at("kappa_K").get<double>(),
                js.at("C_K").get<double>());
  return 0;
}

int cmd_reproduce(const std::string& out_root, std::int64_t seed, int threads) {
  namespace fs = std::filesystem;
  const std::uint64_t master = seed >= 0 ? static_cast<std::uint64_t>(seed) : 20250810ull;
  int rc = 0;

  const auto run_one = [&](ExperimentConfig cfg, const std::string& tag) {
    cfg.out_dir = (fs::path(out_root) / tag).string();
    if (threads >= 0) cfg.threads = threads;
    cfg.master_seed = master;
    std::printf("== %s ==\n", tag.c_str());
    const json manifest = run_solve(cfg);
    write_solve_outputs(cfg, manifest);
    if (!manifest.at("all_accepted").get<bool>()) rc = 3;

    ExperimentConfig pcfg = cfg;
    pcfg.out_dir = (fs::path(out_root) / (tag + "_perturb")).string();
    const json sweeps = run_perturb(pcfg, manifest);
    write_perturb_outputs(pcfg, sweeps);
  };

  run_one(paper_table1_config(1, master), "table1_v1");
  run_one(paper_table1_config(3, master), "table1_v3");
  int idx = 0;
  for (const auto& cfg : paper_table2_configs(master)) {
    static const char* tags[] = {"table2_n10", "table2_n20", "table2_n30", "table2_n40",
                                 "table2_n40_hfst"};
    run_one(cfg, tags[idx++]);
  }
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"measurement-based state transfer and restoring on dephasing spin chains"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string manifest_path;
  std::string out_root = "results/paper";
  std::int64_t repro_seed = -1;
  int repro_threads = -1;

  auto add_common = [&](CLI::App* sub, bool with_config = true) {
    if (with_config)
      sub->add_option("--config", args.config_path, "experiment config file")->required();
    sub->add_option("--seed", args.seed_override, "override the master seed");
    sub->add_option("--threads", args.threads_override, "worker thread cap (0 = hardware)");
    sub->add_option("--out", args.out_override, "override the output directory");
  };

  CLI::App* t0 = app.add_subcommand("t0", "closed-system lambda curve and registration time");
  add_common(t0);
  CLI::App* solve = app.add_subcommand("solve", "multistart restoring solve");
  add_common(solve);
  CLI::App* perturb = app.add_subcommand("perturb", "Kraus perturbation sweep");
  add_common(perturb);
  perturb->add_option("--manifest", manifest_path, "manifest.json from a solve run")->required();
  CLI::App* repro = app.add_subcommand("reproduce-paper", "run the built-in table configurations");
  repro->add_option("--out", out_root, "output root directory");
  repro->add_option("--seed", repro_seed, "master seed");
  repro->add_option("--threads", repro_threads, "worker thread cap");

  CLI11_PARSE(app, argc, argv);

  try {
    if (t0->parsed()) return cmd_t0(args);
    if (solve->parsed()) return cmd_solve(args);
    if (perturb->parsed()) return cmd_perturb(args, manifest_path);
    if (repro->parsed()) return cmd_reproduce(out_root, repro_seed, repro_threads);
  } catch (const spinrestore::ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const spinrestore::NoSolutionError& e) {
    std::fprintf(stderr, "solver error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 4;
  }
  return 0;
}
