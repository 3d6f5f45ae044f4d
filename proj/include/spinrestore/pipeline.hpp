#pragma once

// Orchestration shared by the command-line tool and the acceptance suite:
// build -> find t0 -> solve -> extract -> perturb, with CSV/JSON reporting.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "spinrestore/config.hpp"
#include "spinrestore/dilation.hpp"
#include "spinrestore/extraction.hpp"
#include "spinrestore/propagator.hpp"
#include "spinrestore/restoring.hpp"
#include "spinrestore/robustness.hpp"

namespace spinrestore {

inline constexpr const char* kToolName = "spinrestore";
inline constexpr const char* kToolVersion = "0.1.0";

using json = nlohmann::json;

namespace detail {

inline std::string hex_hash(const ExperimentConfig& cfg) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a_hash(write_config(cfg))));
  return buf;
}

inline std::string file_header(const ExperimentConfig& cfg) {
  return "# config_hash=" + hex_hash(cfg) + " master_seed=" + std::to_string(cfg.master_seed);
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline json complex_json(const std::complex<double>& z) { return json::array({z.real(), z.imag()}); }

inline json matrix_json(const Eigen::MatrixXcd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(complex_json(m(r, c)));
    rows.push_back(row);
  }
  return rows;
}

inline Eigen::MatrixXcd matrix_from_json(const json& rows) {
  const auto nr = rows.size();
  const auto nc = nr ? rows[0].size() : 0;
  Eigen::MatrixXcd m(nr, nc);
  for (std::size_t r = 0; r < nr; ++r)
    for (std::size_t c = 0; c < nc; ++c)
      m(r, c) = std::complex<double>(rows[r][c][0].get<double>(), rows[r][c][1].get<double>());
  return m;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace detail

inline json kraus_to_json(const KrausSet& set) {
  json j;
  j["n_kraus"] = set.n_kraus;
  j["sector_dims"] = set.sector_dims;
  json ops = json::array();
  for (int p = 0; p < set.n_kraus; ++p) {
    json blocks = json::array();
    for (const auto& b : set.blocks[p]) blocks.push_back(detail::matrix_json(b));
    ops.push_back(blocks);
  }
  j["operators"] = ops;
  return j;
}

inline KrausSet kraus_from_json(const json& j) {
  std::vector<int> dims = j.at("sector_dims").get<std::vector<int>>();
  KrausSet set = make_zero_kraus(dims, j.at("n_kraus").get<int>());
  const auto& ops = j.at("operators");
  for (int p = 0; p < set.n_kraus; ++p)
    for (std::size_t s = 0; s < dims.size(); ++s)
      set.blocks[p][s] = detail::matrix_from_json(ops[p][s]);
  return set;
}

struct T0Outcome {
  LambdaCurve curve;
  std::string csv;
};

inline T0Outcome run_t0(const ExperimentConfig& cfg) {
  cfg.validate();
  const ChainPartition part = cfg.partition();
  const SectorBasis basis = build_sector_basis(part, cfg.excitations);
  const ChainSpec spec = make_chain_spec(part, coupling_profile_from_string(cfg.profile), 0.0);
  T0Outcome out;
  out.curve = find_t0(spec, basis, cfg.tau_max, cfg.tau_step, cfg.lambda_floor);

  std::string csv = detail::file_header(cfg) + "\ntau,lambda_min,lambda_max\n";
  for (std::size_t i = 0; i < out.curve.tau.size(); ++i)
    csv += detail::fmt(out.curve.tau[i]) + "," + detail::fmt(out.curve.lambda_min[i]) + "," +
           detail::fmt(out.curve.lambda_max[i]) + "\n";
  out.csv = std::move(csv);
  return out;
}

inline void write_t0_outputs(const ExperimentConfig& cfg, const T0Outcome& out) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  detail::write_file(fs::path(cfg.out_dir) / "lambda_curve.csv", out.csv);
  json j;
  j["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
  j["config_hash"] = detail::hex_hash(cfg);
  j["master_seed"] = cfg.master_seed;
  j["t0"] = out.curve.t0;
  j["lambda0"] = out.curve.lambda0;
  detail::write_file(fs::path(cfg.out_dir) / "t0.json", j.dump(2) + "\n");
  detail::write_file(fs::path(cfg.out_dir) / "resolved.cfg", write_config(cfg));
}

// Full solve pipeline: per dephasing rate builds the generator, exponentiates
// at the registration time, runs the multistart (plus the closed-system
// lambda polish when gamma0 = 0), measures the extracted state for the
// equal-superposition sender and records everything in a manifest.
inline json run_solve(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto wall_start = std::chrono::steady_clock::now();
  const ChainPartition part = cfg.partition();
  const SectorBasis basis = build_sector_basis(part, cfg.excitations);
  const CouplingProfile profile = coupling_profile_from_string(cfg.profile);

  json manifest;
  manifest["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
  manifest["config_hash"] = detail::hex_hash(cfg);
  manifest["master_seed"] = cfg.master_seed;
  manifest["resolved_config"] = write_config(cfg);
  manifest["chain"] = {{"total", cfg.n_total},       {"sender", cfg.n_sender},
                       {"receiver", cfg.n_receiver}, {"ancilla", cfg.n_ancilla},
                       {"profile", cfg.profile},     {"excitations", cfg.excitations}};

  double t0 = cfg.t0_value;
  double lambda0 = 0.0;
  if (cfg.t0_search) {
    const ChainSpec closed = make_chain_spec(part, profile, 0.0);
    const LambdaCurve curve = find_t0(closed, basis, cfg.tau_max, cfg.tau_step, cfg.lambda_floor);
    t0 = curve.t0;
    lambda0 = curve.lambda0;
  }
  manifest["t0"] = {{"value", t0},
                    {"lambda0", lambda0},
                    {"source", cfg.t0_search ? "search" : "explicit"}};

  // Equal-superposition reference sender state for the measurement record.
  const int ds = static_cast<int>(basis.sender_block.size());
  Eigen::VectorXcd psi = Eigen::VectorXcd::Constant(ds, 1.0 / std::sqrt(double(ds)));
  const Eigen::MatrixXcd rho_ref = psi * psi.adjoint();

  json cases = json::array();
  bool all_accepted = true;
  for (std::size_t ci = 0; ci < cfg.gamma_list.size(); ++ci) {
    const double gamma = cfg.gamma_list[ci];
    const double gamma0 = cfg.gamma0_list[ci];
    const auto case_start = std::chrono::steady_clock::now();

    const ChainSpec spec = make_chain_spec(part, profile, gamma);
    const LindbladGenerator gen = build_generator(spec, basis);
    const Propagator prop = expm_generator(gen, basis, t0);
    const RestoreProblem pb = make_restore_problem(prop, basis, cfg.variant, cfg.kraus_count, gamma0);

    const std::uint64_t case_seed = derive_seed(cfg.master_seed, ci);
    MultistartOutcome ms = solve_multistart(pb, cfg.n_starts, case_seed, cfg.threads);
    if (ms.best.accepted && gamma0 == 0.0) ms.best = polish_max_lambda(pb, ms.best);

    json jc;
    jc["gamma"] = gamma;
    jc["gamma0"] = gamma0;
    jc["variant"] = cfg.variant;
    jc["n_starts"] = ms.n_starts;
    jc["n_accepted"] = ms.n_accepted;
    const RestoreSolution& sol = ms.best;
    jc["solution"] = {{"accepted", sol.accepted},
                      {"lambda", sol.lambda},
                      {"nu", sol.nu},
                      {"a", sol.a},
                      {"p", sol.p},
                      {"big_lambda", sol.big_lambda},
                      {"ratio", sol.ratio},
                      {"residual", sol.residual},
                      {"residual_norm", sol.residual_norm},
                      {"seed", sol.seed},
                      {"start_index", sol.start_index},
                      {"iterations", sol.iterations}};
    if (sol.accepted) {
      jc["solution"]["kraus"] = kraus_to_json(sol.kraus);
      const Eigen::MatrixXcd rho_t = evolve(prop, rho_ref);
      const Eigen::MatrixXcd restored = apply_restore(rho_t, sol.kraus, basis);
      const MeasurementOutcome meas = measure_extract(restored, basis);
      jc["measurement"] = {{"p_success", meas.p_success},
                           {"garbage_norm", meas.garbage_norm},
                           {"fidelity", output_fidelity(meas.rho_out, rho_ref)},
                           {"rho_out", detail::matrix_json(meas.rho_out)}};
      jc["universality_deviation"] =
          universality_check(prop, basis, sol, 20, derive_seed(case_seed, 0xdeull));
      const Dilation dil = assemble_dilation(sol.kraus);
      jc["dilation"] = {{"n_env", dil.n_env},
                        {"n_kraus_effective", dil.n_kraus_effective},
                        {"unitary_defect", unitary_defect(dil)}};
    } else {
      all_accepted = false;
      jc["failure"] = {{"best_residual", ms.best_residual}};
    }
    jc["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - case_start).count();
    cases.push_back(std::move(jc));
  }
  manifest["cases"] = std::move(cases);
  manifest["all_accepted"] = all_accepted;
  manifest["wall_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return manifest;
}

inline std::string summary_csv(const ExperimentConfig& cfg, const json& manifest) {
  std::string csv = detail::file_header(cfg) + "\nvariant,gamma,lambda,nu,big_lambda,p,residual,seed\n";
  for (const auto& jc : manifest.at("cases")) {
    const auto& sol = jc.at("solution");
    csv += std::to_string(jc.at("variant").get<int>()) + "," +
           detail::fmt(jc.at("gamma").get<double>()) + "," +
           detail::fmt(sol.at("lambda").get<double>()) + "," +
           detail::fmt(sol.at("nu").get<double>()) + "," +
           detail::fmt(sol.at("big_lambda").get<double>()) + "," +
           detail::fmt(sol.at("p").get<double>()) + "," +
           detail::fmt(sol.at("residual").get<double>()) + "," +
           std::to_string(sol.at("seed").get<std::uint64_t>()) + "\n";
  }
  return csv;
}

inline void write_solve_outputs(const ExperimentConfig& cfg, const json& manifest) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  detail::write_file(fs::path(cfg.out_dir) / "manifest.json", manifest.dump(2) + "\n");
  detail::write_file(fs::path(cfg.out_dir) / "summary.csv", summary_csv(cfg, manifest));
  detail::write_file(fs::path(cfg.out_dir) / "resolved.cfg", write_config(cfg));
}

// Re-derives the per-case propagator from the manifest's configuration and
// sweeps perturbations of the recorded Kraus solutions.
inline json run_perturb(const ExperimentConfig& cfg, const json& manifest) {
  cfg.validate();
  const ChainPartition part = cfg.partition();
  const SectorBasis basis = build_sector_basis(part, cfg.excitations);
  const CouplingProfile profile = coupling_profile_from_string(cfg.profile);
  const double t0 = manifest.at("t0").at("value").get<double>();

  std::vector<double> grid;
  for (int j = 1; j <= cfg.eps_decades; ++j) grid.push_back(std::pow(10.0, -j));

  json out;
  out["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
  out["config_hash"] = detail::hex_hash(cfg);
  json sweeps = json::array();
  for (std::size_t ci = 0; ci < manifest.at("cases").size(); ++ci) {
    const auto& jc = manifest.at("cases")[ci];
    if (!jc.at("solution").at("accepted").get<bool>())
      throw NoSolutionError("perturb: case without accepted solution");
    const double gamma = jc.at("gamma").get<double>();
    const double gamma0 = jc.at("gamma0").get<double>();
    const KrausSet set = kraus_from_json(jc.at("solution").at("kraus"));

    const ChainSpec spec = make_chain_spec(part, profile, gamma);
    const LindbladGenerator gen = build_generator(spec, basis);
    const Propagator prop = expm_generator(gen, basis, t0);
    const RestoreProblem pb =
        make_restore_problem(prop, basis, jc.at("variant").get<int>(), set.n_kraus, gamma0);

    const std::uint64_t sweep_seed = derive_seed(cfg.master_seed, 0x737765ull, ci);
    const SweepFit fit = sweep_and_fit(pb, set, grid, cfg.n_samples, sweep_seed, cfg.threads);

    json js;
    js["gamma"] = gamma;
    js["variant"] = jc.at("variant");
    js["n_samples"] = cfg.n_samples;
    js["kappa_T"] = fit.kappa_t;
    js["C_T"] = fit.c_t;
    js["R2_T"] = fit.r2_t;
    js["kappa_K"] = fit.kappa_k;
    js["C_K"] = fit.c_k;
    js["R2_K"] = fit.r2_k;
    js["epsilon"] = fit.epsilon;
    js["mean_delta_T"] = fit.mean_delta_t;
    js["mean_delta_K"] = fit.mean_delta_k;
    js["warnings"] = fit.warnings;
    sweeps.push_back(std::move(js));
  }
  out["sweeps"] = std::move(sweeps);
  return out;
}

inline void write_perturb_outputs(const ExperimentConfig& cfg, const json& perturb) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  std::string fits = detail::file_header(cfg) +
                     "\ngamma,variant,kappa_T,C_T,R2_T,kappa_K,C_K,R2_K\n";
  for (const auto& js : perturb.at("sweeps")) {
    char name[128];
    std::snprintf(name, sizeof(name), "sweep_gamma%g_v%d.csv", js.at("gamma").get<double>(),
                  js.at("variant").get<int>());
    std::string csv = detail::file_header(cfg) + "\nepsilon,mean_delta_T,mean_delta_K\n";
    const auto& eps = js.at("epsilon");
    for (std::size_t i = 0; i < eps.size(); ++i)
      csv += detail::fmt(eps[i].get<double>()) + "," +
             detail::fmt(js.at("mean_delta_T")[i].get<double>()) + "," +
             detail::fmt(js.at("mean_delta_K")[i].get<double>()) + "\n";
    detail::write_file(fs::path(cfg.out_dir) / name, csv);
    fits += detail::fmt(js.at("gamma").get<double>()) + "," +
            std::to_string(js.at("variant").get<int>()) + "," +
            detail::fmt(js.at("kappa_T").get<double>()) + "," +
            detail::fmt(js.at("C_T").get<double>()) + "," +
            detail::fmt(js.at("R2_T").get<double>()) + "," +
            detail::fmt(js.at("kappa_K").get<double>()) + "," +
            detail::fmt(js.at("C_K").get<double>()) + "," +
            detail::fmt(js.at("R2_K").get<double>()) + "\n";
  }
  detail::write_file(fs::path(cfg.out_dir) / "fit_summary.csv", fits);
  detail::write_file(fs::path(cfg.out_dir) / "perturb.json", perturb.dump(2) + "\n");
}

// Built-in configurations reproducing the reference tables.
inline ExperimentConfig paper_table1_config(int variant, std::uint64_t seed = 20250810) {
  ExperimentConfig cfg;
  cfg.n_total = 10;
  cfg.variant = variant;
  cfg.kraus_count = 16;
  cfg.gamma_list = {0.0, 0.0001, 0.001, 0.01, 0.1};
  cfg.gamma0_list = {0.0, 0.0007, 0.006, 1.0, 1.35};
  cfg.n_starts = 3000;
  cfg.master_seed = seed;
  cfg.out_dir = "results/table1_v" + std::to_string(variant);
  return cfg;
}

inline ExperimentConfig paper_table2_config(int n_total, bool hfst, double gamma0,
                                            std::uint64_t seed = 20250810) {
  ExperimentConfig cfg;
  cfg.n_total = n_total;
  cfg.profile = hfst ? "hfst" : "homogeneous";
  cfg.variant = 2;
  cfg.kraus_count = 12;
  cfg.gamma_list = {0.01};
  cfg.gamma0_list = {gamma0};
  cfg.n_starts = 3000;
  cfg.master_seed = seed;
  cfg.out_dir = std::string("results/table2_n") + std::to_string(n_total) + (hfst ? "_hfst" : "");
  return cfg;
}

inline std::vector<ExperimentConfig> paper_table2_configs(std::uint64_t seed = 20250810) {
  return {paper_table2_config(10, false, 1.0, seed), paper_table2_config(20, false, 1.11, seed),
          paper_table2_config(30, false, 1.19, seed), paper_table2_config(40, false, 1.26, seed),
          paper_table2_config(40, true, 0.125, seed)};
}

}  // namespace spinrestore
