#include <catch2/catch_amalgamated.hpp>

#include "spinrestore/pipeline.hpp"

using namespace spinrestore;

TEST_CASE("config parsing round trip", "[config]") {
  const std::string text = R"(
# ten-node reference chain
chain.total = 10
chain.sender = 2
chain.receiver = 2
chain.ancilla = 1
chain.profile = homogeneous
sector.k = 1
lindblad.gamma = 0, 0.01
registration.t0 = 12.222
restore.variant = 1
restore.kraus_count = 16
restore.gamma0 = 0, 1
restore.starts = 50
seed = 99
threads = 2
out = /tmp/sr_test
)";
  const ExperimentConfig cfg = parse_config_text(text);
  CHECK(cfg.n_total == 10);
  CHECK(cfg.gamma_list == std::vector<double>{0.0, 0.01});
  CHECK(cfg.gamma0_list == std::vector<double>{0.0, 1.0});
  CHECK_FALSE(cfg.t0_search);
  CHECK(cfg.t0_value == 12.222);
  CHECK(cfg.master_seed == 99);

  // canonical text parses back to an identical configuration
  const ExperimentConfig again = parse_config_text(write_config(cfg));
  CHECK(write_config(again) == write_config(cfg));
}

TEST_CASE("config rejections", "[config]") {
  CHECK_THROWS_AS(parse_config_text("bogus.key = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("chain.total\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("chain.total = ten\n"), ConfigError);
  // no ancilla: the extended-receiver bound fails before any numerics
  CHECK_THROWS_AS(parse_config_text("chain.ancilla = 0\n"), ConfigError);
  // mismatched gamma0 list
  CHECK_THROWS_AS(parse_config_text("lindblad.gamma = 0, 0.01\nrestore.gamma0 = 1\n"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config_text("restore.variant = 4\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("registration.t0 = -3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("sector.k = 2\n"), ConfigError);
}

TEST_CASE("shipped configuration files parse", "[config]") {
  namespace fs = std::filesystem;
  int seen = 0;
  for (const auto& entry : fs::directory_iterator(SPINRESTORE_CONFIG_DIR)) {
    if (entry.path().extension() != ".cfg") continue;
    ++seen;
    if (entry.path().filename() == "invalid_no_ancilla.cfg") {
      CHECK_THROWS_AS(load_config(entry.path().string()), ConfigError);
    } else {
      CHECK_NOTHROW(load_config(entry.path().string()));
    }
  }
  CHECK(seen >= 9);
}

TEST_CASE("gamma0 defaults to zero for every case", "[config]") {
  const ExperimentConfig cfg = parse_config_text("lindblad.gamma = 0, 0.001, 0.01\n");
  CHECK(cfg.gamma0_list == std::vector<double>(3, 0.0));
}

TEST_CASE("t0 pipeline writes deterministic outputs", "[config][pipeline]") {
  ExperimentConfig cfg;
  cfg.n_total = 6;
  cfg.gamma_list = {0.0};
  cfg.gamma0_list = {0.0};
  cfg.out_dir = "/tmp/sr_t0_out";
  const T0Outcome a = run_t0(cfg);
  const T0Outcome b = run_t0(cfg);
  CHECK(a.csv == b.csv);
  CHECK(a.curve.t0 == b.curve.t0);
  CHECK(a.csv.rfind("# config_hash=", 0) == 0);

  write_t0_outputs(cfg, a);
  CHECK(std::filesystem::exists("/tmp/sr_t0_out/lambda_curve.csv"));
  CHECK(std::filesystem::exists("/tmp/sr_t0_out/t0.json"));
  CHECK(std::filesystem::exists("/tmp/sr_t0_out/resolved.cfg"));
}

TEST_CASE("solve manifest, summary and Kraus serialization round trip", "[config][pipeline]") {
  ExperimentConfig cfg;
  cfg.n_total = 6;
  cfg.gamma_list = {0.02};
  cfg.gamma0_list = {1.0};
  cfg.variant = 3;
  cfg.kraus_count = 16;
  cfg.n_starts = 12;
  cfg.master_seed = 7;
  cfg.threads = 2;
  cfg.out_dir = "/tmp/sr_solve_out";

  const json manifest = run_solve(cfg);
  REQUIRE(manifest.at("all_accepted").get<bool>());
  const auto& jc = manifest.at("cases")[0];
  const auto& sol = jc.at("solution");
  CHECK(sol.at("residual").get<double>() < 1e-9);
  CHECK(jc.at("measurement").at("p_success").get<double>() ==
        Catch::Approx(sol.at("p").get<double>()).margin(1e-9));
  CHECK(jc.at("universality_deviation").get<double>() < 1e-8);

  const KrausSet set = kraus_from_json(sol.at("kraus"));
  CHECK(set.completeness_residual() < 1e-9);

  // reloaded operators reproduce the recorded lambda through the residuals
  write_solve_outputs(cfg, manifest);
  CHECK(std::filesystem::exists("/tmp/sr_solve_out/manifest.json"));
  CHECK(std::filesystem::exists("/tmp/sr_solve_out/summary.csv"));

  // determinism: a rerun reproduces every numeric field except wall clock
  const json manifest2 = run_solve(cfg);
  CHECK(manifest2.at("cases")[0].at("solution") == manifest.at("cases")[0].at("solution"));
}

TEST_CASE("perturb pipeline consumes the manifest", "[config][pipeline]") {
  ExperimentConfig cfg;
  cfg.n_total = 6;
  cfg.gamma_list = {0.02};
  cfg.gamma0_list = {1.0};
  cfg.variant = 3;
  cfg.kraus_count = 8;
  cfg.n_starts = 8;
  cfg.n_samples = 10;
  cfg.eps_decades = 6;
  cfg.master_seed = 5;
  cfg.threads = 2;
  cfg.out_dir = "/tmp/sr_perturb_out";

  const json manifest = run_solve(cfg);
  REQUIRE(manifest.at("all_accepted").get<bool>());
  const json sweeps = run_perturb(cfg, manifest);
  const auto& js = sweeps.at("sweeps")[0];
  CHECK(js.at("kappa_T").get<double>() == Catch::Approx(1.0).margin(0.15));
  CHECK(js.at("kappa_K").get<double>() == Catch::Approx(1.0).margin(0.15));
  write_perturb_outputs(cfg, sweeps);
  CHECK(std::filesystem::exists("/tmp/sr_perturb_out/fit_summary.csv"));

  const json sweeps2 = run_perturb(cfg, manifest);
  CHECK(sweeps2.at("sweeps")[0].at("mean_delta_T") == js.at("mean_delta_T"));
}
