// Acceptance suite: exercises every gate of the build at its stated
// tolerance and prints one pass/fail line per criterion.  Exit status is the
// number of failed criteria.
//
// Environment knobs (for constrained CI machines):
//   SPINRESTORE_CI=1            criterion 5 with 200 samples and +-0.08 slope gates
//   SPINRESTORE_ACCEPT_STARTS   override the 3000-start default (printed when used)

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

#include "spinrestore/dilation.hpp"
#include "spinrestore/extraction.hpp"
#include "spinrestore/pipeline.hpp"
#include "spinrestore/restoring.hpp"
#include "spinrestore/robustness.hpp"

using namespace spinrestore;

namespace {

constexpr std::uint64_t kSeed = 20250810ull;

int g_failures = 0;

void report(int criterion, bool ok, const std::string& detail) {
  std::printf("criterion %d [%s] %s\n", criterion, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

int accept_starts() {
  if (const char* env = std::getenv("SPINRESTORE_ACCEPT_STARTS")) return std::atoi(env);
  return 3000;
}

bool ci_mode() {
  const char* env = std::getenv("SPINRESTORE_CI");
  return env && std::strcmp(env, "0") != 0;
}

struct ChainContext {
  SectorBasis basis;
  double t0 = 0.0;
  double lambda0 = 0.0;
};

ChainContext make_context(int n, bool hfst) {
  ChainContext ctx{build_sector_basis({2, n - 4, 2, 1}, 1), 0.0, 0.0};
  const ChainSpec closed = make_chain_spec(
      {2, n - 4, 2, 1}, hfst ? CouplingProfile::hfst : CouplingProfile::homogeneous, 0.0);
  const LambdaCurve curve = find_t0(closed, ctx.basis);
  ctx.t0 = curve.t0;
  ctx.lambda0 = curve.lambda0;
  return ctx;
}

struct SolveCase {
  double gamma = 0.0;
  double gamma0 = 0.0;
  int variant = 0;
  RestoreSolution solution;
};

RestoreSolution run_case(const ChainContext& ctx, bool hfst, double gamma, double gamma0,
                         int variant, int n_kraus, int n_starts, std::uint64_t seed) {
  const ChainSpec spec =
      make_chain_spec(ctx.basis.partition,
                      hfst ? CouplingProfile::hfst : CouplingProfile::homogeneous, gamma);
  const Propagator prop = expm_generator(build_generator(spec, ctx.basis), ctx.basis, ctx.t0);
  const RestoreProblem pb = make_restore_problem(prop, ctx.basis, variant, n_kraus, gamma0);
  MultistartOutcome out = solve_multistart(pb, n_starts, seed);
  if (out.best.accepted && gamma0 == 0.0) out.best = polish_max_lambda(pb, out.best);
  return out.best;
}

std::vector<SolveCase> g_solutions;  // accepted solutions for criterion 6

}  // namespace

// --- criterion 1: closed-system registration times ---------------------
static void criterion1(double& lambda_n10) {
  Timer timer;
  struct Row {
    int n;
    bool hfst;
    double t0, lambda;
  };
  const Row rows[] = {{10, false, 12.222, 0.536},
                      {20, false, 23.224, 0.300},
                      {30, false, 33.928, 0.204},
                      {40, false, 44.496, 0.152},
                      {40, true, 56.656, 0.638}};
  bool ok = true;
  std::string detail = "closed-system (t0, lambda):";
  for (const Row& row : rows) {
    const ChainContext ctx = make_context(row.n, row.hfst);
    const bool row_ok =
        std::abs(ctx.t0 - row.t0) <= 0.002 && std::abs(ctx.lambda0 - row.lambda) <= 0.002;
    ok = ok && row_ok;
    char buf[128];
    std::snprintf(buf, sizeof(buf), " N=%d%s (%.4f, %.4f)%s", row.n, row.hfst ? "h" : "",
                  ctx.t0, ctx.lambda0, row_ok ? "" : "<-MISS");
    detail += buf;
    if (row.n == 10) lambda_n10 = ctx.lambda0;
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), " [%.0fs]", timer.seconds());
  report(1, ok, detail + buf);
}

// --- criterion 2: probabilistic perfect transfer at Gamma = 0 ----------
static void criterion2(const ChainContext& n10, double lambda_n10) {
  Timer timer;
  bool ok = true;
  std::string detail = "PST limit:";
  for (int variant : {1, 2, 3}) {
    const RestoreSolution sol =
        run_case(n10, false, 0.0, 0.0, variant, 16, 512, derive_seed(kSeed, 20 + variant));
    const bool row_ok = sol.accepted && sol.nu <= 1e-6 &&
                        std::abs(sol.big_lambda - 1.0) <= 1e-6 &&
                        std::abs(sol.lambda - lambda_n10) <= 1e-3 &&
                        std::abs(sol.p - sol.lambda) <= 1e-9;
    ok = ok && row_ok;
    char buf[128];
    std::snprintf(buf, sizeof(buf), " v%d lambda=%.5f nu=%.1e Lam=%.7f%s", variant, sol.lambda,
                  sol.nu, sol.big_lambda, row_ok ? "" : "<-MISS");
    detail += buf;
    if (sol.accepted) g_solutions.push_back({0.0, 0.0, variant, sol});
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), " [%.0fs]", timer.seconds());
  report(2, ok, detail + buf);
}

// --- criterion 3: Table-1 lower bounds ----------------------------------
static void criterion3(const ChainContext& n10) {
  Timer timer;
  const int starts = accept_starts();
  const double gammas[] = {0.0001, 0.001, 0.01, 0.1};
  const double gamma0s[] = {0.0007, 0.006, 1.0, 1.35};
  const double floor_v1[] = {0.995, 0.985, 0.74, 0.36};
  const double floor_v3[] = {0.995, 0.985, 0.58, 0.30};
  bool ok = true;
  std::string detail = "Table 1 (" + std::to_string(starts) + " starts):";
  for (int vi = 0; vi < 2; ++vi) {
    const int variant = vi == 0 ? 1 : 3;
    const double* floors = vi == 0 ? floor_v1 : floor_v3;
    for (int gi = 0; gi < 4; ++gi) {
      const RestoreSolution sol = run_case(n10, false, gammas[gi], gamma0s[gi], variant, 16,
                                           starts, derive_seed(kSeed, 100 + 10 * variant + gi));
      const bool row_ok = sol.accepted && sol.big_lambda >= floors[gi];
      ok = ok && row_ok;
      char buf[96];
      std::snprintf(buf, sizeof(buf), " L%d(%g)=%.3f>=%.3f%s", variant, gammas[gi],
                    sol.big_lambda, floors[gi], row_ok ? "" : "<-MISS");
      detail += buf;
      if (sol.accepted) g_solutions.push_back({gammas[gi], gamma0s[gi], variant, sol});
    }
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), " [%.0fs]", timer.seconds());
  report(3, ok, detail + buf);
}

// --- criterion 4: Table-2 solver row ------------------------------------
static void criterion4() {
  Timer timer;
  const int starts = accept_starts();
  struct Row {
    int n;
    bool hfst;
    double gamma0, floor;
  };
  const Row rows[] = {{10, false, 1.0, 0.66},
                      {20, false, 1.11, 0.41},
                      {30, false, 1.19, 0.39},
                      {40, false, 1.26, 0.39},
                      {40, true, 0.125, 0.79}};
  bool ok = true;
  std::string detail = "Table 2 row (variant 2, 12 Kraus):";
  for (const Row& row : rows) {
    const ChainContext ctx = make_context(row.n, row.hfst);
    const RestoreSolution sol = run_case(ctx, row.hfst, 0.01, row.gamma0, 2, 12, starts,
                                         derive_seed(kSeed, 200 + row.n + (row.hfst ? 1 : 0)));
    const bool row_ok = sol.accepted && sol.big_lambda >= row.floor &&
                        std::abs(sol.p - (sol.lambda + 2.0 * sol.nu)) <= 1e-9;
    ok = ok && row_ok;
    char buf[96];
    std::snprintf(buf, sizeof(buf), " L2(N=%d%s)=%.3f>=%.3f%s", row.n, row.hfst ? "h" : "",
                  sol.big_lambda, row.floor, row_ok ? "" : "<-MISS");
    detail += buf;
    if (sol.accepted) g_solutions.push_back({0.01, row.gamma0, 2, sol});
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), " [%.0fs]", timer.seconds());
  report(4, ok, detail + buf);
}

// --- criterion 5: robustness fits ---------------------------------------
static void criterion5(const ChainContext& n10) {
  Timer timer;
  const bool ci = ci_mode();
  const int samples = ci ? 200 : 1000;
  const double tol_t = ci ? 0.08 : 0.05;
  const double tol_k = ci ? 0.08 : 0.03;

  // Table-3a configuration: N = 10, variant 1, Gamma = 0.0001.
  const ChainSpec spec = make_chain_spec(n10.basis.partition, CouplingProfile::homogeneous, 0.0001);
  const Propagator prop = expm_generator(build_generator(spec, n10.basis), n10.basis, n10.t0);
  const RestoreProblem pb = make_restore_problem(prop, n10.basis, 1, 16, 0.0007);

  const RestoreSolution* sol = nullptr;
  for (const auto& c : g_solutions)
    if (c.variant == 1 && c.gamma == 0.0001) sol = &c.solution;
  MultistartOutcome fallback;
  if (!sol) {
    fallback = solve_multistart(pb, 256, derive_seed(kSeed, 500));
    sol = &fallback.best;
  }
  if (!sol->accepted) {
    report(5, false, "robustness: no accepted solution to perturb");
    return;
  }
  const SweepFit fit = sweep_and_fit(pb, sol->kraus, default_epsilon_grid(), samples,
                                     derive_seed(kSeed, 501));
  const bool ok = std::abs(fit.kappa_t - 0.975) <= tol_t && std::abs(fit.kappa_k - 0.982) <= tol_k &&
                  fit.r2_t > 0.99 && fit.r2_k > 0.99;
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "robustness (%d samples): kappa_T=%.4f (0.975+-%.2f) kappa_K=%.4f (0.982+-%.2f) "
                "R2_T=%.5f R2_K=%.5f C_T=%.3f C_K=%.3f [%.0fs]",
                samples, fit.kappa_t, tol_t, fit.kappa_k, tol_k, fit.r2_t, fit.r2_k, fit.c_t,
                fit.c_k, timer.seconds());
  report(5, ok, buf);
}

// --- criterion 6: property suites ---------------------------------------
static void criterion6(const ChainContext& n10, double lambda_n10) {
  Timer timer;
  std::string detail = "properties:";
  bool ok = true;
  const auto item = [&](const char* name, bool pass, double value) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), " %s=%.2e%s", name, value, pass ? "" : "<-MISS");
    detail += buf;
    ok = ok && pass;
  };

  {  // trace preservation on random instances, N <= 8
    std::mt19937_64 rng(derive_seed(kSeed, 600));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> gauss;
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      const int n = 5 + static_cast<int>(unif(rng) * 4.0);  // 5..8
      const ChainPartition part{2, n - 4, 2, 1};
      const SectorBasis basis = build_sector_basis(part, 1);
      ChainSpec spec = make_chain_spec(part, CouplingProfile::homogeneous, 0.0);
      for (int l = 0; l < n; ++l) spec.dephasing(l) = 0.4 * unif(rng);
      const Propagator prop =
          expm_generator(build_generator(spec, basis), basis, 2.0 * unif(rng));
      Eigen::MatrixXcd a(2, 2);
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) a(i, j) = std::complex<double>(gauss(rng), gauss(rng));
      Eigen::MatrixXcd rho = a * a.adjoint();
      rho /= rho.trace();
      worst = std::max(worst, std::abs(evolve(prop, rho).trace().real() - 1.0));
    }
    item("trace", worst <= 1e-10, worst);
  }

  {  // completeness and Choi positivity on every accepted solution
    double worst_complete = 0.0, worst_choi = 0.0;
    for (const auto& c : g_solutions) {
      worst_complete = std::max(worst_complete, c.solution.kraus.completeness_residual());
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(choi_matrix(c.solution.kraus),
                                                         Eigen::EigenvaluesOnly);
      worst_choi = std::max(worst_choi, -es.eigenvalues().minCoeff());
    }
    item("completeness", worst_complete <= 1e-9, worst_complete);
    item("choi", worst_choi <= 1e-10, worst_choi);
  }

  {  // universality over 100 random sender states (Gamma = 0.01, variant 1)
    const RestoreSolution* sol = nullptr;
    for (const auto& c : g_solutions)
      if (c.variant == 1 && c.gamma == 0.01) sol = &c.solution;
    if (sol) {
      const ChainSpec spec =
          make_chain_spec(n10.basis.partition, CouplingProfile::homogeneous, 0.01);
      const Propagator prop = expm_generator(build_generator(spec, n10.basis), n10.basis, n10.t0);
      const double dev = universality_check(prop, n10.basis, *sol, 100, derive_seed(kSeed, 601));
      item("universality", dev < 1e-8, dev);
    } else {
      item("universality", false, 1.0);
    }
  }

  {  // dilation round trip on unitary-extracted sets
    double worst = 0.0;
    std::mt19937_64 rng(derive_seed(kSeed, 602));
    std::normal_distribution<double> gauss;
    for (int n_env : {1, 2}) {
      const int de = 1 << n_env;
      Dilation d;
      d.n_env = n_env;
      d.n_kraus_effective = 1 << (2 * n_env);
      d.sector_dims = {1, 3};
      const auto random_unitary = [&](int dim) {
        Eigen::MatrixXcd a(dim, dim);
        for (int i = 0; i < dim; ++i)
          for (int j = 0; j < dim; ++j) a(i, j) = std::complex<double>(gauss(rng), gauss(rng));
        return Eigen::MatrixXcd(Eigen::HouseholderQR<Eigen::MatrixXcd>(a).householderQ());
      };
      d.sector_ops = {random_unitary(de), random_unitary(3 * de)};
      const KrausSet set = extract_kraus(d);
      const Dilation rebuilt = dilate(set);
      Eigen::MatrixXcd a(n10.basis.dim, n10.basis.dim);
      for (int i = 0; i < n10.basis.dim; ++i)
        for (int j = 0; j < n10.basis.dim; ++j)
          a(i, j) = std::complex<double>(gauss(rng), gauss(rng));
      Eigen::MatrixXcd rho = a * a.adjoint();
      rho /= rho.trace();
      worst = std::max(worst, verify_dilation(rebuilt, set, rho, n10.basis));
    }
    item("dilation", worst < 1e-9, worst);
  }

  {  // controlled-flip path equals the projector path
    std::mt19937_64 rng(derive_seed(kSeed, 603));
    std::normal_distribution<double> gauss;
    const int d = n10.basis.dim;
    Eigen::MatrixXcd a(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) a(i, j) = std::complex<double>(gauss(rng), gauss(rng));
    Eigen::MatrixXcd rho = a * a.adjoint();
    rho /= rho.trace();
    const Eigen::MatrixXcd p = receiver_projector(n10.basis);
    const Eigen::MatrixXcd w = controlled_flip(p);
    Eigen::MatrixXcd big = Eigen::MatrixXcd::Zero(2 * d, 2 * d);
    for (int n = 0; n < d; ++n)
      for (int m = 0; m < d; ++m) big(2 * n, 2 * m) = rho(n, m);
    const Eigen::MatrixXcd evolved = w * big * w.adjoint();
    Eigen::MatrixXcd kept(d, d);
    for (int n = 0; n < d; ++n)
      for (int m = 0; m < d; ++m) kept(n, m) = evolved(2 * n + 1, 2 * m + 1);
    const double dev = (kept - p * rho * p).cwiseAbs().maxCoeff();
    item("flip", dev <= 1e-12, dev);
  }

  {  // analytic dephasing decay at H = 0
    const ChainPartition part{2, 2, 2, 1};
    const SectorBasis basis = build_sector_basis(part, 1);
    ChainSpec spec = make_chain_spec(part, CouplingProfile::homogeneous, 0.37);
    spec.couplings.setZero();
    const double t = 2.3;
    const Propagator prop = expm_generator(build_generator(spec, basis), basis, t);
    Eigen::MatrixXcd rho0(2, 2);
    rho0 << 0.6, std::complex<double>(0.2, -0.1), std::complex<double>(0.2, 0.1), 0.4;
    const Eigen::MatrixXcd rho = evolve(prop, rho0);
    double worst = 0.0;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        const std::complex<double> want =
            i == j ? rho0(i, j) : rho0(i, j) * std::exp(-0.37 * t);
        worst = std::max(worst, std::abs(rho(i, j) - want));
      }
    item("dephasing", worst <= 1e-10, worst);
  }

  {  // solver lambda against the Gram-matrix roots at Gamma = 0
    const RestoreSolution* sol = nullptr;
    for (const auto& c : g_solutions)
      if (c.variant == 3 && c.gamma == 0.0) sol = &c.solution;
    if (sol) {
      const double dev = std::abs(sol->lambda - lambda_n10);
      item("oracle", dev <= 1e-4, dev);
    } else {
      item("oracle", false, 1.0);
    }
  }

  char buf[64];
  std::snprintf(buf, sizeof(buf), " [%.0fs]", timer.seconds());
  report(6, ok, detail + buf);
}

// --- criterion 7: determinism -------------------------------------------
static void criterion7() {
  Timer timer;
  ExperimentConfig cfg;
  cfg.n_total = 10;
  cfg.gamma_list = {0.01};
  cfg.gamma0_list = {1.0};
  cfg.variant = 3;
  cfg.kraus_count = 16;
  cfg.n_starts = 40;
  cfg.t0_search = false;
  cfg.t0_value = 12.222;
  cfg.master_seed = 424242;
  cfg.threads = 1;

  const auto strip_wall = [](json manifest) {
    manifest.erase("wall_seconds");
    for (auto& jc : manifest.at("cases")) jc.erase("wall_seconds");
    return manifest;
  };
  // the config echo legitimately differs across thread counts
  const auto strip_config = [&](json manifest) {
    manifest = strip_wall(std::move(manifest));
    manifest.erase("resolved_config");
    manifest.erase("config_hash");
    return manifest;
  };

  const json a = strip_wall(run_solve(cfg));
  const json b = strip_wall(run_solve(cfg));
  cfg.threads = 2;
  const json c = strip_config(run_solve(cfg));

  const bool single_ok = a == b;
  const bool multi_ok = strip_config(a) == c;  // per-start streams make this bitwise too

  const T0Outcome t0a = run_t0(cfg);
  const T0Outcome t0b = run_t0(cfg);
  const bool t0_ok = t0a.csv == t0b.csv;

  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "determinism: single-thread %s, multi-thread %s, t0 csv %s [%.0fs]",
                single_ok ? "bit-identical" : "DIFFERS", multi_ok ? "bit-identical" : "DIFFERS",
                t0_ok ? "bit-identical" : "DIFFERS", timer.seconds());
  report(7, single_ok && multi_ok && t0_ok, buf);
}

int main() {
  std::printf("spinrestore acceptance suite (%s %s)\n", kToolName, kToolVersion);
  Timer total;

  double lambda_n10 = 0.0;
  criterion1(lambda_n10);
  const ChainContext n10 = make_context(10, false);
  criterion2(n10, lambda_n10);
  criterion3(n10);
  criterion4();
  criterion5(n10);
  criterion6(n10, lambda_n10);
  criterion7();

  std::printf("acceptance: %d criterion(s) failed, total %.0fs\n", g_failures, total.seconds());
  return g_failures;
}
