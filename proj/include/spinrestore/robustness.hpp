#pragma once

// Random perturbations of the restoring Kraus operators under the perturbed
// completeness condition, the delta_T / delta_K measures, epsilon sweeps
// with averaging and the log-log line fits.

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "spinrestore/kraus.hpp"
#include "spinrestore/restoring.hpp"
#include "spinrestore/rng.hpp"

namespace spinrestore {

struct PerturbationSample {
  double epsilon = 0.0;
  // corrections[p] is the matrix cal-K^(p) = r e^(2 pi i q) o cal-K; the
  // perturbed operator is K^(p) + epsilon * corrections[p].
  std::vector<Eigen::MatrixXcd> corrections;
  std::uint64_t seed = 0;
  double delta_t = 0.0;  // filled by the sweep
  double delta_k = 0.0;
};

namespace detail {

// Hermitian matrix residual of the perturbed completeness condition,
//   sum_p [K^dag X_p + X_p^dag K + eps X_p^dag X_p],  X_p = factors_p o prof,
// packed as de^2 reals (diagonal, then upper-triangle re/im).
struct NormSystem {
  const KrausSet* kraus;
  const std::vector<Eigen::MatrixXcd>* factors;
  double epsilon;
  int de;

  int rows() const { return de * de; }

  void residual(const Eigen::MatrixXcd& prof, Eigen::VectorXd& out) const {
    const int d = de;
    Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(d, d);
    for (int p = 0; p < kraus->n_kraus; ++p) {
      const Eigen::MatrixXcd xp = (*factors)[p].cwiseProduct(prof);
      acc.noalias() += kraus->blocks[p][1].adjoint() * xp;
      acc.noalias() += xp.adjoint() * kraus->blocks[p][1];
      acc.noalias() += epsilon * (xp.adjoint() * xp);
    }
    out.resize(rows());
    int idx = 0;
    for (int i = 0; i < d; ++i) out(idx++) = acc(i, i).real();
    for (int i = 0; i < d; ++i)
      for (int j = i + 1; j < d; ++j) {
        out(idx++) = acc(i, j).real();
        out(idx++) = acc(i, j).imag();
      }
  }
};

inline Eigen::MatrixXcd unpack_profile(const Eigen::VectorXd& v, int de) {
  Eigen::MatrixXcd prof(de, de);
  for (int col = 0, idx = 0; col < de; ++col)
    for (int row = 0; row < de; ++row, idx += 2)
      prof(row, col) = std::complex<double>(v(idx), v(idx + 1));
  return prof;
}

inline Eigen::VectorXd pack_profile(const Eigen::MatrixXcd& prof) {
  Eigen::VectorXd v(2 * prof.size());
  for (int col = 0, idx = 0; col < prof.cols(); ++col)
    for (int row = 0; row < prof.rows(); ++row, idx += 2) {
      v(idx) = prof(row, col).real();
      v(idx + 1) = prof(row, col).imag();
    }
  return v;
}

}  // namespace detail

// Draws the per-operator random factors r e^(2 pi i q) and a random shared
// profile, then projects the profile onto the perturbed-completeness
// manifold by minimum-norm Newton corrections.
inline PerturbationSample perturb_kraus(const KrausSet& set, double epsilon, std::uint64_t seed) {
  if (epsilon <= 0.0) throw std::invalid_argument("perturb_kraus: epsilon must be positive");
  if (set.completeness_residual() > 1e-9)
    throw std::invalid_argument("perturb_kraus: Kraus set not complete");
  const int de = set.sector_dims.back();

  for (std::uint64_t attempt = 0;; ++attempt) {
    std::mt19937_64 rng = make_engine(seed, 0x70657274ull, attempt);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<Eigen::MatrixXcd> factors(set.n_kraus, Eigen::MatrixXcd(de, de));
    for (int p = 0; p < set.n_kraus; ++p)
      for (int i = 0; i < de; ++i)
        for (int j = 0; j < de; ++j) {
          const double r = unit(rng);
          const double q = unit(rng);
          factors[p](i, j) = std::polar(r, 2.0 * M_PI * q);
        }
    // Random profile draw; the scale fixes the absolute size of the
    // perturbation measures (the normalization system determines the profile
    // only up to its solution manifold).
    constexpr double draw_scale = 1.05;
    Eigen::MatrixXcd prof(de, de);
    for (int i = 0; i < de; ++i)
      for (int j = 0; j < de; ++j)
        prof(i, j) = std::polar(draw_scale * unit(rng), 2.0 * M_PI * unit(rng));

    detail::NormSystem sys{&set, &factors, epsilon, de};
    Eigen::VectorXd x = detail::pack_profile(prof);
    Eigen::VectorXd res, res_probe;
    bool ok = false;
    for (int newton = 0; newton < 20; ++newton) {
      sys.residual(detail::unpack_profile(x, de), res);
      if (res.cwiseAbs().maxCoeff() < 1e-13) {
        ok = true;
        break;
      }
      Eigen::MatrixXd jac(sys.rows(), x.size());
      const double h = 1e-7;
      for (int kcol = 0; kcol < x.size(); ++kcol) {
        Eigen::VectorXd xp = x;
        xp(kcol) += h;
        sys.residual(detail::unpack_profile(xp, de), res_probe);
        jac.col(kcol) = (res_probe - res) / h;
      }
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(jac);
      if (cod.rank() < sys.rows()) break;  // singular draw, retry substream
      x += cod.solve(-res);
    }
    if (!ok) continue;

    PerturbationSample sample;
    sample.epsilon = epsilon;
    sample.seed = derive_seed(seed, 0x70657274ull, attempt);
    const Eigen::MatrixXcd profile = detail::unpack_profile(x, de);
    sample.corrections.reserve(set.n_kraus);
    for (int p = 0; p < set.n_kraus; ++p)
      sample.corrections.push_back(factors[p].cwiseProduct(profile));
    return sample;
  }
}

inline KrausSet perturbed_set(const KrausSet& set, const PerturbationSample& sample) {
  KrausSet out = set;
  for (int p = 0; p < set.n_kraus; ++p)
    out.blocks[p][1] += sample.epsilon * sample.corrections[p];
  return out;
}

// Relative Frobenius measure over the receiver-row T elements.
inline double delta_T(const Eigen::MatrixXcd& t_ref, const Eigen::MatrixXcd& t_pert) {
  if (t_ref.rows() != t_pert.rows() || t_ref.cols() != t_pert.cols())
    throw std::invalid_argument("delta_T: shape mismatch");
  const double denom = t_ref.squaredNorm();
  if (denom == 0.0) throw std::domain_error("delta_T: reference tensor vanishes");
  return std::sqrt((t_ref - t_pert).squaredNorm() / denom);
}

// Relative size of the actual perturbation eps * cal-K against the operators.
inline double delta_K(const KrausSet& set, const std::vector<Eigen::MatrixXcd>& corrections,
                      double epsilon) {
  double num = 0.0, den = 0.0;
  for (int p = 0; p < set.n_kraus; ++p) {
    num += corrections[p].squaredNorm();
    den += set.blocks[p][1].squaredNorm();
  }
  if (den == 0.0) throw std::domain_error("delta_K: zero Kraus operators");
  return epsilon * std::sqrt(num / den);
}

struct SweepFit {
  std::vector<double> epsilon;
  std::vector<double> mean_delta_t;
  std::vector<double> mean_delta_k;
  double kappa_t = 0.0, c_t = 0.0, r2_t = 0.0;
  double kappa_k = 0.0, c_k = 0.0, r2_k = 0.0;
  std::vector<std::string> warnings;
};

namespace detail {

inline void ols_loglog(const std::vector<double>& eps, const std::vector<double>& val,
                       double& slope, double& intercept, double& r2,
                       std::vector<std::string>& warnings, const char* tag) {
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (val[i] <= 0.0) {
      warnings.push_back(std::string(tag) + ": zero average at epsilon = " + std::to_string(eps[i]) +
                         " excluded from fit");
      continue;
    }
    xs.push_back(std::log10(eps[i]));
    ys.push_back(std::log10(val[i]));
  }
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
    syy += ys[i] * ys[i];
  }
  slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  intercept = (sy - slope * sx) / n;
  double ss_res = 0.0, ss_tot = 0.0;
  const double ybar = sy / n;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double fit = slope * xs[i] + intercept;
    ss_res += (ys[i] - fit) * (ys[i] - fit);
    ss_tot += (ys[i] - ybar) * (ys[i] - ybar);
  }
  r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
}

}  // namespace detail

// Averages delta_T and delta_K over n_samples perturbations per epsilon and
// fits both log-log lines.  Samples are independent across (epsilon, sample),
// the averaging order is fixed, so the result does not depend on threading.
inline SweepFit sweep_and_fit(const RestoreProblem& pb, const KrausSet& set,
                              const std::vector<double>& eps_grid, int n_samples,
                              std::uint64_t master_seed, int n_threads = 0) {
  if (n_samples < 1) throw std::invalid_argument("sweep_and_fit: n_samples must be positive");
  if (n_threads <= 0) n_threads = static_cast<int>(std::thread::hardware_concurrency());
  if (n_threads < 1) n_threads = 1;

  const Eigen::MatrixXcd t_ref = receiver_T(pb, set);
  const int n_eps = static_cast<int>(eps_grid.size());
  std::vector<double> dt(static_cast<std::size_t>(n_eps) * n_samples);
  std::vector<double> dk(static_cast<std::size_t>(n_eps) * n_samples);

  std::atomic<int> next{0};
  const int total = n_eps * n_samples;
  const auto worker = [&]() {
    for (;;) {
      const int idx = next.fetch_add(1);
      if (idx >= total) break;
      const int ie = idx / n_samples;
      const int is = idx % n_samples;
      const std::uint64_t seed = derive_seed(master_seed, static_cast<std::uint64_t>(ie),
                                             static_cast<std::uint64_t>(is));
      const PerturbationSample sample = perturb_kraus(set, eps_grid[ie], seed);
      const KrausSet tilde = perturbed_set(set, sample);
      dt[idx] = delta_T(t_ref, receiver_T(pb, tilde));
      dk[idx] = delta_K(set, sample.corrections, eps_grid[ie]);
    }
  };
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  SweepFit fit;
  fit.epsilon = eps_grid;
  fit.mean_delta_t.resize(n_eps);
  fit.mean_delta_k.resize(n_eps);
  for (int ie = 0; ie < n_eps; ++ie) {
    double st = 0.0, sk = 0.0;
    for (int is = 0; is < n_samples; ++is) {
      st += dt[static_cast<std::size_t>(ie) * n_samples + is];
      sk += dk[static_cast<std::size_t>(ie) * n_samples + is];
    }
    fit.mean_delta_t[ie] = st / n_samples;
    fit.mean_delta_k[ie] = sk / n_samples;
  }
  detail::ols_loglog(fit.epsilon, fit.mean_delta_t, fit.kappa_t, fit.c_t, fit.r2_t, fit.warnings,
                     "delta_T");
  detail::ols_loglog(fit.epsilon, fit.mean_delta_k, fit.kappa_k, fit.c_k, fit.r2_k, fit.warnings,
                     "delta_K");
  return fit;
}

inline std::vector<double> default_epsilon_grid() {
  std::vector<double> grid;
  for (int j = 1; j <= 15; ++j) grid.push_back(std::pow(10.0, -j));
  return grid;
}

}  // namespace spinrestore
