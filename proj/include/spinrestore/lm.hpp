#pragma once

// Damped Gauss-Newton (Levenberg-Marquardt) for dense nonlinear least
// squares with a forward-difference Jacobian.  The restoring systems are
// underdetermined (more parameters than residuals), so the step is computed
// through the m x m dual system (J J^T + mu I) y = r, delta = -J^T y, which
// equals the usual (J^T J + mu I) delta = -J^T r step.

#include <Eigen/Dense>
#include <cmath>

namespace spinrestore {

struct LmOptions {
  int max_iterations = 400;
  double residual_tol = 1e-12;  // stop when ||r||_2 drops below
  double step_tol = 1e-14;      // stop when the step stalls
  double fd_step = 1e-7;        // forward-difference step
  double mu_init_scale = 1e-3;
  double mu_max = 1e14;
};

struct LmResult {
  Eigen::VectorXd x;
  Eigen::VectorXd residual;
  double residual_norm = 0.0;
  double residual_max = 0.0;
  int iterations = 0;
  bool converged = false;
};

template <typename F>
LmResult levenberg_marquardt(F&& fn, Eigen::VectorXd x0, const LmOptions& opts = {}) {
  const int n = static_cast<int>(x0.size());
  Eigen::VectorXd r;
  fn(x0, r);
  const int m = static_cast<int>(r.size());

  Eigen::MatrixXd jac(m, n);
  Eigen::MatrixXd normal;  // JJ^T (dual) or J^T J (primal)
  Eigen::VectorXd grad(n), delta(n), xt(n), rt(m), rk(m), y;
  const bool dual = m < n;
  normal.resize(dual ? m : n, dual ? m : n);

  const auto build_jacobian = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& rx) {
    xt = x;
    for (int k = 0; k < n; ++k) {
      const double old = xt(k);
      xt(k) = old + opts.fd_step;
      fn(xt, rk);
      jac.col(k) = (rk - rx) / opts.fd_step;
      xt(k) = old;
    }
    if (dual)
      normal.noalias() = jac * jac.transpose();
    else
      normal.noalias() = jac.transpose() * jac;
    grad.noalias() = jac.transpose() * rx;
  };

  LmResult res;
  res.x = std::move(x0);
  double f_cur = 0.5 * r.squaredNorm();
  build_jacobian(res.x, r);
  double mu = opts.mu_init_scale * jac.colwise().squaredNorm().maxCoeff();
  if (!(mu > 0.0)) mu = opts.mu_init_scale;
  double nu = 2.0;

  Eigen::LDLT<Eigen::MatrixXd> solver;
  Eigen::MatrixXd damped = normal;

  int it = 0;
  for (; it < opts.max_iterations; ++it) {
    if (r.norm() < opts.residual_tol) {
      res.converged = true;
      break;
    }
    damped = normal;
    damped.diagonal().array() += mu;
    solver.compute(damped);
    if (solver.info() != Eigen::Success) {
      mu *= 4.0;
      nu *= 2.0;
      if (mu > opts.mu_max) break;
      continue;
    }
    if (dual) {
      y = solver.solve(r);
      delta.noalias() = -jac.transpose() * y;
    } else {
      delta = solver.solve(-grad);
    }
    if (delta.norm() <= opts.step_tol * (res.x.norm() + opts.step_tol)) {
      res.converged = true;
      break;
    }
    xt = res.x + delta;
    fn(xt, rt);
    const double f_try = 0.5 * rt.squaredNorm();
    const double predicted = 0.5 * delta.dot(mu * delta - grad);
    const double rho = predicted > 0.0 ? (f_cur - f_try) / predicted : -1.0;
    if (rho > 0.0 && f_try < f_cur) {
      res.x.swap(xt);
      r.swap(rt);
      f_cur = f_try;
      build_jacobian(res.x, r);
      mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3.0));
      nu = 2.0;
    } else {
      mu *= nu;
      nu *= 2.0;
      if (mu > opts.mu_max) break;  // stalled: steps are effectively zero
    }
  }

  res.residual = std::move(r);
  res.residual_norm = res.residual.norm();
  res.residual_max = res.residual.size() ? res.residual.cwiseAbs().maxCoeff() : 0.0;
  res.iterations = it;
  if (res.residual_norm < opts.residual_tol) res.converged = true;
  return res;
}

}  // namespace spinrestore
