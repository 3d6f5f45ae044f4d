#pragma once

// Receiver-sector projector, the controlled flip onto a one-qubit ancilla,
// the measurement that removes the garbage part of the restored state, and
// the output-state quality metric.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <stdexcept>

#include "spinrestore/sector_basis.hpp"

namespace spinrestore {

struct MeasurementFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MeasurementOutcome {
  Eigen::MatrixXcd rho_out;  // N^(R)_k x N^(R)_k, unit trace
  double p_success = 0.0;
  double garbage_norm = 0.0;
};

inline Eigen::MatrixXcd receiver_projector(const SectorBasis& basis) {
  Eigen::MatrixXcd p = Eigen::MatrixXcd::Zero(basis.dim, basis.dim);
  for (int f : basis.receiver_block) p(f, f) = 1.0;
  return p;
}

// W = P (x) sigma_x + (I - P) (x) I on chain (x) ancilla, ancilla index last
// (flat 2n + b).  Flips the ancilla exactly on the receiver-sector states.
inline Eigen::MatrixXcd controlled_flip(const Eigen::MatrixXcd& p) {
  const auto d = p.rows();
  if (p.cols() != d) throw std::invalid_argument("controlled_flip: projector must be square");
  if ((p - p.adjoint()).cwiseAbs().maxCoeff() > 1e-10 ||
      (p * p - p).cwiseAbs().maxCoeff() > 1e-10)
    throw std::invalid_argument("controlled_flip: operator is not a projector");
  Eigen::MatrixXcd w = Eigen::MatrixXcd::Zero(2 * d, 2 * d);
  for (Eigen::Index n = 0; n < d; ++n)
    for (Eigen::Index m = 0; m < d; ++m) {
      const std::complex<double> pv = p(n, m);
      w(2 * n, 2 * m + 1) += pv;
      w(2 * n + 1, 2 * m) += pv;
      const std::complex<double> qv = (n == m ? 1.0 : 0.0) - pv;
      w(2 * n, 2 * m) += qv;
      w(2 * n + 1, 2 * m + 1) += qv;
    }
  return w;
}

// Projective ancilla measurement with outcome |1>: keeps the receiver block,
// renormalizes, reports the success probability Tr(P rho P).
inline MeasurementOutcome measure_extract(const Eigen::MatrixXcd& rho_tilde,
                                          const SectorBasis& basis) {
  if (rho_tilde.rows() != basis.dim || rho_tilde.cols() != basis.dim)
    throw std::invalid_argument("measure_extract: state dimension mismatch");
  const int dr = static_cast<int>(basis.receiver_block.size());
  MeasurementOutcome out;
  double p = 0.0;
  for (int f : basis.receiver_block) p += rho_tilde(f, f).real();
  out.p_success = p;
  out.garbage_norm = rho_tilde.trace().real() - p;
  if (p < 1e-12) throw MeasurementFailure("measure_extract: no renormalizable state");
  out.rho_out.resize(dr, dr);
  for (int i = 0; i < dr; ++i)
    for (int j = 0; j < dr; ++j)
      out.rho_out(i, j) = rho_tilde(basis.receiver_block[i], basis.receiver_block[j]) / p;
  return out;
}

// Uhlmann fidelity F(rho, sigma) = (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2.
inline double output_fidelity(const Eigen::MatrixXcd& rho, const Eigen::MatrixXcd& sigma) {
  if (rho.rows() != sigma.rows() || rho.cols() != sigma.cols())
    throw std::invalid_argument("output_fidelity: dimension mismatch");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho);
  if (es.eigenvalues().minCoeff() < -1e-9)
    throw std::invalid_argument("output_fidelity: state not positive semidefinite");
  const Eigen::MatrixXcd sqrt_rho = es.eigenvectors() *
                                    es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                                    es.eigenvectors().adjoint();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> inner(sqrt_rho * sigma * sqrt_rho);
  const double root_sum = inner.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return std::min(root_sum * root_sum, 1.0);
}

}  // namespace spinrestore
