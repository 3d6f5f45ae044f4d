#pragma once

// Exponentiation of the Lindblad generator, propagation of sender-block
// initial states, and the closed-system lambda oracle with the
// registration-time search.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <unsupported/Eigen/MatrixFunctions>
#include <vector>

#include "spinrestore/chain_model.hpp"
#include "spinrestore/sector_basis.hpp"

namespace spinrestore {

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Scaling-and-squaring Pade exponential; the generator is non-normal, so no
// diagonalizability is assumed.
inline Eigen::MatrixXcd matrix_exponential(const Eigen::MatrixXcd& a) {
  if (!a.allFinite()) throw NumericalError("matrix exponential: non-finite entries");
  return a.exp();
}

struct Propagator {
  Eigen::MatrixXcd map;             // exp(u t), N_k^2 x N_k^2
  Eigen::MatrixXcd sender_columns;  // restriction to sender-pair columns
  double time = 0.0;
  int dim = 0;         // N_k
  int sender_dim = 0;  // N^(S)_k
};

inline Propagator expm_generator(const LindbladGenerator& gen, const SectorBasis& basis,
                                 double t) {
  if (t < 0.0) throw std::invalid_argument("propagator: time must be non-negative");
  if (gen.sector_dim != basis.dim) throw std::invalid_argument("propagator: dimension mismatch");
  Propagator prop;
  prop.dim = basis.dim;
  prop.sender_dim = static_cast<int>(basis.sender_block.size());
  prop.time = t;
  prop.map = matrix_exponential((gen.matrix * t).eval());
  prop.sender_columns.resize(prop.dim * prop.dim, prop.sender_dim * prop.sender_dim);
  for (int i = 0; i < prop.sender_dim; ++i)
    for (int j = 0; j < prop.sender_dim; ++j)
      prop.sender_columns.col(i * prop.sender_dim + j) =
          prop.map.col(basis.sender_block[i] * prop.dim + basis.sender_block[j]);
  return prop;
}

namespace detail {

inline void validate_density(const Eigen::MatrixXcd& rho, double tol = 1e-9) {
  if (rho.rows() != rho.cols()) throw std::invalid_argument("density matrix must be square");
  if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > tol)
    throw std::invalid_argument("density matrix not Hermitian");
  if (std::abs(rho.trace().real() - 1.0) > tol || std::abs(rho.trace().imag()) > tol)
    throw std::invalid_argument("density matrix not unit trace");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -tol)
    throw std::invalid_argument("density matrix not positive semidefinite");
}

}  // namespace detail

// rho_{nm}(t) = sum_{jl} U_{nm;jl} rho^(S)_{jl}(0): only the sender-pair
// columns of the propagator enter.
inline Eigen::MatrixXcd evolve(const Propagator& prop, const Eigen::MatrixXcd& rho_s0) {
  if (rho_s0.rows() != prop.sender_dim)
    throw std::invalid_argument("evolve: sender state dimension mismatch");
  detail::validate_density(rho_s0);
  const int d = prop.dim;
  const int ds = prop.sender_dim;
  Eigen::VectorXcd vec = Eigen::VectorXcd::Zero(d * d);
  for (int i = 0; i < ds; ++i)
    for (int j = 0; j < ds; ++j) vec += rho_s0(i, j) * prop.sender_columns.col(i * ds + j);
  return Eigen::Map<const Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic,
                                        Eigen::RowMajor>>(vec.data(), d, d);
}

// Closed-system sector propagator exp(-iHt) through the eigendecomposition of
// the (real symmetric) XX sector Hamiltonian.
class SectorUnitary {
 public:
  SectorUnitary(const SectorHamiltonian& h, const SectorBasis& basis) : basis_(&basis) {
    if (h.matrix.imag().cwiseAbs().maxCoeff() > 1e-14)
      throw std::invalid_argument("sector unitary: Hamiltonian expected real symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h.matrix.real());
    evals_ = es.eigenvalues();
    evecs_ = es.eigenvectors();
  }

  Eigen::MatrixXcd at(double t) const {
    const Eigen::VectorXcd phases =
        (std::complex<double>(0.0, -t) * evals_.cast<std::complex<double>>()).array().exp();
    return evecs_.cast<std::complex<double>>() * phases.asDiagonal() *
           evecs_.transpose().cast<std::complex<double>>();
  }

  // Transfer amplitudes from the sender-block states to the full-ER states:
  // Vhat_{n_ER;m_S} = V_{(0,0,n_ER);(m_S,0,0)}(t).
  Eigen::MatrixXcd transfer_block(double t) const {
    const auto& rows = basis_->er_block;
    const auto& cols = basis_->sender_block;
    Eigen::MatrixXcd out(rows.size(), cols.size());
    const Eigen::VectorXcd phases =
        (std::complex<double>(0.0, -t) * evals_.cast<std::complex<double>>()).array().exp();
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < cols.size(); ++c) {
        std::complex<double> s = 0.0;
        for (Eigen::Index e = 0; e < evals_.size(); ++e)
          s += evecs_(rows[r], e) * phases(e) * evecs_(cols[c], e);
        out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = s;
      }
    return out;
  }

 private:
  const SectorBasis* basis_;
  Eigen::VectorXd evals_;
  Eigen::MatrixXd evecs_;
};

// Roots of the quadratic obtained by eliminating the auxiliary multiplier
// from the two-column restoring system: the eigenvalues of the Gram matrix
// b_ij = b_i^dag b_j of the sender->ER transfer block.  The minimal root is
// the restored fraction of the transferred state.
inline std::pair<double, double> lambda_roots_2qubit(const Eigen::MatrixXcd& vhat) {
  if (vhat.cols() != 2) throw std::domain_error("lambda roots: two sender columns required");
  const double b00 = vhat.col(0).squaredNorm();
  const double b11 = vhat.col(1).squaredNorm();
  const std::complex<double> b01 = (vhat.col(0).adjoint() * vhat.col(1))(0, 0);
  const std::complex<double> b10 = std::conj(b01);
  const double disc = (b00 - b11) * (b00 - b11) + 4.0 * (b01 * b10).real();
  if (disc < -1e-12) throw NumericalError("lambda roots: negative discriminant");
  const double root = std::sqrt(std::max(disc, 0.0));
  return {0.5 * (b00 + b11 - root), 0.5 * (b00 + b11 + root)};
}

struct LambdaCurve {
  std::vector<double> tau;
  std::vector<double> lambda_min;
  std::vector<double> lambda_max;
  double t0 = 0.0;
  double lambda0 = 0.0;
};

// Samples the closed-system lambda_min curve, locates its first local maximum
// above a noise floor and refines the abscissa by golden-section search.
// Plateaus resolve to the leftmost grid point.
inline LambdaCurve find_t0(const ChainSpec& spec, const SectorBasis& basis, double tau_max = 0.0,
                           double step = 0.002, double lambda_floor = 0.05) {
  if (static_cast<int>(basis.sender_block.size()) != 2)
    throw std::domain_error("find_t0: lambda oracle requires a two-state sender sector");
  if (tau_max <= 0.0) tau_max = 3.0 * spec.partition.total();
  if (step <= 0.0) throw std::invalid_argument("find_t0: step must be positive");

  const SectorHamiltonian h = build_hamiltonian(spec, basis);
  const SectorUnitary u(h, basis);

  LambdaCurve curve;
  const int n_pts = static_cast<int>(std::floor(tau_max / step)) + 1;
  curve.tau.reserve(n_pts);
  curve.lambda_min.reserve(n_pts);
  curve.lambda_max.reserve(n_pts);
  for (int i = 0; i < n_pts; ++i) {
    const double tau = i * step;
    const auto [lo, hi] = lambda_roots_2qubit(u.transfer_block(tau));
    curve.tau.push_back(tau);
    curve.lambda_min.push_back(lo);
    curve.lambda_max.push_back(hi);
  }

  int peak = -1;
  for (int i = 1; i + 1 < n_pts; ++i) {
    if (curve.lambda_min[i] < lambda_floor) continue;
    if (curve.lambda_min[i] > curve.lambda_min[i - 1] &&
        curve.lambda_min[i] >= curve.lambda_min[i + 1]) {
      peak = i;
      break;
    }
  }
  if (peak < 0) throw NumericalError("find_t0: no local maximum found within tau_max");

  const auto lam = [&](double tau) { return lambda_roots_2qubit(u.transfer_block(tau)).first; };
  double a = curve.tau[peak - 1];
  double b = curve.tau[peak + 1];
  constexpr double inv_phi = 0.6180339887498949;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = lam(x1), f2 = lam(x2);
  while (b - a > 1e-3) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = lam(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = lam(x1);
    }
  }
  curve.t0 = 0.5 * (a + b);
  curve.lambda0 = lam(curve.t0);
  return curve;
}

}  // namespace spinrestore
