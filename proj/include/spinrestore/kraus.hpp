#pragma once

// Excitation-preserving Kraus sets on the extended receiver, the induced
// restoring map W, and the application of the channel to sector density
// matrices.

#include <Eigen/Dense>
#include <complex>
#include <random>
#include <stdexcept>
#include <vector>

#include "spinrestore/rng.hpp"
#include "spinrestore/sector_basis.hpp"

namespace spinrestore {

// One sector-blocked operator per Kraus label p: blocks[p][j] acts on the
// j-excitation sector of the extended receiver, j = 0..k.  For k = 1 that is
// a ground scalar c_p and an N^(ER)_1 x N^(ER)_1 matrix.
struct KrausSet {
  int n_kraus = 0;
  int excitations = 0;
  std::vector<int> sector_dims;                     // d_j, j = 0..k
  std::vector<std::vector<Eigen::MatrixXcd>> blocks;  // [p][j]

  std::complex<double> ground(int p) const { return blocks[p][0](0, 0); }

  // Max deviation of sum_p K_p^dag K_p from the identity over all sectors.
  double completeness_residual() const {
    double worst = 0.0;
    for (std::size_t j = 0; j < sector_dims.size(); ++j) {
      const int d = sector_dims[j];
      Eigen::MatrixXcd s = Eigen::MatrixXcd::Zero(d, d);
      for (int p = 0; p < n_kraus; ++p) s += blocks[p][j].adjoint() * blocks[p][j];
      s -= Eigen::MatrixXcd::Identity(d, d);
      worst = std::max(worst, s.cwiseAbs().maxCoeff());
    }
    return worst;
  }
};

inline KrausSet make_zero_kraus(const std::vector<int>& sector_dims, int n_kraus) {
  KrausSet set;
  set.n_kraus = n_kraus;
  set.excitations = static_cast<int>(sector_dims.size()) - 1;
  set.sector_dims = sector_dims;
  set.blocks.resize(n_kraus);
  for (auto& ops : set.blocks)
    for (int d : sector_dims) ops.push_back(Eigen::MatrixXcd::Zero(d, d));
  return set;
}

inline KrausSet make_identity_kraus(const std::vector<int>& sector_dims) {
  KrausSet set = make_zero_kraus(sector_dims, 1);
  for (std::size_t j = 0; j < sector_dims.size(); ++j)
    set.blocks[0][j] = Eigen::MatrixXcd::Identity(sector_dims[j], sector_dims[j]);
  return set;
}

// Rescales every sector stack by (sum_p K^dag K)^(-1/2) so the completeness
// condition holds exactly (polar-type normalization).
inline void normalize_completeness(KrausSet& set) {
  for (std::size_t j = 0; j < set.sector_dims.size(); ++j) {
    const int d = set.sector_dims[j];
    Eigen::MatrixXcd s = Eigen::MatrixXcd::Zero(d, d);
    for (int p = 0; p < set.n_kraus; ++p) s += set.blocks[p][j].adjoint() * set.blocks[p][j];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(s);
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(1e-300);
    const Eigen::MatrixXcd inv_sqrt = es.eigenvectors() *
                                      ev.cwiseSqrt().cwiseInverse().asDiagonal() *
                                      es.eigenvectors().adjoint();
    for (int p = 0; p < set.n_kraus; ++p) set.blocks[p][j] = set.blocks[p][j] * inv_sqrt;
  }
}

// i.i.d. complex Gaussian entries with scale 1/sqrt(N_K d_j), then one polar
// normalization; the multistart solver draws its initial points this way.
inline KrausSet make_random_kraus(const std::vector<int>& sector_dims, int n_kraus,
                                  std::mt19937_64& rng) {
  KrausSet set = make_zero_kraus(sector_dims, n_kraus);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int p = 0; p < n_kraus; ++p)
    for (std::size_t j = 0; j < sector_dims.size(); ++j) {
      const int d = sector_dims[j];
      const double scale = 1.0 / std::sqrt(static_cast<double>(n_kraus) * d * 2.0);
      for (int col = 0; col < d; ++col)
        for (int row = 0; row < d; ++row)
          set.blocks[p][j](row, col) =
              std::complex<double>(gauss(rng) * scale, gauss(rng) * scale);
    }
  normalize_completeness(set);
  return set;
}

// Restoring transformation W_{n m; i j} = sum_p K^(p)_{n i} (K^(p)_{m j})^*,
// stored per ER sector pair (ja, jb): rows (n, m), columns (i, j), with n, i
// in sector ja and m, j in sector jb.
struct RestoringMap {
  std::vector<int> sector_dims;
  std::vector<std::vector<Eigen::MatrixXcd>> blocks;  // [ja][jb]

  const Eigen::MatrixXcd& block(int ja, int jb) const { return blocks[ja][jb]; }
};

inline RestoringMap make_restoring_map(const KrausSet& set) {
  RestoringMap w;
  w.sector_dims = set.sector_dims;
  const int n_sec = static_cast<int>(set.sector_dims.size());
  w.blocks.assign(n_sec, std::vector<Eigen::MatrixXcd>(n_sec));
  for (int ja = 0; ja < n_sec; ++ja)
    for (int jb = 0; jb < n_sec; ++jb) {
      const int da = set.sector_dims[ja];
      const int db = set.sector_dims[jb];
      Eigen::MatrixXcd blk = Eigen::MatrixXcd::Zero(da * db, da * db);
      for (int p = 0; p < set.n_kraus; ++p) {
        const auto& ka = set.blocks[p][ja];
        const auto& kb = set.blocks[p][jb];
        for (int n = 0; n < da; ++n)
          for (int m = 0; m < db; ++m)
            for (int i = 0; i < da; ++i)
              for (int j = 0; j < db; ++j)
                blk(n * db + m, i * db + j) += ka(n, i) * std::conj(kb(m, j));
      }
      w.blocks[ja][jb] = std::move(blk);
    }
  return w;
}

// Choi-type reshape of the full ER channel (rows (n,i), columns (m,j) over
// the direct sum of sectors); positive semidefinite for any Kraus set.
inline Eigen::MatrixXcd choi_matrix(const KrausSet& set) {
  int d_tot = 0;
  for (int d : set.sector_dims) d_tot += d;
  Eigen::MatrixXcd choi = Eigen::MatrixXcd::Zero(d_tot * d_tot, d_tot * d_tot);
  Eigen::VectorXcd v(d_tot * d_tot);
  for (int p = 0; p < set.n_kraus; ++p) {
    Eigen::MatrixXcd full = Eigen::MatrixXcd::Zero(d_tot, d_tot);
    int off = 0;
    for (std::size_t j = 0; j < set.sector_dims.size(); ++j) {
      const int d = set.sector_dims[j];
      full.block(off, off, d, d) = set.blocks[p][j];
      off += d;
    }
    for (int n = 0; n < d_tot; ++n)
      for (int i = 0; i < d_tot; ++i) v(n * d_tot + i) = full(n, i);
    choi.noalias() += v * v.adjoint();
  }
  return choi;
}

// Lift of the ER operator blocks[p] to the k-excitation sector of the whole
// chain: identity on the sender/TL' factors, the sector block on the ER part.
inline Eigen::MatrixXcd kraus_chain_lift(const KrausSet& set, const SectorBasis& basis, int p) {
  Eigen::MatrixXcd lift = Eigen::MatrixXcd::Zero(basis.dim, basis.dim);
  for (int a = 0; a < basis.dim; ++a) {
    const auto& sa = basis.decompose(a);
    for (int b = 0; b < basis.dim; ++b) {
      const auto& sb = basis.decompose(b);
      if (sa.k_sender != sb.k_sender || sa.i_sender != sb.i_sender || sa.k_tl != sb.k_tl ||
          sa.i_tl != sb.i_tl)
        continue;
      lift(a, b) = set.blocks[p][sa.k_er](sa.i_er, sb.i_er);
    }
  }
  return lift;
}

// rho_tilde = sum_p (I (x) K_p) rho (I (x) K_p)^dag on the sector basis.
inline Eigen::MatrixXcd apply_restore(const Eigen::MatrixXcd& rho, const KrausSet& set,
                                      const SectorBasis& basis) {
  if (rho.rows() != basis.dim || rho.cols() != basis.dim)
    throw std::invalid_argument("apply_restore: state dimension mismatch");
  if (static_cast<int>(set.sector_dims.size()) != basis.excitations + 1)
    throw std::invalid_argument("apply_restore: Kraus sector count mismatch");
  for (std::size_t j = 0; j < set.sector_dims.size(); ++j)
    if (set.sector_dims[j] != basis.er_sector_dims[j])
      throw std::invalid_argument("apply_restore: ER sector dimension mismatch");
  if (set.completeness_residual() > 1e-6)
    throw std::invalid_argument("apply_restore: channel is not trace preserving");
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(basis.dim, basis.dim);
  Eigen::MatrixXcd tmp(basis.dim, basis.dim);
  for (int p = 0; p < set.n_kraus; ++p) {
    const Eigen::MatrixXcd lift = kraus_chain_lift(set, basis, p);
    tmp.noalias() = lift * rho;
    out.noalias() += tmp * lift.adjoint();
  }
  return out;
}

}  // namespace spinrestore
