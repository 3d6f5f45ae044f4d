#pragma once

// Realization of a Kraus set as a unitary V on ER (x) E traced against a
// maximally mixed n_E-qubit environment: slice (n_E, i_E) of V equals
// sqrt(2^n_E) K^(p(n_E, i_E)), so (1/2^n_E) Tr_E V (rho (x) I) V^dag
// reproduces the channel.  Assembling V from the slices only yields a
// unitary for sets with the matching column structure; dilate verifies and
// reports the offending singular values otherwise.

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "spinrestore/kraus.hpp"

namespace spinrestore {

struct DilationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Dilation {
  int n_env = 0;                             // environment qubits
  int n_kraus_effective = 0;                 // 2^(2 n_env), zero-padded count
  std::vector<int> sector_dims;              // ER sector dims, j = 0..k
  std::vector<Eigen::MatrixXcd> sector_ops;  // V_j on (sector j) (x) E
  // Kraus label p of slice (n_E, i_E); row-major, given operators first.
  int label(int n_e, int i_e) const { return n_e * (1 << n_env) + i_e; }
};

// Reads the (rescaled) Kraus operators back out of the stored unitary.
inline KrausSet extract_kraus(const Dilation& d) {
  const int de = 1 << d.n_env;
  const double scale = 1.0 / std::sqrt(static_cast<double>(de));
  KrausSet set = make_zero_kraus(d.sector_dims, d.n_kraus_effective);
  for (int ne = 0; ne < de; ++ne)
    for (int ie = 0; ie < de; ++ie) {
      const int p = d.label(ne, ie);
      for (std::size_t j = 0; j < d.sector_dims.size(); ++j) {
        const int dj = d.sector_dims[j];
        for (int n = 0; n < dj; ++n)
          for (int i = 0; i < dj; ++i)
            set.blocks[p][j](n, i) = d.sector_ops[j](n * de + ne, i * de + ie) * scale;
      }
    }
  return set;
}

// Builds the slice-filled V without the unitarity gate; used for the
// channel round-trip, which holds slice-wise whether or not V is unitary.
inline Dilation assemble_dilation(const KrausSet& set) {
  if (set.completeness_residual() > 1e-9)
    throw std::invalid_argument("dilate: Kraus set does not satisfy completeness");
  Dilation d;
  d.n_env = 0;
  while ((1 << (2 * d.n_env)) < set.n_kraus) ++d.n_env;
  d.n_kraus_effective = 1 << (2 * d.n_env);
  d.sector_dims = set.sector_dims;
  const int de = 1 << d.n_env;
  const double scale = std::sqrt(static_cast<double>(de));

  d.sector_ops.resize(set.sector_dims.size());
  for (std::size_t j = 0; j < set.sector_dims.size(); ++j) {
    const int dj = set.sector_dims[j];
    Eigen::MatrixXcd v = Eigen::MatrixXcd::Zero(dj * de, dj * de);
    for (int ne = 0; ne < de; ++ne)
      for (int ie = 0; ie < de; ++ie) {
        const int p = d.label(ne, ie);
        if (p >= set.n_kraus) continue;  // zero-padded slice
        for (int n = 0; n < dj; ++n)
          for (int i = 0; i < dj; ++i) v(n * de + ne, i * de + ie) = scale * set.blocks[p][j](n, i);
      }
    d.sector_ops[j] = std::move(v);
  }
  return d;
}

inline double unitary_defect(const Dilation& d) {
  double worst = 0.0;
  for (const auto& v : d.sector_ops) {
    const Eigen::MatrixXcd gram = v.adjoint() * v;
    worst = std::max(
        worst, (gram - Eigen::MatrixXcd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff());
  }
  return worst;
}

inline Dilation dilate(const KrausSet& set) {
  Dilation d = assemble_dilation(set);
  for (std::size_t j = 0; j < d.sector_ops.size(); ++j) {
    const auto& v = d.sector_ops[j];
    const Eigen::MatrixXcd gram = v.adjoint() * v;
    const double defect =
        (gram - Eigen::MatrixXcd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
    if (defect > 1e-8) {
      Eigen::JacobiSVD<Eigen::MatrixXcd> svd(v);
      std::ostringstream msg;
      msg << "dilate: stacked slices are not a partial isometry (sector " << j
          << ", defect " << defect << "); singular values:";
      for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
        msg << ' ' << svd.singularValues()(i);
      throw DilationError(msg.str());
    }
  }
  return d;
}

// Applies the traced unitary conjugation of the dilation to a sector state
// and compares with the direct Kraus sum; returns the max deviation.  The
// dilation route materializes the chain (x) environment operator, so the two
// paths share no intermediate results.
inline double verify_dilation(const Dilation& d, const KrausSet& set, const Eigen::MatrixXcd& rho,
                              const SectorBasis& basis) {
  if (rho.rows() != basis.dim) throw std::invalid_argument("verify_dilation: state size mismatch");
  const int de = 1 << d.n_env;
  const int dim = basis.dim;

  // Lift V to the chain (x) environment space, flat index n*de + e.
  Eigen::MatrixXcd v_lift = Eigen::MatrixXcd::Zero(dim * de, dim * de);
  for (int a = 0; a < dim; ++a) {
    const auto& sa = basis.decompose(a);
    for (int b = 0; b < dim; ++b) {
      const auto& sb = basis.decompose(b);
      if (sa.k_sender != sb.k_sender || sa.i_sender != sb.i_sender || sa.k_tl != sb.k_tl ||
          sa.i_tl != sb.i_tl)
        continue;
      const auto& vj = d.sector_ops[sa.k_er];
      for (int ea = 0; ea < de; ++ea)
        for (int eb = 0; eb < de; ++eb)
          v_lift(a * de + ea, b * de + eb) = vj(sa.i_er * de + ea, sb.i_er * de + eb);
    }
  }

  Eigen::MatrixXcd big = Eigen::MatrixXcd::Zero(dim * de, dim * de);
  for (int a = 0; a < dim; ++a)
    for (int b = 0; b < dim; ++b)
      for (int e = 0; e < de; ++e) big(a * de + e, b * de + e) = rho(a, b) / double(de);
  const Eigen::MatrixXcd evolved = v_lift * big * v_lift.adjoint();
  Eigen::MatrixXcd traced = Eigen::MatrixXcd::Zero(dim, dim);
  for (int a = 0; a < dim; ++a)
    for (int b = 0; b < dim; ++b)
      for (int e = 0; e < de; ++e) traced(a, b) += evolved(a * de + e, b * de + e);

  const Eigen::MatrixXcd direct = apply_restore(rho, set, basis);
  return (traced - direct).cwiseAbs().maxCoeff();
}

}  // namespace spinrestore
