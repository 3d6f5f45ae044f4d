#pragma once

// The restoring problem: builds the T tensor from the propagator columns and
// a Kraus channel on the extended receiver, generates the three
// restoring-constraint systems and solves them by seeded multistart damped
// least squares minimizing nu/lambda.

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

#include "spinrestore/kraus.hpp"
#include "spinrestore/lm.hpp"
#include "spinrestore/propagator.hpp"
#include "spinrestore/rng.hpp"
#include "spinrestore/sector_basis.hpp"

namespace spinrestore {

struct NoSolutionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Residual threshold below which a multistart solution counts as a root.
inline constexpr double kAcceptResidual = 1e-9;

// Constraint system selector:
//   variant 1: rest conditions + both additional zero blocks,
//   variant 2: rest conditions + the ER-internal zero block,
//   variant 3: rest conditions only.
// The completeness condition and the nu/lambda coupling are always included.
struct RestoreProblem {
  int variant = 1;
  int n_kraus = 0;
  double gamma0 = 0.0;

  int dim_s = 0;   // N^(S)_k
  int dim_r = 0;   // N^(R)_k
  int dim_er = 0;  // N^(ER)_k
  int n_out = 0;   // sector states with excitation outside ER

  // Propagator columns at the registration time, re-indexed by ER content:
  // u_er[i_S*dim_s + j_S](a, b)  = U_{(E_a, E_b); (i_S, j_S)}
  // u_out[i_S*dim_s + j_S](a, m) = U_{(E_a, m); (i_S, j_S)}, m outside ER.
  std::vector<Eigen::MatrixXcd> u_er;
  std::vector<Eigen::MatrixXcd> u_out;
  // Orthonormal basis of the row space of the stacked u_out blocks; the zero
  // block M u_out = 0 is equivalent to M u_out_reduced = 0 and the solver
  // uses the latter (identical solution set, far fewer rows).
  Eigen::MatrixXcd u_out_reduced;

  std::vector<int> receiver_er;  // ER-internal index of receiver state j

  struct ZeroItem {
    int ea, eb, is, js;
  };
  std::vector<ZeroItem> ac1;  // ER-internal zero block (receiver-first ranges)

  int residual_size_full = 0;
  int residual_size_reduced = 0;
  int parameter_size() const { return n_kraus * 2 * dim_er * dim_er + 2 * n_kraus + 3; }
};

namespace detail {

inline int restoring_residual_size(const RestoreProblem& pb, bool reduced) {
  const int ds = pb.dim_s, dr = pb.dim_r, de = pb.dim_er;
  int n = 0;
  n += dr * (dr - 1) / 2 * (ds * ds - 1) * 2;          // rest11
  n += ds * (ds - 1) / 2 * 2;                          // rest13
  n += dr * ds * (ds - 1) / 2 * 2;                     // rest2
  n += dr;                                             // rest3
  n += dr * (dr - 1);                                  // rest4
  if (pb.variant <= 2) n += static_cast<int>(pb.ac1.size()) * 2;
  if (pb.variant == 1)
    n += reduced ? 2 * de * static_cast<int>(pb.u_out_reduced.cols()) : 2 * de * pb.n_out * ds * ds;
  n += de * de + 1;  // completeness, sector k and ground
  n += 1;            // nu = gamma0 a lambda
  return n;
}

}  // namespace detail

inline RestoreProblem make_restore_problem(const Propagator& prop, const SectorBasis& basis,
                                           int variant, int n_kraus, double gamma0) {
  if (basis.excitations != 1)
    throw std::invalid_argument("restoring solver covers the one-excitation sector");
  if (variant < 1 || variant > 3) throw std::invalid_argument("restoring variant must be 1..3");
  if (n_kraus < 1) throw std::invalid_argument("at least one Kraus operator required");
  const auto report = dimension_report(basis.partition, basis.excitations, n_kraus);
  if (!report.proposition_ok)
    throw std::invalid_argument("extended receiver too small: N^(ER)_k >= N^(R)_k + 1 required");
  if (!report.parameter_count_ok)
    throw std::invalid_argument("not enough Kraus parameters for the restoring conditions");

  RestoreProblem pb;
  pb.variant = variant;
  pb.n_kraus = n_kraus;
  pb.gamma0 = gamma0;
  pb.dim_s = static_cast<int>(basis.sender_block.size());
  pb.dim_r = static_cast<int>(basis.receiver_block.size());
  pb.dim_er = static_cast<int>(basis.er_block.size());
  pb.n_out = basis.dim - pb.dim_er;
  if (pb.dim_s != pb.dim_r)
    throw std::invalid_argument("restoring requires matching sender and receiver dimensions");

  const int n = basis.dim;
  const int ds = pb.dim_s, de = pb.dim_er;
  if (basis.er_block.front() != n - de)
    throw std::logic_error("restoring: ER states expected at the tail of the sector");
  pb.u_er.resize(ds * ds);
  pb.u_out.resize(ds * ds);
  for (int s = 0; s < ds * ds; ++s) {
    pb.u_er[s].resize(de, de);
    pb.u_out[s].resize(de, pb.n_out);
    for (int a = 0; a < de; ++a) {
      const int ea = basis.er_block[a];
      for (int b = 0; b < de; ++b)
        pb.u_er[s](a, b) = prop.sender_columns(ea * n + basis.er_block[b], s);
      for (int m = 0; m < pb.n_out; ++m) pb.u_out[s](a, m) = prop.sender_columns(ea * n + m, s);
    }
  }

  if (variant == 1) {
    Eigen::MatrixXcd stacked(de, ds * ds * pb.n_out);
    for (int s = 0; s < ds * ds; ++s) stacked.middleCols(s * pb.n_out, pb.n_out) = pb.u_out[s];
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(stacked, Eigen::ComputeThinU);
    const auto& sv = svd.singularValues();
    int rank = 0;
    while (rank < sv.size() && sv(rank) > 1e-12 * sv(0)) ++rank;
    pb.u_out_reduced = svd.matrixU().leftCols(rank);
  }

  pb.receiver_er.resize(pb.dim_r);
  for (int j = 0; j < pb.dim_r; ++j) pb.receiver_er[j] = basis.er_restore_order[j];

  if (variant <= 2) {
    // Zero block on the ER-internal rows, paper index ranges in the
    // receiver-first relabeling; symmetry images are implied.
    for (int qn = 0; qn <= de - 2; ++qn)
      for (int qm = pb.dim_r; qm <= de - 1; ++qm) {
        const int ea = basis.er_restore_order[qn];
        const int eb = basis.er_restore_order[qm];
        for (int is = 0; is < ds; ++is)
          for (int js = 0; js < ds; ++js) {
            if (qn == qm && is >= js) continue;  // diagonal: conjugate half + (is==js) excluded
            pb.ac1.push_back({ea, eb, is, js});
          }
      }
  }

  pb.residual_size_full = detail::restoring_residual_size(pb, false);
  pb.residual_size_reduced = detail::restoring_residual_size(pb, true);
  return pb;
}

// Parameter vector layout: per Kraus operator the sector-k matrix entries
// (column-major, re/im), then the ground scalars c_p (re/im), then
// (mu, nu, theta) with lambda = mu^2 and a = sin^2(theta).
inline Eigen::VectorXd pack_parameters(const RestoreProblem& pb, const KrausSet& set, double mu,
                                       double nu, double theta) {
  Eigen::VectorXd x(pb.parameter_size());
  int idx = 0;
  for (int p = 0; p < pb.n_kraus; ++p) {
    const auto& k = set.blocks[p][1];
    for (int col = 0; col < pb.dim_er; ++col)
      for (int row = 0; row < pb.dim_er; ++row) {
        x(idx++) = k(row, col).real();
        x(idx++) = k(row, col).imag();
      }
  }
  for (int p = 0; p < pb.n_kraus; ++p) {
    x(idx++) = set.ground(p).real();
    x(idx++) = set.ground(p).imag();
  }
  x(idx++) = mu;
  x(idx++) = nu;
  x(idx++) = theta;
  return x;
}

inline KrausSet unpack_parameters(const RestoreProblem& pb, const Eigen::VectorXd& x) {
  KrausSet set = make_zero_kraus({1, pb.dim_er}, pb.n_kraus);
  int idx = 0;
  for (int p = 0; p < pb.n_kraus; ++p)
    for (int col = 0; col < pb.dim_er; ++col)
      for (int row = 0; row < pb.dim_er; ++row) {
        set.blocks[p][1](row, col) = std::complex<double>(x(idx), x(idx + 1));
        idx += 2;
      }
  for (int p = 0; p < pb.n_kraus; ++p) {
    set.blocks[p][0](0, 0) = std::complex<double>(x(idx), x(idx + 1));
    idx += 2;
  }
  return set;
}

// Residual evaluator; the reduced flag selects the solver form of the
// ER-to-outside zero block.  Layout (in order): rest11, rest13, rest2,
// rest3, rest4, additional ER block, additional outside block,
// completeness (sector k then ground), nu - gamma0 a lambda.
class RestoreResidual {
 public:
  RestoreResidual(const RestoreProblem& pb, bool reduced)
      : pb_(&pb),
        reduced_(reduced),
        t_er_(pb.dim_s * pb.dim_s, Eigen::MatrixXcd(pb.dim_er, pb.dim_er)),
        tmp_(pb.dim_er, pb.dim_er),
        cross_(pb.dim_er, pb.dim_er),
        gram_(pb.dim_er, pb.dim_er),
        t_out_(pb.dim_er,
               pb.variant == 1 ? (reduced ? pb.u_out_reduced.cols() : Eigen::Index(pb.n_out)) : 0) {}

  int size() const { return reduced_ ? pb_->residual_size_reduced : pb_->residual_size_full; }

  void operator()(const Eigen::VectorXd& x, Eigen::VectorXd& r) const {
    const auto* kk = reinterpret_cast<const std::complex<double>*>(x.data());
    const int de = pb_->dim_er;
    const auto* cc = kk + pb_->n_kraus * de * de;
    const int base = pb_->n_kraus * 2 * de * de + 2 * pb_->n_kraus;
    const double mu = x(base), nu = x(base + 1), theta = x(base + 2);
    const double sin_theta = std::sin(theta);
    evaluate(kk, cc, mu * mu, nu, sin_theta * sin_theta, r);
  }

  void evaluate(const std::complex<double>* kraus, const std::complex<double>* ground,
                double lambda, double nu, double a, Eigen::VectorXd& r) const {
    const RestoreProblem& pb = *pb_;
    const int ds = pb.dim_s, dr = pb.dim_r, de = pb.dim_er;
    r.resize(size());

    for (auto& t : t_er_) t.setZero();
    gram_.setZero();
    cross_.setZero();
    for (int p = 0; p < pb.n_kraus; ++p) {
      Eigen::Map<const Eigen::MatrixXcd> k(kraus + p * de * de, de, de);
      for (int s = 0; s < ds * ds; ++s) {
        tmp_.noalias() = k * pb.u_er[s];
        t_er_[s].noalias() += tmp_ * k.adjoint();
      }
      gram_.noalias() += k.adjoint() * k;
      if (pb.variant == 1) cross_.noalias() += std::conj(ground[p]) * k;
    }

    const auto& recv = pb.receiver_er;
    int idx = 0;
    // rest11: off-diagonal receiver rows vanish except the restored element
    for (int rn = 0; rn < dr; ++rn)
      for (int rm = rn + 1; rm < dr; ++rm)
        for (int is = 0; is < ds; ++is)
          for (int js = 0; js < ds; ++js) {
            if (is == rn && js == rm) continue;
            const std::complex<double> z = t_er_[is * ds + js](recv[rn], recv[rm]);
            r(idx++) = z.real();
            r(idx++) = z.imag();
          }
    // rest13: restored off-diagonal elements equal the (real) lambda
    for (int is = 0; is < ds; ++is)
      for (int js = is + 1; js < ds; ++js) {
        const std::complex<double> z = t_er_[is * ds + js](recv[is], recv[js]);
        r(idx++) = z.real() - lambda;
        r(idx++) = z.imag();
      }
    // rest2: diagonal receiver rows against off-diagonal sender elements
    for (int rn = 0; rn < dr; ++rn)
      for (int is = 0; is < ds; ++is)
        for (int js = is + 1; js < ds; ++js) {
          const std::complex<double> z = t_er_[is * ds + js](recv[rn], recv[rn]);
          r(idx++) = z.real();
          r(idx++) = z.imag();
        }
    // rest3 / rest4: populations map to lambda + nu and nu
    for (int rn = 0; rn < dr; ++rn)
      r(idx++) = t_er_[rn * ds + rn](recv[rn], recv[rn]).real() - (lambda + nu);
    for (int rn = 0; rn < dr; ++rn)
      for (int js = 0; js < ds; ++js) {
        if (js == rn) continue;
        r(idx++) = t_er_[js * ds + js](recv[rn], recv[rn]).real() - nu;
      }
    // additional ER-internal zero block
    if (pb.variant <= 2)
      for (const auto& item : pb.ac1) {
        const std::complex<double> z = t_er_[item.is * ds + item.js](item.ea, item.eb);
        r(idx++) = z.real();
        r(idx++) = z.imag();
      }
    // additional outside zero block: cross_ annihilates the propagator rows
    // that connect ER states to states with excitation outside ER
    if (pb.variant == 1) {
      if (reduced_) {
        t_out_.noalias() = cross_ * pb.u_out_reduced;
        for (int col = 0; col < t_out_.cols(); ++col)
          for (int row = 0; row < de; ++row) {
            const std::complex<double> z = t_out_(row, col);
            r(idx++) = z.real();
            r(idx++) = z.imag();
          }
      } else {
        for (int s = 0; s < ds * ds; ++s) {
          t_out_.noalias() = cross_ * pb.u_out[s];
          for (int e = 0; e < de; ++e)
            for (int m = 0; m < pb.n_out; ++m) {
              const std::complex<double> z = t_out_(e, m);
              r(idx++) = z.real();
              r(idx++) = z.imag();
            }
        }
      }
    }
    // completeness on the sector block and the ground scalars
    for (int i = 0; i < de; ++i) r(idx++) = gram_(i, i).real() - 1.0;
    for (int i = 0; i < de; ++i)
      for (int j = i + 1; j < de; ++j) {
        r(idx++) = gram_(i, j).real();
        r(idx++) = gram_(i, j).imag();
      }
    double csum = 0.0;
    for (int p = 0; p < pb.n_kraus; ++p) csum += std::norm(ground[p]);
    r(idx++) = csum - 1.0;
    // objective coupling nu/lambda = gamma0 a
    r(idx++) = nu - pb.gamma0 * a * lambda;

    if (idx != size()) throw std::logic_error("restoring residual layout out of sync");
  }

 private:
  const RestoreProblem* pb_;
  bool reduced_;
  mutable std::vector<Eigen::MatrixXcd> t_er_;
  mutable Eigen::MatrixXcd tmp_, cross_, gram_;
  mutable Eigen::MatrixXcd t_out_;
};

// Spec surface: the stacked real residual vector for explicit channel and
// (lambda, nu, a) values, with every additional zero condition written out.
inline Eigen::VectorXd constraint_residuals(const RestoreProblem& pb, const KrausSet& set,
                                            double lambda, double nu, double a) {
  if (set.n_kraus != pb.n_kraus || set.sector_dims.size() != 2 ||
      set.sector_dims[1] != pb.dim_er)
    throw std::invalid_argument("constraint_residuals: Kraus set does not match problem");
  std::vector<std::complex<double>> kk(static_cast<std::size_t>(pb.n_kraus) * pb.dim_er * pb.dim_er);
  std::vector<std::complex<double>> cc(static_cast<std::size_t>(pb.n_kraus));
  for (int p = 0; p < pb.n_kraus; ++p) {
    cc[p] = set.ground(p);
    for (int col = 0; col < pb.dim_er; ++col)
      for (int row = 0; row < pb.dim_er; ++row)
        kk[p * pb.dim_er * pb.dim_er + col * pb.dim_er + row] = set.blocks[p][1](row, col);
  }
  RestoreResidual eval(pb, /*reduced=*/false);
  Eigen::VectorXd r;
  eval.evaluate(kk.data(), cc.data(), lambda, nu, a, r);
  return r;
}

// Receiver-block slice of T for a given Kraus set (rows (n_R, m_R), columns
// (i_S, j_S)); this is the quantity entering the restoring conditions and
// the perturbation measure delta_T.
inline Eigen::MatrixXcd receiver_T(const RestoreProblem& pb, const KrausSet& set) {
  const int ds = pb.dim_s, dr = pb.dim_r, de = pb.dim_er;
  Eigen::MatrixXcd t(dr * dr, ds * ds);
  Eigen::MatrixXcd acc(de, de), tmp(de, de);
  for (int s = 0; s < ds * ds; ++s) {
    acc.setZero();
    for (int p = 0; p < set.n_kraus; ++p) {
      const auto& k = set.blocks[p][1];
      tmp.noalias() = k * pb.u_er[s];
      acc.noalias() += tmp * k.adjoint();
    }
    for (int rn = 0; rn < dr; ++rn)
      for (int rm = 0; rm < dr; ++rm)
        t(rn * dr + rm, s) = acc(pb.receiver_er[rn], pb.receiver_er[rm]);
  }
  return t;
}

// Full T tensor, rows (n, m) over the whole sector, built from a restoring
// map; linear in W.  Used as the verification route.
inline Eigen::MatrixXcd build_T(const RestoringMap& w, const Propagator& prop,
                                const SectorBasis& basis) {
  const int n = basis.dim;
  const int ns = static_cast<int>(basis.sender_block.size());
  Eigen::MatrixXcd t = Eigen::MatrixXcd::Zero(n * n, ns * ns);
  for (int a = 0; a < n; ++a) {
    SubsystemIndex sa = basis.decompose(a);
    const int da = w.sector_dims[sa.k_er];
    for (int b = 0; b < n; ++b) {
      SubsystemIndex sb = basis.decompose(b);
      const int db = w.sector_dims[sb.k_er];
      const auto& blk = w.block(sa.k_er, sb.k_er);
      const int row_w = sa.i_er * db + sb.i_er;
      for (int i = 0; i < da; ++i) {
        SubsystemIndex si = sa;
        si.i_er = i;
        const int fa = basis.compose(si);
        for (int j = 0; j < db; ++j) {
          SubsystemIndex sj = sb;
          sj.i_er = j;
          const int fb = basis.compose(sj);
          const std::complex<double> wv = blk(row_w, i * db + j);
          if (wv == std::complex<double>(0.0, 0.0)) continue;
          t.row(a * n + b) += wv * prop.sender_columns.row(fa * n + fb);
        }
      }
    }
  }
  return t;
}

struct RestoreSolution {
  KrausSet kraus;
  double lambda = 0.0;
  double nu = 0.0;
  double a = 0.0;
  double p = 0.0;           // lambda + N^(R)_k nu
  double big_lambda = 0.0;  // lambda / p
  double ratio = std::numeric_limits<double>::infinity();  // nu / lambda
  double residual = std::numeric_limits<double>::infinity();
  double residual_norm = 0.0;
  std::uint64_t seed = 0;
  int start_index = -1;
  int iterations = 0;
  bool accepted = false;
};

inline RestoreSolution solve_restore_single(const RestoreProblem& pb, int start_index,
                                            std::uint64_t master_seed,
                                            const LmOptions& lm_opts = {}) {
  std::mt19937_64 rng = make_engine(master_seed, static_cast<std::uint64_t>(start_index));
  KrausSet init = make_random_kraus({1, pb.dim_er}, pb.n_kraus, rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double theta0 = unit(rng) * 1.5707963267948966;
  const double mu0 = 1.0;
  const double nu0 = pb.gamma0 * std::sin(theta0) * std::sin(theta0) * mu0 * mu0;

  RestoreResidual fn(pb, /*reduced=*/true);
  LmResult lm = levenberg_marquardt(std::ref(fn), pack_parameters(pb, init, mu0, nu0, theta0),
                                    lm_opts);

  RestoreSolution sol;
  sol.start_index = start_index;
  sol.seed = derive_seed(master_seed, static_cast<std::uint64_t>(start_index));
  sol.iterations = lm.iterations;
  sol.kraus = unpack_parameters(pb, lm.x);
  const int base = pb.n_kraus * 2 * pb.dim_er * pb.dim_er + 2 * pb.n_kraus;
  sol.lambda = lm.x(base) * lm.x(base);
  sol.nu = lm.x(base + 1);
  const double st = std::sin(lm.x(base + 2));
  sol.a = st * st;
  sol.p = sol.lambda + pb.dim_r * sol.nu;
  sol.big_lambda = sol.p > 0.0 ? sol.lambda / sol.p : 0.0;

  const Eigen::VectorXd full = constraint_residuals(pb, sol.kraus, sol.lambda, sol.nu, sol.a);
  sol.residual = full.cwiseAbs().maxCoeff();
  sol.residual_norm = full.norm();
  sol.accepted = sol.residual < kAcceptResidual && sol.lambda > 1e-10;
  sol.ratio = sol.lambda > 1e-10 ? sol.nu / sol.lambda
                                 : std::numeric_limits<double>::infinity();
  return sol;
}

namespace detail {

// Total order over accepted solutions: smaller nu/lambda first (quantized so
// numerically tied ratios compare equal), then larger lambda, then smaller
// start index.  Associative, hence thread-count independent.
inline bool better_solution(const RestoreSolution& a, const RestoreSolution& b) {
  const auto quantize = [](double ratio) {
    if (!std::isfinite(ratio) || ratio > 1e6) return std::numeric_limits<long long>::max();
    return static_cast<long long>(std::floor(ratio * 1e9));
  };
  const long long qa = quantize(a.ratio), qb = quantize(b.ratio);
  if (qa != qb) return qa < qb;
  if (a.lambda != b.lambda) return a.lambda > b.lambda;
  return a.start_index < b.start_index;
}

}  // namespace detail

struct MultistartOutcome {
  RestoreSolution best;       // accepted flag set when any start converged
  int n_starts = 0;
  int n_accepted = 0;
  double best_residual = std::numeric_limits<double>::infinity();
};

inline MultistartOutcome solve_multistart(const RestoreProblem& pb, int n_starts,
                                          std::uint64_t master_seed, int n_threads = 0,
                                          const LmOptions& lm_opts = {}) {
  if (n_starts < 1) throw std::invalid_argument("solve_multistart: n_starts must be positive");
  if (n_threads <= 0) n_threads = static_cast<int>(std::thread::hardware_concurrency());
  if (n_threads < 1) n_threads = 1;
  n_threads = std::min(n_threads, n_starts);

  MultistartOutcome out;
  out.n_starts = n_starts;
  std::atomic<int> next{0};
  std::mutex merge_mutex;
  bool have_best = false;
  RestoreSolution best_any;  // smallest residual, for failure reports
  bool have_any = false;

  const auto worker = [&]() {
    RestoreSolution local_best;
    bool local_have = false;
    RestoreSolution local_any;
    bool local_have_any = false;
    int local_accepted = 0;
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n_starts) break;
      RestoreSolution sol = solve_restore_single(pb, i, master_seed, lm_opts);
      if (!local_have_any || sol.residual < local_any.residual ||
          (sol.residual == local_any.residual && sol.start_index < local_any.start_index)) {
        local_any = sol;
        local_have_any = true;
      }
      if (sol.accepted) {
        ++local_accepted;
        if (!local_have || detail::better_solution(sol, local_best)) {
          local_best = std::move(sol);
          local_have = true;
        }
      }
    }
    std::lock_guard<std::mutex> lock(merge_mutex);
    out.n_accepted += local_accepted;
    if (local_have_any) {
      if (!have_any || local_any.residual < best_any.residual ||
          (local_any.residual == best_any.residual && local_any.start_index < best_any.start_index)) {
        best_any = local_any;
        have_any = true;
      }
    }
    if (local_have && (!have_best || detail::better_solution(local_best, out.best))) {
      out.best = std::move(local_best);
      have_best = true;
    }
  };

  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  if (have_any) out.best_residual = best_any.residual;
  if (!have_best) {
    out.best = std::move(best_any);
    out.best.accepted = false;
  }
  return out;
}

namespace detail {

// Solves the constraint system with lambda pinned to a trial value, warm
// started from x_io; returns whether a root exists there.
inline bool lambda_feasible(const RestoreProblem& pb, double lambda_trial,
                            Eigen::VectorXd& x_io) {
  RestoreResidual base(pb, /*reduced=*/true);
  const int mu_idx = pb.parameter_size() - 3;
  const auto fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
    Eigen::VectorXd rc;
    base(x, rc);
    r.resize(rc.size() + 1);
    r.head(rc.size()) = rc;
    r(rc.size()) = x(mu_idx) * x(mu_idx) - lambda_trial;
  };
  LmOptions opts;
  opts.max_iterations = 200;
  const LmResult res = levenberg_marquardt(fn, x_io, opts);
  if (res.residual_max < 1e-10) {
    x_io = res.x;
    return true;
  }
  return false;
}

}  // namespace detail

// Pushes an accepted root to the largest restored fraction the constraint
// system admits, by feasibility bisection on lambda with warm-started
// re-solves.  Used for the closed-system runs, where every root has nu = 0
// and the multistart selection alone leaves lambda wherever the local solver
// landed.
inline RestoreSolution polish_max_lambda(const RestoreProblem& pb, const RestoreSolution& sol,
                                         double tol = 1e-6) {
  if (!sol.accepted) return sol;
  double lo = sol.lambda;
  const double a_cl = std::clamp(sol.a, 0.0, 1.0);
  Eigen::VectorXd x_lo = pack_parameters(pb, sol.kraus, std::sqrt(std::max(sol.lambda, 0.0)),
                                         sol.nu, std::asin(std::sqrt(a_cl)));
  double step = std::max(0.05, 0.05 * lo);
  while (lo <= 1.5) {  // restored fractions cannot exceed 1 for unitary transfer blocks
    Eigen::VectorXd xt = x_lo;
    if (!detail::lambda_feasible(pb, lo + step, xt)) break;
    lo += step;
    x_lo = std::move(xt);
    step *= 2.0;
  }
  double hi = lo + step;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    Eigen::VectorXd xt = x_lo;
    if (detail::lambda_feasible(pb, mid, xt)) {
      lo = mid;
      x_lo = std::move(xt);
    } else {
      hi = mid;
    }
  }

  RestoreSolution polished = sol;
  polished.kraus = unpack_parameters(pb, x_lo);
  const int base = pb.parameter_size() - 3;
  polished.lambda = x_lo(base) * x_lo(base);
  polished.nu = x_lo(base + 1);
  const double st = std::sin(x_lo(base + 2));
  polished.a = st * st;
  polished.p = polished.lambda + pb.dim_r * polished.nu;
  polished.big_lambda = polished.p > 0.0 ? polished.lambda / polished.p : 0.0;
  const Eigen::VectorXd full =
      constraint_residuals(pb, polished.kraus, polished.lambda, polished.nu, polished.a);
  polished.residual = full.cwiseAbs().maxCoeff();
  polished.residual_norm = full.norm();
  polished.accepted = polished.residual < kAcceptResidual && polished.lambda > 1e-10;
  polished.ratio = polished.lambda > 1e-10 ? polished.nu / polished.lambda
                                           : std::numeric_limits<double>::infinity();
  return polished.accepted ? polished : sol;
}

// Max deviation of the restored receiver block from nu I + lambda rho_S over
// Haar-random pure sender states.
inline double universality_check(const Propagator& prop, const SectorBasis& basis,
                                 const RestoreSolution& sol, int n_states, std::uint64_t seed) {
  const int ds = static_cast<int>(basis.sender_block.size());
  const int dr = static_cast<int>(basis.receiver_block.size());
  std::mt19937_64 rng = make_engine(seed, 0x756e6976ull);
  std::normal_distribution<double> gauss(0.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < n_states; ++t) {
    Eigen::VectorXcd psi(ds);
    for (int i = 0; i < ds; ++i) psi(i) = std::complex<double>(gauss(rng), gauss(rng));
    psi.normalize();
    const Eigen::MatrixXcd rho_s = psi * psi.adjoint();
    const Eigen::MatrixXcd rho_t = evolve(prop, rho_s);
    const Eigen::MatrixXcd restored = apply_restore(rho_t, sol.kraus, basis);
    Eigen::MatrixXcd block(dr, dr);
    for (int i = 0; i < dr; ++i)
      for (int j = 0; j < dr; ++j)
        block(i, j) = restored(basis.receiver_block[i], basis.receiver_block[j]);
    block -= sol.nu * Eigen::MatrixXcd::Identity(dr, dr) + sol.lambda * rho_s;
    worst = std::max(worst, block.cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace spinrestore
