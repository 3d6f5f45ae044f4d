#pragma once

// Ordered basis of the k-excitation sector of a spin-1/2 chain that is
// partitioned into sender / transmission line / extended receiver segments,
// together with the multi-index decomposition used by the restoring channel.

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace spinrestore {

inline std::uint64_t binomial(int n, int k) {
  if (k < 0 || n < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t c = 1;
  for (int i = 0; i < k; ++i) c = c * static_cast<std::uint64_t>(n - i) / (i + 1);
  return c;
}

// Chain layout, sites numbered 0..N-1:
//   sender   : [0, n_sender)
//   TL'      : [n_sender, N - n_receiver - n_ancilla)
//   ancilla  : [N - n_receiver - n_ancilla, N - n_receiver)
//   receiver : [N - n_receiver, N)
// The ancilla spins are the tail of the transmission line; together with the
// receiver they form the extended receiver ER on which the Kraus channel acts.
struct ChainPartition {
  int n_sender = 0;
  int n_tl = 0;  // full transmission line, including the ancilla spins
  int n_receiver = 0;
  int n_ancilla = 0;

  int total() const { return n_sender + n_tl + n_receiver; }
  int n_extended() const { return n_ancilla + n_receiver; }

  std::uint64_t sender_mask() const { return ((std::uint64_t{1} << n_sender) - 1); }
  std::uint64_t receiver_mask() const {
    return ((std::uint64_t{1} << n_receiver) - 1) << (total() - n_receiver);
  }
  std::uint64_t er_mask() const {
    return ((std::uint64_t{1} << n_extended()) - 1) << (total() - n_extended());
  }
  std::uint64_t tlp_mask() const {
    return ~(sender_mask() | er_mask()) & ((std::uint64_t{1} << total()) - 1);
  }

  void validate() const {
    if (n_sender < 1 || n_tl < 1 || n_receiver < 1)
      throw std::invalid_argument("chain partition: sender/TL/receiver must be non-empty");
    if (n_ancilla < 0 || n_ancilla > n_tl)
      throw std::invalid_argument("chain partition: ancilla count must lie within the TL");
    if (total() > 62) throw std::invalid_argument("chain partition: more than 62 spins unsupported");
  }

  bool operator==(const ChainPartition&) const = default;
};

// Per-state decomposition into (sender, TL', ER) factors.  k_* are the
// excitation counts carried by each factor, i_* the ranks of the factor
// patterns within their own sector bases.
struct SubsystemIndex {
  int k_sender = 0, k_tl = 0, k_er = 0;
  int i_sender = 0, i_tl = 0, i_er = 0;
  bool operator==(const SubsystemIndex&) const = default;
};

// Parameter-counting record for a restoring problem (Kraus parameters vs.
// number of restoring conditions, and the extended-receiver dimension bound).
struct FeasibilityReport {
  std::int64_t n_sender_k = 0;    // N^(S)_k
  std::int64_t n_receiver_k = 0;  // N^(R)_k
  std::int64_t n_er_k = 0;        // N^(ER)_k
  std::int64_t n_parameters = 0;  // (N^(ER)_k)^2 (2 N^(K) - 1)
  std::int64_t n_equations = 0;   // (N^(R)_k)^4 - 2
  bool parameter_count_ok = false;
  bool proposition_ok = false;  // N^(ER)_k >= N^(R)_k + 1
};

namespace detail {

// Lexicographic order on excited-site lists (ascending tuples): the smaller
// state is the one owning the lowest site at which the two states differ.
inline bool site_list_less(std::uint64_t a, std::uint64_t b) {
  const std::uint64_t d = a ^ b;
  if (d == 0) return false;
  return (a & (d & ~(d - 1))) != 0;
}

// Rank of a k-subset (given as a bitmask over n local sites) in the
// lexicographic order of ascending site tuples.
inline int lex_rank(std::uint64_t mask, int n) {
  int rank = 0;
  int chosen = 0;
  const int k = __builtin_popcountll(mask);
  for (int site = 0; site < n && chosen < k; ++site) {
    if (mask & (std::uint64_t{1} << site)) {
      ++chosen;
    } else {
      rank += static_cast<int>(binomial(n - 1 - site, k - chosen - 1));
    }
  }
  return rank;
}

}  // namespace detail

class SectorBasis {
 public:
  ChainPartition partition;
  int excitations = 0;  // k
  int dim = 0;          // N_k = binomial(N, k)

  // Flat-index ordered state list; bit s set = site s excited.
  std::vector<std::uint64_t> states;
  std::vector<SubsystemIndex> decomposition;

  // Flat indices of the states whose excitation lies entirely in one segment.
  std::vector<int> sender_block;    // first N^(S)_k indices
  std::vector<int> er_block;        // last N^(ER)_k indices
  std::vector<int> receiver_block;  // last N^(R)_k indices

  // ER sector data, j = 0..k: dimensions and the local excitation patterns,
  // ordered by (excitations inside R, site-list lex) to match the flat order.
  std::vector<int> er_sector_dims;
  std::vector<std::vector<std::uint64_t>> er_sector_patterns;  // local ER masks

  // Receiver-first relabeling of the ER sector-k states: positions
  // 0..N^(R)_k-1 address the receiver states (matching the sender basis),
  // the remaining positions the states with ancilla excitation.  This is the
  // index convention of the additional restoring constraints.
  std::vector<int> er_restore_order;

  int index_of(std::uint64_t mask) const {
    auto it = index_.find(mask);
    if (it == index_.end()) throw std::out_of_range("sector basis: state not in sector");
    return it->second;
  }

  const SubsystemIndex& decompose(int flat) const {
    if (flat < 0 || flat >= dim) throw std::out_of_range("sector basis: flat index out of range");
    return decomposition[static_cast<std::size_t>(flat)];
  }

  int compose(const SubsystemIndex& sub) const {
    const int n = partition.total();
    const int n_s = partition.n_sender;
    const int n_t = partition.n_tl - partition.n_ancilla;
    const int n_e = partition.n_extended();
    if (sub.k_sender + sub.k_tl + sub.k_er != excitations)
      throw std::out_of_range("sector basis: subsystem excitations do not sum to k");
    const std::uint64_t ms = unrank_lex(sub.i_sender, n_s, sub.k_sender);
    const std::uint64_t mt = unrank_lex(sub.i_tl, n_t, sub.k_tl);
    if (sub.k_er < 0 || sub.k_er >= static_cast<int>(er_sector_patterns.size()) ||
        sub.i_er < 0 || sub.i_er >= static_cast<int>(er_sector_patterns[sub.k_er].size()))
      throw std::out_of_range("sector basis: ER index out of range");
    const std::uint64_t me = er_sector_patterns[sub.k_er][sub.i_er];
    return index_of(ms | (mt << n_s) | (me << (n - n_e)));
  }

  // Rank of a full-ER state within the ER sector-k list, and back.
  int er_rank(int flat) const { return decompose(flat).i_er; }

  friend SectorBasis build_sector_basis(const ChainPartition& partition, int k);

 private:
  std::unordered_map<std::uint64_t, int> index_;

  static std::uint64_t unrank_lex(int rank, int n, int k) {
    if (rank < 0 || rank >= static_cast<int>(binomial(n, k)))
      throw std::out_of_range("sector basis: subsystem rank out of range");
    std::uint64_t mask = 0;
    int chosen = 0;
    for (int site = 0; site < n && chosen < k; ++site) {
      const int below = static_cast<int>(binomial(n - 1 - site, k - chosen - 1));
      if (rank < below) {
        mask |= std::uint64_t{1} << site;
        ++chosen;
      } else {
        rank -= below;
      }
    }
    return mask;
  }
};

inline SectorBasis build_sector_basis(const ChainPartition& partition, int k) {
  partition.validate();
  const int n = partition.total();
  if (k < 0 || k > n) throw std::domain_error("sector basis: excitation count out of range");

  SectorBasis basis;
  basis.partition = partition;
  basis.excitations = k;
  basis.dim = static_cast<int>(binomial(n, k));

  const std::uint64_t er_mask = partition.er_mask();
  const std::uint64_t r_mask = partition.receiver_mask();

  // Enumerate all weight-k bitmasks over n sites.
  basis.states.reserve(static_cast<std::size_t>(basis.dim));
  if (k == 0) {
    basis.states.push_back(0);
  } else {
    std::uint64_t v = (std::uint64_t{1} << k) - 1;
    const std::uint64_t limit = std::uint64_t{1} << n;
    while (v < limit) {
      basis.states.push_back(v);
      const std::uint64_t t = v | (v - 1);  // Gosper's hack
      v = (t + 1) | (((~t & (t + 1)) - 1) >> (__builtin_ctzll(v) + 1));
      if (v == 0) break;
    }
  }

  // Order: states leaking outside ER first, fully-ER states last and among
  // those the fully-receiver states very last, so that the receiver density
  // matrix is the bottom-right block of the sector matrix.
  std::sort(basis.states.begin(), basis.states.end(),
            [&](std::uint64_t a, std::uint64_t b) {
              const int ea = __builtin_popcountll(a & er_mask);
              const int eb = __builtin_popcountll(b & er_mask);
              if (ea != eb) return ea < eb;
              const int ra = __builtin_popcountll(a & r_mask);
              const int rb = __builtin_popcountll(b & r_mask);
              if (ra != rb) return ra < rb;
              return detail::site_list_less(a, b);
            });

  // ER sector patterns with the same (excitations in R, lex) order.
  const int n_er = partition.n_extended();
  const int er_shift = n - n_er;
  const std::uint64_t r_local = r_mask >> er_shift;
  basis.er_sector_dims.resize(static_cast<std::size_t>(k) + 1);
  basis.er_sector_patterns.resize(static_cast<std::size_t>(k) + 1);
  for (int j = 0; j <= k; ++j) {
    basis.er_sector_dims[j] = static_cast<int>(binomial(n_er, j));
    auto& pats = basis.er_sector_patterns[j];
    for (std::uint64_t m = 0; m < (std::uint64_t{1} << n_er); ++m)
      if (__builtin_popcountll(m) == j) pats.push_back(m);
    std::sort(pats.begin(), pats.end(), [&](std::uint64_t a, std::uint64_t b) {
      const int ra = __builtin_popcountll(a & r_local);
      const int rb = __builtin_popcountll(b & r_local);
      if (ra != rb) return ra < rb;
      return detail::site_list_less(a, b);
    });
  }

  // Decompositions and block lists.
  const int n_s = partition.n_sender;
  const int n_t = partition.n_tl - partition.n_ancilla;
  basis.decomposition.resize(basis.states.size());
  for (int f = 0; f < basis.dim; ++f) {
    const std::uint64_t m = basis.states[static_cast<std::size_t>(f)];
    basis.index_.emplace(m, f);
    const std::uint64_t ms = m & partition.sender_mask();
    const std::uint64_t mt = (m & partition.tlp_mask()) >> n_s;
    const std::uint64_t me = (m & er_mask) >> er_shift;
    SubsystemIndex sub;
    sub.k_sender = __builtin_popcountll(ms);
    sub.k_tl = __builtin_popcountll(mt);
    sub.k_er = __builtin_popcountll(me);
    sub.i_sender = detail::lex_rank(ms, n_s);
    sub.i_tl = detail::lex_rank(mt, n_t);
    const auto& pats = basis.er_sector_patterns[sub.k_er];
    sub.i_er = static_cast<int>(std::find(pats.begin(), pats.end(), me) - pats.begin());
    basis.decomposition[static_cast<std::size_t>(f)] = sub;
    if (sub.k_sender == k) basis.sender_block.push_back(f);
    if (sub.k_er == k) basis.er_block.push_back(f);
    if (__builtin_popcountll(m & r_mask) == k) basis.receiver_block.push_back(f);
  }

  // Receiver-first relabeling of the ER sector-k states; with the chosen
  // ordering the receiver states are the tail of that list.
  const int d_er = basis.er_sector_dims[k];
  const int d_r = static_cast<int>(binomial(partition.n_receiver, k));
  basis.er_restore_order.resize(static_cast<std::size_t>(d_er));
  for (int q = 0; q < d_r; ++q) basis.er_restore_order[q] = d_er - d_r + q;
  for (int q = d_r; q < d_er; ++q) basis.er_restore_order[q] = q - d_r;

  return basis;
}

inline FeasibilityReport dimension_report(const ChainPartition& partition, int k, int n_kraus) {
  partition.validate();
  FeasibilityReport rep;
  rep.n_sender_k = static_cast<std::int64_t>(binomial(partition.n_sender, k));
  rep.n_receiver_k = static_cast<std::int64_t>(binomial(partition.n_receiver, k));
  rep.n_er_k = static_cast<std::int64_t>(binomial(partition.n_extended(), k));
  rep.n_parameters = rep.n_er_k * rep.n_er_k * (2 * n_kraus - 1);
  rep.n_equations = rep.n_receiver_k * rep.n_receiver_k * rep.n_receiver_k * rep.n_receiver_k - 2;
  rep.parameter_count_ok = rep.n_parameters >= rep.n_equations;
  rep.proposition_ok = rep.n_er_k >= rep.n_receiver_k + 1;
  return rep;
}

}  // namespace spinrestore
