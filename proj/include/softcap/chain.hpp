// Copyright 2026 The softcap Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "softcap/error.hpp"

namespace softcap {

inline constexpr double kDetailedBalanceTol = 1e-9;
inline constexpr double kNormalizationTol = 1e-12;

/// Outgoing jump x -> to with rate w(x, to) > 0.
struct Edge {
  int to;
  double rate;
};

/// Rate entry addressed by state identifiers, as read from a file.
struct RateSpec {
  std::string from;
  std::string to;
  double rate;
};

/// Rate entry addressed by dense indices.
struct IndexedRate {
  int from;
  int to;
  double rate;
};

/// A subset of {0, ..., n-1}, stored both as a sorted index list and a membership mask.
class Subset {
 public:
  Subset() = default;
  Subset(std::size_t universe, std::vector<int> members) : pos_(universe, -1) {
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
    for (int m : members)
      if (m < 0 || static_cast<std::size_t>(m) >= universe)
        detail::fail(ErrorCode::DimensionMismatch, "subset member out of range");
    idx_ = std::move(members);
    for (std::size_t k = 0; k < idx_.size(); ++k) pos_[idx_[k]] = static_cast<int>(k);
  }

  static Subset all(std::size_t universe) {
    std::vector<int> v(universe);
    std::iota(v.begin(), v.end(), 0);
    return Subset(universe, std::move(v));
  }

  template <class Pred>
  static Subset where(std::size_t universe, Pred&& pred) {
    std::vector<int> v;
    for (std::size_t i = 0; i < universe; ++i)
      if (pred(static_cast<int>(i))) v.push_back(static_cast<int>(i));
    return Subset(universe, std::move(v));
  }

  std::size_t universe() const { return pos_.size(); }
  std::size_t size() const { return idx_.size(); }
  bool empty() const { return idx_.empty(); }
  bool contains(int x) const { return x >= 0 && static_cast<std::size_t>(x) < pos_.size() && pos_[x] >= 0; }
  /// Position of x inside the sorted member list, or -1.
  int local(int x) const { return pos_[x]; }
  int operator[](std::size_t k) const { return idx_[k]; }
  const std::vector<int>& indices() const { return idx_; }
  auto begin() const { return idx_.begin(); }
  auto end() const { return idx_.end(); }

  Subset minus(const Subset& o) const {
    return where(universe(), [&](int x) { return contains(x) && !o.contains(x); });
  }
  Subset intersect(const Subset& o) const {
    return where(universe(), [&](int x) { return contains(x) && o.contains(x); });
  }
  Subset unite(const Subset& o) const {
    return where(universe(), [&](int x) { return contains(x) || o.contains(x); });
  }
  Subset complement() const {
    return where(universe(), [&](int x) { return !contains(x); });
  }

  friend bool operator==(const Subset& a, const Subset& b) { return a.idx_ == b.idx_ && a.universe() == b.universe(); }

 private:
  std::vector<int> idx_;
  std::vector<int> pos_;
};

/// Finite irreducible reversible continuous-time chain.
/// Rates are kept in compressed rows sorted by target; zero rates are not stored.
class ReversibleChain {
 public:
  ReversibleChain() = default;

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& states() const { return names_; }
  const std::string& name(int x) const { return names_[x]; }

  std::optional<int> index_of(std::string_view id) const {
    auto it = lookup_.find(std::string(id));
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
  }
  int require_index(std::string_view id) const {
    auto i = index_of(id);
    if (!i) detail::fail(ErrorCode::UnknownState, "unknown state '" + std::string(id) + "'");
    return *i;
  }

  std::span<const Edge> out(int x) const {
    return {edges_.data() + offsets_[x], edges_.data() + offsets_[x + 1]};
  }
  double rate(int x, int y) const {
    auto row = out(x);
    auto it = std::lower_bound(row.begin(), row.end(), y, [](const Edge& e, int t) { return e.to < t; });
    return (it != row.end() && it->to == y) ? it->rate : 0.0;
  }
  /// Total jump rate w(x).
  double exit_rate(int x) const { return exit_[x]; }
  const std::vector<double>& measure() const { return mu_; }
  double mu(int x) const { return mu_[x]; }
  /// Symmetric conductance c(x,y) = mu(x) w(x,y), averaged over both orientations.
  double conductance(int x, int y) const { return 0.5 * (mu_[x] * rate(x, y) + mu_[y] * rate(y, x)); }
  std::size_t edge_count() const { return edges_.size(); }

  /// Builds from dense indices; validates non-negativity, irreducibility and detailed balance.
  static ReversibleChain from_indexed(std::vector<std::string> names, std::vector<IndexedRate> rates,
                                      std::optional<std::vector<double>> measure = std::nullopt);

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> lookup_;
  std::vector<std::size_t> offsets_;
  std::vector<Edge> edges_;
  std::vector<double> exit_;
  std::vector<double> mu_;
};

namespace detail {

/// Connectivity of the subgraph induced by `members` (edges w > 0 in either orientation).
/// Irreducible reversible chains have symmetric supports, so one sweep suffices there.
inline bool induced_connected(const ReversibleChain& chain, const Subset& members) {
  if (members.empty()) return false;
  std::vector<char> seen(chain.size(), 0);
  std::vector<int> stack{members[0]};
  seen[members[0]] = 1;
  std::size_t reached = 1;
  while (!stack.empty()) {
    int x = stack.back();
    stack.pop_back();
    for (const Edge& e : chain.out(x)) {
      if (!seen[e.to] && members.contains(e.to)) {
        seen[e.to] = 1;
        ++reached;
        stack.push_back(e.to);
      }
    }
  }
  return reached == members.size();
}

inline bool strongly_connected(std::size_t n, const std::vector<std::size_t>& off, const std::vector<Edge>& edges) {
  if (n == 0) return false;
  auto sweep = [&](const std::vector<std::vector<int>>* reverse) {
    std::vector<char> seen(n, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    std::size_t reached = 1;
    while (!stack.empty()) {
      int x = stack.back();
      stack.pop_back();
      auto visit = [&](int y) {
        if (!seen[y]) {
          seen[y] = 1;
          ++reached;
          stack.push_back(y);
        }
      };
      if (reverse) {
        for (int y : (*reverse)[x]) visit(y);
      } else {
        for (std::size_t k = off[x]; k < off[x + 1]; ++k) visit(edges[k].to);
      }
    }
    return reached == n;
  };
  if (!sweep(nullptr)) return false;
  std::vector<std::vector<int>> rev(n);
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t k = off[x]; k < off[x + 1]; ++k) rev[edges[k].to].push_back(static_cast<int>(x));
  return sweep(&rev);
}

}  // namespace detail

inline ReversibleChain ReversibleChain::from_indexed(std::vector<std::string> names, std::vector<IndexedRate> rates,
                                                     std::optional<std::vector<double>> measure) {
  const std::size_t n = names.size();
  if (n == 0) detail::fail(ErrorCode::EmptySet, "chain has no states");
  ReversibleChain c;
  c.names_ = std::move(names);
  c.lookup_.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    if (!c.lookup_.emplace(c.names_[i], static_cast<int>(i)).second)
      detail::fail(ErrorCode::InvalidArgument, "duplicate state '" + c.names_[i] + "'");

  for (const auto& r : rates) {
    if (r.from < 0 || r.to < 0 || static_cast<std::size_t>(r.from) >= n || static_cast<std::size_t>(r.to) >= n)
      detail::fail(ErrorCode::DimensionMismatch, "rate endpoint out of range");
    if (!std::isfinite(r.rate) || r.rate < 0.0)
      detail::fail(ErrorCode::NegativeRate, "rate " + c.names_[r.from] + " -> " + c.names_[r.to] + " is negative or not finite");
    if (r.from == r.to && r.rate != 0.0)
      detail::fail(ErrorCode::InvalidArgument, "self-loop rate on '" + c.names_[r.from] + "'");
  }
  std::erase_if(rates, [](const IndexedRate& r) { return r.rate == 0.0; });
  std::sort(rates.begin(), rates.end(),
            [](const IndexedRate& a, const IndexedRate& b) { return a.from != b.from ? a.from < b.from : a.to < b.to; });
  for (std::size_t k = 1; k < rates.size(); ++k)
    if (rates[k].from == rates[k - 1].from && rates[k].to == rates[k - 1].to)
      detail::fail(ErrorCode::InvalidArgument,
                   "duplicate rate " + c.names_[rates[k].from] + " -> " + c.names_[rates[k].to]);

  c.offsets_.assign(n + 1, 0);
  for (const auto& r : rates) ++c.offsets_[r.from + 1];
  for (std::size_t i = 0; i < n; ++i) c.offsets_[i + 1] += c.offsets_[i];
  c.edges_.reserve(rates.size());
  for (const auto& r : rates) c.edges_.push_back({r.to, r.rate});
  c.exit_.assign(n, 0.0);
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t k = c.offsets_[x]; k < c.offsets_[x + 1]; ++k) c.exit_[x] += c.edges_[k].rate;

  if (n > 1 && !detail::strongly_connected(n, c.offsets_, c.edges_))
    detail::fail(ErrorCode::NotIrreducible, "rate graph is not irreducible");

  if (measure) {
    if (measure->size() != n) detail::fail(ErrorCode::DimensionMismatch, "measure length differs from state count");
    double total = 0.0;
    for (double m : *measure) {
      if (!std::isfinite(m) || m <= 0.0)
        detail::fail(ErrorCode::InvalidMeasure, "measure entries must be finite and positive");
      total += m;
    }
    c.mu_ = std::move(*measure);
    // Already-normalized input is kept bit-for-bit so that file round trips are exact.
    if (std::abs(total - 1.0) > kNormalizationTol)
      for (double& m : c.mu_) m /= total;
  } else {
    // Tree products in log space: log mu(y) = log mu(x) + log w(x,y) - log w(y,x).
    // Accurate for masses spanning many orders of magnitude; detailed balance on
    // the remaining edges is checked below, which rejects non-reversible chains.
    std::vector<double> logmu(n, 0.0);
    std::vector<char> seen(n, 0);
    std::vector<int> queue{0};
    seen[0] = 1;
    for (std::size_t head = 0; head < queue.size(); ++head) {
      int x = queue[head];
      for (const Edge& e : c.out(x)) {
        if (seen[e.to]) continue;
        double back = c.rate(e.to, x);
        if (back == 0.0)
          detail::fail(ErrorCode::NotReversible, "edge " + c.names_[x] + " -> " + c.names_[e.to] + " has no reverse");
        logmu[e.to] = logmu[x] + std::log(e.rate) - std::log(back);
        seen[e.to] = 1;
        queue.push_back(e.to);
      }
    }
    double top = *std::max_element(logmu.begin(), logmu.end());
    c.mu_.resize(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += (c.mu_[i] = std::exp(logmu[i] - top));
    for (double& m : c.mu_) m /= total;
  }

  for (std::size_t x = 0; x < n; ++x) {
    for (const Edge& e : c.out(static_cast<int>(x))) {
      double fwd = c.mu_[x] * e.rate;
      double bwd = c.mu_[e.to] * c.rate(e.to, static_cast<int>(x));
      if (std::abs(fwd - bwd) > kDetailedBalanceTol * std::max(fwd, bwd))
        detail::fail(ErrorCode::NotReversible,
                     "detailed balance fails on " + c.names_[x] + " <-> " + c.names_[e.to]);
    }
  }
  return c;
}

/// Validated chain from identifier-addressed rates; the measure, when given, follows `states` order.
inline ReversibleChain build_chain(const std::vector<std::string>& states, const std::vector<RateSpec>& rates,
                                   std::optional<std::vector<double>> measure = std::nullopt) {
  std::unordered_map<std::string, int> idx;
  for (std::size_t i = 0; i < states.size(); ++i) idx.emplace(states[i], static_cast<int>(i));
  std::vector<IndexedRate> ir;
  ir.reserve(rates.size());
  for (const auto& r : rates) {
    auto a = idx.find(r.from), b = idx.find(r.to);
    if (a == idx.end()) detail::fail(ErrorCode::UnknownState, "unknown state '" + r.from + "'");
    if (b == idx.end()) detail::fail(ErrorCode::UnknownState, "unknown state '" + r.to + "'");
    ir.push_back({a->second, b->second, r.rate});
  }
  return ReversibleChain::from_indexed(states, std::move(ir), std::move(measure));
}

/// D(f) = 1/2 sum_{x,y} c(x,y) (f(x) - f(y))^2.
inline double dirichlet_form(const ReversibleChain& chain, std::span<const double> f) {
  if (f.size() != chain.size()) detail::fail(ErrorCode::DimensionMismatch, "function length differs from state count");
  double d = 0.0;
  for (std::size_t x = 0; x < chain.size(); ++x)
    for (const Edge& e : chain.out(static_cast<int>(x))) {
      if (e.to < static_cast<int>(x)) continue;
      double diff = f[x] - f[e.to];
      d += chain.conductance(static_cast<int>(x), e.to) * diff * diff;
    }
  return d;
}

/// mu(A).
inline double mass(const ReversibleChain& chain, const Subset& a) {
  double s = 0.0;
  for (int x : a) s += chain.mu(x);
  return s;
}

/// mu(. | A) as a vector over the members of A in index order.
inline std::vector<double> conditional_measure(const ReversibleChain& chain, const Subset& a) {
  if (a.empty()) detail::fail(ErrorCode::EmptySet, "conditioning on an empty set");
  double m = mass(chain, a);
  std::vector<double> out;
  out.reserve(a.size());
  for (int x : a) out.push_back(chain.mu(x) / m);
  return out;
}

/// Variance of f under mu.
inline double variance(const ReversibleChain& chain, std::span<const double> f) {
  if (f.size() != chain.size()) detail::fail(ErrorCode::DimensionMismatch, "function length differs from state count");
  double m = 0.0, m2 = 0.0;
  for (std::size_t x = 0; x < f.size(); ++x) m += chain.mu(static_cast<int>(x)) * f[x];
  for (std::size_t x = 0; x < f.size(); ++x) m2 += chain.mu(static_cast<int>(x)) * (f[x] - m) * (f[x] - m);
  return m2;
}

inline bool is_irreducible_on(const ReversibleChain& chain, const Subset& a) {
  return !a.empty() && (a.size() == 1 || detail::induced_connected(chain, a));
}

/// The chain with rates restricted to A x A and measure mu(. | A).
inline ReversibleChain restricted_chain(const ReversibleChain& chain, const Subset& a) {
  if (a.empty()) detail::fail(ErrorCode::EmptySet, "restriction to an empty set");
  if (!is_irreducible_on(chain, a)) detail::fail(ErrorCode::NotIrreducible, "restricted chain is not irreducible");
  std::vector<std::string> names;
  std::vector<IndexedRate> rates;
  for (int x : a) {
    names.push_back(chain.name(x));
    for (const Edge& e : chain.out(x))
      if (a.contains(e.to)) rates.push_back({a.local(x), a.local(e.to), e.rate});
  }
  return ReversibleChain::from_indexed(std::move(names), std::move(rates), conditional_measure(chain, a));
}

/// chi(A) = max_{x in A} 1 / mu_A(x).
inline double chi(const ReversibleChain& chain, const Subset& a) {
  if (a.empty()) detail::fail(ErrorCode::EmptySet, "chi of an empty set");
  double m = mass(chain, a);
  double lo = chain.mu(a[0]);
  for (int x : a) lo = std::min(lo, chain.mu(x));
  return m / lo;
}

/// Overlapping two-set cover with derived pieces and per-piece irreducibility flags.
struct CoverPair {
  Subset R, S;
  Subset r_minus_s, s_minus_r, both;
  bool irreducible_R = false, irreducible_S = false;
  bool irreducible_r_minus_s = false, irreducible_s_minus_r = false;

  /// Hypotheses (H): every piece that is nonempty is irreducible; both differences nonempty.
  bool hypotheses_hold() const {
    return irreducible_R && irreducible_S && irreducible_r_minus_s && irreducible_s_minus_r;
  }
};

inline CoverPair make_cover(const ReversibleChain& chain, Subset r, Subset s) {
  if (r.universe() != chain.size() || s.universe() != chain.size())
    detail::fail(ErrorCode::DimensionMismatch, "cover sets do not match the chain");
  if (r.empty() || s.empty()) detail::fail(ErrorCode::NotACover, "R and S must be nonempty");
  if (r.unite(s).size() != chain.size()) detail::fail(ErrorCode::NotACover, "R and S do not cover the state space");
  CoverPair c;
  c.R = std::move(r);
  c.S = std::move(s);
  c.r_minus_s = c.R.minus(c.S);
  c.s_minus_r = c.S.minus(c.R);
  c.both = c.R.intersect(c.S);
  c.irreducible_R = is_irreducible_on(chain, c.R);
  c.irreducible_S = is_irreducible_on(chain, c.S);
  c.irreducible_r_minus_s = is_irreducible_on(chain, c.r_minus_s);
  c.irreducible_s_minus_r = is_irreducible_on(chain, c.s_minus_r);
  return c;
}

inline Subset subset_of(const ReversibleChain& chain, const std::vector<std::string>& ids) {
  std::vector<int> v;
  v.reserve(ids.size());
  for (const auto& id : ids) v.push_back(chain.require_index(id));
  return Subset(chain.size(), std::move(v));
}

inline CoverPair make_cover(const ReversibleChain& chain, const std::vector<std::string>& r,
                            const std::vector<std::string>& s) {
  return make_cover(chain, subset_of(chain, r), subset_of(chain, s));
}

/// The same cover with the roles of R and S exchanged.
inline CoverPair swapped(const CoverPair& c) {
  CoverPair o = c;
  std::swap(o.R, o.S);
  std::swap(o.r_minus_s, o.s_minus_r);
  std::swap(o.irreducible_R, o.irreducible_S);
  std::swap(o.irreducible_r_minus_s, o.irreducible_s_minus_r);
  return o;
}

}  // namespace softcap
