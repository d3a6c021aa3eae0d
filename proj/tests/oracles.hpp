// Copyright 2026 The softcap Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense brute-force reference computations used to cross-check the library.
// They work on the full rate matrix Q and share no code with the library solvers.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "softcap/softcap.hpp"

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Rate matrix Q with Q(x,x) = -sum_y w(x,y).
inline MatrixXd rate_matrix(const softcap::ReversibleChain& c) {
  const auto n = static_cast<Eigen::Index>(c.size());
  MatrixXd q = MatrixXd::Zero(n, n);
  for (Eigen::Index x = 0; x < n; ++x)
    for (const softcap::Edge& e : c.out(static_cast<int>(x))) {
      q(x, e.to) += e.rate;
      q(x, x) -= e.rate;
    }
  return q;
}

/// pi Q = 0, sum pi = 1, via a least-squares solve with the normalization row appended.
inline VectorXd stationary(const MatrixXd& q) {
  const auto n = q.rows();
  MatrixXd a(n + 1, n);
  a.topRows(n) = q.transpose();
  a.row(n).setOnes();
  VectorXd b = VectorXd::Zero(n + 1);
  b[n] = 1.0;
  return a.colPivHouseholderQr().solve(b);
}

/// Eigenvalues of -Q (real parts), ascending.
inline std::vector<double> spectrum(const MatrixXd& q) {
  Eigen::EigenSolver<MatrixXd> es(-q, false);
  std::vector<double> ev;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) ev.push_back(es.eigenvalues()[i].real());
  std::sort(ev.begin(), ev.end());
  return ev;
}

inline double spectral_gap(const softcap::ReversibleChain& c) {
  if (c.size() == 1) return std::numeric_limits<double>::infinity();
  return spectrum(rate_matrix(c))[1];
}

/// Gap of the chain with all jumps leaving `a` suppressed.
inline double restricted_gap(const softcap::ReversibleChain& c, const std::vector<int>& a) {
  if (a.size() == 1) return std::numeric_limits<double>::infinity();
  const MatrixXd q = rate_matrix(c);
  const auto m = static_cast<Eigen::Index>(a.size());
  MatrixXd r = MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j)
      if (i != j) r(i, j) = q(a[i], a[j]);
    r(i, i) = -r.row(i).sum();
  }
  return spectrum(r)[1];
}

/// Sub-Markov generator restricted to `dom` (kill = original exit mass out of dom plus `kill`).
inline MatrixXd restrict_generator(const MatrixXd& g, const std::vector<int>& dom) {
  const auto m = static_cast<Eigen::Index>(dom.size());
  MatrixXd r(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) r(i, j) = g(dom[i], dom[j]);
  return r;
}

/// Principal pair (rate, normalized left eigenvector) of a sub-Markov generator.
inline std::pair<double, VectorXd> principal_left(const MatrixXd& g) {
  Eigen::EigenSolver<MatrixXd> es(g.transpose(), true);
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < es.eigenvalues().size(); ++i)
    if (es.eigenvalues()[i].real() > es.eigenvalues()[best].real()) best = i;
  VectorXd v = es.eigenvectors().col(best).real();
  if (v.sum() < 0) v = -v;
  v /= v.sum();
  return {-es.eigenvalues()[best].real(), v};
}

/// Soft measure on R: trace on R (Schur complement) of Q - lambda 1_S, then its principal left pair.
/// Returns the measure extended by zero to all states. lambda = inf uses the hard-killed chain on R\S.
inline std::pair<double, std::vector<double>> soft_measure(const softcap::ReversibleChain& c,
                                                           const std::vector<int>& r, const std::vector<int>& s,
                                                           double lambda) {
  const auto n = static_cast<Eigen::Index>(c.size());
  MatrixXd g = rate_matrix(c);
  std::vector<char> in_s(c.size(), 0), in_r(c.size(), 0);
  for (int x : s) in_s[x] = 1;
  for (int x : r) in_r[x] = 1;
  std::vector<double> out(c.size(), 0.0);
  if (std::isinf(lambda)) {
    std::vector<int> dom;
    for (int x : r)
      if (!in_s[x]) dom.push_back(x);
    auto [rate, v] = principal_left(restrict_generator(g, dom));
    for (std::size_t i = 0; i < dom.size(); ++i) out[dom[i]] = v[static_cast<Eigen::Index>(i)];
    return {rate, out};
  }
  for (Eigen::Index x = 0; x < n; ++x)
    if (in_s[x]) g(x, x) -= lambda;
  std::vector<int> rc;
  for (int x = 0; x < static_cast<int>(c.size()); ++x)
    if (!in_r[x]) rc.push_back(x);
  MatrixXd t = restrict_generator(g, r);
  if (!rc.empty()) {
    const auto nr = static_cast<Eigen::Index>(r.size()), nc = static_cast<Eigen::Index>(rc.size());
    MatrixXd a(nr, nc), b(nc, nr), d = restrict_generator(g, rc);
    for (Eigen::Index i = 0; i < nr; ++i)
      for (Eigen::Index j = 0; j < nc; ++j) a(i, j) = g(r[i], rc[j]), b(j, i) = g(rc[j], r[i]);
    t -= a * d.fullPivLu().solve(b);
  }
  auto [rate, v] = principal_left(t);
  for (std::size_t i = 0; i < r.size(); ++i) out[r[i]] = v[static_cast<Eigen::Index>(i)];
  return {rate, out};
}

/// Equilibrium potential and capacity of the extended network, by a dense solve of
/// (-L V) + kappa 1_R (V - 1) + lambda 1_S V = 0 (infinite rates pin V to 1 on R or 0 on S).
inline std::pair<double, std::vector<double>> capacity(const softcap::ReversibleChain& c, const std::vector<int>& r,
                                                       const std::vector<int>& s, double kappa, double lambda) {
  const auto n = static_cast<Eigen::Index>(c.size());
  const MatrixXd q = rate_matrix(c);
  std::vector<char> in_r(c.size(), 0), in_s(c.size(), 0);
  for (int x : r) in_r[x] = 1;
  for (int x : s) in_s[x] = 1;
  MatrixXd a = MatrixXd::Zero(n, n);
  VectorXd b = VectorXd::Zero(n);
  for (Eigen::Index x = 0; x < n; ++x) {
    const bool pin_one = in_r[x] && std::isinf(kappa), pin_zero = in_s[x] && std::isinf(lambda);
    if (pin_one || pin_zero) {
      a(x, x) = 1.0;
      b[x] = pin_one ? 1.0 : 0.0;
      continue;
    }
    a.row(x) = -q.row(x);
    if (in_r[x]) a(x, x) += kappa, b[x] += kappa;
    if (in_s[x]) a(x, x) += lambda;
  }
  VectorXd v = a.fullPivLu().solve(b);
  const VectorXd mu = stationary(q);
  double cap = 0.0;
  for (Eigen::Index x = 0; x < n; ++x) {
    for (Eigen::Index y = 0; y < n; ++y)
      if (x != y) cap += 0.5 * mu[x] * q(x, y) * (v[x] - v[y]) * (v[x] - v[y]);
    if (in_r[x] && !std::isinf(kappa)) cap += kappa * mu[x] * (1.0 - v[x]) * (1.0 - v[x]);
    if (in_s[x] && !std::isinf(lambda)) cap += lambda * mu[x] * v[x] * v[x];
  }
  return {cap, std::vector<double>(v.data(), v.data() + n)};
}

// ---------------------------------------------------------------------------
// Test chains

/// Random reversible chain on n states: a path backbone plus random chords, random measure and conductances.
inline softcap::ReversibleChain random_chain(std::size_t n, std::mt19937_64& rng, double chord_prob = 0.3) {
  std::uniform_real_distribution<double> u(0.2, 2.0);
  std::bernoulli_distribution chord(chord_prob);
  std::vector<double> mu(n);
  for (double& m : mu) m = u(rng);
  std::vector<softcap::IndexedRate> rates;
  auto link = [&](int x, int y) {
    const double cxy = u(rng);
    rates.push_back({x, y, cxy / mu[x]});
    rates.push_back({y, x, cxy / mu[y]});
  };
  for (std::size_t x = 0; x + 1 < n; ++x) link(static_cast<int>(x), static_cast<int>(x + 1));
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t y = x + 2; y < n; ++y)
      if (chord(rng)) link(static_cast<int>(x), static_cast<int>(y));
  std::vector<std::string> names(n);
  for (std::size_t x = 0; x < n; ++x) names[x] = "s" + std::to_string(x);
  return softcap::ReversibleChain::from_indexed(std::move(names), std::move(rates));
}

/// Interval cover R = {0..a}, S = {b..n-1} with 1 <= b <= a + 1 and a <= n - 2; pieces are irreducible
/// because they contain a path segment.
inline softcap::CoverPair interval_cover(const softcap::ReversibleChain& c, int a, int b) {
  const int n = static_cast<int>(c.size());
  return softcap::make_cover(c, softcap::Subset::where(c.size(), [&](int x) { return x <= a; }),
                             softcap::Subset::where(c.size(), [&](int x) { return x >= b && x < n; }));
}

inline softcap::ReversibleChain two_state() {
  return softcap::build_chain({"a", "b"}, {{"a", "b", 1.0}, {"b", "a", 2.0}});
}

inline softcap::ReversibleChain three_path() {
  return softcap::build_chain({"a", "b", "c"}, {{"a", "b", 1.0}, {"b", "a", 1.0}, {"b", "c", 1.0}, {"c", "b", 1.0}});
}

/// Ring of n states with unit rates both ways.
inline softcap::ReversibleChain ring(std::size_t n) {
  std::vector<std::string> names(n);
  std::vector<softcap::IndexedRate> rates;
  for (std::size_t x = 0; x < n; ++x) {
    names[x] = "r" + std::to_string(x);
    const int y = static_cast<int>((x + 1) % n);
    rates.push_back({static_cast<int>(x), y, 1.0});
    rates.push_back({y, static_cast<int>(x), 1.0});
  }
  return softcap::ReversibleChain::from_indexed(std::move(names), std::move(rates));
}

struct Case {
  softcap::ReversibleChain chain;
  softcap::CoverPair cover;
};

/// Random chains with n <= 10 and interval covers whose four pieces are nonempty.
inline std::vector<Case> random_cases(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Case> out;
  while (static_cast<int>(out.size()) < count) {
    const std::size_t n = 3 + rng() % 8;
    softcap::ReversibleChain c = random_chain(n, rng);
    const int a = 1 + static_cast<int>(rng() % (n - 2));          // R = {0..a}, a in [1, n-2]
    const int b = 1 + static_cast<int>(rng() % static_cast<std::size_t>(a));  // S = {b..n-1}, b in [1, a]
    softcap::CoverPair cover = interval_cover(c, a, b);
    out.push_back({std::move(c), std::move(cover)});
  }
  return out;
}

/// A unit flow that is a random convex combination of random-walk paths from A to B.
inline softcap::Flow random_unit_flow(const softcap::ExtendedNetwork& net, std::mt19937_64& rng) {
  const softcap::ReversibleChain& c = *net.chain;
  softcap::Flow total;
  const int paths = 1 + static_cast<int>(rng() % 4);
  std::vector<double> w(static_cast<std::size_t>(paths));
  double sum = 0.0;
  for (double& v : w) sum += (v = 0.1 + std::uniform_real_distribution<double>(0, 1)(rng));
  for (int p = 0; p < paths; ++p) {
    softcap::Flow f;
    int x = net.A[static_cast<std::size_t>(rng() % net.A.size())];
    f.bar[x] = 1.0;
    while (!net.B.contains(x)) {
      auto out = c.out(x);
      const int y = out[rng() % out.size()].to;
      f.add(x, y, 1.0);
      x = y;
    }
    f.breve[x] = 1.0;
    total.add_scaled(f, w[static_cast<std::size_t>(p)] / sum);
  }
  return total;
}

inline std::vector<int> members(const softcap::Subset& s) { return s.indices(); }

inline double rel_diff(double a, double b) {
  if (a == b) return 0.0;
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

}  // namespace oracle
