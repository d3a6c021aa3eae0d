// Copyright 2026 The softcap Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "softcap/chain.hpp"
#include "softcap/detail/linalg.hpp"
#include "softcap/error.hpp"
#include "softcap/rate.hpp"
#include "softcap/spectral.hpp"

namespace softcap {

/// Exit split of the excursions outside R, killed at rate lambda on `killing`.
///   q(z)   = P_z(killed before reaching R)
///   J(z,y) = P_z(first entrance in R at y, before killing)
struct HittingSplit {
  Subset exterior;
  std::vector<double> q;
  /// Per exterior position: (global index y in R, J(z, y)), only positive entries.
  std::vector<std::vector<std::pair<int, double>>> J;
  /// max_z |q(z) + sum_y J(z,y) - 1|.
  double max_row_defect = 0.0;
};

inline HittingSplit hitting_split(const ReversibleChain& chain, const Subset& r, const Subset& killing, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    detail::fail(ErrorCode::InvalidArgument, "hitting_split needs a finite lambda >= 0");
  HittingSplit out;
  out.exterior = r.complement();
  const Subset& z = out.exterior;
  const auto nz = static_cast<Eigen::Index>(z.size());
  out.q.assign(z.size(), 0.0);
  out.J.assign(z.size(), {});
  if (nz == 0) return out;

  std::vector<double> extra(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) extra[k] = killing.contains(z[k]) ? lambda : 0.0;
  detail::Factor solver;
  detail::factorize(solver, detail::weighted_operator(chain, z, extra), "excursion block");

  if (lambda > 0.0) {
    Eigen::VectorXd b(nz);
    for (Eigen::Index k = 0; k < nz; ++k) b[k] = chain.mu(z[k]) * extra[k];
    Eigen::VectorXd q = solver.solve(b);
    for (Eigen::Index k = 0; k < nz; ++k) out.q[k] = std::clamp(q[k], 0.0, 1.0);
  }

  // Entrance states of R, i.e. members with a neighbour outside R.
  std::vector<int> entrances;
  for (int y : r)
    for (const Edge& e : chain.out(y))
      if (!r.contains(e.to)) {
        entrances.push_back(y);
        break;
      }
  constexpr Eigen::Index kBlock = 64;
  for (std::size_t first = 0; first < entrances.size(); first += kBlock) {
    const auto cols = static_cast<Eigen::Index>(std::min<std::size_t>(kBlock, entrances.size() - first));
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(nz, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
      int y = entrances[first + c];
      for (const Edge& e : chain.out(y))
        if (!r.contains(e.to)) b(z.local(e.to), c) = chain.conductance(e.to, y);
    }
    Eigen::MatrixXd sol = solver.solve(b);
    for (Eigen::Index k = 0; k < nz; ++k)
      for (Eigen::Index c = 0; c < cols; ++c)
        if (sol(k, c) > 0.0) out.J[k].emplace_back(entrances[first + c], sol(k, c));
  }
  for (Eigen::Index k = 0; k < nz; ++k) {
    double s = out.q[k];
    for (const auto& [y, p] : out.J[k]) s += p;
    out.max_row_defect = std::max(out.max_row_defect, std::abs(s - 1.0));
  }
  return out;
}

/// Sub-Markovian generator on `domain`: jumps (local indices) and kill rates.
struct SubMarkovGenerator {
  Subset domain;
  std::vector<std::vector<Edge>> jumps;
  std::vector<double> kill;
  /// max_x |e*(x) + sum_y w*(x,y) - (lambda_S(x) + w(x) - sum_z w(x,z) J(z,x))|.
  double max_row_defect = 0.0;

  std::size_t size() const { return domain.size(); }
  bool kills() const {
    return std::any_of(kill.begin(), kill.end(), [](double k) { return k > 0.0; });
  }
};

/// The chain watched only while in R, killed at rate lambda on S (finite lambda).
inline SubMarkovGenerator traced_killed_generator(const ReversibleChain& chain, const Subset& r, const Subset& s,
                                                  double lambda) {
  if (r.empty()) detail::fail(ErrorCode::EmptySet, "R is empty");
  HittingSplit split = hitting_split(chain, r, s, lambda);
  SubMarkovGenerator g;
  g.domain = r;
  g.jumps.resize(r.size());
  g.kill.assign(r.size(), 0.0);
  std::vector<double> acc(r.size(), 0.0);
  std::vector<int> touched;
  for (std::size_t k = 0; k < r.size(); ++k) {
    const int x = r[k];
    double kill = s.contains(x) ? lambda : 0.0;
    double back = 0.0;
    touched.clear();
    auto add = [&](int y, double v) {
      int ly = r.local(y);
      if (acc[ly] == 0.0) touched.push_back(ly);
      acc[ly] += v;
    };
    for (const Edge& e : chain.out(x)) {
      if (r.contains(e.to)) {
        add(e.to, e.rate);
        continue;
      }
      int lz = split.exterior.local(e.to);
      kill += e.rate * split.q[lz];
      for (const auto& [y, p] : split.J[lz]) {
        if (y == x)
          back += e.rate * p;
        else
          add(y, e.rate * p);
      }
    }
    std::sort(touched.begin(), touched.end());
    double out_total = 0.0;
    for (int ly : touched) {
      if (acc[ly] > 0.0) g.jumps[k].push_back({ly, acc[ly]});
      out_total += acc[ly];
      acc[ly] = 0.0;
    }
    g.kill[k] = kill;
    double expected = (s.contains(x) ? lambda : 0.0) + chain.exit_rate(x) - back;
    g.max_row_defect = std::max(g.max_row_defect, std::abs(kill + out_total - expected));
  }
  return g;
}

inline SubMarkovGenerator traced_killed_generator(const ReversibleChain& chain, const CoverPair& cover, double lambda) {
  return traced_killed_generator(chain, cover.R, cover.S, lambda);
}

/// The chain inside R\S, killed on its first jump into S.
inline SubMarkovGenerator hard_killed_generator(const ReversibleChain& chain, const CoverPair& cover) {
  const Subset& a = cover.r_minus_s;
  if (a.empty()) detail::fail(ErrorCode::EmptyInterior, "R is contained in S");
  if (!is_irreducible_on(chain, a)) detail::fail(ErrorCode::NotIrreducible, "R\\S is not irreducible");
  SubMarkovGenerator g;
  g.domain = a;
  g.jumps.resize(a.size());
  g.kill.assign(a.size(), 0.0);
  for (std::size_t k = 0; k < a.size(); ++k)
    for (const Edge& e : chain.out(a[k])) {
      if (a.contains(e.to))
        g.jumps[k].push_back({a.local(e.to), e.rate});
      else
        g.kill[k] += e.rate;
    }
  return g;
}

/// Principal (Perron) left eigenpair of -L* on a domain.
struct QuasiStationaryResult {
  Subset domain;
  /// mu* over domain positions; sums to 1.
  std::vector<double> measure;
  /// h* = mu* / mu_domain.
  std::vector<double> density;
  double rate = 0.0;
  /// ||(-L*) h - rate h||_mu / (||A||_inf ||h||_mu) for the symmetrized operator A.
  double residual = 0.0;
  /// |rate - mu*(e*)| / rate.
  double rate_identity_defect = 0.0;
  int iterations = 0;
};

namespace detail {

/// Symmetric conductances c*(x,y) = (mu(x) w*(x,y) + mu(y) w*(y,x)) / 2 of a sub-Markovian generator.
inline std::vector<std::vector<std::pair<int, double>>> symmetric_conductances(const SubMarkovGenerator& g,
                                                                              std::span<const double> mu) {
  const std::size_t n = g.size();
  std::vector<std::vector<std::pair<int, double>>> c(n);
  for (std::size_t x = 0; x < n; ++x)
    for (const Edge& e : g.jumps[x]) {
      auto& row = c[x];
      auto it = std::find_if(row.begin(), row.end(), [&](const auto& p) { return p.first == e.to; });
      double v = 0.5 * mu[x] * e.rate;
      if (it == row.end())
        row.emplace_back(e.to, v);
      else
        it->second += v;
      auto& col = c[e.to];
      auto jt = std::find_if(col.begin(), col.end(), [&](const auto& p) { return p.first == static_cast<int>(x); });
      if (jt == col.end())
        col.emplace_back(static_cast<int>(x), v);
      else
        jt->second += v;
    }
  return c;
}

/// M = diag(mu) (-L*) assembled from symmetric conductances.
inline SparseMat killed_operator(const SubMarkovGenerator& g, std::span<const double> mu,
                                 const std::vector<std::vector<std::pair<int, double>>>& c, double shift = 0.0) {
  const auto n = static_cast<int>(g.size());
  std::vector<Triplet> t;
  for (int x = 0; x < n; ++x) {
    double diag = mu[x] * (g.kill[x] - shift);
    for (const auto& [y, v] : c[x]) {
      diag += v;
      t.emplace_back(x, y, -v);
    }
    t.emplace_back(x, x, diag);
  }
  SparseMat m(n, n);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

/// <h, -L* h>_mu written as a sum of non-negative terms.
inline double killed_energy(const SubMarkovGenerator& g, std::span<const double> mu,
                            const std::vector<std::vector<std::pair<int, double>>>& c, const Eigen::VectorXd& h) {
  double e = 0.0;
  for (std::size_t x = 0; x < g.size(); ++x) {
    e += mu[x] * g.kill[x] * h[x] * h[x];
    for (const auto& [y, v] : c[x])
      if (y > static_cast<int>(x)) e += v * (h[x] - h[y]) * (h[x] - h[y]);
  }
  return e;
}

}  // namespace detail

inline constexpr double kQsmTolerance = 1e-12;
inline constexpr int kQsmMaxIterations = 10000;

/// Quasi-stationary measure and exit rate of a sub-Markovian generator that is
/// reversible with respect to `mu` (a probability over the domain positions).
/// Inverse iteration on the pencil (M, diag(mu)), then one Rayleigh-quotient shift.
inline QuasiStationaryResult quasi_stationary(const SubMarkovGenerator& g, std::span<const double> mu) {
  const std::size_t n = g.size();
  if (mu.size() != n) detail::fail(ErrorCode::DimensionMismatch, "measure does not match the generator domain");
  if (!g.kills()) detail::fail(ErrorCode::DegenerateKilling, "all kill rates vanish");
  const auto c = detail::symmetric_conductances(g, mu);

  double norm_a = 0.0;
  for (std::size_t x = 0; x < n; ++x) {
    double row = g.kill[x];
    for (const auto& [y, v] : c[x]) row += v / mu[x] + v / std::sqrt(mu[x] * mu[y]);
    norm_a = std::max(norm_a, row);
  }

  const auto ni = static_cast<Eigen::Index>(n);
  Eigen::VectorXd dmu = detail::to_eigen(mu);
  auto mu_norm = [&](const Eigen::VectorXd& h) { return std::sqrt(h.cwiseProduct(h).dot(dmu)); };
  const detail::SparseMat m0 = detail::killed_operator(g, mu, c);

  detail::Factor solver;
  detail::factorize(solver, m0, "killed generator");
  Eigen::VectorXd h = Eigen::VectorXd::Ones(ni);
  double rho = 0.0, rel = 1.0;
  bool shifted = false;
  int it = 0, polish = 0;
  for (; it < kQsmMaxIterations; ++it) {
    Eigen::VectorXd next = solver.solve(dmu.cwiseProduct(h));
    h = next / mu_norm(next);
    rho = detail::killed_energy(g, mu, c, h);
    Eigen::VectorXd r = m0 * h - rho * dmu.cwiseProduct(h);
    // ||D^{-1/2} r|| equals the residual of the symmetrized problem.
    double abs_res = std::sqrt(r.cwiseProduct(r).cwiseQuotient(dmu).sum());
    rel = abs_res / norm_a;
    // Two further steps after convergence: the residual is scaled by ||A||, which
    // leaves small-mass entries of the eigenvector less accurate than the rate.
    if (rel <= kQsmTolerance && ++polish > 2) break;
    if (!shifted && rel <= 1e-6 && rel > kQsmTolerance) {
      double sigma = std::max(0.0, rho - 1.01 * abs_res);
      if (sigma > 0.0) {
        try {
          detail::factorize(solver, detail::killed_operator(g, mu, c, sigma), "shifted killed generator");
        } catch (const Error&) {
          detail::factorize(solver, m0, "killed generator");  // shift hit the eigenvalue; stay unshifted
        }
      }
      shifted = true;
    }
  }
  if (it == kQsmMaxIterations) detail::fail(ErrorCode::ConvergenceFailure, "quasi-stationary iteration did not converge");

  if (h.dot(dmu) < 0.0) h = -h;
  double top = 0.0;
  for (Eigen::Index x = 0; x < ni; ++x) top = std::max(top, dmu[x] * h[x]);
  QuasiStationaryResult out;
  out.domain = g.domain;
  out.measure.resize(n);
  double total = 0.0;
  for (Eigen::Index x = 0; x < ni; ++x) {
    double v = dmu[x] * h[x];
    if (v < -1e-12 * top) detail::fail(ErrorCode::ConvergenceFailure, "principal eigenvector changes sign");
    out.measure[x] = std::max(v, 0.0);
    total += out.measure[x];
  }
  for (double& v : out.measure) v /= total;
  out.density.resize(n);
  for (std::size_t x = 0; x < n; ++x) out.density[x] = out.measure[x] / mu[x];
  out.rate = rho;
  out.residual = rel;
  out.iterations = it + 1;
  double via_kill = 0.0;
  for (std::size_t x = 0; x < n; ++x) via_kill += out.measure[x] * g.kill[x];
  out.rate_identity_defect = std::abs(out.rate - via_kill) / out.rate;
  return out;
}

/// Zero-extension of a quasi-stationary result from its domain to a superset.
inline QuasiStationaryResult extend_to(const QuasiStationaryResult& q, const Subset& superset, const ReversibleChain& chain) {
  QuasiStationaryResult out = q;
  out.domain = superset;
  out.measure.assign(superset.size(), 0.0);
  out.density.assign(superset.size(), 0.0);
  double m = mass(chain, superset);
  for (std::size_t k = 0; k < q.domain.size(); ++k) {
    int x = q.domain[k];
    if (!superset.contains(x)) detail::fail(ErrorCode::DimensionMismatch, "extension target misses a support state");
    int l = superset.local(x);
    out.measure[l] = q.measure[k];
    out.density[l] = q.measure[k] / (chain.mu(x) / m);
  }
  return out;
}

/// phi*_{R\S}, mu*_{R\S}: the lambda = +inf case, supported on R\S.
inline QuasiStationaryResult exit_rate_hard(const ReversibleChain& chain, const CoverPair& cover) {
  SubMarkovGenerator g = hard_killed_generator(chain, cover);
  return quasi_stationary(g, conditional_measure(chain, cover.r_minus_s));
}

/// Soft measure mu*_{R,lambda_S} and exit rate over R, for lambda in [0, +inf].
/// lambda = 0 gives mu_R with rate 0; lambda = +inf gives the hard-killed pair extended by zero.
inline QuasiStationaryResult soft_measure(const ReversibleChain& chain, const CoverPair& cover, KillRate lambda) {
  if (lambda.is_infinite()) return extend_to(exit_rate_hard(chain, cover), cover.R, chain);
  if (lambda.is_zero()) {
    QuasiStationaryResult q;
    q.domain = cover.R;
    q.measure = conditional_measure(chain, cover.R);
    q.density.assign(cover.R.size(), 1.0);
    return q;
  }
  return quasi_stationary(traced_killed_generator(chain, cover, lambda.value()), conditional_measure(chain, cover.R));
}

/// Builds the reversible chain carried by the jump part of a sub-Markovian generator.
inline ReversibleChain jump_chain(const ReversibleChain& chain, const SubMarkovGenerator& g) {
  std::vector<double> mu = conditional_measure(chain, g.domain);
  const auto c = detail::symmetric_conductances(g, mu);
  std::vector<std::string> names;
  std::vector<IndexedRate> rates;
  for (std::size_t x = 0; x < g.size(); ++x) {
    names.push_back(chain.name(g.domain[x]));
    for (const auto& [y, v] : c[x]) rates.push_back({static_cast<int>(x), y, v / mu[x]});
  }
  return ReversibleChain::from_indexed(std::move(names), std::move(rates), std::move(mu));
}

/// Trace of the chain on A (excursions outside A removed); stationary measure mu_A.
inline ReversibleChain trace_chain(const ReversibleChain& chain, const Subset& a) {
  if (a.empty()) detail::fail(ErrorCode::EmptySet, "trace on an empty set");
  if (a.size() == chain.size()) return chain;
  return jump_chain(chain, traced_killed_generator(chain, a, Subset(chain.size(), {}), 0.0));
}

struct RestrictedDynamics {
  ReversibleChain chain;
  double gap = 0.0;
};

/// The chain on R obtained by removing the killing moves of the killed trace; at
/// lambda = +inf, by convention, the restricted chain X_R.
inline RestrictedDynamics restricted_lambda_chain(const ReversibleChain& chain, const CoverPair& cover, KillRate lambda,
                                                  const SpectralOptions& opt = {}) {
  RestrictedDynamics out;
  if (lambda.is_infinite())
    out.chain = restricted_chain(chain, cover.R);
  else
    out.chain = jump_chain(chain, traced_killed_generator(chain, cover, lambda.value()));
  out.gap = spectral_gap(out.chain, opt);
  return out;
}

struct EpsilonStar {
  double soft = 0.0;  // phi*_{R,lambda_S} / gamma_{R,lambda_S}
  double hard = 0.0;  // phi*_{R\S} / gamma_R
  bool ordered = true;
};

inline EpsilonStar epsilon_star(const ReversibleChain& chain, const CoverPair& cover, KillRate lambda) {
  EpsilonStar e;
  const double gamma_r = spectral_gap(restricted_chain(chain, cover.R));
  e.hard = exit_rate_hard(chain, cover).rate / gamma_r;
  if (lambda.is_infinite()) {
    e.soft = e.hard;
  } else {
    SubMarkovGenerator g = traced_killed_generator(chain, cover, lambda.value());
    QuasiStationaryResult q = quasi_stationary(g, conditional_measure(chain, cover.R));
    e.soft = q.rate / spectral_gap(jump_chain(chain, g));
  }
  e.ordered = e.soft <= e.hard * (1.0 + 1e-9);
  return e;
}

struct ExitRateUpperBounds {
  double interior_kill_mean = 0.0;  // mu_{R\S}(e*_{R\S})
  double boundary_kill_mean = 0.0;  // lambda mu_R(R cap S) + mu_R(e*_R)
  double mean_local_time = 0.0;     // E_{mu_R}[T^R_{lambda_S}]
  double rate = 0.0;                // phi*_{R,lambda_S}
  bool holds = false;
};

namespace detail {

/// sum_x mu(x) u(x) with (-L*) u = 1 on the generator domain, mu the domain's conditional measure.
inline double green_mean(const SubMarkovGenerator& g, std::span<const double> mu) {
  const auto c = symmetric_conductances(g, mu);
  Factor solver;
  factorize(solver, killed_operator(g, mu, c), "Green kernel");
  Eigen::VectorXd dmu = to_eigen(mu);
  Eigen::VectorXd u = solver.solve(dmu);
  return u.dot(dmu);
}

}  // namespace detail

inline ExitRateUpperBounds exit_rate_upper_bounds(const ReversibleChain& chain, const CoverPair& cover, KillRate lambda) {
  ExitRateUpperBounds b;
  SubMarkovGenerator hard = hard_killed_generator(chain, cover);
  {
    auto mu = conditional_measure(chain, cover.r_minus_s);
    for (std::size_t k = 0; k < hard.size(); ++k) b.interior_kill_mean += mu[k] * hard.kill[k];
  }
  const double m_r = mass(chain, cover.R);
  double exterior = 0.0;
  for (int x : cover.R)
    for (const Edge& e : chain.out(x))
      if (!cover.R.contains(e.to)) exterior += chain.mu(x) / m_r * e.rate;
  if (lambda.is_infinite()) {
    b.boundary_kill_mean = cover.both.empty() ? exterior : std::numeric_limits<double>::infinity();
    auto mu = conditional_measure(chain, cover.r_minus_s);
    // Starting in R cap S the local time is 0; rescale to mu_R weights.
    b.mean_local_time = detail::green_mean(hard, mu) * mass(chain, cover.r_minus_s) / m_r;
    b.rate = exit_rate_hard(chain, cover).rate;
  } else {
    b.boundary_kill_mean = lambda.value() * mass(chain, cover.both) / m_r + exterior;
    SubMarkovGenerator g = traced_killed_generator(chain, cover, lambda.value());
    auto mu = conditional_measure(chain, cover.R);
    b.mean_local_time = detail::green_mean(g, mu);
    b.rate = quasi_stationary(g, mu).rate;
  }
  const double slack = 1.0 + 1e-9;
  b.holds = b.rate <= b.interior_kill_mean * slack && b.rate <= b.boundary_kill_mean * slack &&
            b.mean_local_time <= slack / b.rate;
  return b;
}

struct DensityVariance {
  double variance = 0.0;        // Var_{mu_R}(h*)
  double variance_bound = 0.0;  // eps / (1 - eps)
  double tv = 0.0;              // d_TV(mu*, mu_R)
  double tv_bound = 0.0;        // sqrt(eps / (1 - eps)) / 2
  double epsilon = 0.0;
  bool applicable = false;      // eps < 1
  bool holds = false;
};

inline DensityVariance soft_density_variance(const ReversibleChain& chain, const CoverPair& cover, KillRate lambda) {
  DensityVariance d;
  QuasiStationaryResult q = soft_measure(chain, cover, lambda);
  auto mu = conditional_measure(chain, cover.R);
  if (lambda.is_zero()) {
    d.epsilon = 0.0;
  } else {
    d.epsilon = epsilon_star(chain, cover, lambda).soft;
  }
  for (std::size_t k = 0; k < mu.size(); ++k) {
    d.variance += mu[k] * (q.density[k] - 1.0) * (q.density[k] - 1.0);
    d.tv += 0.5 * std::abs(q.measure[k] - mu[k]);
  }
  d.applicable = d.epsilon < 1.0;
  if (d.applicable) {
    d.variance_bound = d.epsilon / (1.0 - d.epsilon);
    d.tv_bound = 0.5 * std::sqrt(d.variance_bound);
    d.holds = d.variance <= d.variance_bound * (1.0 + 1e-9) + 1e-15 && d.tv <= d.tv_bound * (1.0 + 1e-9) + 1e-15;
  } else {
    d.variance_bound = d.tv_bound = std::numeric_limits<double>::infinity();
  }
  return d;
}

}  // namespace softcap
