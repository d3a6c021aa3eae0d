// Copyright 2026 The softcap Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "softcap/chain.hpp"
#include "softcap/detail/linalg.hpp"
#include "softcap/error.hpp"
#include "softcap/rate.hpp"

namespace softcap {

/// The chain with dangling edges (r, r-bar) of conductance kappa mu(r) for r in A
/// and (s, s-breve) of conductance lambda mu(s) for s in B. The dangling end
/// nodes are never materialized.
struct ExtendedNetwork {
  const ReversibleChain* chain = nullptr;
  Subset A;
  Subset B;
  KillRate kappa;
  KillRate lambda;

  ExtendedNetwork(const ReversibleChain& c, Subset a, Subset b, KillRate k, KillRate l)
      : chain(&c), A(std::move(a)), B(std::move(b)), kappa(k), lambda(l) {
    if (A.universe() != c.size() || B.universe() != c.size())
      detail::fail(ErrorCode::DimensionMismatch, "network sets do not match the chain");
    if (A.empty() || B.empty()) detail::fail(ErrorCode::EmptySet, "capacity between empty sets");
  }
  ExtendedNetwork(const ReversibleChain& c, const CoverPair& cover, KillRate k, KillRate l)
      : ExtendedNetwork(c, cover.R, cover.S, k, l) {}

  /// Conductance of the bar edge at x (0 when x is not in A).
  double bar_conductance(int x) const {
    return A.contains(x) ? (kappa.is_infinite() ? std::numeric_limits<double>::infinity() : kappa.value() * chain->mu(x))
                         : 0.0;
  }
  double breve_conductance(int x) const {
    return B.contains(x)
               ? (lambda.is_infinite() ? std::numeric_limits<double>::infinity() : lambda.value() * chain->mu(x))
               : 0.0;
  }
};

/// Antisymmetric edge function on the extended network.
/// interior[(x,y)] with x < y stores psi(x,y); bar[r] stores psi(r-bar, r); breve[s] stores psi(s, s-breve).
struct Flow {
  std::map<std::pair<int, int>, double> interior;
  std::map<int, double> bar;
  std::map<int, double> breve;

  double at(int x, int y) const {
    if (x == y) return 0.0;
    auto it = interior.find({std::min(x, y), std::max(x, y)});
    if (it == interior.end()) return 0.0;
    return x < y ? it->second : -it->second;
  }
  /// psi(x,y) += v (and psi(y,x) -= v).
  void add(int x, int y, double v) {
    if (x == y) return;
    if (x < y)
      interior[{x, y}] += v;
    else
      interior[{y, x}] -= v;
  }
  Flow& scale(double s) {
    for (auto& [k, v] : interior) v *= s;
    for (auto& [k, v] : bar) v *= s;
    for (auto& [k, v] : breve) v *= s;
    return *this;
  }
  /// Convex combination helper.
  Flow& add_scaled(const Flow& o, double s) {
    for (const auto& [k, v] : o.interior) interior[k] += s * v;
    for (const auto& [k, v] : o.bar) bar[k] += s * v;
    for (const auto& [k, v] : o.breve) breve[k] += s * v;
    return *this;
  }
};

struct FlowReport {
  /// Net outflow at every state (0 for a flow conserved in X).
  std::vector<double> divergence;
  double bar_total = 0.0;    // sum_r psi(r-bar, r)
  double breve_total = 0.0;  // sum_s psi(s, s-breve)
  double max_violation = 0.0;
  bool on_zero_edge = false;
};

inline FlowReport validate_flow(const ExtendedNetwork& net, const Flow& flow) {
  const ReversibleChain& chain = *net.chain;
  FlowReport rep;
  rep.divergence.assign(chain.size(), 0.0);
  for (const auto& [k, v] : flow.interior) {
    auto [x, y] = k;
    if (x < 0 || y < 0 || static_cast<std::size_t>(y) >= chain.size())
      detail::fail(ErrorCode::DimensionMismatch, "flow edge outside the network");
    rep.divergence[x] += v;
    rep.divergence[y] -= v;
    if (v != 0.0 && chain.rate(x, y) == 0.0) rep.on_zero_edge = true;
  }
  for (const auto& [r, v] : flow.bar) {
    rep.divergence[r] -= v;
    rep.bar_total += v;
    if (v != 0.0 && net.bar_conductance(r) == 0.0) rep.on_zero_edge = true;
  }
  for (const auto& [s, v] : flow.breve) {
    rep.divergence[s] += v;
    rep.breve_total += v;
    if (v != 0.0 && net.breve_conductance(s) == 0.0) rep.on_zero_edge = true;
  }
  rep.max_violation = std::max(std::abs(rep.bar_total - 1.0), std::abs(rep.breve_total - 1.0));
  for (double d : rep.divergence) rep.max_violation = std::max(rep.max_violation, std::abs(d));
  return rep;
}

inline constexpr double kExternalFlowTol = 1e-8;
inline constexpr double kInternalFlowTol = 1e-10;

/// Energy 1/2 sum psi^2 / c over the extended network; edges of infinite conductance dissipate nothing.
inline double flow_energy(const ExtendedNetwork& net, const Flow& flow) {
  const ReversibleChain& chain = *net.chain;
  double e = 0.0;
  for (const auto& [k, v] : flow.interior)
    if (v != 0.0) e += v * v / chain.conductance(k.first, k.second);
  for (const auto& [r, v] : flow.bar)
    if (v != 0.0 && !net.kappa.is_infinite()) e += v * v / net.bar_conductance(r);
  for (const auto& [s, v] : flow.breve)
    if (v != 0.0 && !net.lambda.is_infinite()) e += v * v / net.breve_conductance(s);
  return e;
}

/// Thomson lower bound 1 / energy(flow) for a unit flow from A-bar to B-breve.
inline double thomson_lower(const ExtendedNetwork& net, const Flow& flow, double tolerance = kExternalFlowTol) {
  FlowReport rep = validate_flow(net, flow);
  if (rep.on_zero_edge) detail::fail(ErrorCode::FlowOnZeroEdge, "flow uses an edge of zero conductance");
  if (rep.max_violation > tolerance) detail::fail(ErrorCode::NotAUnitFlow, "flow violates the unit-flow constraints");
  double e = flow_energy(net, flow);
  return e > 0.0 ? 1.0 / e : std::numeric_limits<double>::infinity();
}

/// D(f) + kappa mu(A) E_{mu_A}[(f-1)^2] + lambda mu(B) E_{mu_B}[f^2].
inline double dirichlet_upper(const ExtendedNetwork& net, std::span<const double> f) {
  const ReversibleChain& chain = *net.chain;
  double v = dirichlet_form(chain, f);
  for (int r : net.A) {
    double d = f[r] - 1.0;
    if (net.kappa.is_infinite()) {
      if (d != 0.0) return std::numeric_limits<double>::infinity();
    } else {
      v += net.kappa.value() * chain.mu(r) * d * d;
    }
  }
  for (int s : net.B) {
    if (net.lambda.is_infinite()) {
      if (f[s] != 0.0) return std::numeric_limits<double>::infinity();
    } else {
      v += net.lambda.value() * chain.mu(s) * f[s] * f[s];
    }
  }
  return v;
}

/// V(x) = P_x(kappa clock on A rings before lambda clock on B).
inline std::vector<double> equilibrium_potential(const ExtendedNetwork& net) {
  const ReversibleChain& chain = *net.chain;
  const std::size_t n = chain.size();
  if (net.kappa.is_zero() && net.lambda.is_zero()) detail::fail(ErrorCode::SingularSystem, "kappa = lambda = 0");
  std::vector<double> v(n, 0.0);
  std::vector<char> fixed(n, 0);
  if (net.kappa.is_infinite())
    for (int r : net.A) fixed[r] = 1, v[r] = 1.0;
  if (net.lambda.is_infinite())
    for (int s : net.B) {
      if (fixed[s]) detail::fail(ErrorCode::ConstraintConflict, "kappa = lambda = inf on a state of R cap S");
      fixed[s] = 1, v[s] = 0.0;
    }
  Subset free = Subset::where(n, [&](int x) { return !fixed[x]; });
  if (free.empty()) return v;
  const double k = net.kappa.is_infinite() ? 0.0 : net.kappa.value();
  const double l = net.lambda.is_infinite() ? 0.0 : net.lambda.value();
  std::vector<double> extra(free.size());
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(free.size()));
  for (std::size_t i = 0; i < free.size(); ++i) {
    int x = free[i];
    extra[i] = (net.A.contains(x) ? k : 0.0) + (net.B.contains(x) ? l : 0.0);
    b[static_cast<Eigen::Index>(i)] = chain.mu(x) * (net.A.contains(x) ? k : 0.0);
    for (const Edge& e : chain.out(x))
      if (fixed[e.to]) b[static_cast<Eigen::Index>(i)] += chain.conductance(x, e.to) * v[e.to];
  }
  detail::Factor solver;
  detail::factorize(solver, detail::weighted_operator(chain, free, extra), "equilibrium potential");
  Eigen::VectorXd sol = solver.solve(b);
  for (std::size_t i = 0; i < free.size(); ++i) v[free[i]] = std::clamp(sol[static_cast<Eigen::Index>(i)], 0.0, 1.0);
  return v;
}

struct CapacityCertificate {
  double value = 0.0;
  std::vector<double> potential;
  Flow current;
  double upper_at_potential = 0.0;
  double lower_at_current = 0.0;
  double duality_gap = 0.0;
  double phi_kl = 0.0;
  double flux_out_of_bar = 0.0;
  double flux_into_breve = 0.0;
  /// Largest divergence / boundary violation of the current.
  double current_violation = 0.0;
};

inline CapacityCertificate soft_capacity(const ExtendedNetwork& net) {
  const ReversibleChain& chain = *net.chain;
  CapacityCertificate cert;
  cert.potential = equilibrium_potential(net);
  const auto& v = cert.potential;
  cert.value = cert.upper_at_potential = dirichlet_upper(net, v);

  // Net current leaving state x towards everything but its own bar node.
  auto outflow = [&](int x) {
    double o = 0.0;
    for (const Edge& e : chain.out(x)) o += chain.conductance(x, e.to) * (v[x] - v[e.to]);
    if (net.B.contains(x) && !net.lambda.is_infinite()) o += net.lambda.value() * chain.mu(x) * v[x];
    return o;
  };
  auto inflow = [&](int x) {
    double i = 0.0;
    for (const Edge& e : chain.out(x)) i += chain.conductance(x, e.to) * (v[e.to] - v[x]);
    if (net.A.contains(x) && !net.kappa.is_infinite()) i += net.kappa.value() * chain.mu(x) * (1.0 - v[x]);
    return i;
  };
  std::map<int, double> bar_raw, breve_raw;
  for (int r : net.A)
    bar_raw[r] = net.kappa.is_infinite() ? outflow(r) : net.kappa.value() * chain.mu(r) * (1.0 - v[r]);
  for (int s : net.B) breve_raw[s] = net.lambda.is_infinite() ? inflow(s) : net.lambda.value() * chain.mu(s) * v[s];
  for (const auto& [r, f] : bar_raw) cert.flux_out_of_bar += f;
  for (const auto& [s, f] : breve_raw) cert.flux_into_breve += f;

  const double m = mass(chain, net.A) * mass(chain, net.B);
  cert.phi_kl = cert.value / m;
  if (cert.value <= 0.0) {
    cert.lower_at_current = 0.0;
    cert.duality_gap = 0.0;
    return cert;
  }
  const double c = cert.value;
  for (std::size_t x = 0; x < chain.size(); ++x)
    for (const Edge& e : chain.out(static_cast<int>(x)))
      if (e.to > static_cast<int>(x))
        cert.current.interior[{static_cast<int>(x), e.to}] =
            chain.conductance(static_cast<int>(x), e.to) * (v[x] - v[e.to]) / c;
  for (const auto& [r, f] : bar_raw) cert.current.bar[r] = f / c;
  for (const auto& [s, f] : breve_raw) cert.current.breve[s] = f / c;
  cert.current_violation = validate_flow(net, cert.current).max_violation;
  double e = flow_energy(net, cert.current);
  cert.lower_at_current = e > 0.0 ? 1.0 / e : std::numeric_limits<double>::infinity();
  cert.duality_gap = std::abs(cert.upper_at_potential - cert.lower_at_current) / c;
  return cert;
}

inline CapacityCertificate soft_capacity(const ReversibleChain& chain, const CoverPair& cover, KillRate kappa,
                                         KillRate lambda) {
  return soft_capacity(ExtendedNetwork(chain, cover, kappa, lambda));
}

inline std::vector<double> equilibrium_potential(const ReversibleChain& chain, const CoverPair& cover, KillRate kappa,
                                                 KillRate lambda) {
  return equilibrium_potential(ExtendedNetwork(chain, cover, kappa, lambda));
}

}  // namespace softcap
