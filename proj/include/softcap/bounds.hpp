// Copyright 2026 The softcap Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "softcap/capacity.hpp"
#include "softcap/chain.hpp"
#include "softcap/detail/linalg.hpp"
#include "softcap/format.hpp"
#include "softcap/killed.hpp"
#include "softcap/rate.hpp"
#include "softcap/spectral.hpp"
#include "softcap/survival.hpp"

namespace softcap {

inline constexpr double kBoundSlack = 1e-9;
/// Absolute floor on the slack, for bounds that are exactly zero (round-off in the exact side).
inline constexpr double kBoundAbsoluteSlack = 1e-14;

/// One checked inequality: lower <= exact <= upper (either side optional).
struct BoundReport {
  std::string name;
  double exact = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> lower;
  std::optional<double> upper;
  std::vector<std::pair<std::string, double>> diagnostics;
  bool applicable = false;
  bool satisfied = false;

  BoundReport& diag(std::string key, double value) {
    diagnostics.emplace_back(std::move(key), value);
    return *this;
  }

  /// Sets `satisfied` from the sides present; a relative slack of 1e-9 (at least 1e-14) is allowed.
  BoundReport& finalize() {
    if (!applicable) {
      satisfied = false;
      return *this;
    }
    auto tol = [&](double bound) {
      return std::max(kBoundSlack * std::max(std::abs(bound), std::abs(exact)), kBoundAbsoluteSlack);
    };
    bool ok = std::isfinite(exact) || (!lower && !upper);
    if (lower && std::isfinite(*lower)) ok = ok && exact >= *lower - tol(*lower);
    if (upper && std::isfinite(*upper)) ok = ok && exact <= *upper + tol(*upper);
    satisfied = ok;
    return *this;
  }
};

/// kappa/gamma (1 + [ln(gamma sqrt(chi) / (2 kappa))]_+), 0 for a one-state set.
inline double mixing_term(double kappa, double gamma, double chi) {
  if (std::isinf(gamma)) return 0.0;
  double arg = std::max(gamma * std::sqrt(chi) / (2.0 * kappa), std::numeric_limits<double>::min());
  return kappa / gamma * (1.0 + std::max(std::log(arg), 0.0));
}

/// 1/2 sqrt(eps / (1 - eps)).
inline double tv_from_epsilon(double eps) { return 0.5 * std::sqrt(eps / (1.0 - eps)); }

/// Quantities that depend only on the chain and the cover.
struct CoverAnalysis {
  const ReversibleChain* chain = nullptr;
  CoverPair cover;
  double mass_R = 0.0, mass_S = 0.0, mass_both = 0.0;
  double gamma = 0.0, gamma_R = 0.0, gamma_S = 0.0;
  double chi_R = 1.0, chi_S = 1.0;
  /// Hard-killed exit rates; NaN when the corresponding difference set is empty or reducible.
  double phi_hard_R = std::numeric_limits<double>::quiet_NaN();
  double phi_hard_S = std::numeric_limits<double>::quiet_NaN();
};

inline CoverAnalysis analyze_cover(const ReversibleChain& chain, const CoverPair& cover) {
  CoverAnalysis a;
  a.chain = &chain;
  a.cover = cover;
  a.mass_R = mass(chain, cover.R);
  a.mass_S = mass(chain, cover.S);
  a.mass_both = mass(chain, cover.both);
  a.gamma = spectral_gap(chain);
  if (cover.irreducible_R) a.gamma_R = spectral_gap(restricted_chain(chain, cover.R)), a.chi_R = chi(chain, cover.R);
  if (cover.irreducible_S) a.gamma_S = spectral_gap(restricted_chain(chain, cover.S)), a.chi_S = chi(chain, cover.S);
  if (cover.irreducible_r_minus_s) a.phi_hard_R = exit_rate_hard(chain, cover).rate;
  if (cover.irreducible_s_minus_r) a.phi_hard_S = exit_rate_hard(chain, swapped(cover)).rate;
  return a;
}

/// Raw hypothesis ratios and threshold-based window flags for one (kappa, lambda).
struct HypothesisDiagnostics {
  bool irreducible_R = false, irreducible_S = false;
  bool irreducible_r_minus_s = false, irreducible_s_minus_r = false;
  double phi_rs_over_gamma_r = 0.0;   // phi*_{R\S} / gamma_R
  double phi_sr_over_gamma_s = 0.0;   // phi*_{S\R} / gamma_S
  double phi_rs_over_gamma_s = 0.0;   // phi*_{R\S} / gamma_S
  double mass_difference = 0.0;       // mu(S) - mu(R)
  double log_chi_s_ratio = 0.0;       // ln(chi_S) / gamma_S * phi*_{R\S}
  double log_chi_r_ratio = 0.0;       // ln(chi_R) / gamma_R * phi*_{R\S}
  double log_chi_r_ratio_mirror = 0.0;  // ln(chi_R) / gamma_R * phi*_{S\R}
  double kappa_low = 0.0;    // phi*_{R\S} / kappa
  double kappa_high = 0.0;   // kappa / gamma_R
  double lambda_low = 0.0;   // max(phi*_{R\S}, phi*_{S\R}) / lambda
  double lambda_high = 0.0;  // lambda / gamma_S
  double threshold = 0.1;
  bool window_kappa_low = false, window_kappa_high = false;
  bool window_lambda_low = false, window_lambda_high = false;

  bool irreducibility_holds() const {
    return irreducible_R && irreducible_S && irreducible_r_minus_s && irreducible_s_minus_r;
  }
  bool windows_hold() const {
    return window_kappa_low && window_kappa_high && window_lambda_low && window_lambda_high;
  }
  std::vector<std::pair<std::string, double>> entries() const {
    return {{"phi_rs_over_gamma_r", phi_rs_over_gamma_r},
            {"phi_sr_over_gamma_s", phi_sr_over_gamma_s},
            {"phi_rs_over_gamma_s", phi_rs_over_gamma_s},
            {"mass_difference", mass_difference},
            {"log_chi_s_ratio", log_chi_s_ratio},
            {"log_chi_r_ratio", log_chi_r_ratio},
            {"log_chi_r_ratio_mirror", log_chi_r_ratio_mirror},
            {"kappa_low", kappa_low},
            {"kappa_high", kappa_high},
            {"lambda_low", lambda_low},
            {"lambda_high", lambda_high}};
  }
};

inline HypothesisDiagnostics diagnose_hypotheses(const CoverAnalysis& a, double kappa, double lambda,
                                                 double threshold = 0.1) {
  HypothesisDiagnostics d;
  const CoverPair& c = a.cover;
  d.irreducible_R = c.irreducible_R;
  d.irreducible_S = c.irreducible_S;
  d.irreducible_r_minus_s = c.irreducible_r_minus_s;
  d.irreducible_s_minus_r = c.irreducible_s_minus_r;
  d.threshold = threshold;
  auto ratio = [](double num, double den) { return std::isinf(den) ? 0.0 : num / den; };
  d.phi_rs_over_gamma_r = ratio(a.phi_hard_R, a.gamma_R);
  d.phi_sr_over_gamma_s = ratio(a.phi_hard_S, a.gamma_S);
  d.phi_rs_over_gamma_s = ratio(a.phi_hard_R, a.gamma_S);
  d.mass_difference = a.mass_S - a.mass_R;
  d.log_chi_s_ratio = ratio(std::log(a.chi_S), a.gamma_S) * a.phi_hard_R;
  d.log_chi_r_ratio = ratio(std::log(a.chi_R), a.gamma_R) * a.phi_hard_R;
  d.log_chi_r_ratio_mirror = ratio(std::log(a.chi_R), a.gamma_R) * a.phi_hard_S;
  d.kappa_low = a.phi_hard_R / kappa;
  d.kappa_high = ratio(kappa, a.gamma_R);
  d.lambda_low = std::max(a.phi_hard_R, a.phi_hard_S) / lambda;
  d.lambda_high = ratio(lambda, a.gamma_S);
  d.window_kappa_low = d.kappa_low <= threshold;
  d.window_kappa_high = d.kappa_high <= threshold;
  d.window_lambda_low = d.lambda_low <= threshold;
  d.window_lambda_high = d.lambda_high <= threshold;
  return d;
}

inline HypothesisDiagnostics diagnose_hypotheses(const ReversibleChain& chain, const CoverPair& cover, double kappa,
                                                 double lambda, double threshold = 0.1) {
  return diagnose_hypotheses(analyze_cover(chain, cover), kappa, lambda, threshold);
}

/// Geometric midpoints of the (kappa, lambda) windows.
inline std::pair<double, double> mid_window(const CoverAnalysis& a) {
  double k = std::sqrt(a.phi_hard_R * a.gamma_R);
  double l = std::sqrt(std::max(a.phi_hard_R, a.phi_hard_S) * a.gamma_S);
  return {k, l};
}

/// Everything the bounds need for one (kappa, lambda): capacity, both soft measures and restricted gaps.
struct BoundContext {
  CoverAnalysis base;
  double kappa = 0.0, lambda = 0.0;
  CapacityCertificate capacity;
  QuasiStationaryResult soft_R;  // killed at lambda on S, over R
  QuasiStationaryResult soft_S;  // killed at kappa on R, over S
  double gamma_R_lambda = 0.0, gamma_S_kappa = 0.0;
  double eps_R = 0.0, eps_S = 0.0;

  const ReversibleChain& chain() const { return *base.chain; }
  const CoverPair& cover() const { return base.cover; }
  double phi_kl() const { return capacity.phi_kl; }
  double phi_R() const { return soft_R.rate; }
  double phi_S() const { return soft_S.rate; }
};

inline BoundContext make_context(const CoverAnalysis& a, double kappa, double lambda) {
  if (!(kappa >= 0.0) || !(lambda >= 0.0) || !std::isfinite(kappa) || !std::isfinite(lambda))
    detail::fail(ErrorCode::InvalidArgument, "bounds need finite kappa, lambda >= 0");
  BoundContext ctx;
  ctx.base = a;
  ctx.kappa = kappa;
  ctx.lambda = lambda;
  const ReversibleChain& chain = *a.chain;
  const CoverPair mirror = swapped(a.cover);
  ctx.capacity = soft_capacity(chain, a.cover, kappa, lambda);
  ctx.soft_R = soft_measure(chain, a.cover, lambda);
  ctx.soft_S = soft_measure(chain, mirror, kappa);
  ctx.gamma_R_lambda = restricted_lambda_chain(chain, a.cover, lambda).gap;
  ctx.gamma_S_kappa = restricted_lambda_chain(chain, mirror, kappa).gap;
  ctx.eps_R = std::isinf(ctx.gamma_R_lambda) ? 0.0 : ctx.phi_R() / ctx.gamma_R_lambda;
  ctx.eps_S = std::isinf(ctx.gamma_S_kappa) ? 0.0 : ctx.phi_S() / ctx.gamma_S_kappa;
  return ctx;
}

inline BoundContext make_context(const ReversibleChain& chain, const CoverPair& cover, double kappa, double lambda) {
  return make_context(analyze_cover(chain, cover), kappa, lambda);
}

namespace detail {

inline double inv_or_zero(double num, double gamma) { return std::isinf(gamma) ? 0.0 : num / gamma; }

/// 1 + (kappa + phi (1 + mu(R cap S))) / gamma_R + (lambda + phi (1 + mu(R cap S))) / gamma_S.
inline double gap_lower_brace(const BoundContext& c) {
  const double phi = c.phi_kl();
  const double extra = phi * (1.0 + c.base.mass_both);
  return 1.0 + inv_or_zero(c.kappa + extra, c.base.gamma_R) + inv_or_zero(c.lambda + extra, c.base.gamma_S);
}

/// 1 - phi_R/kappa - phi_S/lambda - tv(eps_R) - tv(eps_S).
inline double gap_upper_brace(const BoundContext& c) {
  return 1.0 - c.phi_R() / c.kappa - c.phi_S() / c.lambda - tv_from_epsilon(c.eps_R) - tv_from_epsilon(c.eps_S);
}

/// (1 - 2 phi_R / (mu(S) lambda)) / (1 - phi_R/lambda)^2.
inline double exit_lower_factor(const BoundContext& c) {
  const double r = c.phi_R() / c.lambda;
  return (1.0 - 2.0 * r / c.base.mass_S) / ((1.0 - r) * (1.0 - r));
}

inline double exit_upper_brace(const BoundContext& c) {
  return 1.0 - c.phi_R() / c.kappa - tv_from_epsilon(c.eps_R);
}

}  // namespace detail

/// Two-sided bound on the spectral gap of the whole chain from the soft capacity.
inline std::vector<BoundReport> gap_bounds(const BoundContext& c) {
  const double phi = c.phi_kl();
  const double lb = detail::gap_lower_brace(c);
  BoundReport lower{"gap_lower", c.base.gamma};
  lower.lower = phi / lb;
  lower.applicable = c.kappa > 0.0 && c.lambda > 0.0;
  lower.diag("phi_kl", phi).diag("brace", lb);
  lower.finalize();

  BoundReport upper{"gap_upper", c.base.gamma};
  const double ub = detail::gap_upper_brace(c);
  upper.applicable = c.kappa > 0.0 && c.lambda > 0.0 && c.eps_R < 1.0 && c.eps_S < 1.0 && ub > 0.0;
  if (upper.applicable) upper.upper = phi / (ub * ub);
  upper.diag("phi_kl", phi).diag("brace", ub).diag("eps_R", c.eps_R).diag("eps_S", c.eps_S);
  if (upper.applicable) upper.diag("upper_over_lower", *upper.upper / *lower.lower);
  upper.finalize();
  return {lower, upper};
}

inline std::vector<BoundReport> gap_bounds(const ReversibleChain& chain, const CoverPair& cover, double kappa,
                                           double lambda) {
  return gap_bounds(make_context(chain, cover, kappa, lambda));
}

/// Two-sided bound on phi*_{R,lambda_S}, with the exact rate substituted on the right-hand sides.
inline std::vector<BoundReport> exit_rate_bounds(const BoundContext& c) {
  const double scale = c.capacity.value / c.base.mass_R;  // C / mu(R)
  const double phi = c.phi_R();
  BoundReport lower{"exit_rate_lower", phi};
  const double f = c.lambda > 0.0 ? detail::exit_lower_factor(c) : std::numeric_limits<double>::quiet_NaN();
  lower.applicable = c.kappa > 0.0 && c.lambda > 0.0 && phi / c.lambda < 1.0 &&
                     1.0 - 2.0 * phi / (c.base.mass_S * c.lambda) > 0.0 && !c.cover().r_minus_s.empty();
  if (lower.applicable) lower.lower = scale * f / detail::gap_lower_brace(c);
  lower.diag("factor", f).diag("brace", detail::gap_lower_brace(c));
  lower.finalize();

  BoundReport upper{"exit_rate_upper", phi};
  const double b = detail::exit_upper_brace(c);
  const double grow = 1.0 + phi / c.lambda;
  upper.applicable = c.kappa > 0.0 && c.lambda > 0.0 && c.eps_R < 1.0 && b > 0.0;
  if (upper.applicable) upper.upper = scale * grow / (b * b);
  upper.diag("one_plus_phi_over_lambda", grow).diag("brace", b).diag("eps_R", c.eps_R);
  upper.finalize();
  return {lower, upper};
}

inline std::vector<BoundReport> exit_rate_bounds(const ReversibleChain& chain, const CoverPair& cover, double kappa,
                                                 double lambda) {
  return exit_rate_bounds(make_context(chain, cover, kappa, lambda));
}

/// Upper bound on phi_kappa^lambda obtained from the hard-killed density as a test function.
inline BoundReport capacity_upper(const BoundContext& c) {
  BoundReport r{"capacity_upper", c.phi_kl()};
  const double eps = c.base.phi_hard_R / c.base.gamma_R;
  const double inv_s = 1.0 / c.base.mass_S;
  r.applicable = c.base.mass_S >= c.base.mass_R && eps < 1.0 && std::isfinite(c.base.phi_hard_R);
  if (r.applicable)
    r.upper = inv_s * c.base.phi_hard_R * (1.0 + detail::inv_or_zero(c.kappa, c.base.gamma_R)) / (1.0 - eps);
  r.diag("eps_hard_R", eps).diag("inv_mass_S", inv_s);
  r.finalize();
  if (r.applicable) r.satisfied = r.satisfied && inv_s <= 2.0 + kBoundSlack;
  return r;
}

inline BoundReport capacity_upper(const ReversibleChain& chain, const CoverPair& cover, double kappa, double lambda) {
  return capacity_upper(make_context(chain, cover, kappa, lambda));
}

/// Mean of the equilibrium potential on R (from below) and on S (from above).
inline std::vector<BoundReport> potential_mean_bounds(const BoundContext& c) {
  const ReversibleChain& chain = c.chain();
  const auto& v = c.capacity.potential;
  double mean_r = 0.0, mean_s = 0.0;
  for (int x : c.cover().R) mean_r += chain.mu(x) * v[x];
  for (int x : c.cover().S) mean_s += chain.mu(x) * v[x];
  mean_r /= c.base.mass_R;
  mean_s /= c.base.mass_S;

  BoundReport r{"potential_mean_R", mean_r};
  r.applicable = c.kappa > 0.0 && c.eps_R < 1.0;
  if (r.applicable) r.lower = 1.0 - c.phi_R() / c.kappa - tv_from_epsilon(c.eps_R);
  r.diag("eps_R", c.eps_R);
  r.finalize();

  BoundReport s{"potential_mean_S", mean_s};
  s.applicable = c.lambda > 0.0 && c.eps_S < 1.0;
  if (s.applicable) s.upper = c.phi_S() / c.lambda + tv_from_epsilon(c.eps_S);
  s.diag("eps_S", c.eps_S);
  s.finalize();
  return {r, s};
}

inline std::vector<BoundReport> potential_mean_bounds(const ReversibleChain& chain, const CoverPair& cover,
                                                      double kappa, double lambda) {
  return potential_mean_bounds(make_context(chain, cover, kappa, lambda));
}

/// Principal eigenpair of -L + lambda_S on the whole space.
struct WholeSpaceKilled {
  double rate = 0.0;
  std::vector<double> measure;
  double identity_defect = 0.0;  // |rate - lambda mu~(S)| / rate
};

inline WholeSpaceKilled whole_space_killed_rate(const ReversibleChain& chain, const CoverPair& cover, double lambda) {
  WholeSpaceKilled w;
  if (lambda == 0.0) {
    w.measure = chain.measure();
    return w;
  }
  SubMarkovGenerator g;
  g.domain = Subset::all(chain.size());
  g.jumps.resize(chain.size());
  g.kill.assign(chain.size(), 0.0);
  for (std::size_t x = 0; x < chain.size(); ++x) {
    for (const Edge& e : chain.out(static_cast<int>(x))) g.jumps[x].push_back(e);
    if (cover.S.contains(static_cast<int>(x))) g.kill[x] = lambda;
  }
  QuasiStationaryResult q = quasi_stationary(g, chain.measure());
  w.rate = q.rate;
  w.measure = q.measure;
  double on_s = 0.0;
  for (int s : cover.S) on_s += w.measure[s];
  w.identity_defect = std::abs(w.rate - lambda * on_s) / w.rate;
  return w;
}

inline std::vector<BoundReport> whole_space_bounds(const BoundContext& c) {
  WholeSpaceKilled w = whole_space_killed_rate(c.chain(), c.cover(), c.lambda);
  double on_s = 0.0;
  for (int s : c.cover().S) on_s += w.measure[s];
  BoundReport order{"whole_space_rate_order", c.phi_R()};
  order.lower = w.rate;
  order.applicable = c.lambda > 0.0;
  order.diag("whole_space_rate", w.rate);
  order.finalize();
  BoundReport ident{"whole_space_rate_identity", w.rate};
  ident.lower = ident.upper = c.lambda * on_s;
  ident.applicable = c.lambda > 0.0;
  ident.diag("relative_defect", w.identity_defect);
  ident.finalize();
  return {order, ident};
}

/// The two normalized ratios of the sharp asymptotics, inside their explicit brace intervals.
inline std::vector<BoundReport> ratio_check(const BoundContext& c, const HypothesisDiagnostics& h) {
  const bool windows = h.irreducibility_holds() && h.windows_hold();
  const double lb = detail::gap_lower_brace(c);
  BoundReport g{"ratio_gap", c.base.gamma / c.phi_kl()};
  g.lower = 1.0 / lb;
  const double ub = detail::gap_upper_brace(c);
  if (c.eps_R < 1.0 && c.eps_S < 1.0 && ub > 0.0) g.upper = 1.0 / (ub * ub);
  g.applicable = windows && c.kappa > 0.0 && c.lambda > 0.0;
  g.diag("windows", windows ? 1.0 : 0.0);
  g.finalize();

  BoundReport p{"ratio_exit_rate", c.phi_R() * c.base.mass_R / c.capacity.value};
  const double f = detail::exit_lower_factor(c);
  if (c.phi_R() / c.lambda < 1.0 && f > 0.0) p.lower = f / lb;
  const double b = detail::exit_upper_brace(c);
  if (c.eps_R < 1.0 && b > 0.0) p.upper = (1.0 + c.phi_R() / c.lambda) / (b * b);
  p.applicable = windows && c.kappa > 0.0 && c.lambda > 0.0;
  p.diag("windows", windows ? 1.0 : 0.0);
  p.finalize();
  return {g, p};
}

/// The three elementary upper bounds on the exit rate, and the Green-kernel mean local time.
inline std::vector<BoundReport> exit_rate_elementary(const BoundContext& c) {
  ExitRateUpperBounds b = exit_rate_upper_bounds(c.chain(), c.cover(), c.lambda);
  BoundReport i{"exit_rate_interior_kill", c.phi_R()};
  i.upper = b.interior_kill_mean;
  i.applicable = !c.cover().r_minus_s.empty();
  i.finalize();
  BoundReport o{"exit_rate_boundary_kill", c.phi_R()};
  o.upper = b.boundary_kill_mean;
  o.applicable = true;
  o.finalize();
  BoundReport t{"mean_local_time", b.mean_local_time};
  t.upper = 1.0 / c.phi_R();
  t.applicable = c.phi_R() > 0.0;
  t.finalize();
  return {i, o, t};
}

inline std::vector<BoundReport> density_bounds(const BoundContext& c) {
  DensityVariance d = soft_density_variance(c.chain(), c.cover(), c.lambda);
  BoundReport v{"density_variance", d.variance};
  v.applicable = d.applicable;
  if (d.applicable) v.upper = d.variance_bound;
  v.diag("eps_R", d.epsilon);
  v.finalize();
  BoundReport t{"density_tv", d.tv};
  t.applicable = d.applicable;
  if (d.applicable) t.upper = d.tv_bound;
  t.finalize();
  BoundReport e{"epsilon_order", c.eps_R};
  e.upper = c.base.phi_hard_R / c.base.gamma_R;
  e.applicable = std::isfinite(c.base.phi_hard_R);
  e.finalize();
  return {v, t, e};
}

/// Survival of the lambda-killed chain from mu* (exponential envelope) and from mu_R (TV corridor).
inline std::vector<BoundReport> survival_envelope(const BoundContext& c, const std::vector<double>& t_grid) {
  const ReversibleChain& chain = c.chain();
  const CoverPair& cover = c.cover();
  std::vector<double> kill(chain.size(), 0.0);
  for (int s : cover.S) kill[s] = c.lambda;
  KilledSemigroup sg(chain, kill);
  std::vector<double> from_qsm(chain.size(), 0.0), from_mu(chain.size(), 0.0);
  for (std::size_t k = 0; k < cover.R.size(); ++k) {
    from_qsm[cover.R[k]] = c.soft_R.measure[k];
    from_mu[cover.R[k]] = chain.mu(cover.R[k]) / c.base.mass_R;
  }
  const double phi = c.phi_R();
  std::vector<BoundReport> out;
  for (double t : t_grid) {
    const double s = t / phi;
    const double p_star = sg.survival(from_qsm, s);
    const double p_mu = sg.survival(from_mu, s);
    BoundReport e{"survival_from_qsm[t=" + format_double(t) + "]", p_star};
    e.lower = std::exp(-t);
    e.upper = std::exp(-t) * (std::exp(std::sqrt(phi / c.lambda)) + std::exp(t - std::sqrt(c.lambda / phi)));
    e.applicable = c.lambda >= phi && t >= std::sqrt(phi / c.lambda);
    e.finalize();
    out.push_back(e);
    BoundReport r{"survival_corridor[t=" + format_double(t) + "]", std::abs(p_mu - p_star)};
    r.applicable = c.eps_R < 1.0;
    if (r.applicable) r.upper = tv_from_epsilon(c.eps_R);
    r.diag("from_mu_R", p_mu);
    r.finalize();
    out.push_back(r);
  }
  return out;
}

/// Law of the position at the kappa-clock on R, and the survival envelope from a start distribution.
inline std::vector<BoundReport> killing_time_bounds(const BoundContext& c, const std::vector<double>& start,
                                                    const std::vector<double>& t_grid) {
  const ReversibleChain& chain = c.chain();
  const CoverPair& cover = c.cover();
  const std::size_t n = chain.size();
  if (start.size() != n) detail::fail(ErrorCode::DimensionMismatch, "start distribution length differs from state count");
  if (!(c.kappa > 0.0)) detail::fail(ErrorCode::InvalidArgument, "killing-time bounds need kappa > 0");
  if (n > kExactSemigroupLimit) detail::fail(ErrorCode::TooLargeForExact, "exact resolvent limited to 4096 states");
  const double bound = mixing_term(c.kappa, c.base.gamma_R, c.base.chi_R);
  const auto mu_r = conditional_measure(chain, cover.R);

  // law_x(y) = kappa [(kappa_R - L)^{-1}](x, y) = kappa M^{-1}(x, y) mu(y),  M = diag(mu)(kappa_R - L).
  std::vector<double> extra(n, 0.0);
  for (int r : cover.R) extra[r] = c.kappa;
  detail::Factor solver;
  detail::factorize(solver, detail::weighted_operator(chain, Subset::all(n), extra), "resolvent");
  Eigen::MatrixXd law(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cover.R.size()));
  for (std::size_t k = 0; k < cover.R.size(); ++k) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    e[cover.R[k]] = 1.0;
    law.col(static_cast<Eigen::Index>(k)) = c.kappa * chain.mu(cover.R[k]) * solver.solve(e);
  }
  double worst = 0.0, worst_x = 0.0, from_start = 0.0;
  std::vector<double> start_law(cover.R.size(), 0.0);
  for (std::size_t x = 0; x < n; ++x) {
    double tv = 0.0;
    for (std::size_t k = 0; k < cover.R.size(); ++k) {
      tv += 0.5 * std::abs(law(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(k)) - mu_r[k]);
      start_law[k] += start[x] * law(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(k));
    }
    if (tv > worst) worst = tv, worst_x = static_cast<double>(x);
  }
  for (std::size_t k = 0; k < cover.R.size(); ++k) from_start += 0.5 * std::abs(start_law[k] - mu_r[k]);

  std::vector<BoundReport> out;
  BoundReport a{"killing_law_worst_start", worst};
  a.upper = bound;
  a.applicable = true;
  a.diag("worst_state", worst_x).diag("vacuous", bound >= 1.0 ? 1.0 : 0.0);
  a.finalize();
  out.push_back(a);
  BoundReport b{"killing_law_from_start", from_start};
  b.upper = bound;
  b.applicable = true;
  b.finalize();
  out.push_back(b);

  double v_mean = 0.0;
  for (std::size_t x = 0; x < n; ++x) v_mean += start[x] * c.capacity.potential[x];
  const double delta = 1.0 - v_mean;
  const double eta = delta + bound + tv_from_epsilon(c.eps_R);
  const double phi = c.phi_R();
  const double m = std::min(c.kappa, c.lambda);
  std::vector<double> kill(n, 0.0);
  for (int s : cover.S) kill[s] = c.lambda;
  KilledSemigroup sg(chain, kill);
  for (double t : t_grid) {
    BoundReport e{"killing_envelope[t=" + format_double(t) + "]", sg.survival(start, t / phi)};
    const double lo = std::exp(-t) - eta;
    const double hi = std::exp(-t) * std::exp(2.0 * std::sqrt(phi / m)) + eta + 2.0 * std::exp(-std::sqrt(m / phi));
    e.lower = std::clamp(lo, 0.0, 1.0);
    e.upper = std::clamp(hi, 0.0, 1.0);
    e.applicable = c.lambda >= phi && c.eps_R < 1.0;
    e.diag("delta", delta).diag("eta", eta).diag("vacuous", (lo <= 0.0 && hi >= 1.0) ? 1.0 : 0.0);
    e.finalize();
    out.push_back(e);
  }
  return out;
}

/// Gap lower bounds from an m-set cover with per-set killing rates.
inline std::vector<BoundReport> multi_cover_gap_lower(const ReversibleChain& chain, const std::vector<Subset>& sets,
                                                      const std::vector<double>& kappas) {
  const std::size_t m = sets.size();
  if (m < 2 || kappas.size() != m) detail::fail(ErrorCode::InvalidArgument, "need at least two sets and one kappa per set");
  Subset all(chain.size(), {});
  for (std::size_t i = 0; i < m; ++i) {
    if (!is_irreducible_on(chain, sets[i])) detail::fail(ErrorCode::NotACover, "cover set is empty or not irreducible");
    if (!(kappas[i] > 0.0)) detail::fail(ErrorCode::InvalidArgument, "kappas must be positive");
    all = all.unite(sets[i]);
  }
  if (all.size() != chain.size()) detail::fail(ErrorCode::NotACover, "sets do not cover the state space");

  std::vector<double> masses(m), gaps(m), inv_phi_i(m, 0.0);
  double total_mass = 0.0, inv_phi = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    masses[i] = mass(chain, sets[i]);
    gaps[i] = spectral_gap(restricted_chain(chain, sets[i]));
    total_mass += masses[i];
  }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      if (i == j) continue;
      double cap = soft_capacity(ExtendedNetwork(chain, sets[i], sets[j], kappas[i], kappas[j])).value;
      double inv = masses[i] * masses[j] / cap;
      inv_phi_i[i] += inv;
      inv_phi += 0.5 * inv;
    }
  const double phi = 1.0 / inv_phi;
  const double gamma = spectral_gap(chain);
  double brace1 = 1.0, brace2 = 1.0;
  bool ordered = true;
  for (std::size_t i = 0; i < m; ++i) {
    brace1 += detail::inv_or_zero(phi * (kappas[i] * inv_phi_i[i] + total_mass), gaps[i]);
    brace2 += detail::inv_or_zero(kappas[i] + phi * total_mass, gaps[i]);
    ordered = ordered && inv_phi_i[i] <= inv_phi * (1.0 + kBoundSlack);
  }
  BoundReport a{"multi_cover_gap_lower", gamma};
  a.lower = phi / brace1;
  a.applicable = true;
  a.diag("phi", phi).diag("harmonic_order", ordered ? 1.0 : 0.0);
  a.finalize();
  a.satisfied = a.satisfied && ordered;
  BoundReport b{"multi_cover_gap_lower_simple", gamma};
  b.lower = phi / brace2;
  b.applicable = true;
  b.diag("phi", phi);
  b.finalize();
  return {a, b};
}

struct VerifyOptions {
  double threshold = 0.1;
  std::vector<double> t_grid{0.5, 1.0, 2.0, 4.0};
};

/// All bound reports for one (kappa, lambda); hypothesis rows are informational (applicable=false).
inline std::vector<BoundReport> verify_bounds(const CoverAnalysis& a, double kappa, double lambda,
                                              const VerifyOptions& opt = {}) {
  std::vector<BoundReport> out;
  HypothesisDiagnostics h = diagnose_hypotheses(a, kappa, lambda, opt.threshold);
  auto flag = [&](const char* name, bool v) {
    BoundReport r{name, v ? 1.0 : 0.0};
    out.push_back(r);
  };
  flag("irreducible_R", h.irreducible_R);
  flag("irreducible_S", h.irreducible_S);
  flag("irreducible_R_minus_S", h.irreducible_r_minus_s);
  flag("irreducible_S_minus_R", h.irreducible_s_minus_r);
  BoundReport w{"windows", h.windows_hold() ? 1.0 : 0.0};
  w.diagnostics = h.entries();
  out.push_back(w);
  if (!h.irreducibility_holds() || !(kappa > 0.0) || !(lambda > 0.0)) return out;

  BoundContext c = make_context(a, kappa, lambda);
  auto append = [&](std::vector<BoundReport> v) { out.insert(out.end(), v.begin(), v.end()); };
  std::vector<BoundReport> gaps = gap_bounds(c);
  append(gaps);
  std::vector<BoundReport> multi = multi_cover_gap_lower(*a.chain, {a.cover.R, a.cover.S}, {kappa, lambda});
  append(multi);
  // With two sets the simple multi-cover bound coincides with the two-set gap lower bound.
  BoundReport same{"multi_cover_two_set_agreement", *multi[1].lower};
  same.lower = same.upper = *gaps[0].lower;
  same.applicable = true;
  same.finalize();
  out.push_back(same);
  append(exit_rate_bounds(c));
  out.push_back(capacity_upper(c));
  append(potential_mean_bounds(c));
  append(whole_space_bounds(c));
  append(ratio_check(c, h));
  append(exit_rate_elementary(c));
  append(density_bounds(c));
  if (a.chain->size() <= kExactSemigroupLimit) {
    append(survival_envelope(c, opt.t_grid));
    append(killing_time_bounds(c, [&] {
      std::vector<double> s(a.chain->size(), 0.0);
      for (int r : a.cover.R) s[r] = a.chain->mu(r) / a.mass_R;
      return s;
    }(), opt.t_grid));
  }
  return out;
}

}  // namespace softcap
