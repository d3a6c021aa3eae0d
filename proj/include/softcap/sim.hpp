// Copyright 2026 The softcap Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "softcap/bounds.hpp"
#include "softcap/capacity.hpp"
#include "softcap/chain.hpp"
#include "softcap/killed.hpp"

namespace softcap {

// ---------------------------------------------------------------------------
// Random numbers

inline constexpr const char* kRngAlgorithm = "mt19937_64 seeded by splitmix64(master, index)";

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of the independent stream number `index` under `master`.
inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t master, std::uint64_t index) : engine_(stream_seed(master, index)) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  /// Exponential with the given rate (> 0).
  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

/// Sampler for a finite distribution given by non-negative weights.
class Categorical {
 public:
  Categorical() = default;
  explicit Categorical(std::span<const double> weights) {
    cum_.reserve(weights.size());
    double s = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) detail::fail(ErrorCode::InvalidMeasure, "weights must be finite and non-negative");
      cum_.push_back(s += w);
    }
    if (!(s > 0.0)) detail::fail(ErrorCode::InvalidMeasure, "weights sum to zero");
  }
  int operator()(Rng& rng) const {
    const double u = rng.uniform() * cum_.back();
    auto it = std::upper_bound(cum_.begin(), cum_.end(), u);
    int k = static_cast<int>(it - cum_.begin());
    k = std::min(k, static_cast<int>(cum_.size()) - 1);
    while (k > 0 && cum_[k] == cum_[k - 1]) --k;  // never land on a zero-weight entry
    return k;
  }

 private:
  std::vector<double> cum_;
};

// ---------------------------------------------------------------------------
// Parallel execution

/// Worker count: hardware concurrency, capped by SOFTCAP_THREADS when set.
inline unsigned worker_count() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SOFTCAP_THREADS")) {
    char* end = nullptr;
    long cap = std::strtol(env, &end, 10);
    if (end != env && cap > 0) n = std::min(n, static_cast<unsigned>(cap));
  }
  return n;
}

/// Runs fn(i) for i in [0, n). Results must be written to per-index slots, which keeps output
/// independent of scheduling.
template <class F>
void parallel_for(std::size_t n, F&& fn) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(worker_count(), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  auto work = [&] {
    try {
      for (std::size_t i; (i = next.fetch_add(1)) < n && !failed.load();) fn(i);
    } catch (...) {
      if (!failed.exchange(true)) error = std::current_exception();
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Dynamics

/// A continuous-time jump process with an R/S cover given by predicates.
/// jump(s, u) moves s to a neighbour chosen with probability w(s, .)/w(s), where u is uniform on [0, exit_rate(s)).
template <class D>
concept Dynamics = requires(const D& d, typename D::state_type& s, const typename D::state_type& cs, double u) {
  typename D::state_type;
  { d.exit_rate(cs) } -> std::convertible_to<double>;
  { d.jump(s, u) };
  { d.in_R(cs) } -> std::convertible_to<bool>;
  { d.in_S(cs) } -> std::convertible_to<bool>;
};

/// Explicit dynamics over a ReversibleChain with cumulative rate tables.
class ChainDynamics {
 public:
  using state_type = int;

  ChainDynamics(const ReversibleChain& chain, const CoverPair& cover)
      : offsets_(chain.size() + 1, 0), exit_(chain.size()), in_r_(chain.size()), in_s_(chain.size()) {
    for (std::size_t x = 0; x < chain.size(); ++x) {
      double c = 0.0;
      for (const Edge& e : chain.out(static_cast<int>(x))) {
        targets_.push_back(e.to);
        cum_.push_back(c += e.rate);
      }
      offsets_[x + 1] = targets_.size();
      exit_[x] = chain.exit_rate(static_cast<int>(x));
      in_r_[x] = cover.R.contains(static_cast<int>(x));
      in_s_[x] = cover.S.contains(static_cast<int>(x));
    }
  }

  double exit_rate(int x) const { return exit_[x]; }
  void jump(int& x, double u) const {
    const auto first = cum_.begin() + static_cast<std::ptrdiff_t>(offsets_[x]);
    const auto last = cum_.begin() + static_cast<std::ptrdiff_t>(offsets_[x + 1]);
    auto it = std::upper_bound(first, last, u);
    if (it == last) --it;
    x = targets_[static_cast<std::size_t>(it - cum_.begin())];
  }
  bool in_R(int x) const { return in_r_[x]; }
  bool in_S(int x) const { return in_s_[x]; }
  std::size_t size() const { return exit_.size(); }

 private:
  std::vector<std::size_t> offsets_;
  std::vector<int> targets_;
  std::vector<double> cum_;
  std::vector<double> exit_;
  std::vector<char> in_r_, in_s_;
};
static_assert(Dynamics<ChainDynamics>);

enum class Termination { KappaOnR, LambdaOnS, Horizon };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::KappaOnR: return "kappa";
    case Termination::LambdaOnS: return "lambda";
    case Termination::Horizon: return "horizon";
  }
  return "?";
}

/// Advances `x` from time `clock` until the kappa_R or lambda_S clock fires or `horizon` is reached.
/// on_segment(state, holding_time) is called for every visit, including the last (possibly truncated) one.
/// The killed process stays at the state where the clock fired.
template <Dynamics D, class OnSegment>
Termination run_until_killed(const D& dyn, typename D::state_type& x, double kappa, double lambda, double horizon,
                             Rng& rng, double& clock, OnSegment&& on_segment) {
  while (true) {
    const double w = dyn.exit_rate(x);
    const double k = dyn.in_R(x) ? kappa : 0.0;
    const double l = dyn.in_S(x) ? lambda : 0.0;
    const double total = w + k + l;
    if (!(total > 0.0)) {
      if (!std::isfinite(horizon)) detail::fail(ErrorCode::InvalidArgument, "absorbing state with an infinite horizon");
      on_segment(static_cast<const typename D::state_type&>(x), horizon - clock);
      clock = horizon;
      return Termination::Horizon;
    }
    const double dt = rng.exponential(total);
    if (clock + dt >= horizon) {
      on_segment(static_cast<const typename D::state_type&>(x), horizon - clock);
      clock = horizon;
      return Termination::Horizon;
    }
    on_segment(static_cast<const typename D::state_type&>(x), dt);
    clock += dt;
    const double u = rng.uniform() * total;
    if (u < w || (k == 0.0 && l == 0.0)) {
      dyn.jump(x, std::min(u, std::nextafter(w, 0.0)));
    } else if (u < w + k || l == 0.0) {
      return Termination::KappaOnR;
    } else {
      return Termination::LambdaOnS;
    }
  }
}

/// One simulated path of the killed process with its local times.
template <class State>
struct BasicTrajectoryRecord {
  std::vector<std::pair<State, double>> segments;
  Termination termination = Termination::Horizon;
  double total_time = 0.0;
  double local_time_R = 0.0;
  double local_time_S = 0.0;
  double local_time_both = 0.0;
  State final_state{};
  std::uint64_t seed = 0;
};

using TrajectoryRecord = BasicTrajectoryRecord<int>;

template <Dynamics D>
BasicTrajectoryRecord<typename D::state_type> simulate(const D& dyn, typename D::state_type start, double kappa,
                                                       double lambda, double horizon, std::uint64_t seed,
                                                       bool keep_segments = true) {
  if (!(kappa >= 0.0) || !(lambda >= 0.0) || !std::isfinite(kappa) || !std::isfinite(lambda))
    detail::fail(ErrorCode::InvalidArgument, "simulation needs finite kappa, lambda >= 0");
  if (!(horizon > 0.0)) detail::fail(ErrorCode::InvalidArgument, "horizon must be positive");
  BasicTrajectoryRecord<typename D::state_type> rec;
  rec.seed = seed;
  Rng rng(seed);
  double clock = 0.0;
  auto x = std::move(start);
  rec.termination = run_until_killed(dyn, x, kappa, lambda, horizon, rng, clock, [&](const auto& s, double dt) {
    const bool r = dyn.in_R(s), sv = dyn.in_S(s);
    if (r) rec.local_time_R += dt;
    if (sv) rec.local_time_S += dt;
    if (r && sv) rec.local_time_both += dt;
    if (keep_segments) rec.segments.emplace_back(s, dt);
  });
  rec.total_time = clock;
  rec.final_state = std::move(x);
  return rec;
}

/// Chain version with the start drawn from a distribution over states.
inline TrajectoryRecord simulate(const ReversibleChain& chain, const CoverPair& cover, double kappa, double lambda,
                                 std::span<const double> start, double horizon, std::uint64_t seed) {
  if (start.size() != chain.size()) detail::fail(ErrorCode::DimensionMismatch, "start distribution length differs");
  Rng pick(seed, 0xfffffffffULL);
  int x0 = Categorical(start)(pick);
  return simulate(ChainDynamics(chain, cover), x0, kappa, lambda, horizon, seed);
}

/// (1/theta) * integral of f(X(s)) over [t, t + theta], from segment arithmetic.
template <class State, class F>
  requires std::invocable<F&, const State&>
double time_average(const BasicTrajectoryRecord<State>& rec, F&& f, double theta, double t) {
  if (!(theta > 0.0) || t < 0.0 || t + theta > rec.total_time * (1.0 + 1e-15))
    detail::fail(ErrorCode::WindowOutOfRange, "averaging window outside the recorded path");
  double start = 0.0, acc = 0.0;
  const double end = t + theta;
  for (const auto& [s, dt] : rec.segments) {
    const double lo = std::max(start, t), hi = std::min(start + dt, end);
    if (hi > lo) acc += (hi - lo) * static_cast<double>(f(s));
    start += dt;
    if (start >= end) break;
  }
  return acc / theta;
}

inline double time_average(const TrajectoryRecord& rec, std::span<const double> f, double theta, double t) {
  return time_average(rec, [&](int x) { return f[x]; }, theta, t);
}

// ---------------------------------------------------------------------------
// Statistics

/// sup |F_n - F| for the empirical distribution of `samples`.
template <class Cdf>
double ks_statistic(std::vector<double> samples, Cdf&& cdf) {
  if (samples.empty()) detail::fail(ErrorCode::EmptySample, "KS statistic of an empty sample");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double F = cdf(samples[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - F, F - static_cast<double>(i) / n});
  }
  return d;
}

inline double exponential_cdf(double rate, double x) { return x <= 0.0 ? 0.0 : -std::expm1(-rate * x); }

/// 99% Kolmogorov-Smirnov acceptance threshold.
inline double ks_threshold(std::size_t n) { return 1.63 / std::sqrt(static_cast<double>(n)); }

struct MeanEstimate {
  double mean = 0.0;
  double sem = 0.0;
};

inline MeanEstimate mean_and_sem(std::span<const double> v) {
  MeanEstimate m;
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double s = 0.0;
  for (double x : v) s += x;
  m.mean = s / static_cast<double>(v.size());
  if (v.size() < 2) {
    m.sem = std::numeric_limits<double>::quiet_NaN();
    return m;
  }
  double ss = 0.0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.sem = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  return m;
}

/// Total variation between the empirical law of `draws` (state indices) and `target` over all states.
inline double empirical_tv(std::span<const int> draws, std::span<const double> target) {
  std::vector<double> freq(target.size(), 0.0);
  for (int x : draws) freq[x] += 1.0;
  double tv = 0.0;
  for (std::size_t x = 0; x < target.size(); ++x) tv += std::abs(freq[x] / static_cast<double>(draws.size()) - target[x]);
  return 0.5 * tv;
}

/// Bootstrap standard error of empirical_tv with `reps` resamples.
inline double bootstrap_tv_se(std::span<const int> draws, std::span<const double> target, std::uint64_t seed,
                              int reps = 200) {
  if (draws.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  Rng rng(seed);
  std::vector<int> resample(draws.size());
  std::vector<double> stats;
  stats.reserve(static_cast<std::size_t>(reps));
  for (int b = 0; b < reps; ++b) {
    for (auto& r : resample) r = draws[static_cast<std::size_t>(rng.uniform() * static_cast<double>(draws.size()))];
    stats.push_back(empirical_tv(resample, target));
  }
  MeanEstimate m = mean_and_sem(stats);
  return m.sem * std::sqrt(static_cast<double>(reps));
}

// ---------------------------------------------------------------------------
// Experiment reports

/// A statistical comparison `value <relation> bound`; undefined checks are reported but do not fail.
struct Check {
  std::string name;
  double value = 0.0;
  double bound = 0.0;
  std::string relation = "<=";
  bool defined = true;
  bool passed = true;
};

inline Check make_check(std::string name, double value, std::string relation, double bound) {
  Check c{std::move(name), value, bound, std::move(relation), true, true};
  c.defined = std::isfinite(value) && !std::isnan(bound);
  if (c.defined) c.passed = c.relation == "<=" ? value <= bound : value >= bound;
  return c;
}

struct ExperimentReport {
  std::string experiment;
  std::uint64_t seed = 0;
  std::size_t n = 0;
  std::vector<std::pair<std::string, double>> estimates;
  std::vector<Check> checks;

  void put(std::string key, double v) { estimates.emplace_back(std::move(key), v); }
  double estimate(const std::string& key) const {
    for (const auto& [k, v] : estimates)
      if (k == key) return v;
    detail::fail(ErrorCode::InvalidArgument, "no estimate named " + key);
  }
  const Check& check(const std::string& key) const {
    for (const auto& c : checks)
      if (c.name == key) return c;
    detail::fail(ErrorCode::InvalidArgument, "no check named " + key);
  }
  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
  }
};

// ---------------------------------------------------------------------------
// Local exit times

/// N samples of the local time in R at the lambda_S killing time, started from `start`.
template <Dynamics D>
std::vector<double> sample_local_exit_times(const D& dyn, std::span<const double> start_weights,
                                            std::function<typename D::state_type(int)> state_at, double lambda,
                                            std::size_t n, std::uint64_t seed) {
  std::vector<double> out(n);
  if (n == 0) return out;
  Categorical pick(start_weights);
  parallel_for(n, [&](std::size_t i) {
    Rng rng(seed, i);
    auto x = state_at(pick(rng));
    double clock = 0.0, local = 0.0;
    run_until_killed(dyn, x, 0.0, lambda, std::numeric_limits<double>::infinity(), rng, clock,
                     [&](const auto& s, double dt) {
                       if (dyn.in_R(s)) local += dt;
                     });
    out[i] = local;
  });
  return out;
}

inline std::vector<double> sample_local_exit_times(const ReversibleChain& chain, const CoverPair& cover,
                                                   double lambda, std::span<const double> start, std::size_t n,
                                                   std::uint64_t seed) {
  if (start.size() != chain.size()) detail::fail(ErrorCode::DimensionMismatch, "start distribution length differs");
  if (!(lambda > 0.0) || !std::isfinite(lambda)) detail::fail(ErrorCode::InvalidArgument, "lambda must be finite and positive");
  ChainDynamics dyn(chain, cover);
  return sample_local_exit_times<ChainDynamics>(dyn, start, [](int x) { return x; }, lambda, n, seed);
}

/// mu*_{R,lambda_S} extended by zero to all states.
inline std::vector<double> soft_measure_on_all(const ReversibleChain& chain, const CoverPair& cover, double lambda) {
  return extend_to(soft_measure(chain, cover, lambda), Subset::all(chain.size()), chain).measure;
}

inline std::vector<double> restricted_measure_on_all(const ReversibleChain& chain, const Subset& a) {
  std::vector<double> v(chain.size(), 0.0);
  const double m = mass(chain, a);
  for (int x : a) v[x] = chain.mu(x) / m;
  return v;
}

/// Exponential law of the local exit time from the soft measure: KS against Exp(phi*).
inline ExperimentReport exit_law_experiment(const ReversibleChain& chain, const CoverPair& cover, double lambda,
                                            std::size_t n, std::uint64_t seed) {
  ExperimentReport rep{"exit-law", seed, n, {}, {}};
  QuasiStationaryResult q = soft_measure(chain, cover, lambda);
  auto start = extend_to(q, Subset::all(chain.size()), chain).measure;
  auto samples = sample_local_exit_times(chain, cover, lambda, start, n, seed);
  rep.put("phi_star", q.rate);
  rep.put("lambda", lambda);
  MeanEstimate m = mean_and_sem(samples);
  rep.put("mean_local_time", m.mean);
  rep.put("mean_local_time_sem", m.sem);
  rep.put("expected_mean", 1.0 / q.rate);
  if (n == 0) {
    rep.checks.push_back(Check{"ks_exponential", std::numeric_limits<double>::quiet_NaN(), 0.0, "<=", false, true});
    return rep;
  }
  const double ks = ks_statistic(samples, [&](double x) { return exponential_cdf(q.rate, x); });
  rep.checks.push_back(make_check("ks_exponential", ks, "<=", ks_threshold(n)));
  return rep;
}

// ---------------------------------------------------------------------------
// T* construction

struct TStarOutcome {
  double t_star = 0.0;
  bool branch_R = true;
  int iterations = 0;
  int final_state = 0;
  std::vector<std::pair<double, Termination>> tau;
};

/// Restarts competing kappa_R / lambda_S clocks from X(tau^{i-1}) until the clock that fires agrees
/// with alpha(X(tau^{i-1})): kappa with alpha >= 1/2 (branch R) or lambda with alpha <= 1/2 (branch S, or R on a tie).
template <Dynamics D, class Alpha>
TStarOutcome construct_t_star(const D& dyn, typename D::state_type& x, Alpha&& alpha, double kappa, double lambda,
                              Rng& rng, bool keep_tau = false) {
  TStarOutcome out;
  double clock = 0.0;
  while (true) {
    const double a = alpha(static_cast<const typename D::state_type&>(x));
    Termination t = run_until_killed(dyn, x, kappa, lambda, std::numeric_limits<double>::infinity(), rng, clock,
                                     [](const auto&, double) {});
    ++out.iterations;
    if (keep_tau) out.tau.emplace_back(clock, t);
    // At alpha = 1/2 either clock stops the construction and the stop is labelled branch R.
    if ((t == Termination::KappaOnR && a >= 0.5) || (t == Termination::LambdaOnS && a <= 0.5)) {
      out.branch_R = t == Termination::KappaOnR || a == 0.5;
      break;
    }
  }
  out.t_star = clock;
  return out;
}

inline TStarOutcome construct_t_star(const ReversibleChain& chain, const CoverPair& cover, double kappa, double lambda,
                                     int start, std::uint64_t seed) {
  if (!(kappa > 0.0) || !(lambda > 0.0) || !std::isfinite(kappa) || !std::isfinite(lambda))
    detail::fail(ErrorCode::InvalidArgument, "T* needs finite kappa, lambda > 0");
  ChainDynamics dyn(chain, cover);
  auto alpha = equilibrium_potential(chain, cover, kappa, lambda);
  Rng rng(seed);
  int x = start;
  TStarOutcome o = construct_t_star(dyn, x, [&](int s) { return alpha[s]; }, kappa, lambda, rng, true);
  o.final_state = x;
  return o;
}

/// Width added to the KS threshold for the rescaled exit time after T*.
inline double post_tstar_corridor(double phi, double rate, double eps) {
  return (std::exp(std::sqrt(phi / rate)) - 1.0) + std::exp(-std::sqrt(rate / phi)) + tv_from_epsilon(eps);
}

/// Monte Carlo check of the T* properties: mean, conditional laws, branch probability, post-T* exponential law.
inline ExperimentReport thermalization_experiment(const ReversibleChain& chain, const CoverPair& cover, double kappa,
                                                  double lambda, std::span<const double> start, std::size_t n,
                                                  std::uint64_t seed) {
  if (!(kappa > 0.0) || !(lambda > 0.0) || !std::isfinite(kappa) || !std::isfinite(lambda))
    detail::fail(ErrorCode::InvalidArgument, "T* needs finite kappa, lambda > 0");
  if (start.size() != chain.size()) detail::fail(ErrorCode::DimensionMismatch, "start distribution length differs");
  ExperimentReport rep{"thermalization", seed, n, {}, {}};
  const CoverAnalysis a = analyze_cover(chain, cover);
  const BoundContext ctx = make_context(a, kappa, lambda);
  const auto& alpha = ctx.capacity.potential;
  const double phi_R = ctx.phi_R(), phi_S = ctx.phi_S();

  ChainDynamics dyn(chain, cover);
  Categorical pick(start);
  std::vector<double> tstar(n), post(n);
  std::vector<int> final_state(n), first_hit(n);
  std::vector<char> branch(n);
  parallel_for(n, [&](std::size_t i) {
    Rng rng(seed, i);
    int x = pick(rng);
    TStarOutcome o = construct_t_star(dyn, x, [&](int s) { return alpha[s]; }, kappa, lambda, rng);
    tstar[i] = o.t_star;
    branch[i] = o.branch_R ? 1 : 0;
    final_state[i] = x;
    first_hit[i] = (o.iterations == 1 && o.branch_R) ? 1 : 0;
    double clock = 0.0;
    if (o.branch_R)
      run_until_killed(dyn, x, 0.0, lambda, std::numeric_limits<double>::infinity(), rng, clock, [](const auto&, double) {});
    else
      run_until_killed(dyn, x, kappa, 0.0, std::numeric_limits<double>::infinity(), rng, clock, [](const auto&, double) {});
    post[i] = clock * (o.branch_R ? phi_R : phi_S);
  });

  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double m = std::min(kappa, lambda);
  MeanEstimate t = mean_and_sem(tstar);
  rep.put("kappa", kappa);
  rep.put("lambda", lambda);
  rep.put("mean_t_star", t.mean);
  rep.put("mean_t_star_sem", t.sem);
  rep.checks.push_back(make_check("mean_t_star", t.mean, "<=", 2.0 / m + 3.0 * (std::isnan(t.sem) ? 0.0 : t.sem)));

  std::vector<int> on_r, on_s;
  std::vector<double> post_r, post_s;
  for (std::size_t i = 0; i < n; ++i) {
    (branch[i] ? on_r : on_s).push_back(final_state[i]);
    (branch[i] ? post_r : post_s).push_back(post[i]);
  }
  rep.put("branch_R_count", static_cast<double>(on_r.size()));
  rep.put("branch_S_count", static_cast<double>(on_s.size()));

  auto tv_check = [&](const char* name, const std::vector<int>& draws, const Subset& set, double rate, double gap,
                      double chi_v, std::uint64_t boot_seed) {
    const double bound = 3.0 * mixing_term(rate, gap, chi_v);
    if (draws.size() < 2) {
      rep.put(std::string(name) + "_tv", nan);
      rep.checks.push_back(Check{std::string(name) + "_tv", nan, bound, "<=", false, true});
      return;
    }
    auto target = restricted_measure_on_all(chain, set);
    const double tv = empirical_tv(draws, target);
    const double se = bootstrap_tv_se(draws, target, boot_seed);
    rep.put(std::string(name) + "_tv", tv);
    rep.put(std::string(name) + "_tv_se", se);
    rep.put(std::string(name) + "_tv_bound", bound);
    rep.checks.push_back(make_check(std::string(name) + "_tv", tv, "<=", bound + 3.0 * se));
  };
  tv_check("branch_R", on_r, cover.R, kappa, a.gamma_R, a.chi_R, stream_seed(seed, n + 1));
  tv_check("branch_S", on_s, cover.S, lambda, a.gamma_S, a.chi_S, stream_seed(seed, n + 2));

  double delta = 1.0;
  for (std::size_t x = 0; x < chain.size(); ++x) delta -= start[x] * alpha[x];
  delta = std::clamp(delta, 0.0, 1.0);
  std::vector<double> hits(first_hit.begin(), first_hit.end());
  MeanEstimate h = mean_and_sem(hits);
  rep.put("delta", delta);
  rep.put("first_clock_R_frequency", h.mean);
  rep.checks.push_back(make_check("first_clock_R_frequency", h.mean, ">=",
                                  1.0 - 3.0 * delta - 3.0 * (std::isnan(h.sem) ? 0.0 : h.sem)));

  auto ks_check = [&](const char* name, const std::vector<double>& v, double phi, double rate, double eps) {
    const double width = post_tstar_corridor(phi, rate, eps);
    if (v.empty()) {
      rep.checks.push_back(Check{name, nan, width, "<=", false, true});
      return;
    }
    const double ks = ks_statistic(v, [](double x) { return exponential_cdf(1.0, x); });
    rep.put(std::string(name) + "_corridor", width);
    rep.checks.push_back(make_check(name, ks, "<=", ks_threshold(v.size()) + width));
  };
  ks_check("post_exit_ks_R", post_r, phi_R, lambda, ctx.eps_R);
  ks_check("post_exit_ks_S", post_s, phi_S, kappa, ctx.eps_S);
  return rep;
}

// ---------------------------------------------------------------------------
// Time averages

struct TimeAverageConfig {
  double eta = 0.2;
  double theta = 0.0;
  double theta_prime = 0.0;
  double k1 = 0.0;
  double delta = 0.0;  // 4 eta ||f||_inf
  double phi_star = 0.0;
  double epsilon = 0.0;
  std::size_t n_cycles = 0;
};

/// Derives the window length from eta, or raises ConfigInfeasible when eta violates the constraints.
inline TimeAverageConfig time_average_config(double eta, double phi_star, double epsilon, double lambda,
                                             double f_sup) {
  if (!(epsilon < 1.0)) detail::fail(ErrorCode::ConfigInfeasible, "epsilon* >= 1");
  if (!(eta > 0.0 && eta < 1.0)) detail::fail(ErrorCode::ConfigInfeasible, "eta must lie in (0, 1)");
  if (eta * eta * eta < phi_star / lambda) detail::fail(ErrorCode::ConfigInfeasible, "eta^3 < phi*/lambda");
  if (eta * eta * eta * eta < std::sqrt(epsilon)) detail::fail(ErrorCode::ConfigInfeasible, "eta^4 < sqrt(epsilon*)");
  TimeAverageConfig c;
  c.eta = eta;
  c.phi_star = phi_star;
  c.epsilon = epsilon;
  c.theta = std::max(1.0 / lambda, std::sqrt(epsilon) / (eta * phi_star)) / (eta * eta);
  c.theta_prime = eta * c.theta;
  c.k1 = epsilon > 0.0 ? eta / std::sqrt(epsilon) : std::numeric_limits<double>::infinity();
  c.delta = 4.0 * eta * f_sup;
  return c;
}

/// Prefix integrals of f at the grid points j*theta' and j*theta' + theta, accumulated on the fly.
class WindowGrid {
 public:
  WindowGrid(double theta, double theta_prime) : theta_(theta), step_(theta_prime) {}

  void advance(double value, double dt) {
    const double end = clock_ + dt;
    while (true) {
      const double next_start = static_cast<double>(starts_.size()) * step_;
      const double next_end = static_cast<double>(ends_.size()) * step_ + theta_;
      const double p = std::min(next_start, next_end);
      if (p > end) break;
      const double v = integral_ + value * (p - clock_);
      if (next_start <= next_end) starts_.push_back(v);
      if (next_end <= next_start) ends_.push_back(v);
    }
    integral_ += value * dt;
    clock_ = end;
  }
  /// Largest |A_theta(j theta', f) - target| over windows ending before `limit`; -1 if no window fits.
  double sup_deviation(double target, double limit) const {
    double worst = -1.0;
    for (std::size_t j = 0; j < ends_.size() && j < starts_.size(); ++j) {
      if (static_cast<double>(j) * step_ + theta_ >= limit) break;
      worst = std::max(worst, std::abs((ends_[j] - starts_[j]) / theta_ - target));
    }
    return worst;
  }

 private:
  double theta_, step_;
  double clock_ = 0.0, integral_ = 0.0;
  std::vector<double> starts_, ends_;
};

/// Frequency of {theta < T_1, all grid windows before T_1 - theta within 4 eta ||f|| of mu_R(f)} from mu_R.
inline ExperimentReport time_average_experiment(const ReversibleChain& chain, const CoverPair& cover, double kappa,
                                                double lambda, std::span<const double> f, double eta, std::size_t n,
                                                std::uint64_t seed, std::size_t n_cycles = 0) {
  if (f.size() != chain.size()) detail::fail(ErrorCode::DimensionMismatch, "observable length differs");
  if (!(lambda > 0.0) || !std::isfinite(lambda)) detail::fail(ErrorCode::InvalidArgument, "lambda must be finite and positive");
  ExperimentReport rep{"time-average", seed, n, {}, {}};
  QuasiStationaryResult q = soft_measure(chain, cover, lambda);
  const double gap = restricted_lambda_chain(chain, cover, lambda).gap;
  const double eps = std::isinf(gap) ? 0.0 : q.rate / gap;
  double f_sup = 0.0;
  for (double v : f) f_sup = std::max(f_sup, std::abs(v));
  const TimeAverageConfig cfg = time_average_config(eta, q.rate, eps, lambda, f_sup);
  const auto mu_r = restricted_measure_on_all(chain, cover.R);
  const auto mu_s = restricted_measure_on_all(chain, cover.S);
  double mean_r = 0.0, mean_s = 0.0;
  for (std::size_t x = 0; x < chain.size(); ++x) mean_r += mu_r[x] * f[x], mean_s += mu_s[x] * f[x];
  if (n_cycles > 0 && !(kappa > 0.0 && std::isfinite(kappa)))
    detail::fail(ErrorCode::InvalidArgument, "cycles need finite kappa > 0");

  ChainDynamics dyn(chain, cover);
  Categorical pick(mu_r);
  std::vector<double> ok(n), cycles_ok(n), t1(n);
  parallel_for(n, [&](std::size_t i) {
    Rng rng(seed, i);
    int x = pick(rng);
    double clock = 0.0;
    WindowGrid grid(cfg.theta, cfg.theta_prime);
    run_until_killed(dyn, x, 0.0, lambda, std::numeric_limits<double>::infinity(), rng, clock,
                     [&](int s, double dt) { grid.advance(f[s], dt); });
    t1[i] = clock;
    const bool good = cfg.theta < clock && grid.sup_deviation(mean_r, clock) <= cfg.delta;
    ok[i] = good ? 1.0 : 0.0;
    bool all = good;
    for (std::size_t c = 0; c < 2 * n_cycles && all; ++c) {
      const bool s_phase = c % 2 == 0;
      WindowGrid g(cfg.theta, cfg.theta_prime);
      double local = 0.0;
      run_until_killed(dyn, x, s_phase ? kappa : 0.0, s_phase ? 0.0 : lambda, std::numeric_limits<double>::infinity(),
                       rng, local, [&](int s, double dt) { g.advance(f[s], dt); });
      all = cfg.theta < local && g.sup_deviation(s_phase ? mean_s : mean_r, local) <= cfg.delta;
    }
    cycles_ok[i] = all ? 1.0 : 0.0;
  });
  rep.put("eta", cfg.eta);
  rep.put("theta", cfg.theta);
  rep.put("theta_prime", cfg.theta_prime);
  rep.put("k1", cfg.k1);
  rep.put("delta", cfg.delta);
  rep.put("phi_star", cfg.phi_star);
  rep.put("epsilon_star", cfg.epsilon);
  rep.put("mu_R_f", mean_r);
  MeanEstimate t = mean_and_sem(t1);
  rep.put("mean_T1", t.mean);
  MeanEstimate s = mean_and_sem(ok);
  const double brace = 1.0 - 4.0 * eta - std::sqrt(eps / (1.0 - eps));
  rep.put("success_frequency", s.mean);
  rep.put("success_frequency_sem", s.sem);
  rep.put("success_lower_bound", brace);
  rep.checks.push_back(make_check("success_frequency", s.mean, ">=", brace - 3.0 * (std::isnan(s.sem) ? 0.0 : s.sem)));
  if (n_cycles > 0) rep.put("cycles_success_frequency", mean_and_sem(cycles_ok).mean);
  return rep;
}

// ---------------------------------------------------------------------------
// Law at the kappa_R clock

/// Empirical law of X(T_{kappa_R}) and survival of the lambda_S clock from `start`, against the exact bounds.
inline ExperimentReport killing_law_experiment(const ReversibleChain& chain, const CoverPair& cover, double kappa,
                                               double lambda, std::span<const double> start, std::size_t n,
                                               std::uint64_t seed, const std::vector<double>& t_grid = {0.5, 1.0, 2.0}) {
  if (!(kappa > 0.0) || !(lambda > 0.0) || !std::isfinite(kappa) || !std::isfinite(lambda))
    detail::fail(ErrorCode::InvalidArgument, "needs finite kappa, lambda > 0");
  if (start.size() != chain.size()) detail::fail(ErrorCode::DimensionMismatch, "start distribution length differs");
  ExperimentReport rep{"killing-law", seed, n, {}, {}};
  const CoverAnalysis a = analyze_cover(chain, cover);
  const BoundContext ctx = make_context(a, kappa, lambda);
  const double phi = ctx.phi_R();
  ChainDynamics dyn(chain, cover);
  Categorical pick(start);
  std::vector<int> at_kill(n);
  std::vector<double> survival_time(n);
  parallel_for(n, [&](std::size_t i) {
    Rng rng(seed, i);
    const int x0 = pick(rng);
    int x = x0;
    double clock = 0.0;
    run_until_killed(dyn, x, kappa, 0.0, std::numeric_limits<double>::infinity(), rng, clock, [](int, double) {});
    at_kill[i] = x;
    x = x0;
    clock = 0.0;
    run_until_killed(dyn, x, 0.0, lambda, std::numeric_limits<double>::infinity(), rng, clock, [](int, double) {});
    survival_time[i] = clock;
  });
  const double bound = mixing_term(kappa, a.gamma_R, a.chi_R);
  rep.put("tv_bound", bound);
  rep.put("phi_star", phi);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (n < 2) {
    rep.checks.push_back(Check{"killing_law_tv", nan, bound, "<=", false, true});
    return rep;
  }
  auto mu_r = restricted_measure_on_all(chain, cover.R);
  const double tv = empirical_tv(at_kill, mu_r);
  const double se = bootstrap_tv_se(at_kill, mu_r, stream_seed(seed, n + 1));
  rep.put("killing_law_tv", tv);
  rep.put("killing_law_tv_se", se);
  rep.checks.push_back(make_check("killing_law_tv", tv, "<=", bound + 3.0 * se));

  auto exact = killing_time_bounds(ctx, std::vector<double>(start.begin(), start.end()), t_grid);
  for (const auto& r : exact) {
    if (r.name.rfind("killing_envelope", 0) != 0) continue;
    const std::string t_label = r.name.substr(r.name.find('['));
    const double t = std::stod(t_label.substr(3, t_label.size() - 4));
    double count = 0.0;
    for (double s : survival_time) count += s > t / phi ? 1.0 : 0.0;
    const double p = count / static_cast<double>(n);
    const double se_p = std::sqrt(std::max(p * (1.0 - p), 1.0 / static_cast<double>(n)) / static_cast<double>(n));
    rep.put("survival" + t_label, p);
    rep.put("survival_exact" + t_label, r.exact);
    if (r.applicable) {
      rep.checks.push_back(make_check("survival_lower" + t_label, p, ">=", *r.lower - 3.0 * se_p));
      rep.checks.push_back(make_check("survival_upper" + t_label, p, "<=", *r.upper + 3.0 * se_p));
    }
  }
  return rep;
}

}  // namespace softcap
