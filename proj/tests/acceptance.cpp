// Copyright 2026 The softcap Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "softcap/softcap.hpp"

using namespace softcap;

namespace {

// Tolerances and sample sizes.
constexpr double kClosedFormTol = 1e-12;
constexpr double kDualityTol = 1e-9;
constexpr double kVariationalSlack = 1e-12;
constexpr double kMonotoneSlack = 1e-10;
constexpr double kHardLimitTol = 1e-6;
constexpr double kOracleTol = 1e-9;
constexpr std::size_t kExitLawSamples = 100000;
constexpr std::size_t kThermalizationSamples = 10000;
constexpr std::size_t kTimeAverageSamples = 1000;
constexpr std::size_t kIsingSamples = 10000;
constexpr double kTimeAverageEta = 0.2;
constexpr double kTimeAverageBeta = 7.0;
constexpr std::uint64_t kSeed = 7;

/// Collects failure messages for one criterion.
struct Verdict {
  std::vector<std::string> failures;
  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  void near(double got, double want, double tol, const std::string& what) {
    std::ostringstream s;
    s.precision(17);
    s << what << ": got " << got << " want " << want;
    expect(std::abs(got - want) <= tol, s.str());
  }
};

double vec_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) num = std::max(num, std::abs(a[i] - b[i])), den = std::max(den, std::abs(b[i]));
  return den == 0.0 ? num : num / den;
}

CoverPair two_state_cover(const ReversibleChain& c) { return make_cover(c, Subset(2, {0}), Subset(2, {1})); }
CoverPair path_cover(const ReversibleChain& c) { return make_cover(c, Subset(3, {0, 1}), Subset(3, {1, 2})); }
CoverPair ring_cover(const ReversibleChain& c) { return make_cover(c, Subset(6, {0, 1, 2, 3}), Subset(6, {3, 4, 5, 0})); }

std::string report_summary(const ExperimentReport& r) {
  std::ostringstream s;
  for (const Check& c : r.checks)
    if (!c.passed) s << c.name << "=" << c.value << " " << c.relation << " " << c.bound << "; ";
  return s.str();
}

// 1. Two-state closed forms.
void closed_forms(Verdict& v) {
  ReversibleChain c = oracle::two_state();
  CoverPair cover = two_state_cover(c);
  v.near(c.mu(0), 2.0 / 3.0, kClosedFormTol, "mu(a)");
  v.near(c.mu(1), 1.0 / 3.0, kClosedFormTol, "mu(b)");
  v.near(spectral_gap(c), 3.0, kClosedFormTol, "gamma");
  CapacityCertificate cert = soft_capacity(c, cover, 1.0, 1.0);
  v.near(cert.potential[0], 0.75, kClosedFormTol, "V(a)");
  v.near(cert.potential[1], 0.5, kClosedFormTol, "V(b)");
  v.near(cert.value, 1.0 / 6.0, kClosedFormTol, "capacity");
  v.near(soft_measure(c, cover, 2.0).rate, 0.5, kClosedFormTol, "phi* at lambda=2");
}

// 2. Dirichlet and Thomson principles.
void duality(Verdict& v) {
  std::mt19937_64 rng(kSeed);
  std::uniform_real_distribution<double> u(-0.5, 1.5);
  const std::vector<double> rates{0.1, 1.0, 10.0};
  for (const auto& k : oracle::random_cases(50, kSeed))
    for (double kappa : rates)
      for (double lambda : rates) {
        ExtendedNetwork net(k.chain, k.cover, kappa, lambda);
        CapacityCertificate cert = soft_capacity(net);
        v.expect(cert.duality_gap <= kDualityTol, "duality gap " + format_double(cert.duality_gap));
        if (kappa != 1.0 || lambda != 1.0) continue;
        for (int i = 0; i < 100; ++i) {
          std::vector<double> f(k.chain.size());
          for (double& x : f) x = u(rng);
          v.expect(dirichlet_upper(net, f) >= cert.value * (1.0 - kVariationalSlack), "test function below capacity");
        }
        for (int i = 0; i < 20; ++i) {
          softcap::Flow flow = oracle::random_unit_flow(net, rng);
          v.expect(thomson_lower(net, flow) <= cert.value * (1.0 + kVariationalSlack), "unit flow above capacity");
        }
      }
}

// 3. Monotonicity in the killing rates and the hard limits.
void monotonicity(Verdict& v) {
  struct Named {
    std::string label;
    ReversibleChain chain;
    CoverPair cover;
  };
  std::vector<Named> cases;
  ReversibleChain path = oracle::three_path(), ring = oracle::ring(6);
  cases.push_back({"three_path", path, path_cover(path)});
  cases.push_back({"ring6", ring, ring_cover(ring)});
  for (double beta : {4.0, 8.0}) {
    DoubleWell dw = double_well_chain(standard_double_well(beta));
    cases.push_back({"double_well_" + format_double(beta), dw.chain, dw.cover});
  }
  const std::vector<double> grid{1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0};
  for (const auto& k : cases) {
    double prev_phi = 0.0, prev_gap = std::numeric_limits<double>::infinity();
    const double gamma_r = spectral_gap(restricted_chain(k.chain, k.cover.R));
    for (double lambda : grid) {
      const double phi = soft_measure(k.chain, k.cover, lambda).rate;
      const double gap = restricted_lambda_chain(k.chain, k.cover, lambda).gap;
      v.expect(phi >= prev_phi * (1.0 - kMonotoneSlack), k.label + ": phi* decreased at lambda=" + format_double(lambda));
      v.expect(gap <= prev_gap * (1.0 + kMonotoneSlack), k.label + ": gap increased at lambda=" + format_double(lambda));
      v.expect(gap >= gamma_r * (1.0 - kMonotoneSlack), k.label + ": gap below gamma_R");
      prev_phi = phi;
      prev_gap = gap;
    }
    const double hard = exit_rate_hard(k.chain, k.cover).rate;
    v.expect(oracle::rel_diff(soft_measure(k.chain, k.cover, 1e8).rate, hard) <= kHardLimitTol,
             k.label + ": phi*(1e8) far from the hard exit rate");
    v.expect(oracle::rel_diff(restricted_lambda_chain(k.chain, k.cover, 1e9).gap, gamma_r) <= kHardLimitTol,
             k.label + ": restricted gap limit");
    for (double fixed : grid) {
      double prev_k = 0.0, prev_l = 0.0;
      for (double x : grid) {
        const double ck = soft_capacity(k.chain, k.cover, x, fixed).value;
        const double cl = soft_capacity(k.chain, k.cover, fixed, x).value;
        v.expect(ck >= prev_k * (1.0 - kMonotoneSlack), k.label + ": capacity decreased in kappa");
        v.expect(cl >= prev_l * (1.0 - kMonotoneSlack), k.label + ": capacity decreased in lambda");
        prev_k = ck;
        prev_l = cl;
      }
    }
  }
}

// 4. Every applicable bound row holds on the double wells over the window grid.
void containment(Verdict& v) {
  VerifyOptions opt;
  opt.t_grid = {0.5, 1.0, 2.0};
  int applicable = 0;
  for (double beta : {4.0, 6.0, 8.0}) {
    DoubleWell dw = double_well_chain(standard_double_well(beta));
    const CoverAnalysis a = analyze_cover(dw.chain, dw.cover);
    const auto [km, lm] = mid_window(a);
    for (double fk : {0.5, 1.0, 2.0})
      for (double fl : {0.5, 1.0, 2.0})
        for (const BoundReport& r : verify_bounds(a, fk * km, fl * lm, opt)) {
          if (!r.applicable) continue;
          ++applicable;
          v.expect(r.satisfied, "beta=" + format_double(beta) + " " + r.name + " exact=" + format_double(r.exact));
        }
  }
  v.expect(applicable > 0, "no applicable rows");
}

// 5. The local exit time from the soft measure is exactly exponential.
void exit_law(Verdict& v) {
  ReversibleChain c = oracle::two_state();
  ExperimentReport a = exit_law_experiment(c, two_state_cover(c), 2.0, kExitLawSamples, kSeed);
  v.expect(a.passed(), "two-state: " + report_summary(a));
  DoubleWell dw = double_well_chain(standard_double_well(4.0));
  ExperimentReport b = exit_law_experiment(dw.chain, dw.cover, 0.1, kExitLawSamples, kSeed);
  v.expect(b.passed(), "double well: " + report_summary(b));
}

// 6. Thermalization at the stopping time T*.
void thermalization(Verdict& v) {
  DoubleWell dw = double_well_chain(standard_double_well(8.0));
  const auto [k, l] = mid_window(analyze_cover(dw.chain, dw.cover));
  std::vector<double> start(dw.chain.size(), 0.0);
  start[static_cast<std::size_t>(dw.left_minimum)] = 1.0;
  ExperimentReport r = thermalization_experiment(dw.chain, dw.cover, k, l, start, kThermalizationSamples, kSeed);
  v.expect(r.passed(), report_summary(r));
  v.expect(r.checks.size() == 6, "expected six checks");
}

// 7. Time averages between regeneration times.
void time_averages(Verdict& v) {
  DoubleWellSpec spec = steep_double_well(kTimeAverageBeta);
  DoubleWell dw = double_well_chain(spec);
  const auto [k, l] = mid_window(analyze_cover(dw.chain, dw.cover));
  // Indicator of the lower half of the R-well.
  const double level = spec.potential[static_cast<std::size_t>(dw.left_minimum)] +
                       0.5 * (spec.potential[static_cast<std::size_t>(dw.saddle)] -
                              spec.potential[static_cast<std::size_t>(dw.left_minimum)]);
  std::vector<double> f(dw.chain.size(), 0.0);
  for (int x : dw.cover.R) f[static_cast<std::size_t>(x)] = spec.potential[static_cast<std::size_t>(x)] <= level ? 1.0 : 0.0;
  ExperimentReport r = time_average_experiment(dw.chain, dw.cover, k, l, f, kTimeAverageEta, kTimeAverageSamples, kSeed);
  v.expect(r.passed(), report_summary(r));
}

// 8. Library solvers against dense brute-force oracles.
void oracle_equivalence(Verdict& v) {
  std::vector<oracle::Case> cases = oracle::random_cases(50, kSeed + 1);
  ReversibleChain two = oracle::two_state(), path = oracle::three_path(), ring = oracle::ring(6);
  cases.push_back({two, two_state_cover(two)});
  cases.push_back({path, path_cover(path)});
  cases.push_back({ring, ring_cover(ring)});
  const double inf = std::numeric_limits<double>::infinity();
  for (const auto& k : cases) {
    const auto r = oracle::members(k.cover.R), s = oracle::members(k.cover.S);
    v.expect(oracle::rel_diff(spectral_gap(k.chain), oracle::spectral_gap(k.chain)) <= kOracleTol, "gap");
    v.expect(oracle::rel_diff(spectral_gap(restricted_chain(k.chain, k.cover.R)), oracle::restricted_gap(k.chain, r)) <=
                 kOracleTol,
             "gamma_R");
    v.expect(oracle::rel_diff(spectral_gap(restricted_chain(k.chain, k.cover.S)), oracle::restricted_gap(k.chain, s)) <=
                 kOracleTol,
             "gamma_S");
    for (double lambda : {0.5, 2.0, inf}) {
      QuasiStationaryResult q = std::isinf(lambda) ? soft_measure(k.chain, k.cover, KillRate::infinite())
                                                   : soft_measure(k.chain, k.cover, lambda);
      const auto mine = extend_to(q, Subset::all(k.chain.size()), k.chain).measure;
      const auto [rate, measure] = oracle::soft_measure(k.chain, r, s, lambda);
      v.expect(oracle::rel_diff(q.rate, rate) <= kOracleTol, "soft rate at lambda=" + format_double(lambda));
      v.expect(vec_rel_diff(mine, measure) <= kOracleTol, "soft measure at lambda=" + format_double(lambda));
    }
    for (double kappa : {0.5, 2.0})
      for (double lambda : {0.5, 2.0}) {
        CapacityCertificate cert = soft_capacity(k.chain, k.cover, kappa, lambda);
        const auto [cap, pot] = oracle::capacity(k.chain, r, s, kappa, lambda);
        v.expect(oracle::rel_diff(cert.value, cap) <= kOracleTol, "capacity");
        v.expect(vec_rel_diff(cert.potential, pot) <= kOracleTol, "potential");
      }
  }
}

// 9. Ising 3x3: structure, exact pipeline, and nucleation times.
void ising(Verdict& v) {
  const IsingSpec spec{3, 0.6, 0.1, IsingMode::Exact};
  IsingExact m = ising_chain(spec);
  const ReversibleChain& c = m.chain;
  v.expect(c.size() == 512, "state count");
  double total = 0.0, balance = 0.0;
  for (int x = 0; x < 512; ++x) {
    total += c.mu(x);
    for (const Edge& e : c.out(x)) balance = std::max(balance, std::abs(c.mu(x) * e.rate - c.mu(e.to) * c.rate(e.to, x)));
  }
  v.near(total, 1.0, 1e-12, "measure total");
  v.expect(balance <= 1e-15, "detailed balance");
  v.expect(m.cover.both.empty() && m.cover.R.size() + m.cover.S.size() == 512, "magnetization cover");
  v.expect(m.cover.hypotheses_hold(), "irreducible cover pieces");

  const CoverAnalysis a = analyze_cover(c, m.cover);
  const auto [k, l] = mid_window(a);
  for (const BoundReport& r : verify_bounds(a, k, l))
    if (r.applicable) v.expect(r.satisfied, "bound " + r.name);

  QuasiStationaryResult q = soft_measure(c, m.cover, l);
  const auto start = extend_to(q, Subset::all(512), c).measure;
  IsingDynamics dyn(spec);
  auto samples = sample_local_exit_times<IsingDynamics>(
      dyn, start, [&](int x) { return dyn.from_config(static_cast<std::uint32_t>(x)); }, l, kIsingSamples, kSeed);
  const double ks = ks_statistic(samples, [&](double x) { return exponential_cdf(q.rate, x); });
  v.expect(ks <= ks_threshold(kIsingSamples), "nucleation KS " + format_double(ks));
}

// 10. Repeated CLI runs are byte-identical.
std::string capture(const std::string& args, int& status) {
  std::string out;
  FILE* p = popen((std::string(SOFTCAP_CLI_PATH) + " " + args + " 2>&1").c_str(), "r");
  if (!p) {
    status = -1;
    return out;
  }
  char buf[4096];
  for (std::size_t n; (n = fread(buf, 1, sizeof buf, p)) > 0;) out.append(buf, n);
  const int st = pclose(p);
  status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return out;
}

void determinism(Verdict& v) {
  const std::string dir = SOFTCAP_SAMPLES_DIR;
  const std::string files = dir + "/three_path.chain " + dir + "/three_path.cover";
  for (const std::string& args : {"verify " + files + " --kappa-grid 0.5,1,2 --lambda-grid 0.5,1,2",
                                  "simulate " + files + " --lambda 1 --experiment exit-law --n 2000 --seed 3",
                                  "simulate " + files + " --kappa 1 --lambda 1 --experiment thermalization --n 500 --seed 4"}) {
    int s1 = -1, s2 = -1;
    const std::string a = capture(args, s1), b = capture(args, s2);
    v.expect(s1 == 0 && s2 == 0, "exit status for: " + args);
    v.expect(!a.empty() && a == b, "output differs for: " + args);
  }
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Verdict&)>>> criteria{
      {"two-state closed forms", closed_forms},
      {"Dirichlet and Thomson duality", duality},
      {"monotonicity and limits", monotonicity},
      {"bound containment on double wells", containment},
      {"exponential local exit time", exit_law},
      {"thermalization at T*", thermalization},
      {"time averages", time_averages},
      {"dense oracle equivalence", oracle_equivalence},
      {"Ising 3x3 pipeline", ising},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      criteria[i].second(v);
    } catch (const std::exception& e) {
      v.failures.push_back(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool ok = v.failures.empty();
    failed += ok ? 0 : 1;
    std::printf("%s %zu %s (%.1f s)\n", ok ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), secs);
    for (std::size_t j = 0; j < std::min<std::size_t>(v.failures.size(), 10); ++j)
      std::printf("    %s\n", v.failures[j].c_str());
    if (v.failures.size() > 10) std::printf("    ... %zu more\n", v.failures.size() - 10);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
