// Copyright 2026 The softcap Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "softcap/softcap.hpp"

using namespace softcap;

namespace {

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::InvalidArgument;
}

std::vector<ReversibleChain> random_chains(int count, std::uint64_t seed, std::size_t max_n = 12) {
  std::mt19937_64 rng(seed);
  std::vector<ReversibleChain> out;
  for (int i = 0; i < count; ++i) out.push_back(oracle::random_chain(2 + rng() % (max_n - 1), rng));
  return out;
}

}  // namespace

TEST(BuildChain, TwoStateMeasure) {
  ReversibleChain c = oracle::two_state();
  EXPECT_NEAR(c.mu(0), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(c.mu(1), 1.0 / 3.0, 1e-12);
}

TEST(BuildChain, PathIsUniform) {
  ReversibleChain c = oracle::three_path();
  for (int x = 0; x < 3; ++x) EXPECT_NEAR(c.mu(x), 1.0 / 3.0, 1e-12);
}

TEST(BuildChain, RejectsOneWayEdge) {
  EXPECT_EQ(code_of([] { build_chain({"a", "b"}, {{"a", "b", 1.0}}); }), ErrorCode::NotIrreducible);
}

TEST(BuildChain, RejectsNegativeRate) {
  EXPECT_EQ(code_of([] { build_chain({"a", "b"}, {{"a", "b", -1.0}, {"b", "a", 1.0}}); }), ErrorCode::NegativeRate);
}

TEST(BuildChain, RejectsUnknownState) {
  EXPECT_EQ(code_of([] { build_chain({"a", "b"}, {{"a", "c", 1.0}}); }), ErrorCode::UnknownState);
}

TEST(BuildChain, RejectsNonReversibleCycle) {
  // Stationary (uniform) but carries a net circulation.
  auto f = [] {
    build_chain({"a", "b", "c"}, {{"a", "b", 2.0}, {"b", "c", 2.0}, {"c", "a", 2.0}, {"b", "a", 1.0}, {"c", "b", 1.0},
                                  {"a", "c", 1.0}});
  };
  EXPECT_EQ(code_of(f), ErrorCode::NotReversible);
}

TEST(BuildChain, RejectsMeasureBreakingDetailedBalance) {
  auto f = [] { build_chain({"a", "b"}, {{"a", "b", 1.0}, {"b", "a", 2.0}}, std::vector<double>{0.5, 0.5}); };
  EXPECT_EQ(code_of(f), ErrorCode::NotReversible);
}

TEST(BuildChain, RecoveredMeasureMatchesOracle) {
  for (const auto& c : random_chains(40, 1)) {
    Eigen::VectorXd pi = oracle::stationary(oracle::rate_matrix(c));
    for (std::size_t x = 0; x < c.size(); ++x) EXPECT_NEAR(c.mu(static_cast<int>(x)), pi[static_cast<Eigen::Index>(x)], 1e-12);
  }
}

TEST(BuildChain, DetailedBalanceOnEveryEdge) {
  for (const auto& c : random_chains(40, 2)) {
    for (std::size_t x = 0; x < c.size(); ++x)
      for (const Edge& e : c.out(static_cast<int>(x))) {
        const double f = c.mu(static_cast<int>(x)) * e.rate, b = c.mu(e.to) * c.rate(e.to, static_cast<int>(x));
        EXPECT_LE(std::abs(f - b), 1e-9 * std::max(f, b));
      }
  }
}

TEST(DirichletForm, HandValues) {
  ReversibleChain two = oracle::two_state();
  std::vector<double> f{1.0, 0.0};
  EXPECT_NEAR(dirichlet_form(two, f), 2.0 / 3.0, 1e-12);
  ReversibleChain path = oracle::three_path();
  std::vector<double> g{1.0, 0.0, 0.0};
  EXPECT_NEAR(dirichlet_form(path, g), 1.0 / 3.0, 1e-12);
  std::vector<double> k{4.0, 4.0, 4.0};
  EXPECT_EQ(dirichlet_form(path, k), 0.0);
}

TEST(SpectralGap, ClosedForms) {
  EXPECT_NEAR(spectral_gap(oracle::two_state()), 3.0, 1e-12);
  EXPECT_NEAR(spectral_gap(oracle::three_path()), 1.0, 1e-12);
  // Ring of 6 with unit rates: 2 - 2 cos(2 pi / 6) = 1.
  EXPECT_NEAR(spectral_gap(oracle::ring(6)), 1.0, 1e-12);
}

TEST(SpectralGap, MatchesDenseOracle) {
  for (const auto& c : random_chains(40, 3, 50)) EXPECT_LE(oracle::rel_diff(spectral_gap(c), oracle::spectral_gap(c)), 1e-9);
}

TEST(SpectralGap, IterativePathMatchesDense) {
  SpectralOptions iterative;
  iterative.dense_limit = 1;
  for (const auto& c : random_chains(15, 4, 40))
    if (c.size() >= 8) EXPECT_LE(oracle::rel_diff(spectral_gap(c, iterative), spectral_gap(c)), 1e-8);
  DoubleWell dw = double_well_chain(standard_double_well(6.0));
  EXPECT_LE(oracle::rel_diff(spectral_gap(dw.chain, iterative), spectral_gap(dw.chain)), 1e-8);
}

TEST(SpectralGap, PoincareInequality) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z;
  for (const auto& c : random_chains(20, 6)) {
    const double g = spectral_gap(c);
    for (int k = 0; k < 100; ++k) {
      std::vector<double> f(c.size());
      for (double& v : f) v = z(rng);
      EXPECT_GE(dirichlet_form(c, f), g * variance(c, f) * (1.0 - 1e-10));
    }
  }
}

TEST(RestrictedChain, PathPair) {
  ReversibleChain path = oracle::three_path();
  ReversibleChain r = restricted_chain(path, Subset(3, {0, 1}));
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r.rate(0, 1), 1.0);
  EXPECT_EQ(r.rate(1, 0), 1.0);
  EXPECT_NEAR(r.mu(0), 0.5, 1e-12);
  EXPECT_NEAR(spectral_gap(r), 2.0, 1e-12);
}

TEST(RestrictedChain, SingletonHasInfiniteGap) {
  ReversibleChain r = restricted_chain(oracle::three_path(), Subset(3, {1}));
  EXPECT_EQ(r.size(), 1u);
  EXPECT_TRUE(std::isinf(spectral_gap(r)));
  std::vector<double> f{2.0};
  EXPECT_EQ(dirichlet_form(r, f), 0.0);
}

TEST(RestrictedChain, DisconnectedSetRejected) {
  EXPECT_EQ(code_of([] { restricted_chain(oracle::three_path(), Subset(3, {0, 2})); }), ErrorCode::NotIrreducible);
}

TEST(RestrictedChain, GapMatchesOracle) {
  std::mt19937_64 rng(7);
  for (const auto& c : random_chains(30, 8)) {
    if (c.size() < 3) continue;
    const int a = 1 + static_cast<int>(rng() % (c.size() - 1));
    Subset s = Subset::where(c.size(), [&](int x) { return x <= a; });
    EXPECT_LE(oracle::rel_diff(spectral_gap(restricted_chain(c, s)), oracle::restricted_gap(c, s.indices())), 1e-9);
  }
}

TEST(Chi, Values) {
  EXPECT_NEAR(chi(oracle::three_path(), Subset::all(3)), 3.0, 1e-12);
  EXPECT_NEAR(chi(oracle::two_state(), Subset::all(2)), 3.0, 1e-12);
  EXPECT_EQ(chi(oracle::two_state(), Subset(2, {1})), 1.0);
}

TEST(TraceChain, PathEndpoints) {
  ReversibleChain t = trace_chain(oracle::three_path(), Subset(3, {0, 2}));
  ASSERT_EQ(t.size(), 2u);
  EXPECT_NEAR(t.rate(0, 1), 0.5, 1e-12);
  EXPECT_NEAR(t.rate(1, 0), 0.5, 1e-12);
  EXPECT_NEAR(t.mu(0), 0.5, 1e-12);
}

TEST(TraceChain, FullSetIsIdentity) {
  ReversibleChain c = oracle::three_path();
  ReversibleChain t = trace_chain(c, Subset::all(3));
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 3; ++y) EXPECT_EQ(t.rate(x, y), c.rate(x, y));
}

TEST(TraceChain, SingletonIsOneState) {
  EXPECT_EQ(trace_chain(oracle::three_path(), Subset(3, {1})).size(), 1u);
}

TEST(TraceChain, StationaryMeasureIsConditional) {
  std::mt19937_64 rng(9);
  for (const auto& c : random_chains(30, 10)) {
    if (c.size() < 3) continue;
    Subset a = Subset::where(c.size(), [&](int) { return rng() % 2 == 0; });
    if (a.empty()) continue;
    ReversibleChain t = trace_chain(c, a);
    Eigen::VectorXd pi = oracle::stationary(oracle::rate_matrix(t));
    const auto expect = conditional_measure(c, a);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(pi[static_cast<Eigen::Index>(i)], expect[i], 1e-10);
  }
}

TEST(Cover, DerivedSetsAndFlags) {
  ReversibleChain path = oracle::three_path();
  CoverPair c = make_cover(path, std::vector<std::string>{"a", "b"}, std::vector<std::string>{"b", "c"});
  EXPECT_EQ(c.r_minus_s, Subset(3, {0}));
  EXPECT_EQ(c.s_minus_r, Subset(3, {2}));
  EXPECT_EQ(c.both, Subset(3, {1}));
  EXPECT_TRUE(c.hypotheses_hold());
  EXPECT_EQ(code_of([&] { make_cover(path, Subset(3, {0}), Subset(3, {1})); }), ErrorCode::NotACover);
  CoverPair bad = make_cover(path, Subset(3, {0, 2}), Subset(3, {1, 2}));
  EXPECT_FALSE(bad.irreducible_R);
}

// ---------------------------------------------------------------------------
// File formats

TEST(ChainFile, RoundTripIsBitExact) {
  for (const auto& c : random_chains(20, 11)) {
    std::stringstream ss;
    write_chain(ss, c);
    ReversibleChain back = read_chain(ss);
    ASSERT_EQ(back.size(), c.size());
    for (std::size_t x = 0; x < c.size(); ++x) {
      EXPECT_EQ(back.mu(static_cast<int>(x)), c.mu(static_cast<int>(x)));
      EXPECT_EQ(back.name(static_cast<int>(x)), c.name(static_cast<int>(x)));
      for (std::size_t y = 0; y < c.size(); ++y)
        EXPECT_EQ(back.rate(static_cast<int>(x), static_cast<int>(y)), c.rate(static_cast<int>(x), static_cast<int>(y)));
    }
  }
}

TEST(ChainFile, OmittedMeasureIsRecomputed) {
  for (const auto& c : random_chains(10, 12)) {
    std::stringstream ss;
    write_chain(ss, c, false);
    ReversibleChain back = read_chain(ss);
    for (std::size_t x = 0; x < c.size(); ++x) EXPECT_NEAR(back.mu(static_cast<int>(x)), c.mu(static_cast<int>(x)), 1e-12);
  }
}

TEST(ChainFile, MalformedRateLineReportsLine) {
  std::stringstream ss("# chain v1\nstate a\nstate b\nrate a b 1\nrate b a\n");
  try {
    read_chain(ss);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 5u);
  }
}

TEST(ChainFile, MissingHeaderRejected) {
  std::stringstream ss("state a\n");
  EXPECT_THROW(read_chain(ss), ParseError);
}

TEST(ChainFile, PartialMeasureRejected) {
  std::stringstream ss("# chain v1\nstate a 0.5\nstate b\n");
  EXPECT_THROW(read_chain(ss), ParseError);
}

TEST(CoverFile, RoundTrip) {
  ReversibleChain path = oracle::three_path();
  CoverPair c = make_cover(path, Subset(3, {0, 1}), Subset(3, {1, 2}));
  std::stringstream ss;
  write_cover(ss, path, c);
  CoverPair back = read_cover(ss, path);
  EXPECT_EQ(back.R, c.R);
  EXPECT_EQ(back.S, c.S);
  std::stringstream bad("R a\nT b\n");
  EXPECT_THROW(read_cover(bad, path), ParseError);
}

TEST(FlowFile, BothOrientationsAgree) {
  ReversibleChain two = oracle::two_state();
  std::stringstream fwd("flow BAR:a a 1\nflow a b 1\nflow b BREVE:b 1\n");
  std::stringstream rev("flow a BAR:a -1\nflow b a -1\nflow BREVE:b b -1\n");
  Flow f = read_flow(fwd, two), r = read_flow(rev, two);
  EXPECT_EQ(f.bar, r.bar);
  EXPECT_EQ(f.breve, r.breve);
  EXPECT_EQ(f.interior, r.interior);
  std::stringstream clash("flow a b 1\nflow b a 1\n");
  EXPECT_THROW(read_flow(clash, two), ParseError);
}

TEST(TestFunctionFile, EveryStateRequired) {
  ReversibleChain two = oracle::two_state();
  std::stringstream ok("f a 1\nf b 0.5\n");
  EXPECT_EQ(read_test_function(ok, two), (std::vector<double>{1.0, 0.5}));
  std::stringstream missing("f a 1\n");
  EXPECT_THROW(read_test_function(missing, two), ParseError);
}

TEST(Format, ShortestRoundTrip) {
  EXPECT_EQ(format_double(3.0), "3.0");
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(1e-300), "1e-300");
  EXPECT_EQ(format_double(std::numeric_limits<double>::infinity()), "INF");
  EXPECT_EQ(format_double(3.000000000000001, 12), "3.0");
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}
