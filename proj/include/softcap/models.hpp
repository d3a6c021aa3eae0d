// Copyright 2026 The softcap Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "softcap/chain.hpp"
#include "softcap/error.hpp"

namespace softcap {

// ---------------------------------------------------------------------------
// Double-well birth-death chains

struct DoubleWellSpec {
  std::size_t n_states = 60;
  double beta = 8.0;
  std::vector<double> potential;
  int overlap_halfwidth = 3;
};

struct DoubleWell {
  ReversibleChain chain;
  CoverPair cover;
  DoubleWellSpec spec;
  int left_minimum = 0;
  int saddle = 0;
  int right_minimum = 0;
};

/// U(x) = amplitude * q(x/n) / q(0.55) + tilt * x/n with q(u) = (u - 0.3)^2 (u - 0.8)^2.
/// The barrier between the wells has height close to `amplitude`; a negative tilt deepens the right well.
inline std::vector<double> double_well_potential(std::size_t n, double amplitude, double tilt) {
  auto q = [](double u) { return (u - 0.3) * (u - 0.3) * (u - 0.8) * (u - 0.8); };
  std::vector<double> u(n);
  for (std::size_t x = 0; x < n; ++x) {
    const double s = static_cast<double>(x) / static_cast<double>(n);
    u[x] = amplitude * q(s) / q(0.55) + tilt * s;
  }
  return u;
}

/// The preset used for the bound and thermalization checks (60 states, overlap 7 states).
inline DoubleWellSpec standard_double_well(double beta) {
  return {60, beta, double_well_potential(60, 0.8, -0.2), 3};
}

/// A steeper, smaller well with a much smaller epsilon*, used for the time-average checks.
inline DoubleWellSpec steep_double_well(double beta) {
  return {20, beta, double_well_potential(20, 2.1, -0.2), 1};
}

namespace detail {

struct WellShape {
  int left = -1, saddle = -1, right = -1;
};

/// Locates exactly two local minima and the maximum between them; BadPotential otherwise.
inline WellShape well_shape(const std::vector<double>& u) {
  const int n = static_cast<int>(u.size());
  std::vector<int> minima;
  for (int x = 0; x < n; ++x) {
    const bool left_ok = x == 0 || u[x] < u[x - 1];
    const bool right_ok = x == n - 1 || u[x] < u[x + 1];
    if (left_ok && right_ok) minima.push_back(x);
  }
  if (minima.size() != 2) fail(ErrorCode::BadPotential, "potential must have exactly two strict local minima");
  WellShape w;
  w.left = minima[0];
  w.right = minima[1];
  w.saddle = w.left;
  for (int x = w.left; x <= w.right; ++x)
    if (u[x] > u[w.saddle]) w.saddle = x;
  for (int x = w.left + 1; x < w.saddle; ++x)
    if (u[x] < u[x - 1]) fail(ErrorCode::BadPotential, "potential is not monotone between minimum and saddle");
  for (int x = w.saddle + 1; x <= w.right; ++x)
    if (u[x] > u[x - 1]) fail(ErrorCode::BadPotential, "potential is not monotone between saddle and minimum");
  return w;
}

}  // namespace detail

/// Metropolis nearest-neighbour chain with mu proportional to exp(-beta U) and the saddle-window cover
/// R = {0..m+o}, S = {m-o..n-1}.
inline DoubleWell double_well_chain(const DoubleWellSpec& spec) {
  const std::size_t n = spec.n_states;
  if (n < 4 || spec.potential.size() != n)
    detail::fail(ErrorCode::BadPotential, "potential length must equal n_states >= 4");
  if (!(spec.beta >= 0.0) || !std::isfinite(spec.beta)) detail::fail(ErrorCode::BadPotential, "beta must be finite and >= 0");
  for (double v : spec.potential)
    if (!std::isfinite(v)) detail::fail(ErrorCode::BadPotential, "potential must be finite");
  const detail::WellShape w = detail::well_shape(spec.potential);
  const int o = spec.overlap_halfwidth;
  if (o <= 0 || o >= w.saddle - w.left || o >= w.right - w.saddle)
    detail::fail(ErrorCode::BadPotential, "overlap half-width must lie strictly between 0 and the saddle-to-minimum distance");

  const auto& u = spec.potential;
  std::vector<std::string> names(n);
  std::vector<IndexedRate> rates;
  std::vector<double> mu(n);
  const double umin = *std::min_element(u.begin(), u.end());
  for (std::size_t x = 0; x < n; ++x) {
    names[x] = std::to_string(x);
    mu[x] = std::exp(-spec.beta * (u[x] - umin));
    if (x + 1 < n) {
      rates.push_back({static_cast<int>(x), static_cast<int>(x + 1), std::exp(-spec.beta * std::max(u[x + 1] - u[x], 0.0))});
      rates.push_back({static_cast<int>(x + 1), static_cast<int>(x), std::exp(-spec.beta * std::max(u[x] - u[x + 1], 0.0))});
    }
  }
  DoubleWell dw;
  dw.chain = ReversibleChain::from_indexed(std::move(names), std::move(rates), std::move(mu));
  dw.spec = spec;
  dw.left_minimum = w.left;
  dw.saddle = w.saddle;
  dw.right_minimum = w.right;
  const int nn = static_cast<int>(n);
  dw.cover = make_cover(dw.chain, Subset::where(n, [&](int x) { return x <= w.saddle + o; }),
                        Subset::where(n, [&](int x) { return x >= w.saddle - o && x < nn; }));
  return dw;
}

// ---------------------------------------------------------------------------
// Kinetic Ising model on an L x L torus

enum class IsingMode { Exact, SimOnly };

struct IsingSpec {
  int L = 3;
  double beta = 0.6;
  double h = 0.1;
  IsingMode mode = IsingMode::Exact;
};

inline constexpr int kIsingExactMaxSide = 4;

inline void validate(const IsingSpec& spec) {
  if (spec.L < 2) detail::fail(ErrorCode::InvalidArgument, "lattice side must be at least 2");
  if (!(spec.beta >= 0.0) || !std::isfinite(spec.beta)) detail::fail(ErrorCode::InvalidArgument, "beta must be finite and >= 0");
  if (!(spec.h >= 0.0) || !std::isfinite(spec.h)) detail::fail(ErrorCode::InvalidArgument, "field must be finite and >= 0");
}

namespace detail {

inline std::vector<std::array<int, 4>> torus_neighbours(int L) {
  std::vector<std::array<int, 4>> nb(static_cast<std::size_t>(L * L));
  for (int r = 0; r < L; ++r)
    for (int c = 0; c < L; ++c)
      nb[static_cast<std::size_t>(r * L + c)] = {((r + L - 1) % L) * L + c, ((r + 1) % L) * L + c, r * L + (c + L - 1) % L,
                                                r * L + (c + 1) % L};
  return nb;
}

}  // namespace detail

/// H(sigma) = -sum_<ij> s_i s_j - h sum_i s_i, with bit i of `config` set for s_i = +1.
inline double ising_energy(int L, double h, std::uint32_t config) {
  auto nb = detail::torus_neighbours(L);
  auto spin = [&](int i) { return (config >> i) & 1u ? 1 : -1; };
  double e = 0.0;
  for (int i = 0; i < L * L; ++i) {
    e -= h * spin(i);
    e -= spin(i) * (spin(nb[static_cast<std::size_t>(i)][1]) + spin(nb[static_cast<std::size_t>(i)][3]));
  }
  return e;
}

inline int ising_magnetization(int L, std::uint32_t config) {
  const int plus = std::popcount(config);
  return 2 * plus - L * L;
}

/// State identifier: one character per site in row-major order, '+' or '-'.
inline std::string ising_state_name(int L, std::uint32_t config) {
  std::string s(static_cast<std::size_t>(L * L), '-');
  for (int i = 0; i < L * L; ++i)
    if ((config >> i) & 1u) s[static_cast<std::size_t>(i)] = '+';
  return s;
}

struct IsingExact {
  ReversibleChain chain;
  CoverPair cover;
  IsingSpec spec;
};

/// Materialized single-spin-flip Metropolis chain with the magnetization cover R = {m <= 0}, S = {m >= 0}.
inline IsingExact ising_chain(const IsingSpec& spec) {
  validate(spec);
  if (spec.mode == IsingMode::SimOnly) detail::fail(ErrorCode::ImplicitOnly, "SimOnly Ising models support simulation only");
  if (spec.L > kIsingExactMaxSide) detail::fail(ErrorCode::TooLargeForExact, "exact Ising chains need L <= 4");
  const int L = spec.L, sites = L * L;
  const std::uint32_t count = 1u << sites;
  std::vector<double> energy(count);
  double emin = 0.0;
  for (std::uint32_t c = 0; c < count; ++c) {
    energy[c] = ising_energy(L, spec.h, c);
    emin = std::min(emin, energy[c]);
  }
  std::vector<std::string> names(count);
  std::vector<double> mu(count);
  std::vector<IndexedRate> rates;
  rates.reserve(static_cast<std::size_t>(count) * static_cast<std::size_t>(sites));
  for (std::uint32_t c = 0; c < count; ++c) {
    names[c] = ising_state_name(L, c);
    mu[c] = std::exp(-spec.beta * (energy[c] - emin));
    for (int i = 0; i < sites; ++i) {
      const std::uint32_t d = c ^ (1u << i);
      rates.push_back({static_cast<int>(c), static_cast<int>(d), std::exp(-spec.beta * std::max(energy[d] - energy[c], 0.0))});
    }
  }
  IsingExact m;
  m.spec = spec;
  m.chain = ReversibleChain::from_indexed(std::move(names), std::move(rates), std::move(mu));
  m.cover = make_cover(m.chain, Subset::where(count, [&](int x) { return ising_magnetization(L, static_cast<std::uint32_t>(x)) <= 0; }),
                       Subset::where(count, [&](int x) { return ising_magnetization(L, static_cast<std::uint32_t>(x)) >= 0; }));
  return m;
}

struct IsingState {
  std::vector<signed char> spin;
  int magnetization = 0;
  friend bool operator==(const IsingState&, const IsingState&) = default;
};

/// Implicit single-spin-flip Metropolis dynamics for any lattice size; O(L^2) work per jump.
class IsingDynamics {
 public:
  using state_type = IsingState;

  explicit IsingDynamics(const IsingSpec& spec) : spec_(spec), nb_(detail::torus_neighbours(spec.L)) {
    validate(spec);
    // Flip rate indexed by (s_i == +1, neighbour sum / 2 + 2).
    for (int s = 0; s < 2; ++s)
      for (int k = 0; k < 5; ++k) {
        const double spin = s ? 1.0 : -1.0;
        const double dh = 2.0 * spin * (2.0 * (k - 2) + spec.h);
        table_[s][k] = std::exp(-spec.beta * std::max(dh, 0.0));
      }
  }

  IsingState uniform_state(signed char value) const {
    IsingState s;
    s.spin.assign(static_cast<std::size_t>(spec_.L * spec_.L), value);
    s.magnetization = value * spec_.L * spec_.L;
    return s;
  }
  IsingState from_config(std::uint32_t config) const {
    IsingState s;
    const int sites = spec_.L * spec_.L;
    s.spin.resize(static_cast<std::size_t>(sites));
    for (int i = 0; i < sites; ++i) {
      s.spin[static_cast<std::size_t>(i)] = ((config >> i) & 1u) ? 1 : -1;
      s.magnetization += s.spin[static_cast<std::size_t>(i)];
    }
    return s;
  }

  double flip_rate(const IsingState& s, std::size_t i) const {
    int sum = 0;
    for (int j : nb_[i]) sum += s.spin[static_cast<std::size_t>(j)];
    return table_[s.spin[i] > 0 ? 1 : 0][sum / 2 + 2];
  }
  double exit_rate(const IsingState& s) const {
    double r = 0.0;
    for (std::size_t i = 0; i < s.spin.size(); ++i) r += flip_rate(s, i);
    return r;
  }
  void jump(IsingState& s, double u) const {
    std::size_t pick = s.spin.size() - 1;
    double acc = 0.0;
    for (std::size_t i = 0; i < s.spin.size(); ++i) {
      const double r = flip_rate(s, i);
      if (r <= 0.0) continue;
      acc += r;
      pick = i;
      if (u < acc) break;
    }
    s.spin[pick] = static_cast<signed char>(-s.spin[pick]);
    s.magnetization += 2 * s.spin[pick];
  }
  bool in_R(const IsingState& s) const { return s.magnetization <= 0; }
  bool in_S(const IsingState& s) const { return s.magnetization >= 0; }
  const IsingSpec& spec() const { return spec_; }

 private:
  IsingSpec spec_;
  std::vector<std::array<int, 4>> nb_;
  double table_[2][5]{};
};

}  // namespace softcap
