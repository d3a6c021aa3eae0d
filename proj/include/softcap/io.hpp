// Copyright 2026 The softcap Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "softcap/capacity.hpp"
#include "softcap/chain.hpp"
#include "softcap/error.hpp"
#include "softcap/format.hpp"

namespace softcap {

namespace detail {

[[noreturn]] inline void parse_fail(std::size_t line, const std::string& msg) {
  throw ParseError(line, msg);
}

inline std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline double parse_number(const std::string& tok, std::size_t line) {
  double v = 0.0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) parse_fail(line, "not a number: '" + tok + "'");
  return v;
}

/// Calls fn(line_number, tokens) for every non-blank, non-comment line.
template <class Fn>
void for_each_record(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    auto toks = split_ws(line);
    if (toks.empty() || toks[0][0] == '#') continue;
    fn(no, toks);
  }
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorCode::InvalidArgument, "cannot open '" + path + "'");
  return f;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::InvalidArgument, "cannot write '" + path + "'");
  return f;
}

}  // namespace detail

inline constexpr std::string_view kChainHeader = "# chain v1";

/// Parses the chain format: header "# chain v1", then "state <id> [mu]" and "rate <x> <y> <w>" lines.
inline ReversibleChain read_chain(std::istream& in) {
  std::string first;
  std::size_t no = 0;
  while (std::getline(in, first)) {
    ++no;
    if (!detail::split_ws(first).empty()) break;
  }
  auto head = detail::split_ws(first);
  if (head.size() != 3 || head[0] != "#" || head[1] != "chain" || head[2] != "v1")
    detail::parse_fail(no == 0 ? 1 : no, "expected header '# chain v1'");

  std::vector<std::string> states;
  std::vector<double> mu;
  std::map<std::string, int> index;
  std::vector<IndexedRate> rates;
  std::optional<bool> with_mu;
  std::size_t offset = no;
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t ln = ++offset;
    auto t = detail::split_ws(line);
    if (t.empty() || t[0][0] == '#') continue;
    if (t[0] == "state") {
      if (t.size() != 2 && t.size() != 3) detail::parse_fail(ln, "expected 'state <id> [mu]'");
      const bool has = t.size() == 3;
      if (with_mu && *with_mu != has) detail::parse_fail(ln, "measure must be given for all states or none");
      with_mu = has;
      if (!index.emplace(t[1], static_cast<int>(states.size())).second) detail::parse_fail(ln, "duplicate state '" + t[1] + "'");
      states.push_back(t[1]);
      if (has) mu.push_back(detail::parse_number(t[2], ln));
    } else if (t[0] == "rate") {
      if (t.size() != 4) detail::parse_fail(ln, "expected 'rate <x> <y> <w>'");
      auto a = index.find(t[1]), b = index.find(t[2]);
      if (a == index.end()) detail::parse_fail(ln, "unknown state '" + t[1] + "'");
      if (b == index.end()) detail::parse_fail(ln, "unknown state '" + t[2] + "'");
      rates.push_back({a->second, b->second, detail::parse_number(t[3], ln)});
    } else {
      detail::parse_fail(ln, "unknown record '" + t[0] + "'");
    }
  }
  std::optional<std::vector<double>> measure;
  if (with_mu && *with_mu) measure = std::move(mu);
  return ReversibleChain::from_indexed(std::move(states), std::move(rates), std::move(measure));
}

inline ReversibleChain load_chain(const std::string& path) {
  auto f = detail::open_input(path);
  return read_chain(f);
}

inline void write_chain(std::ostream& out, const ReversibleChain& chain, bool with_measure = true) {
  out << kChainHeader << '\n';
  for (std::size_t x = 0; x < chain.size(); ++x) {
    out << "state " << chain.name(static_cast<int>(x));
    if (with_measure) out << ' ' << format_double(chain.mu(static_cast<int>(x)));
    out << '\n';
  }
  for (std::size_t x = 0; x < chain.size(); ++x)
    for (const Edge& e : chain.out(static_cast<int>(x)))
      out << "rate " << chain.name(static_cast<int>(x)) << ' ' << chain.name(e.to) << ' ' << format_double(e.rate) << '\n';
}

inline void save_chain(const ReversibleChain& chain, const std::string& path) {
  auto f = detail::open_output(path);
  write_chain(f, chain);
}

/// Parses "R <id>" / "S <id>" lines.
inline CoverPair read_cover(std::istream& in, const ReversibleChain& chain) {
  std::vector<int> r, s;
  detail::for_each_record(in, [&](std::size_t ln, const std::vector<std::string>& t) {
    if (t.size() != 2 || (t[0] != "R" && t[0] != "S")) detail::parse_fail(ln, "expected 'R <id>' or 'S <id>'");
    auto i = chain.index_of(t[1]);
    if (!i) detail::parse_fail(ln, "unknown state '" + t[1] + "'");
    (t[0] == "R" ? r : s).push_back(*i);
  });
  return make_cover(chain, Subset(chain.size(), std::move(r)), Subset(chain.size(), std::move(s)));
}

inline CoverPair load_cover(const std::string& path, const ReversibleChain& chain) {
  auto f = detail::open_input(path);
  return read_cover(f, chain);
}

inline void write_cover(std::ostream& out, const ReversibleChain& chain, const CoverPair& cover) {
  for (int x : cover.R) out << "R " << chain.name(x) << '\n';
  for (int x : cover.S) out << "S " << chain.name(x) << '\n';
}

inline void save_cover(const ReversibleChain& chain, const CoverPair& cover, const std::string& path) {
  auto f = detail::open_output(path);
  write_cover(f, chain, cover);
}

/// Parses "flow <x> <y> <v>", "flow BAR:<r> <r> <v>" and "flow <s> BREVE:<s> <v>" lines (either orientation).
inline Flow read_flow(std::istream& in, const ReversibleChain& chain) {
  Flow flow;
  std::map<std::pair<int, int>, double> seen_interior;
  std::map<int, double> seen_bar, seen_breve;
  auto record = [](auto& seen, auto key, double v, std::size_t ln) {
    auto [it, fresh] = seen.emplace(key, v);
    if (!fresh && it->second != v) detail::parse_fail(ln, "conflicting values for the same edge");
    return fresh;
  };
  auto state = [&](const std::string& id, std::size_t ln) {
    auto i = chain.index_of(id);
    if (!i) detail::parse_fail(ln, "unknown state '" + id + "'");
    return *i;
  };
  auto tagged = [](const std::string& tok, std::string_view tag) -> std::optional<std::string> {
    if (tok.size() > tag.size() && tok.compare(0, tag.size(), tag) == 0) return tok.substr(tag.size());
    return std::nullopt;
  };
  detail::for_each_record(in, [&](std::size_t ln, const std::vector<std::string>& t) {
    if (t.size() != 4 || t[0] != "flow") detail::parse_fail(ln, "expected 'flow <from> <to> <value>'");
    const double v = detail::parse_number(t[3], ln);
    auto bar_from = tagged(t[1], "BAR:"), bar_to = tagged(t[2], "BAR:");
    auto breve_from = tagged(t[1], "BREVE:"), breve_to = tagged(t[2], "BREVE:");
    if (bar_from || bar_to) {
      const std::string& owner = bar_from ? *bar_from : *bar_to;
      const std::string& other = bar_from ? t[2] : t[1];
      if (owner != other) detail::parse_fail(ln, "bar edge must join BAR:<r> and <r>");
      const int r = state(owner, ln);
      const double psi = bar_from ? v : -v;  // stored as psi(r-bar -> r)
      if (record(seen_bar, r, psi, ln)) flow.bar[r] = psi;
    } else if (breve_from || breve_to) {
      const std::string& owner = breve_to ? *breve_to : *breve_from;
      const std::string& other = breve_to ? t[1] : t[2];
      if (owner != other) detail::parse_fail(ln, "breve edge must join <s> and BREVE:<s>");
      const int s = state(owner, ln);
      const double psi = breve_to ? v : -v;  // stored as psi(s -> s-breve)
      if (record(seen_breve, s, psi, ln)) flow.breve[s] = psi;
    } else {
      int x = state(t[1], ln), y = state(t[2], ln);
      if (x == y) detail::parse_fail(ln, "flow on a self-loop");
      double psi = v;
      if (x > y) std::swap(x, y), psi = -v;
      if (record(seen_interior, std::make_pair(x, y), psi, ln)) flow.interior[{x, y}] = psi;
    }
  });
  return flow;
}

inline Flow load_flow(const std::string& path, const ReversibleChain& chain) {
  auto f = detail::open_input(path);
  return read_flow(f, chain);
}

/// Parses "f <state> <value>" lines; every state must be assigned exactly once.
inline std::vector<double> read_test_function(std::istream& in, const ReversibleChain& chain) {
  std::vector<double> f(chain.size(), 0.0);
  std::vector<char> set(chain.size(), 0);
  std::size_t last = 0;
  detail::for_each_record(in, [&](std::size_t ln, const std::vector<std::string>& t) {
    last = ln;
    if (t.size() != 3 || t[0] != "f") detail::parse_fail(ln, "expected 'f <state> <value>'");
    auto i = chain.index_of(t[1]);
    if (!i) detail::parse_fail(ln, "unknown state '" + t[1] + "'");
    if (set[*i]) detail::parse_fail(ln, "state '" + t[1] + "' assigned twice");
    set[*i] = 1;
    f[*i] = detail::parse_number(t[2], ln);
  });
  for (std::size_t x = 0; x < chain.size(); ++x)
    if (!set[x]) detail::parse_fail(last + 1, "no value for state '" + chain.name(static_cast<int>(x)) + "'");
  return f;
}

inline std::vector<double> load_test_function(const std::string& path, const ReversibleChain& chain) {
  auto f = detail::open_input(path);
  return read_test_function(f, chain);
}

/// Trajectory dump: "seg <state> <holding_time>" lines and a final "end <termination> <T>".
template <class Record>
void write_trajectory(std::ostream& out, const ReversibleChain& chain, const Record& rec) {
  for (const auto& [x, dt] : rec.segments) out << "seg " << chain.name(x) << ' ' << format_double(dt) << '\n';
  out << "end " << to_string(rec.termination) << ' ' << format_double(rec.total_time) << '\n';
}

}  // namespace softcap
