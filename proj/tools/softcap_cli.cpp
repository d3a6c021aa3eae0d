// Copyright 2026 The softcap Authors
// SPDX-License-Identifier: Apache-2.0
//
// Batch front end: gap, capacity, qsm, verify, simulate, ising, doublewell.
// Exit codes: 0 success, 1 an applicable bound or statistical check failed, 2 usage or input error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "softcap/softcap.hpp"

namespace {

using Json = nlohmann::ordered_json;
using namespace softcap;

constexpr int kExitOk = 0;
constexpr int kExitViolation = 1;
constexpr int kExitUsage = 2;
// Eigenvalues printed by `gap` are rounded to this many significant digits.
constexpr int kDisplayDigits = 12;

/// Parses a kill rate: a non-negative number or the literal INF.
KillRate parse_rate(const std::string& text, const std::string& flag) {
  if (text == "INF" || text == "inf" || text == "Inf") return KillRate::infinite();
  double v = 0.0;
  try {
    std::size_t used = 0;
    v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
  } catch (const std::exception&) {
    detail::fail(ErrorCode::InvalidArgument, flag + ": not a number: '" + text + "'");
  }
  if (!(v >= 0.0)) detail::fail(ErrorCode::InvalidArgument, flag + " must be >= 0");
  return KillRate(v);
}

std::vector<double> parse_grid(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    KillRate r = parse_rate(tok, flag);
    if (r.is_infinite()) detail::fail(ErrorCode::InvalidArgument, flag + " entries must be finite");
    out.push_back(r.value());
  }
  return out;
}

std::string rate_text(KillRate r) { return r.is_infinite() ? "INF" : format_double(r.value()); }

/// JSON number, with non-finite values spelled out so they survive serialization.
Json num(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

/// Command, inputs, parameters, version and (only when SOURCE_DATE_EPOCH is set) a timestamp.
struct RunManifest {
  std::string command;
  std::vector<std::string> inputs;
  std::vector<std::pair<std::string, std::string>> parameters;

  void param(std::string key, std::string value) { parameters.emplace_back(std::move(key), std::move(value)); }

  static std::optional<std::string> timestamp() {
    const char* env = std::getenv("SOURCE_DATE_EPOCH");
    if (env == nullptr || *env == '\0') return std::nullopt;
    char* end = nullptr;
    const long long secs = std::strtoll(env, &end, 10);
    if (*end != '\0') return std::nullopt;
    std::time_t t = static_cast<std::time_t>(secs);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return std::string(buf);
  }

  Json json() const {
    Json j;
    j["command"] = command;
    j["inputs"] = inputs;
    Json p = Json::object();
    for (const auto& [k, v] : parameters) p[k] = v;
    j["parameters"] = p;
    j["tool_version"] = kVersion;
    if (auto ts = timestamp()) j["timestamp"] = *ts;
    return j;
  }

  void write_comments(std::ostream& out) const {
    out << "# command " << command << '\n';
    for (const auto& in : inputs) out << "# input " << in << '\n';
    for (const auto& [k, v] : parameters) out << "# param " << k << ' ' << v << '\n';
    out << "# tool_version " << kVersion << '\n';
    if (auto ts = timestamp()) out << "# timestamp " << *ts << '\n';
  }
};

/// Writes to --out when given, stdout otherwise.
void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty()) {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream f(out_path, std::ios::binary);
  if (!f) detail::fail(ErrorCode::InvalidArgument, "cannot write '" + out_path + "'");
  f << text;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

Json measure_json(const ReversibleChain& chain, const std::vector<double>& m) {
  Json j = Json::object();
  for (std::size_t x = 0; x < chain.size(); ++x) j[chain.name(static_cast<int>(x))] = m[x];
  return j;
}

/// Start distribution: a point mass at --start if given, the fallback otherwise.
std::vector<double> start_distribution(const ReversibleChain& chain, const std::string& start,
                                       std::vector<double> fallback) {
  if (start.empty()) return fallback;
  auto i = chain.index_of(start);
  if (!i) detail::fail(ErrorCode::InvalidArgument, "--start: unknown state '" + start + "'");
  std::vector<double> d(chain.size(), 0.0);
  d[*i] = 1.0;
  return d;
}

// ---------------------------------------------------------------------------

struct GapArgs {
  std::string chain, cover, out;
};

int cmd_gap(const GapArgs& a) {
  ReversibleChain chain = load_chain(a.chain);
  RunManifest m{"gap", {a.chain}, {}};
  std::ostringstream os;
  const double gamma = spectral_gap(chain);
  std::optional<CoverPair> cover;
  if (!a.cover.empty()) {
    m.inputs.push_back(a.cover);
    cover = load_cover(a.cover, chain);
  }
  m.write_comments(os);
  os << "gamma " << format_double(gamma, kDisplayDigits) << '\n';
  if (cover) {
    auto sub = [&](const char* name, const Subset& s, bool irreducible) {
      const double g = irreducible ? spectral_gap(restricted_chain(chain, s)) : std::nan("");
      os << name << ' ' << format_double(g, kDisplayDigits) << '\n';
    };
    sub("gamma_R", cover->R, cover->irreducible_R);
    sub("gamma_S", cover->S, cover->irreducible_S);
    sub("gamma_R_minus_S", cover->r_minus_s, cover->irreducible_r_minus_s);
    sub("gamma_S_minus_R", cover->s_minus_r, cover->irreducible_s_minus_r);
  }
  emit(a.out, os.str());
  return kExitOk;
}

struct CapacityArgs {
  std::string chain, cover, kappa, lambda, flow, testfn, out;
};

int cmd_capacity(const CapacityArgs& a) {
  ReversibleChain chain = load_chain(a.chain);
  CoverPair cover = load_cover(a.cover, chain);
  const KillRate kappa = parse_rate(a.kappa, "--kappa"), lambda = parse_rate(a.lambda, "--lambda");
  RunManifest m{"capacity", {a.chain, a.cover}, {}};
  m.param("kappa", rate_text(kappa));
  m.param("lambda", rate_text(lambda));
  ExtendedNetwork net(chain, cover, kappa, lambda);
  CapacityCertificate cert = soft_capacity(net);
  Json j;
  j["capacity"] = num(cert.value);
  j["phi_kl"] = num(cert.phi_kl);
  j["upper_at_potential"] = num(cert.upper_at_potential);
  j["lower_at_current"] = num(cert.lower_at_current);
  j["duality_gap"] = num(cert.duality_gap);
  j["current_violation"] = num(cert.current_violation);
  j["potential"] = measure_json(chain, cert.potential);
  if (!a.flow.empty()) {
    m.inputs.push_back(a.flow);
    j["thomson_lower"] = num(thomson_lower(net, load_flow(a.flow, chain)));
  }
  if (!a.testfn.empty()) {
    m.inputs.push_back(a.testfn);
    j["dirichlet_upper"] = num(dirichlet_upper(net, load_test_function(a.testfn, chain)));
  }
  j["manifest"] = m.json();
  emit(a.out, dump(j));
  return kExitOk;
}

struct QsmArgs {
  std::string chain, cover, lambda, out;
};

int cmd_qsm(const QsmArgs& a) {
  ReversibleChain chain = load_chain(a.chain);
  CoverPair cover = load_cover(a.cover, chain);
  const KillRate lambda = parse_rate(a.lambda, "--lambda");
  if (!lambda.is_infinite() && lambda.value() == 0.0)
    detail::fail(ErrorCode::DegenerateKilling, "lambda = 0 leaves nothing to kill the trace process");
  RunManifest m{"qsm", {a.chain, a.cover}, {}};
  m.param("lambda", rate_text(lambda));
  QuasiStationaryResult q = soft_measure(chain, cover, lambda);
  QuasiStationaryResult full = extend_to(q, Subset::all(chain.size()), chain);
  Json j;
  j["phi_star"] = num(q.rate);
  j["mu_star"] = measure_json(chain, full.measure);
  j["residual"] = num(q.residual);
  j["rate_identity_defect"] = num(q.rate_identity_defect);
  j["iterations"] = q.iterations;
  j["manifest"] = m.json();
  emit(a.out, dump(j));
  return kExitOk;
}

struct VerifyArgs {
  std::string chain, cover, kappa_grid, lambda_grid, out;
  double threshold = 0.1;
  bool mid_window = false;
};

std::string diagnostics_text(const BoundReport& r) {
  if (r.diagnostics.empty()) return "-";
  std::string s;
  for (const auto& [k, v] : r.diagnostics) {
    if (!s.empty()) s += ';';
    s += k + '=' + format_double(v);
  }
  return s;
}

int cmd_verify(const VerifyArgs& a) {
  ReversibleChain chain = load_chain(a.chain);
  CoverPair cover = load_cover(a.cover, chain);
  std::vector<double> kappas = parse_grid(a.kappa_grid, "--kappa-grid");
  std::vector<double> lambdas = parse_grid(a.lambda_grid, "--lambda-grid");
  if (!(a.threshold > 0.0)) detail::fail(ErrorCode::InvalidArgument, "--threshold must be positive");
  RunManifest m{"verify", {a.chain, a.cover}, {}};
  m.param("kappa_grid", a.kappa_grid);
  m.param("lambda_grid", a.lambda_grid);
  m.param("threshold", format_double(a.threshold));
  m.param("grid_scale", a.mid_window ? "mid_window" : "absolute");

  std::ostringstream os;
  m.write_comments(os);
  os << "name\tkappa\tlambda\texact\tlower\tupper\tapplicable\tsatisfied\tdiagnostics\n";
  bool violated = false;
  if (!kappas.empty() && !lambdas.empty()) {
    const CoverAnalysis analysis = analyze_cover(chain, cover);
    if (a.mid_window) {
      if (!cover.hypotheses_hold())
        detail::fail(ErrorCode::NotACover, "--mid-window needs an irreducible cover");
      const auto [km, lm] = mid_window(analysis);
      for (double& k : kappas) k *= km;
      for (double& l : lambdas) l *= lm;
    }
    VerifyOptions opt;
    opt.threshold = a.threshold;
    auto opt_text = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("-"); };
    for (double k : kappas)
      for (double l : lambdas)
        for (const BoundReport& r : verify_bounds(analysis, k, l, opt)) {
          os << r.name << '\t' << format_double(k) << '\t' << format_double(l) << '\t' << format_double(r.exact)
             << '\t' << opt_text(r.lower) << '\t' << opt_text(r.upper) << '\t' << (r.applicable ? "true" : "false")
             << '\t' << (r.applicable ? (r.satisfied ? "true" : "false") : "-") << '\t' << diagnostics_text(r)
             << '\n';
          violated = violated || (r.applicable && !r.satisfied);
        }
  }
  emit(a.out, os.str());
  return violated ? kExitViolation : kExitOk;
}

struct SimulateArgs {
  std::string chain, cover, kappa, lambda, experiment, start, testfn, out;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  double eta = 0.2;
  bool mid_window = false;
};

Json report_json(const ExperimentReport& rep) {
  Json j;
  j["experiment"] = rep.experiment;
  j["seed"] = rep.seed;
  j["n"] = rep.n;
  Json est = Json::object();
  for (const auto& [k, v] : rep.estimates) est[k] = num(v);
  j["estimates"] = est;
  Json checks = Json::array();
  for (const Check& c : rep.checks) {
    Json cj;
    cj["name"] = c.name;
    cj["value"] = num(c.value);
    cj["relation"] = c.relation;
    cj["bound"] = num(c.bound);
    cj["defined"] = c.defined;
    cj["passed"] = c.passed;
    checks.push_back(cj);
  }
  j["checks"] = checks;
  j["passed"] = rep.passed();
  return j;
}

int cmd_simulate(const SimulateArgs& a) {
  ReversibleChain chain = load_chain(a.chain);
  CoverPair cover = load_cover(a.cover, chain);
  RunManifest m{"simulate", {a.chain, a.cover}, {}};
  m.param("experiment", a.experiment);
  m.param("n", std::to_string(a.n));
  m.param("seed", std::to_string(a.seed));
  m.param("rng", kRngAlgorithm);

  double kappa = 0.0, lambda = 0.0;
  if (a.mid_window) {
    if (!a.kappa.empty() || !a.lambda.empty())
      detail::fail(ErrorCode::InvalidArgument, "--mid-window excludes --kappa and --lambda");
    const auto [km, lm] = mid_window(analyze_cover(chain, cover));
    kappa = km;
    lambda = lm;
  } else {
    if (a.lambda.empty()) detail::fail(ErrorCode::InvalidArgument, "--lambda (or --mid-window) is required");
    const KillRate l = parse_rate(a.lambda, "--lambda");
    if (l.is_infinite()) detail::fail(ErrorCode::InvalidArgument, "simulation needs a finite --lambda");
    lambda = l.value();
    if (!a.kappa.empty()) {
      const KillRate k = parse_rate(a.kappa, "--kappa");
      if (k.is_infinite()) detail::fail(ErrorCode::InvalidArgument, "simulation needs a finite --kappa");
      kappa = k.value();
    }
  }
  m.param("kappa", format_double(kappa));
  m.param("lambda", format_double(lambda));
  if (!a.start.empty()) m.param("start", a.start);

  const auto mu_r = restricted_measure_on_all(chain, cover.R);
  ExperimentReport rep;
  if (a.experiment == "exit-law") {
    rep = exit_law_experiment(chain, cover, lambda, a.n, a.seed);
  } else if (a.experiment == "thermalization") {
    rep = thermalization_experiment(chain, cover, kappa, lambda, start_distribution(chain, a.start, mu_r), a.n, a.seed);
  } else if (a.experiment == "killing-law") {
    rep = killing_law_experiment(chain, cover, kappa, lambda, start_distribution(chain, a.start, mu_r), a.n, a.seed);
  } else if (a.experiment == "time-average") {
    if (a.testfn.empty()) detail::fail(ErrorCode::InvalidArgument, "time-average needs --testfn");
    m.inputs.push_back(a.testfn);
    m.param("eta", format_double(a.eta));
    rep = time_average_experiment(chain, cover, kappa, lambda, load_test_function(a.testfn, chain), a.eta, a.n,
                                  a.seed);
  } else {
    detail::fail(ErrorCode::InvalidArgument, "unknown experiment '" + a.experiment + "'");
  }
  Json j = report_json(rep);
  j["manifest"] = m.json();
  emit(a.out, dump(j));
  return rep.passed() ? kExitOk : kExitViolation;
}

void write_bundle(const ReversibleChain& chain, const CoverPair& cover, const std::string& prefix,
                  const RunManifest& m) {
  std::ostringstream c;
  write_chain(c, chain);
  std::ostringstream s;
  m.write_comments(s);
  write_cover(s, chain, cover);
  // The chain header must stay on the first line, so the manifest follows it.
  std::string chain_text = c.str();
  const std::size_t eol = chain_text.find('\n') + 1;
  std::ostringstream manifest;
  m.write_comments(manifest);
  chain_text.insert(eol, manifest.str());
  emit(prefix + ".chain", chain_text);
  emit(prefix + ".cover", s.str());
}

struct IsingArgs {
  int L = 3;
  double beta = 0.6, h = 0.1;
  std::string out;
};

int cmd_ising(const IsingArgs& a) {
  IsingSpec spec{a.L, a.beta, a.h, IsingMode::Exact};
  IsingExact model = ising_chain(spec);
  RunManifest m{"ising", {}, {}};
  m.param("L", std::to_string(a.L));
  m.param("beta", format_double(a.beta));
  m.param("h", format_double(a.h));
  write_bundle(model.chain, model.cover, a.out, m);
  return kExitOk;
}

struct DoubleWellArgs {
  std::string preset = "standard", out;
  double beta = 8.0;
};

int cmd_doublewell(const DoubleWellArgs& a) {
  DoubleWellSpec spec = a.preset == "steep" ? steep_double_well(a.beta) : standard_double_well(a.beta);
  DoubleWell dw = double_well_chain(spec);
  RunManifest m{"doublewell", {}, {}};
  m.param("preset", a.preset);
  m.param("beta", format_double(a.beta));
  write_bundle(dw.chain, dw.cover, a.out, m);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Soft capacities, quasi-stationary measures and metastability bounds for reversible chains"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  GapArgs gap;
  auto* g = app.add_subcommand("gap", "Spectral gap of the chain, and of the cover pieces if a cover is given");
  g->add_option("chain", gap.chain, "Chain file")->required();
  g->add_option("--cover", gap.cover, "Cover file");
  g->add_option("--out", gap.out, "Output file (default stdout)");

  CapacityArgs cap;
  auto* c = app.add_subcommand("capacity", "Soft capacity certificate as JSON");
  c->add_option("chain", cap.chain, "Chain file")->required();
  c->add_option("cover", cap.cover, "Cover file")->required();
  c->add_option("--kappa", cap.kappa, "Killing rate on R (number or INF)")->required();
  c->add_option("--lambda", cap.lambda, "Killing rate on S (number or INF)")->required();
  c->add_option("--flow", cap.flow, "Unit flow file; adds thomson_lower");
  c->add_option("--testfn", cap.testfn, "Test function file; adds dirichlet_upper");
  c->add_option("--out", cap.out, "Output file (default stdout)");

  QsmArgs qsm;
  auto* q = app.add_subcommand("qsm", "Soft measure on R killed at rate lambda on S, as JSON");
  q->add_option("chain", qsm.chain, "Chain file")->required();
  q->add_option("cover", qsm.cover, "Cover file")->required();
  q->add_option("--lambda", qsm.lambda, "Killing rate on S (number or INF)")->required();
  q->add_option("--out", qsm.out, "Output file (default stdout)");

  VerifyArgs ver;
  auto* v = app.add_subcommand("verify", "Evaluate every bound over a (kappa, lambda) grid as TSV");
  v->add_option("chain", ver.chain, "Chain file")->required();
  v->add_option("cover", ver.cover, "Cover file")->required();
  v->add_option("--kappa-grid", ver.kappa_grid, "Comma-separated kappa values")->required();
  v->add_option("--lambda-grid", ver.lambda_grid, "Comma-separated lambda values")->required();
  v->add_option("--threshold", ver.threshold, "Window threshold for the hypothesis flags")->capture_default_str();
  v->add_flag("--mid-window", ver.mid_window, "Treat grid values as multiples of the window midpoints");
  v->add_option("--out", ver.out, "Output file (default stdout)");

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Seeded Monte Carlo experiment as JSON");
  s->add_option("chain", sim.chain, "Chain file")->required();
  s->add_option("cover", sim.cover, "Cover file")->required();
  s->add_option("--kappa", sim.kappa, "Killing rate on R");
  s->add_option("--lambda", sim.lambda, "Killing rate on S");
  s->add_flag("--mid-window", sim.mid_window, "Use the window midpoints for kappa and lambda");
  s->add_option("--experiment", sim.experiment, "Experiment")
      ->required()
      ->check(CLI::IsMember({"exit-law", "thermalization", "time-average", "killing-law"}));
  s->add_option("--n", sim.n, "Number of trajectories")->capture_default_str();
  s->add_option("--seed", sim.seed, "Master seed")->required();
  s->add_option("--start", sim.start, "Start state (default: restricted equilibrium on R)");
  s->add_option("--eta", sim.eta, "Accuracy parameter of the time-average experiment")->capture_default_str();
  s->add_option("--testfn", sim.testfn, "Observable file for the time-average experiment");
  s->add_option("--out", sim.out, "Output file (default stdout)");

  IsingArgs ising;
  auto* is = app.add_subcommand("ising", "Write the exact Ising chain and magnetization cover");
  is->add_option("--L", ising.L, "Lattice side")->capture_default_str();
  is->add_option("--beta", ising.beta, "Inverse temperature")->capture_default_str();
  is->add_option("--field", ising.h, "External field h")->capture_default_str();
  is->add_option("--out", ising.out, "Output prefix: writes PREFIX.chain and PREFIX.cover")->required();

  DoubleWellArgs dw;
  auto* d = app.add_subcommand("doublewell", "Write a double-well birth-death chain and its cover");
  d->add_option("--preset", dw.preset, "Preset")->check(CLI::IsMember({"standard", "steep"}))->capture_default_str();
  d->add_option("--beta", dw.beta, "Inverse temperature")->capture_default_str();
  d->add_option("--out", dw.out, "Output prefix: writes PREFIX.chain and PREFIX.cover")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*g) return cmd_gap(gap);
    if (*c) return cmd_capacity(cap);
    if (*q) return cmd_qsm(qsm);
    if (*v) return cmd_verify(ver);
    if (*s) return cmd_simulate(sim);
    if (*is) return cmd_ising(ising);
    if (*d) return cmd_doublewell(dw);
  } catch (const ParseError& e) {
    std::cerr << "softcap: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "softcap: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "softcap: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
