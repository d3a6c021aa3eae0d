// Copyright 2026 The softcap Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct CliRun {
  int status = -1;
  std::string out;
};

CliRun run(const std::string& args) {
  const std::string cmd = std::string(SOFTCAP_CLI_PATH) + " " + args + " 2>/dev/null";
  CliRun r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  for (std::size_t k; (k = fread(buf, 1, sizeof buf, p)) > 0;) r.out.append(buf, k);
  const int st = pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string data(const std::string& name) { return std::string(SOFTCAP_SAMPLES_DIR) + "/" + name; }

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

fs::path scratch_dir() {
  fs::path d = fs::temp_directory_path() / ("softcap_cli_test_" + std::to_string(::getpid()));
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run("--help").status, 0);
  EXPECT_EQ(run("").status, 2);
  EXPECT_EQ(run("gap").status, 2);
  EXPECT_EQ(run("gap /nonexistent/file.chain").status, 2);
  EXPECT_EQ(run("simulate " + data("two_state.chain") + " " + data("two_state.cover") +
                " --lambda 1 --experiment nope --seed 1")
                .status,
            2);
}

TEST(Cli, GapOutput) {
  CliRun r = run("gap " + data("two_state.chain"));
  ASSERT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("\ngamma 3.0\n"), std::string::npos) << r.out;
  EXPECT_EQ(r.out.rfind("# command", 0), 0u);
  CliRun p = run("gap " + data("three_path.chain") + " --cover " + data("three_path.cover"));
  ASSERT_EQ(p.status, 0);
  EXPECT_NE(p.out.find("\ngamma 1.0\n"), std::string::npos) << p.out;
  EXPECT_NE(p.out.find("\ngamma_R 2.0\n"), std::string::npos) << p.out;
}

TEST(Cli, CapacityJson) {
  CliRun r = run("capacity " + data("two_state.chain") + " " + data("two_state.cover") + " --kappa 1 --lambda 1 --flow " +
              data("two_state.flow"));
  ASSERT_EQ(r.status, 0);
  auto j = nlohmann::json::parse(r.out);
  EXPECT_NEAR(j["capacity"].get<double>(), 1.0 / 6.0, 1e-14);
  EXPECT_NEAR(j["phi_kl"].get<double>(), 0.75, 1e-14);
  EXPECT_NEAR(j["thomson_lower"].get<double>(), 1.0 / 6.0, 1e-14);
  EXPECT_LE(j["duality_gap"].get<double>(), 1e-12);
  EXPECT_EQ(j["manifest"]["command"], "capacity");
  EXPECT_EQ(j["potential"].size(), 2u);
}

TEST(Cli, QsmJsonAndDegenerateKilling) {
  CliRun r = run("qsm " + data("two_state.chain") + " " + data("two_state.cover") + " --lambda 2");
  ASSERT_EQ(r.status, 0);
  auto j = nlohmann::json::parse(r.out);
  EXPECT_NEAR(j["phi_star"].get<double>(), 0.5, 1e-12);
  CliRun inf = run("qsm " + data("three_path.chain") + " " + data("three_path.cover") + " --lambda INF");
  ASSERT_EQ(inf.status, 0);
  EXPECT_NEAR(nlohmann::json::parse(inf.out)["phi_star"].get<double>(), 1.0, 1e-12);
  EXPECT_EQ(run("qsm " + data("two_state.chain") + " " + data("two_state.cover") + " --lambda 0").status, 2);
}

TEST(Cli, VerifyTable) {
  CliRun r = run("verify " + data("three_path.chain") + " " + data("three_path.cover") +
              " --kappa-grid 0.5,1 --lambda-grid 0.5,1");
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("name\tkappa\tlambda\texact\tlower\tupper\tapplicable\tsatisfied\tdiagnostics\n"),
            std::string::npos);
  EXPECT_NE(r.out.find("gap_lower\t"), std::string::npos);
  std::istringstream lines(r.out);
  int rows = 0;
  for (std::string line; std::getline(lines, line);) {
    if (line.empty() || line[0] == '#' || line.rfind("name\t", 0) == 0) continue;
    std::vector<std::string> cols;
    std::istringstream fields(line);
    for (std::string col; std::getline(fields, col, '\t');) cols.push_back(col);
    ASSERT_EQ(cols.size(), 9u) << line;
    EXPECT_NE(cols[7], "false") << line;
    ++rows;
  }
  EXPECT_GT(rows, 40);
}

TEST(Cli, SimulateIsByteReproducible) {
  const std::string args = "simulate " + data("three_path.chain") + " " + data("three_path.cover") +
                           " --lambda 1 --experiment exit-law --n 300 --seed 5";
  ::setenv("SOURCE_DATE_EPOCH", "0", 1);
  CliRun x = run(args), y = run(args);
  ::unsetenv("SOURCE_DATE_EPOCH");
  ASSERT_EQ(x.status, 0) << x.out;
  EXPECT_EQ(x.out, y.out);
  auto j = nlohmann::json::parse(x.out);
  EXPECT_EQ(j["seed"], 5);
  EXPECT_EQ(j["manifest"]["timestamp"], "1970-01-01T00:00:00Z");
  EXPECT_TRUE(j["passed"].get<bool>());
}

TEST(Cli, GeneratorsRoundTrip) {
  const fs::path dir = scratch_dir();
  const std::string dw = (dir / "dw").string(), is = (dir / "ising").string();
  ASSERT_EQ(run("doublewell --preset steep --beta 4 --out " + dw).status, 0);
  ASSERT_EQ(run("ising --L 2 --beta 0.5 --field 0.1 --out " + is).status, 0);
  EXPECT_TRUE(fs::exists(dw + ".chain") && fs::exists(dw + ".cover"));
  CliRun g = run("gap " + dw + ".chain --cover " + dw + ".cover");
  EXPECT_EQ(g.status, 0);
  EXPECT_NE(g.out.find("gamma_R "), std::string::npos);
  CliRun v = run("verify " + dw + ".chain " + dw + ".cover --kappa-grid 1 --lambda-grid 1 --mid-window");
  EXPECT_EQ(v.status, 0) << v.out;
  CliRun q = run("qsm " + is + ".chain " + is + ".cover --lambda 1");
  EXPECT_EQ(q.status, 0);
  EXPECT_EQ(nlohmann::json::parse(q.out)["mu_star"].size(), 16u);
  // Out-file mode writes the same bytes as stdout mode.
  const fs::path out = dir / "gap.txt";
  ASSERT_EQ(run("gap " + dw + ".chain --out " + out.string()).status, 0);
  EXPECT_EQ(slurp(out), run("gap " + dw + ".chain").out);
  fs::remove_all(dir);
}
