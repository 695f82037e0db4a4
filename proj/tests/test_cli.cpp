#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "cpm/market.hpp"
#include "cpm/networks.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int exit_code;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(CPM_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  std::string out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  for (std::string line; std::getline(is, line);) out.push_back(line);
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Lines with a "[display]" suffix: display part must match exactly, full values within tol.
void expect_line_matches(const std::string& got, const std::string& want, double tol) {
  const auto gb = got.find(" ["), wb = want.find(" [");
  if (wb == std::string::npos) {
    EXPECT_EQ(got, want);
    return;
  }
  ASSERT_NE(gb, std::string::npos) << got;
  EXPECT_EQ(got.substr(gb), want.substr(wb));
  const auto gc = got.find(": "), wc = want.find(": ");
  ASSERT_EQ(got.substr(0, gc), want.substr(0, wc));
  std::istringstream gs(got.substr(gc + 2, gb - gc - 2)), ws(want.substr(wc + 2, wb - wc - 2));
  double g = 0, w = 0;
  std::size_t n = 0;
  while (ws >> w) {
    ASSERT_TRUE(static_cast<bool>(gs >> g)) << got;
    EXPECT_NEAR(g, w, tol) << got;
    ++n;
  }
  EXPECT_GT(n, 0u) << want;
}

}  // namespace

TEST(Cli, InspectBnDef) {
  const auto r = run("inspect bn-def");
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(r.out, "variables: 3; arcs: 2\ncliques: {D,E} {D,F}; separator: {D}; treewidth: 1\n");
  const auto f = run("inspect " + (fs::path(CPM_NETWORKS_DIR) / "bn-def.json").string());
  EXPECT_EQ(f.out, r.out);
}

TEST(Cli, InspectAlarm) {
  const auto r = run("inspect " + (fs::path(CPM_NETWORKS_DIR) / "alarm.bif").string());
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NE(r.out.find("variables: 37; arcs: 46"), std::string::npos) << r.out;
}

TEST(Cli, WalkthroughMatchesGolden) {
  const auto r = run("walkthrough");
  ASSERT_EQ(r.exit_code, 0) << r.out;
  const auto got = lines_of(r.out);
  const auto want = lines_of(read_file(fs::path(CPM_GOLDEN_DIR) / "walkthrough.txt"));
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) expect_line_matches(got[i], want[i], 1e-9);
}

TEST(Cli, WalkthroughShowsReferenceValues) {
  const auto out = run("walkthrough").out;
  for (const char* s : {"joe min q: 57.142857142857132 [57.14]", "amy min q: 62.543859649122801 [62.54]",
                        "m(t): 123.07692307692308 [123.08]", "joe min q: 1.391941391941393 [1.39]",
                        "joe assets unchanged: yes", "position: long"})
    EXPECT_NE(out.find(s), std::string::npos) << s;
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run("").exit_code, 2);
  EXPECT_EQ(run("inspect bn-def --no-such-flag").exit_code, 2);
  EXPECT_EQ(run("frobnicate").exit_code, 2);
  const auto missing = run("inspect /nonexistent/net.json");
  EXPECT_EQ(missing.exit_code, 1);
  EXPECT_NE(missing.out.find("error:"), std::string::npos);
}

TEST(Cli, MalformedNetworkReportsCode) {
  const auto path = fs::temp_directory_path() / "cpm_cli_bad.json";
  std::ofstream(path) << "{\"variables\": [";
  const auto r = run("inspect " + path.string());
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.out.find("error: syntax"), std::string::npos) << r.out;
  fs::remove(path);
}

TEST(Cli, ReplayPrintsFinalMarginals) {
  const cpm::MarketConfig config{2.0, 100.0};
  auto m = cpm::Market::create(cpm::networks::bn_def(), config);
  m.register_user("joe");
  m.register_user("amy");
  m.commit_trade("joe", {"E", "e1", {}}, 0.8);
  m.commit_trade("amy", {"D", "d1", {{"F", "f2"}}}, 0.7);
  const auto path = fs::temp_directory_path() / "cpm_cli_ledger.jsonl";
  {
    std::ofstream out(path);
    for (const auto& rec : m.ledger()) cpm::write_ledger_line(out, rec);
  }
  const auto r = run("replay bn-def " + path.string() + " --b 2 --q0 100");
  EXPECT_EQ(r.exit_code, 0) << r.out;
  EXPECT_NE(r.out.find("replayed 2 trades; last seq 2"), std::string::npos) << r.out;
  const auto pe = cpm::marginal(m.state(), "E").values;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", pe[0]);
  EXPECT_NE(r.out.find(buf), std::string::npos) << r.out;

  std::ofstream(path, std::ios::app) << "{\"seq\": 9}\n";
  EXPECT_EQ(run("replay bn-def " + path.string() + " --b 2").exit_code, 1);
  fs::remove(path);
}

TEST(Cli, SimulateAndBench) {
  const auto s = run("simulate --net bn-def --edits 200 --intensity 8 --lock-time 0.3 --seed 2");
  EXPECT_EQ(s.exit_code, 0) << s.out;
  EXPECT_NE(s.out.find("rejection"), std::string::npos) << s.out;
  const auto b = run("bench --vars 20 --treewidth 3 --edits 20");
  EXPECT_EQ(b.exit_code, 0) << b.out;
  EXPECT_NE(b.out.find("mean"), std::string::npos) << b.out;
}
