#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "cpm/model.hpp"
#include "cpm/networks.hpp"
#include "cpm/sim.hpp"

using namespace cpm;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::invalid_argument;
}

}  // namespace

TEST(Model, BnDefIsValid) {
  const auto net = networks::bn_def();
  EXPECT_TRUE(validate_network(net).ok());
  EXPECT_EQ(net.size(), 3u);
  EXPECT_EQ(net.arc_count(), 2u);
  EXPECT_EQ(net.parents_of(net.index_of("E")), std::vector<VarId>{0});
}

TEST(Model, NativeRoundTripIsExact) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const auto net = sim::generate_random_network(1 + seed % 9, 1 + seed % 3, 2 + seed % 3, seed);
    const auto text = serialize_network(net);
    const auto back = parse_network(text);
    EXPECT_EQ(back, net) << "seed " << seed;
    EXPECT_EQ(serialize_network(back), text);
  }
}

TEST(Model, SyntaxErrorReportsPosition) {
  try {
    parse_network("{\n  \"variables\": [\n  oops\n}");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::syntax);
    EXPECT_NE(std::string(e.what()).find("3:"), std::string::npos) << e.what();
  }
  EXPECT_EQ(code_of([] { parse_network("   \n"); }), Errc::syntax);
}

TEST(Model, StructuralErrors) {
  auto text_of = [](BayesNet net) { return serialize_network(net); };
  auto net = networks::bn_def();

  auto dup = net;
  dup.variables.push_back({"D", {"a", "b"}});
  EXPECT_EQ(code_of([&] { parse_network(text_of(dup)); }), Errc::duplicate_variable);

  auto unknown = net;
  unknown.cpds[1].parents = {"Q"};
  EXPECT_EQ(code_of([&] { parse_network(text_of(unknown)); }), Errc::unknown_variable);

  auto short_rows = net;
  short_rows.cpds[1].table.pop_back();
  EXPECT_EQ(code_of([&] { parse_network(text_of(short_rows)); }), Errc::malformed_table);

  auto wide = net;
  wide.cpds[0].table[0].push_back(0.0);
  EXPECT_EQ(code_of([&] { parse_network(text_of(wide)); }), Errc::malformed_table);

  auto cyclic = net;
  cyclic.cpds[0].parents = {"E"};
  cyclic.cpds[0].table = {{0.5, 0.5}, {0.5, 0.5}};
  EXPECT_EQ(code_of([&] { parse_network(text_of(cyclic)); }), Errc::invalid_network);
}

TEST(Model, ValidationListsEveryViolation) {
  auto net = networks::bn_def();
  net.cpds[0].table = {{0.5, 0.6}};
  net.cpds[1].table[0] = {1.0, 0.0};
  net.variables.push_back({"G", {"g"}});
  const auto report = validate_network(net);
  auto has = [&](const std::string& needle) {
    for (const auto& v : report.violations)
      if (v.find(needle) != std::string::npos) return true;
    return false;
  };
  EXPECT_TRUE(has("row sum"));
  EXPECT_TRUE(has("zero probability"));
  EXPECT_TRUE(has("fewer than 2 states"));
  EXPECT_TRUE(has("'G' has no cpd"));
}

TEST(Model, FloorRemovesZeros) {
  auto net = networks::bn_def();
  net.cpds[1].table[0] = {1.0, 0.0};
  EXPECT_FALSE(validate_network(net).ok());
  const auto floored = floor_probabilities(net, 1e-4);
  EXPECT_TRUE(validate_network(floored).ok());
  EXPECT_NEAR(floored.cpds[1].table[0][1], 1e-4 / (1.0 + 1e-4), 1e-15);
}

TEST(Model, AlarmBif) {
  const auto net = parse_network(read_file(CPM_NETWORKS_DIR "/alarm.bif"), NetworkFormat::bif);
  EXPECT_EQ(net.size(), 37u);
  EXPECT_EQ(net.arc_count(), 46u);
  EXPECT_EQ(net.cardinality(net.index_of("HR")), 3u);
  EXPECT_TRUE(validate_network(floor_probabilities(net, 1e-4)).ok());
}

TEST(Model, BifParsesRowsAndTables) {
  const std::string bif = R"(network test { }
variable A { type discrete [ 2 ] { yes, no }; }
variable B { type discrete [ 3 ] { lo, mid, hi }; property p = 1; }
probability ( A ) { table 0.2, 0.8; }
probability ( B | A ) {
  (no) 0.1, 0.1, 0.8;
  (yes) 0.3, 0.3, 0.4;
}
)";
  const auto net = parse_network(bif, NetworkFormat::bif);
  ASSERT_EQ(net.size(), 2u);
  const auto& b = *net.cpd_for(net.index_of("B"));
  EXPECT_EQ(b.table[0], (std::vector<double>{0.3, 0.3, 0.4}));
  EXPECT_EQ(b.table[1], (std::vector<double>{0.1, 0.1, 0.8}));
}

TEST(Model, BifErrors) {
  EXPECT_EQ(code_of([] { parse_network("variable A { type discrete [ 2 ] { a, b }; }\nprobability ( Z ) { table 1; }",
                                       NetworkFormat::bif); }),
            Errc::unknown_variable);
  EXPECT_EQ(code_of([] { parse_network("variable A { type discrete [ 3 ] { a, b }; }", NetworkFormat::bif); }),
            Errc::syntax);
  EXPECT_EQ(code_of([] {
              parse_network(
                  "variable A { type discrete [ 2 ] { a, b }; }\n"
                  "variable B { type discrete [ 2 ] { a, b }; }\n"
                  "probability ( A ) { table 0.5, 0.5; }\n"
                  "probability ( B | A ) { (a) 0.5, 0.5; }",
                  NetworkFormat::bif);
            }),
            Errc::malformed_table);
}
