#include <sstream>

#include <gtest/gtest.h>

#include "cpm/jtree.hpp"
#include "cpm/networks.hpp"
#include "cpm/sim.hpp"

using namespace cpm;

namespace {

// Erlang loss (B(1, a)) for one server with offered load a = λ·s.
double erlang_loss(double per_minute, double lock_seconds) {
  const double a = per_minute / 60.0 * lock_seconds;
  return a / (1.0 + a);
}

sim::SimOptions synthetic(double intensity, std::size_t edits, std::uint64_t seed) {
  sim::SimOptions o;
  o.intensity = intensity;
  o.n_edits = edits;
  o.seed = seed;
  o.policy.synthetic_lock_time = 0.3;
  return o;
}

}  // namespace

TEST(Generator, RespectsTreewidthBound) {
  EXPECT_LE(compile(sim::generate_random_network(30, 5, 2, 1)).treewidth, 5u);
  for (std::uint64_t seed = 1; seed <= 50; ++seed)
    EXPECT_LE(compile(sim::generate_random_network(10, 3, 2, seed)).treewidth, 3u) << "seed " << seed;
  for (std::size_t k : {5u, 10u, 15u})
    EXPECT_LE(compile(sim::generate_random_network(120, k, 2, 3)).treewidth, k);
}

TEST(Generator, SingleNodeAndDeterminism) {
  const auto one = sim::generate_random_network(1, 4, 2, 9);
  EXPECT_EQ(one.size(), 1u);
  EXPECT_TRUE(validate_network(one).ok());
  const auto a = sim::generate_random_network(40, 4, 3, 123), b = sim::generate_random_network(40, 4, 3, 123);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, sim::generate_random_network(40, 4, 3, 124));
  EXPECT_TRUE(validate_network(a).ok());
  for (const auto& cpd : a.cpds)
    for (const auto& row : cpd.table)
      for (double x : row) EXPECT_GE(x, 0.9 * sim::kCpdFloor);
}

TEST(Generator, ParentsFormOneClique) {
  const auto net = sim::generate_random_network(50, 4, 2, 5);
  for (VarId v = 0; v < net.size(); ++v) EXPECT_LE(net.parents_of(v).size(), 4u);
}

TEST(Benchmark, ReportsPositiveLockTimes) {
  BayesNet single;
  single.variables = {{"X", {"a", "b"}}};
  single.cpds = {{"X", {}, {{0.5, 0.5}}}};
  const auto s = sim::benchmark_lock_time(single, 50, 1);
  EXPECT_EQ(s.samples, 50u);
  EXPECT_GT(s.mean, 0.0);
  EXPECT_LE(s.p95, s.max);
}

TEST(Benchmark, EditSequenceIsDeterministic) {
  const auto net = sim::generate_random_network(30, 3, 2, 8);
  auto m = Market::create(net, {1.0, 100.0});
  std::mt19937_64 r1(42), r2(42);
  for (int i = 0; i < 100; ++i) {
    const auto a = sim::draw_edit(m.model(), r1), b = sim::draw_edit(m.model(), r2);
    EXPECT_EQ(a.target, b.target);
    EXPECT_EQ(a.state, b.state);
    EXPECT_EQ(a.assumptions, b.assumptions);
  }
}

TEST(Benchmark, LargeCliquesGetTwoAssumptions) {
  const auto net = sim::generate_random_network(30, 5, 2, 2);
  auto m = Market::create(net, {1.0, 100.0});
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto e = sim::draw_edit(m.model(), rng);
    const auto r = resolve(m.model(), e);
    const auto size = m.model().jt->cliques[r.clique].vars.size();
    EXPECT_EQ(e.assumptions.size(), size > 3 ? 2u : 0u);
  }
}

TEST(Simulation, CountsAreConsistentAndSafe) {
  const auto r = sim::run_market_simulation(networks::bn_def(), synthetic(30.0, 600, 3));
  EXPECT_EQ(r.attempted, 600u);
  EXPECT_EQ(r.attempted, r.accepted + r.rejected);
  EXPECT_EQ(r.rejected, r.rejected_busy);
  EXPECT_DOUBLE_EQ(r.rejection_rate, static_cast<double>(r.rejected) / r.attempted);
  EXPECT_GE(r.worst_min_q, 1.0);
  EXPECT_DOUBLE_EQ(r.lock.mean, 0.3);
}

TEST(Simulation, VanishingIntensityNeverRejects) {
  const auto r = sim::run_market_simulation(networks::bn_def(), synthetic(0.01, 300, 4));
  EXPECT_EQ(r.rejected, 0u);
}

TEST(Simulation, MatchesErlangLoss) {
  for (double lambda : {2.0, 8.0, 30.0}) {
    const auto r = sim::run_market_simulation(networks::bn_def(), synthetic(lambda, 10000, 11));
    EXPECT_NEAR(r.rejection_rate, erlang_loss(lambda, 0.3), 0.02) << lambda << "/min";
  }
}

TEST(Simulation, RejectionRateIsMonotoneInIntensity) {
  double prev = -1.0;
  for (double lambda : {2.0, 8.0, 30.0, 60.0}) {
    double sum = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed)
      sum += sim::run_market_simulation(networks::bn_def(), synthetic(lambda, 300, seed)).rejection_rate;
    EXPECT_GE(sum / 20.0, prev) << lambda;
    prev = sum / 20.0;
  }
}

TEST(Simulation, QueueModeRejectsLess) {
  auto reject = synthetic(30.0, 2000, 5);
  auto queue = reject;
  queue.policy.mode = LockPolicy::Mode::queue;
  queue.policy.queue_capacity = 2;
  const auto a = sim::run_market_simulation(networks::bn_def(), reject);
  const auto b = sim::run_market_simulation(networks::bn_def(), queue);
  EXPECT_LT(b.rejection_rate, a.rejection_rate);
}

TEST(Simulation, CsvHasOneRowPerEdit) {
  const auto r = sim::run_market_simulation(networks::bn_def(), synthetic(8.0, 50, 1));
  std::stringstream ss;
  sim::write_csv(ss, r);
  std::string line;
  std::getline(ss, line);
  EXPECT_EQ(line, "index,seq,arrival,accepted,lock_seconds");
  std::size_t rows = 0;
  while (std::getline(ss, line)) ++rows;
  EXPECT_EQ(rows, 50u);
}

TEST(Simulation, RejectsBadArguments) {
  EXPECT_THROW(sim::run_market_simulation(networks::bn_def(), synthetic(0.0, 10, 1)), Error);
  EXPECT_THROW(sim::generate_random_network(0, 2, 2, 1), Error);
}
