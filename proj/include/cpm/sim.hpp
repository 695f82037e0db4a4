#pragma once

// Random bounded-treewidth networks, lock-time benchmarks, and Poisson-arrival
// market simulation on a virtual clock.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "cpm/market.hpp"
#include "cpm/model.hpp"
#include "cpm/service.hpp"

namespace cpm::sim {

inline constexpr double kCpdFloor = 1e-4;

// Random k-tree: the first k+1 variables form a clique; each later variable
// picks an existing (k+1)-clique, drops one member, and takes the remaining k
// as parents. Moralization adds no edges outside the k-tree, so the min-fill
// triangulation has treewidth <= k.
inline BayesNet generate_random_network(std::size_t n_vars, std::size_t k, std::size_t states_per_var,
                                        std::uint64_t seed) {
  if (n_vars == 0 || k == 0 || states_per_var < 2)
    throw Error(Errc::invalid_argument, "need n >= 1, k >= 1 and at least 2 states");
  std::mt19937_64 rng(seed);
  BayesNet net;
  std::vector<std::string> labels;
  for (std::size_t s = 0; s < states_per_var; ++s) labels.push_back("s" + std::to_string(s));
  for (std::size_t i = 0; i < n_vars; ++i) net.variables.push_back({"X" + std::to_string(i), labels});

  std::vector<std::vector<std::size_t>> parents(n_vars);
  std::vector<std::vector<std::size_t>> cliques;
  const std::size_t base = std::min(n_vars, k + 1);
  for (std::size_t i = 0; i < base; ++i)
    for (std::size_t j = 0; j < i; ++j) parents[i].push_back(j);
  if (n_vars > k) {
    std::vector<std::size_t> first(base);
    std::iota(first.begin(), first.end(), 0);
    cliques.push_back(first);
  }
  for (std::size_t i = base; i < n_vars; ++i) {
    auto clique = cliques[std::uniform_int_distribution<std::size_t>(0, cliques.size() - 1)(rng)];
    clique.erase(clique.begin() + static_cast<std::ptrdiff_t>(std::uniform_int_distribution<std::size_t>(0, k)(rng)));
    parents[i] = clique;
    clique.push_back(i);
    cliques.push_back(std::move(clique));
  }

  std::exponential_distribution<double> gamma1(1.0);
  for (std::size_t i = 0; i < n_vars; ++i) {
    Cpd cpd;
    cpd.child = net.variables[i].name;
    std::size_t rows = 1;
    for (std::size_t p : parents[i]) {
      cpd.parents.push_back(net.variables[p].name);
      rows *= states_per_var;
    }
    for (std::size_t r = 0; r < rows; ++r) {
      std::vector<double> row(states_per_var);
      double z = 0.0;
      for (double& x : row) z += (x = gamma1(rng));
      double z2 = 0.0;
      for (double& x : row) z2 += (x = std::max(x / z, kCpdFloor));
      for (double& x : row) x /= z2;
      cpd.table.push_back(std::move(row));
    }
    net.cpds.push_back(std::move(cpd));
  }
  return net;
}

// Random structure-preserving edit: random clique, random target in it, and
// for cliques of more than three variables two further variables with random
// states as assumptions.
inline Edit draw_edit(const MarketModel& model, std::mt19937_64& rng) {
  const auto& jt = *model.jt;
  const auto& net = model.net;
  const auto& clique = jt.cliques[std::uniform_int_distribution<std::size_t>(0, jt.cliques.size() - 1)(rng)];
  std::vector<VarId> vars = clique.vars;
  std::shuffle(vars.begin(), vars.end(), rng);
  Edit e;
  const VarId t = vars[0];
  e.target = net.variables[t].name;
  e.state = net.variables[t].states[std::uniform_int_distribution<std::size_t>(0, jt.cards[t] - 1)(rng)];
  if (vars.size() > 3) {
    for (std::size_t i = 1; i <= 2; ++i) {
      const VarId a = vars[i];
      e.assumptions[net.variables[a].name] =
          net.variables[a].states[std::uniform_int_distribution<std::size_t>(0, jt.cards[a] - 1)(rng)];
    }
  }
  return e;
}

// Uniform inside the limits shrunk by 1% of their width on each side.
inline double draw_value(const EditLimits& lim, std::mt19937_64& rng) {
  const double width = lim.upper - lim.lower;
  return std::uniform_real_distribution<double>(lim.lower + 0.01 * width, lim.upper - 0.01 * width)(rng);
}

struct LockStats {
  std::size_t samples = 0;
  double mean = 0.0;
  double p95 = 0.0;
  double max = 0.0;
};

inline LockStats summarize(std::vector<double> xs) {
  LockStats s;
  s.samples = xs.size();
  if (xs.empty()) return s;
  std::sort(xs.begin(), xs.end());
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  s.max = xs.back();
  const auto idx = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(xs.size()))) - 1;
  s.p95 = xs[std::min(idx, xs.size() - 1)];
  return s;
}

// Times the serialized commit section of n_edits random edits by one user.
inline LockStats benchmark_lock_time(const BayesNet& net, std::size_t n_edits, std::uint64_t seed) {
  auto market = Market::create(net, MarketConfig::from_loss_bound(10.0, net));
  market.register_user("bench");
  std::mt19937_64 rng(seed);
  std::vector<double> times;
  CommitOptions opts;
  opts.summary = false;
  opts.time = 0.0;
  for (std::size_t i = 0; i < n_edits; ++i) {
    const auto edit = draw_edit(market.model(), rng);
    const auto lim = edit_limits(market.state(), "bench", edit);
    times.push_back(market.commit_trade("bench", edit, draw_value(lim, rng), opts).lock_seconds);
  }
  return summarize(std::move(times));
}

struct SimRecord {
  std::size_t index = 0;
  double arrival = 0.0;
  bool accepted = false;
  std::uint64_t seq = 0;
  double lock_seconds = 0.0;
  double min_q = 0.0;
};

struct SimReport {
  std::size_t attempted = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t rejected_busy = 0;
  double rejection_rate = 0.0;
  LockStats lock;
  double intensity = 0.0;
  std::uint64_t seed = 0;
  // Smallest post-trade min-q of the committing user over accepted edits.
  double worst_min_q = std::numeric_limits<double>::infinity();
  std::vector<SimRecord> records;
};

struct SimOptions {
  std::size_t n_users = 100;
  double intensity = 8.0;  // edits per minute
  std::size_t n_edits = 1000;
  LockPolicy policy{};
  std::uint64_t seed = 1;
};

// Edits by random users arrive as a Poisson process on a virtual clock and are
// routed through MarketService::submit_edit_at.
inline SimReport run_market_simulation(const BayesNet& net, const SimOptions& opt) {
  if (!(opt.intensity > 0.0)) throw Error(Errc::invalid_argument, "intensity must be positive");
  if (opt.n_users == 0) throw Error(Errc::invalid_argument, "need at least one user");
  MarketService service(Market::create(net, MarketConfig::from_loss_bound(10.0, net)), opt.policy);
  std::vector<std::string> users;
  for (std::size_t u = 0; u < opt.n_users; ++u) {
    users.push_back("u" + std::to_string(u));
    service.register_user(users.back());
  }

  std::mt19937_64 rng(opt.seed);
  std::exponential_distribution<double> gap(opt.intensity / 60.0);
  std::uniform_int_distribution<std::size_t> pick_user(0, users.size() - 1);
  SimReport report;
  report.intensity = opt.intensity;
  report.seed = opt.seed;
  std::vector<double> locks;
  double clock = 0.0;
  for (std::size_t i = 0; i < opt.n_edits; ++i) {
    clock += gap(rng);
    const auto state = service.snapshot();
    EditSubmission sub;
    sub.user = users[pick_user(rng)];
    sub.edit = draw_edit(*state->model, rng);
    sub.value = draw_value(edit_limits(*state, sub.user, sub.edit), rng);
    const auto result = service.submit_edit_at(sub, clock);

    SimRecord rec;
    rec.index = i;
    rec.arrival = clock;
    rec.accepted = result.accepted;
    ++report.attempted;
    if (result.accepted) {
      ++report.accepted;
      rec.seq = result.outcome->record.seq;
      rec.lock_seconds = opt.policy.synthetic_lock_time ? *opt.policy.synthetic_lock_time : result.outcome->lock_seconds;
      rec.min_q = result.outcome->min_q;
      report.worst_min_q = std::min(report.worst_min_q, rec.min_q);
      locks.push_back(rec.lock_seconds);
    } else {
      ++report.rejected;
      if (result.busy()) ++report.rejected_busy;
    }
    report.records.push_back(rec);
  }
  report.rejection_rate = report.attempted ? static_cast<double>(report.rejected) / report.attempted : 0.0;
  report.lock = summarize(std::move(locks));
  return report;
}

inline void write_csv(std::ostream& os, const SimReport& report) {
  os << "index,seq,arrival,accepted,lock_seconds\n";
  os.precision(17);
  for (const auto& r : report.records)
    os << r.index << ',' << r.seq << ',' << r.arrival << ',' << (r.accepted ? 1 : 0) << ',' << r.lock_seconds << '\n';
}

}  // namespace cpm::sim
