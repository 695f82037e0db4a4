// cpm: inspect networks, run the walkthrough, simulate, benchmark, serve, replay.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <httplib.h>

#include "cpm/http.hpp"
#include "cpm/market.hpp"
#include "cpm/networks.hpp"
#include "cpm/report.hpp"
#include "cpm/service.hpp"
#include "cpm/sim.hpp"

namespace fs = std::filesystem;

namespace {

struct FileMissing : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NetOptions {
  std::string path;
  std::string format;
  double floor = 0.0;
};

cpm::BayesNet load_network(const NetOptions& o) {
  cpm::BayesNet net;
  if (o.path == "bn-def") {
    net = cpm::networks::bn_def();
  } else {
    if (!fs::exists(o.path)) throw FileMissing("no such file: " + o.path);
    std::ifstream in(o.path);
    std::stringstream buf;
    buf << in.rdbuf();
    auto format = cpm::NetworkFormat::native;
    if (o.format == "bif" || (o.format.empty() && fs::path(o.path).extension() == ".bif"))
      format = cpm::NetworkFormat::bif;
    net = cpm::parse_network(buf.str(), format);
  }
  if (o.floor > 0.0) net = cpm::floor_probabilities(std::move(net), o.floor);
  return net;
}

void add_net_options(CLI::App* cmd, NetOptions& o, bool positional) {
  if (positional)
    cmd->add_option("net", o.path, "network file, or bn-def")->required();
  else
    cmd->add_option("--net", o.path, "network file, or bn-def")->required();
  cmd->add_option("--format", o.format, "network format (default: by extension)")->check(CLI::IsMember({"native", "bif"}));
  cmd->add_option("--floor", o.floor, "raise CPD entries below this value and renormalize rows");
}

cpm::MarketConfig market_config(const cpm::BayesNet& net, std::optional<double> b, double max_loss, double q0) {
  if (b) return {*b, q0};
  return cpm::MarketConfig::from_loss_bound(max_loss, net, q0);
}

std::pair<std::string, int> split_addr(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw CLI::ValidationError("--addr", "expected HOST:PORT");
  try {
    return {addr.substr(0, colon), std::stoi(addr.substr(colon + 1))};
  } catch (const std::exception&) {
    throw CLI::ValidationError("--addr", "bad port in " + addr);
  }
}

void print_marginals(const cpm::MarketState& s) {
  for (const auto& [name, p] : cpm::all_marginals(s)) cpm::report::row(std::cout, "p(" + name + ")", p);
}

void print_stats(const char* label, const cpm::sim::LockStats& s) {
  std::printf("%s: samples %zu, mean %.6g s, p95 %.6g s, max %.6g s\n", label, s.samples, s.mean, s.p95, s.max);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Combinatorial prediction market on a junction tree"};
  app.require_subcommand(1);

  NetOptions net_opt;
  std::uint64_t seed = 1;
  double intensity = 8.0;
  std::size_t edits = 1000;
  std::optional<double> lock_time;
  std::string policy = "reject";
  std::size_t queue_capacity = 0;
  std::size_t users = 100;
  std::string addr = "127.0.0.1:8080";
  std::string ledger;
  std::string csv;
  std::optional<double> b;
  double max_loss = 10.0;
  double q0 = 100.0;
  std::size_t rand_vars = 0, rand_k = 5, rand_states = 2;

  auto* inspect = app.add_subcommand("inspect", "print cliques, separators and treewidth");
  add_net_options(inspect, net_opt, true);

  app.add_subcommand("walkthrough", "run the three BN-DEF trades and print every intermediate quantity");

  auto* simulate = app.add_subcommand("simulate", "Poisson-arrival market simulation on a virtual clock");
  add_net_options(simulate, net_opt, false);
  simulate->add_option("--seed", seed);
  simulate->add_option("--intensity", intensity, "edits per minute")->check(CLI::PositiveNumber);
  simulate->add_option("--edits", edits);
  simulate->add_option("--lock-time", lock_time, "synthetic lock time in seconds");
  simulate->add_option("--policy", policy)->check(CLI::IsMember({"reject", "queue"}));
  simulate->add_option("--queue-capacity", queue_capacity);
  simulate->add_option("--users", users);
  simulate->add_option("--csv", csv, "write per-edit records");

  auto* bench = app.add_subcommand("bench", "measure commit lock time on random edits");
  bench->add_option("--net", net_opt.path, "network file, or bn-def");
  bench->add_option("--format", net_opt.format)->check(CLI::IsMember({"native", "bif"}));
  bench->add_option("--floor", net_opt.floor);
  bench->add_option("--vars", rand_vars, "use a random network with this many variables");
  bench->add_option("--treewidth", rand_k, "treewidth bound of the random network");
  bench->add_option("--states", rand_states, "states per variable of the random network");
  bench->add_option("--seed", seed);
  bench->add_option("--edits", edits);

  auto* serve = app.add_subcommand("serve", "serve the market over HTTP");
  add_net_options(serve, net_opt, true);
  serve->add_option("--addr", addr, "HOST:PORT");
  serve->add_option("--policy", policy)->check(CLI::IsMember({"reject", "queue"}));
  serve->add_option("--queue-capacity", queue_capacity);
  serve->add_option("--lock-time", lock_time, "synthetic lock time in seconds");
  serve->add_option("--ledger", ledger, "append-only trade ledger (replayed on start if present)");
  serve->add_option("--b", b, "LMSR scale (default: max-loss / sum ln |states|)");
  serve->add_option("--max-loss", max_loss);
  serve->add_option("--q0", q0);

  auto* replay = app.add_subcommand("replay", "rebuild a market from a ledger and print marginals");
  add_net_options(replay, net_opt, true);
  replay->add_option("ledger", ledger, "ledger file")->required();
  replay->add_option("--b", b);
  replay->add_option("--max-loss", max_loss);
  replay->add_option("--q0", q0);

  if (argc <= 1) {
    std::cerr << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*inspect) {
      const auto net = load_network(net_opt);
      const auto jt = cpm::compile(net);
      std::cout << "variables: " << net.size() << "; arcs: " << net.arc_count() << '\n';
      cpm::report::print_structure(std::cout, net, jt);
    } else if (app.got_subcommand("walkthrough")) {
      cpm::report::print_walkthrough(std::cout);
    } else if (*simulate) {
      const auto net = load_network(net_opt);
      cpm::sim::SimOptions o;
      o.n_users = users;
      o.intensity = intensity;
      o.n_edits = edits;
      o.seed = seed;
      o.policy.mode = policy == "queue" ? cpm::LockPolicy::Mode::queue : cpm::LockPolicy::Mode::reject;
      o.policy.queue_capacity = queue_capacity;
      o.policy.synthetic_lock_time = lock_time;
      const auto r = cpm::sim::run_market_simulation(net, o);
      std::printf("intensity: %g edits/minute; seed: %llu\n", r.intensity, static_cast<unsigned long long>(r.seed));
      std::printf("attempted: %zu; accepted: %zu; rejected: %zu (busy %zu)\n", r.attempted, r.accepted, r.rejected,
                  r.rejected_busy);
      std::printf("rejection rate: %.6f [%.2f%%]\n", r.rejection_rate, 100.0 * r.rejection_rate);
      print_stats("lock time", r.lock);
      if (r.accepted) std::printf("worst post-trade min q: %.6f\n", r.worst_min_q);
      if (!csv.empty()) {
        std::ofstream out(csv);
        if (!out) throw FileMissing("cannot write " + csv);
        cpm::sim::write_csv(out, r);
      }
    } else if (*bench) {
      cpm::BayesNet net;
      if (!net_opt.path.empty())
        net = load_network(net_opt);
      else if (rand_vars > 0)
        net = cpm::sim::generate_random_network(rand_vars, rand_k, rand_states, seed);
      else
        throw CLI::RequiredError("--net or --vars");
      const auto jt = cpm::compile(net);
      std::printf("variables: %zu; cliques: %zu; treewidth: %zu; clique cells: %zu\n", net.size(), jt.cliques.size(),
                  jt.treewidth, jt.total_clique_cells());
      print_stats("lock time", cpm::sim::benchmark_lock_time(net, edits, seed));
    } else if (*serve) {
      auto net = load_network(net_opt);
      const auto config = market_config(net, b, max_loss, q0);
      auto market = cpm::Market::create(std::move(net), config);
      if (!ledger.empty() && fs::exists(ledger)) {
        std::ifstream in(ledger);
        cpm::replay_onto(market, cpm::read_ledger(in));
        std::cerr << "replayed " << market.state().last_seq << " trades from " << ledger << '\n';
      }
      cpm::LockPolicy lp;
      lp.mode = policy == "queue" ? cpm::LockPolicy::Mode::queue : cpm::LockPolicy::Mode::reject;
      lp.queue_capacity = queue_capacity;
      lp.synthetic_lock_time = lock_time;
      std::optional<fs::path> ledger_path;
      if (!ledger.empty()) ledger_path = ledger;
      cpm::MarketService service(std::move(market), lp, ledger_path);
      httplib::Server server;
      cpm::http::bind(server, service);
      const auto [host, port] = split_addr(addr);
      std::cerr << "listening on " << host << ':' << port << '\n';
      if (!server.listen(host, port)) {
        std::cerr << "error: cannot listen on " << addr << '\n';
        return 1;
      }
    } else if (*replay) {
      auto net = load_network(net_opt);
      if (!fs::exists(ledger)) throw FileMissing("no such file: " + ledger);
      std::ifstream in(ledger);
      const auto records = cpm::read_ledger(in);
      const auto config = market_config(net, b, max_loss, q0);
      const auto market = cpm::replay_ledger(std::move(net), config, records);
      std::cout << "replayed " << records.size() << " trades; last seq " << market.state().last_seq << '\n';
      print_marginals(market.state());
    }
  } catch (const FileMissing& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const cpm::Error& e) {
    std::cerr << "error: " << cpm::to_string(e.code()) << ": " << e.what() << '\n';
    return 1;
  }
  return 0;
}
