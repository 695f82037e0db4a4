#pragma once

// LMSR market over a junction tree: the consensus probability tree, one
// asset tree per trader on the same skeleton, edit limits that keep every
// trader's assets non-negative, long/short previews, and trade commits.
//
// Assets are stored as q with S = b ln q. A trade that moves p to p' in the
// edited clique multiplies the trader's asset table for that clique by p'/p;
// no other table or trader changes.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cpm/engine.hpp"
#include "cpm/error.hpp"
#include "cpm/jtree.hpp"
#include "cpm/model.hpp"

namespace cpm {

struct MarketConfig {
  double lmsr_scale = 1.0;
  double initial_q = 100.0;

  // b = M / ln L with ln L = Σ ln |states|.
  static MarketConfig from_loss_bound(double max_loss, const BayesNet& net, double initial_q = 100.0) {
    double log_states = 0.0;
    for (const auto& v : net.variables) log_states += std::log(static_cast<double>(v.states.size()));
    return {max_loss / log_states, initial_q};
  }
};

struct MarketModel {
  BayesNet net;
  std::shared_ptr<const JunctionTree> jt;
  MarketConfig config;
};

struct AssetTree : TreePotentials {
  std::string owner;
  using TreePotentials::TreePotentials;
};

// An edit of p(target = state | assumptions), by name.
struct Edit {
  std::string target;
  std::string state;
  std::map<std::string, std::string> assumptions;
};

struct ResolvedEdit {
  VarId target = 0;
  std::size_t state = 0;
  PartialAssignment assumptions;
  std::size_t clique = 0;
};

struct EditLimits {
  double lower = 0.0;
  double upper = 1.0;
  double m_t = 0.0;
  double m_not_t = 0.0;
  double current = 0.0;
};

enum class Position { long_, short_, neutral };

inline std::string_view to_string(Position p) {
  switch (p) {
    case Position::long_: return "long";
    case Position::short_: return "short";
    case Position::neutral: return "neutral";
  }
  return "neutral";
}

struct TradePreview {
  double current_conditional = 0.0;
  EditLimits limits;
  double exp_score_if_true = 0.0;
  double exp_score_if_false = 0.0;
  Position position = Position::neutral;
};

struct TradeRecord {
  std::uint64_t seq = 0;
  double time = 0.0;
  std::string user;
  std::string target;
  std::string target_state;
  std::map<std::string, std::string> assumptions;
  double old_p = 0.0;
  double new_p = 0.0;

  Edit edit() const { return {target, target_state, assumptions}; }
  bool operator==(const TradeRecord&) const = default;
};

struct TradeOutcome {
  TradeRecord record;
  std::map<std::string, std::vector<double>> marginals;
  double expected_assets = 0.0;
  double min_q = 0.0;
  MinResult min_states;
  // Duration of the serialized section: evidence, propagation, asset update.
  double lock_seconds = 0.0;
};

// Immutable view of the market after some ledger prefix. Readers hold a
// shared_ptr to one of these while the writer builds the successor.
struct MarketState {
  std::shared_ptr<const MarketModel> model;
  std::shared_ptr<const ProbTree> prob;
  std::map<std::string, std::shared_ptr<const AssetTree>> assets;
  std::uint64_t last_seq = 0;

  const AssetTree& assets_of(const std::string& uid) const {
    auto it = assets.find(uid);
    if (it == assets.end()) throw Error(Errc::unknown_user, "unknown user '" + uid + "'");
    return *it->second;
  }

  double score(double q) const { return model->config.lmsr_scale * std::log(q); }
};

inline ResolvedEdit resolve(const MarketModel& model, const Edit& edit) {
  ResolvedEdit r;
  r.target = model.net.index_of(edit.target);
  r.state = model.net.state_index(r.target, edit.state);
  for (const auto& [name, label] : edit.assumptions) {
    VarId v = model.net.index_of(name);
    if (v == r.target) throw Error(Errc::invalid_evidence, "target variable appears among the assumptions");
    r.assumptions.emplace_back(v, model.net.state_index(v, label));
  }
  r.clique = edit_clique(*model.jt, variables_of(r.target, r.assumptions));
  return r;
}

inline Potential marginal(const MarketState& state, const std::string& var) {
  return query_marginal(*state.prob, {state.model->net.index_of(var)});
}

inline std::map<std::string, std::vector<double>> all_marginals(const MarketState& state) {
  std::map<std::string, std::vector<double>> out;
  const auto& net = state.model->net;
  for (VarId v = 0; v < net.size(); ++v) out[net.variables[v].name] = query_marginal(*state.prob, {v}).values;
  return out;
}

inline MinResult min_assets(const MarketState& state, const std::string& uid, std::size_t cap = kDefaultArgminCap) {
  const auto& q = state.assets_of(uid);
  return constrained_min(q, StateFilter(q.structure->variable_count()), cap);
}

inline EditLimits edit_limits(const MarketState& state, const std::string& uid, const Edit& edit) {
  const auto& q = state.assets_of(uid);
  const auto r = resolve(*state.model, edit);
  const auto& jt = *state.model->jt;
  EditLimits lim;
  lim.current = conditional_distribution(*state.prob, r.clique, r.target, r.assumptions)[r.state];

  StateFilter given_t(jt.variable_count()), given_not_t(jt.variable_count());
  for (const auto& [v, s] : r.assumptions) {
    given_t.restrict_to(v, s, jt.cards[v]);
    given_not_t.restrict_to(v, s, jt.cards[v]);
  }
  given_t.restrict_to(r.target, r.state, jt.cards[r.target]);
  given_not_t.exclude(r.target, r.state, jt.cards[r.target]);
  lim.m_t = constrained_min(q, given_t, 1).value;
  lim.m_not_t = constrained_min(q, given_not_t, 1).value;
  lim.lower = lim.current / lim.m_t;
  lim.upper = 1.0 - (1.0 - lim.current) / lim.m_not_t;
  return lim;
}

namespace detail {

// Σc Σ p_c S_c − Σs Σ p_s S_s.
inline double expected_score(const TreePotentials& p, const TreePotentials& q, double b) {
  double total = 0.0;
  for (std::size_t c = 0; c < p.cliques.size(); ++c)
    for (std::size_t i = 0; i < p.cliques[c].size(); ++i)
      if (p.cliques[c][i] != 0.0) total += p.cliques[c][i] * std::log(q.cliques[c][i]);
  for (std::size_t s = 0; s < p.separators.size(); ++s)
    for (std::size_t i = 0; i < p.separators[s].size(); ++i)
      if (p.separators[s][i] != 0.0) total -= p.separators[s][i] * std::log(q.separators[s][i]);
  return b * total;
}

}  // namespace detail

// Expected score under the current consensus, optionally given an event.
inline double expected_assets(const MarketState& state, const std::string& uid,
                              const std::optional<StateFilter>& given = std::nullopt) {
  const auto& q = state.assets_of(uid);
  const double b = state.model->config.lmsr_scale;
  if (!given) return detail::expected_score(*state.prob, q, b);
  return detail::expected_score(condition(*state.prob, *given), q, b);
}

inline TradePreview preview_trade(const MarketState& state, const std::string& uid, const Edit& edit) {
  TradePreview pv;
  pv.limits = edit_limits(state, uid, edit);
  pv.current_conditional = pv.limits.current;
  const auto r = resolve(*state.model, edit);
  const auto& jt = *state.model->jt;
  StateFilter if_true(jt.variable_count()), if_false(jt.variable_count());
  for (const auto& [v, s] : r.assumptions) {
    if_true.restrict_to(v, s, jt.cards[v]);
    if_false.restrict_to(v, s, jt.cards[v]);
  }
  if_true.restrict_to(r.target, r.state, jt.cards[r.target]);
  if_false.exclude(r.target, r.state, jt.cards[r.target]);
  pv.exp_score_if_true = expected_assets(state, uid, if_true);
  pv.exp_score_if_false = expected_assets(state, uid, if_false);
  const double diff = pv.exp_score_if_true - pv.exp_score_if_false;
  pv.position = std::abs(diff) <= 1e-9 ? Position::neutral : (diff > 0 ? Position::long_ : Position::short_);
  return pv;
}

enum class LimitMode { open, closed };

struct CommitOptions {
  LimitMode limits = LimitMode::open;
  std::optional<double> time;
  std::size_t argmin_cap = kDefaultArgminCap;
  // Skip marginals / expected assets / min states in the outcome.
  bool summary = true;
};

inline double wall_clock_seconds() {
  using namespace std::chrono;
  return duration<double>(system_clock::now().time_since_epoch()).count();
}

// The single mutable authority. Not thread-safe; callers serialize writes
// and hand out state() snapshots to readers.
class Market {
 public:
  static Market create(BayesNet net, MarketConfig config) {
    auto report = validate_network(net);
    if (!report.ok()) throw Error(Errc::invalid_network, "network rejected: " + report.violations.front());
    if (!(config.lmsr_scale > 0.0)) throw Error(Errc::invalid_argument, "lmsr scale must be positive");
    if (!(config.initial_q >= 1.0)) throw Error(Errc::invalid_argument, "initial q must be at least 1");
    auto jt = std::make_shared<const JunctionTree>(compile(net));
    auto prob = std::make_shared<const ProbTree>(initialize_prob_tree(net, jt));
    auto model = std::make_shared<const MarketModel>(MarketModel{std::move(net), jt, config});
    Market m;
    m.state_.model = std::move(model);
    m.state_.prob = std::move(prob);
    return m;
  }

  // Rebuilds a market from a previously captured state (snapshot restore).
  static Market from_state(MarketState state) {
    Market m;
    m.state_ = std::move(state);
    return m;
  }

  const MarketState& state() const { return state_; }
  const MarketModel& model() const { return *state_.model; }
  const std::vector<TradeRecord>& ledger() const { return ledger_; }

  // Undoes commits made after `prior` was captured (failed ledger write).
  void revert(MarketState prior, std::size_t ledger_size) {
    state_ = std::move(prior);
    ledger_.resize(ledger_size);
  }

  // Fresh asset tree implying q(x) = q0 everywhere. In a forest, the root
  // clique of every component after the first holds 1 so the components
  // multiply to q0 rather than q0^k.
  const AssetTree& register_user(const std::string& uid) {
    if (uid.empty()) throw Error(Errc::invalid_argument, "user id must be non-empty");
    if (state_.assets.count(uid)) throw Error(Errc::duplicate_user, "user '" + uid + "' already registered");
    auto q = std::make_shared<AssetTree>(state_.model->jt, state_.model->config.initial_q);
    q->owner = uid;
    const auto& roots = state_.model->jt->roots;
    for (std::size_t k = 1; k < roots.size(); ++k) std::fill(q->cliques[roots[k]].begin(), q->cliques[roots[k]].end(), 1.0);
    auto& slot = state_.assets[uid];
    slot = std::move(q);
    return *slot;
  }

  TradeOutcome commit_trade(const std::string& uid, const Edit& edit, double new_p, const CommitOptions& opts = {}) {
    const AssetTree& current_q = state_.assets_of(uid);
    const auto r = resolve(*state_.model, edit);
    const auto lim = edit_limits(state_, uid, edit);
    const bool inside = opts.limits == LimitMode::open ? (lim.lower < new_p && new_p < lim.upper)
                                                       : (lim.lower <= new_p && new_p <= lim.upper);
    if (!inside || !(new_p > 0.0 && new_p < 1.0)) {
      std::ostringstream os;
      os.precision(17);
      os << "proposed value " << new_p << " outside edit limits (" << lim.lower << ", " << lim.upper << ")";
      throw Error(Errc::out_of_limits, os.str());
    }

    const auto start = std::chrono::steady_clock::now();
    auto prob = std::make_shared<ProbTree>(*state_.prob);
    auto ev = make_soft_evidence(*prob, r.target, r.state, r.assumptions, new_p);
    const std::size_t c = apply_soft_evidence_in_place(*prob, ev);
    auto q = std::make_shared<AssetTree>(current_q);
    const auto& before = state_.prob->cliques[c];
    const auto& after = prob->cliques[c];
    auto& qc = q->cliques[c];
    for (std::size_t i = 0; i < qc.size(); ++i) qc[i] *= after[i] / before[i];
    const auto stop = std::chrono::steady_clock::now();

    TradeRecord rec;
    rec.seq = state_.last_seq + 1;
    rec.time = opts.time ? *opts.time : wall_clock_seconds();
    rec.user = uid;
    rec.target = edit.target;
    rec.target_state = edit.state;
    rec.assumptions = edit.assumptions;
    rec.old_p = lim.current;
    rec.new_p = new_p;

    state_.prob = std::move(prob);
    state_.assets[uid] = std::move(q);
    state_.last_seq = rec.seq;
    ledger_.push_back(rec);

    TradeOutcome out;
    out.record = std::move(rec);
    out.lock_seconds = std::chrono::duration<double>(stop - start).count();
    if (opts.summary) {
      out.marginals = all_marginals(state_);
      out.expected_assets = expected_assets(state_, uid);
      out.min_states = min_assets(state_, uid, opts.argmin_cap);
      out.min_q = out.min_states.value;
    }
    return out;
  }

 private:
  Market() = default;

  MarketState state_;
  std::vector<TradeRecord> ledger_;
};

inline nlohmann::json to_json(const TradeRecord& r) {
  return {{"seq", r.seq},       {"time", r.time},       {"user", r.user},         {"target", r.target},
          {"target_state", r.target_state}, {"assumptions", r.assumptions}, {"old_p", r.old_p}, {"new_p", r.new_p}};
}

inline TradeRecord record_from_json(const nlohmann::json& j) {
  try {
    TradeRecord r;
    r.seq = j.at("seq").get<std::uint64_t>();
    r.time = j.at("time").get<double>();
    r.user = j.at("user").get<std::string>();
    r.target = j.at("target").get<std::string>();
    r.target_state = j.at("target_state").get<std::string>();
    r.assumptions = j.at("assumptions").get<std::map<std::string, std::string>>();
    r.old_p = j.at("old_p").get<double>();
    r.new_p = j.at("new_p").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::syntax, std::string("malformed ledger record: ") + e.what());
  }
}

// One JSON object per line.
inline void write_ledger_line(std::ostream& os, const TradeRecord& r) { os << to_json(r).dump() << '\n'; }

inline std::vector<TradeRecord> read_ledger(std::istream& is) {
  std::vector<TradeRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(Errc::syntax, "ledger line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// Re-applies ledger records in order. Users are registered on first
// appearance. Any gap, stale price, or limit violation aborts the replay.
inline void replay_onto(Market& market, const std::vector<TradeRecord>& records) {
  for (const auto& rec : records) {
    const auto expected = market.state().last_seq + 1;
    if (rec.seq != expected)
      throw Error(Errc::sequence_gap, "ledger sequence gap: expected " + std::to_string(expected) + ", found " +
                                          std::to_string(rec.seq));
    if (!market.state().assets.count(rec.user)) market.register_user(rec.user);
    const auto r = resolve(market.model(), rec.edit());
    const double now = conditional_distribution(*market.state().prob, r.clique, r.target, r.assumptions)[r.state];
    if (!nearly_equal(now, rec.old_p))
      throw Error(Errc::replay_mismatch, "record " + std::to_string(rec.seq) + ": recorded old price does not match");
    try {
      CommitOptions opts;
      opts.time = rec.time;
      opts.summary = false;
      market.commit_trade(rec.user, rec.edit(), rec.new_p, opts);
    } catch (const Error& e) {
      if (e.code() != Errc::out_of_limits) throw;
      throw Error(Errc::replay_mismatch, "record " + std::to_string(rec.seq) + " violates limits at replay: " + e.what());
    }
  }
}

inline Market replay_ledger(BayesNet net, MarketConfig config, const std::vector<TradeRecord>& records) {
  auto market = Market::create(std::move(net), config);
  replay_onto(market, records);
  return market;
}

}  // namespace cpm
