#pragma once

// Serialized market service: single-writer commits with busy rejection or a
// bounded wait queue, idempotent submissions, write-ahead ledger, published
// read snapshots, and snapshot files.

#include <bit>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cpm/error.hpp"
#include "cpm/market.hpp"

namespace cpm {

struct EditSubmission {
  std::string user;
  Edit edit;
  double value = 0.0;
  // Resubmitting the same token returns the first outcome.
  std::string token;
};

struct LockPolicy {
  enum class Mode { reject, queue };
  Mode mode = Mode::reject;
  std::size_t queue_capacity = 0;
  // Replaces the measured lock time (testing and simulation hook).
  std::optional<double> synthetic_lock_time;
};

struct SubmitResult {
  bool accepted = false;
  std::optional<TradeOutcome> outcome;
  Errc reason = Errc::busy;
  std::string message;
  bool duplicate = false;

  bool busy() const { return !accepted && reason == Errc::busy; }
};

class MarketService {
 public:
  explicit MarketService(Market market, LockPolicy policy = {},
                         std::optional<std::filesystem::path> ledger_path = std::nullopt)
      : market_(std::move(market)), policy_(policy), ledger_path_(std::move(ledger_path)) {
    published_ = std::make_shared<const MarketState>(market_.state());
    published_ledger_ = market_.ledger();
    if (ledger_path_) {
      ledger_file_.open(*ledger_path_, std::ios::app);
      if (!ledger_file_) throw Error(Errc::storage, "cannot open ledger file " + ledger_path_->string());
    }
  }

  const LockPolicy& policy() const { return policy_; }

  // Last published state; never blocks behind a commit.
  std::shared_ptr<const MarketState> snapshot() const {
    std::lock_guard lk(publish_mutex_);
    return published_;
  }

  std::vector<TradeRecord> trades_since(std::uint64_t seq) const {
    std::lock_guard lk(publish_mutex_);
    std::vector<TradeRecord> out;
    for (const auto& r : published_ledger_)
      if (r.seq > seq) out.push_back(r);
    return out;
  }

  void register_user(const std::string& uid) {
    std::lock_guard lk(writer_mutex_);
    market_.register_user(uid);
    publish(std::nullopt);
  }

  // Real-time submission. In reject mode a submission that finds a commit in
  // flight is rejected as busy; in queue mode it waits if fewer than
  // queue_capacity submissions are already waiting.
  SubmitResult submit_edit(const EditSubmission& sub) {
    if (auto prior = find_token(sub.token)) return *prior;
    std::unique_lock lk(writer_mutex_, std::try_to_lock);
    if (!lk.owns_lock()) {
      if (policy_.mode == LockPolicy::Mode::reject) return busy_result();
      {
        std::lock_guard g(queue_mutex_);
        if (waiting_ >= policy_.queue_capacity) return busy_result();
        ++waiting_;
      }
      lk.lock();
      std::lock_guard g(queue_mutex_);
      --waiting_;
    }
    if (auto prior = find_token(sub.token)) return *prior;
    if (policy_.synthetic_lock_time)
      std::this_thread::sleep_for(std::chrono::duration<double>(*policy_.synthetic_lock_time));
    return commit_locked(sub, std::nullopt);
  }

  // Submission on a virtual clock: `arrival` is in seconds. The lock is held
  // from the commit's start for the synthetic (or measured) lock time.
  SubmitResult submit_edit_at(const EditSubmission& sub, double arrival) {
    if (auto prior = find_token(sub.token)) return *prior;
    std::lock_guard lk(writer_mutex_);
    while (!virtual_busy_until_.empty() && virtual_busy_until_.front() <= arrival) virtual_busy_until_.pop_front();
    double start = arrival;
    if (!virtual_busy_until_.empty()) {
      const std::size_t waiting = virtual_busy_until_.size() - 1;
      if (policy_.mode == LockPolicy::Mode::reject || waiting >= policy_.queue_capacity) return busy_result();
      start = virtual_busy_until_.back();
    }
    auto result = commit_locked(sub, start);
    if (result.accepted) {
      const double lock = policy_.synthetic_lock_time ? *policy_.synthetic_lock_time : result.outcome->lock_seconds;
      virtual_busy_until_.push_back(start + lock);
    }
    return result;
  }

 private:
  static SubmitResult busy_result() {
    SubmitResult r;
    r.reason = Errc::busy;
    r.message = "market is busy committing another edit";
    return r;
  }

  std::optional<SubmitResult> find_token(const std::string& token) const {
    if (token.empty()) return std::nullopt;
    std::lock_guard lk(token_mutex_);
    auto it = tokens_.find(token);
    if (it == tokens_.end()) return std::nullopt;
    auto r = it->second;
    r.duplicate = true;
    return r;
  }

  void publish(std::optional<TradeRecord> rec) {
    auto next = std::make_shared<const MarketState>(market_.state());
    std::lock_guard lk(publish_mutex_);
    published_ = std::move(next);
    if (rec) published_ledger_.push_back(std::move(*rec));
  }

  SubmitResult commit_locked(const EditSubmission& sub, std::optional<double> time) {
    SubmitResult result;
    const MarketState before = market_.state();
    const std::size_t ledger_size = market_.ledger().size();
    try {
      CommitOptions opts;
      opts.time = time;
      result.outcome = market_.commit_trade(sub.user, sub.edit, sub.value, opts);
    } catch (const Error& e) {
      result.reason = e.code();
      result.message = e.what();
      return result;
    }
    // Write-ahead: the record is durable before readers can observe it.
    if (ledger_file_.is_open()) {
      write_ledger_line(ledger_file_, result.outcome->record);
      ledger_file_.flush();
      if (!ledger_file_) {
        market_.revert(before, ledger_size);
        ledger_file_.clear();
        result.outcome.reset();
        result.reason = Errc::storage;
        result.message = "failed to append to ledger";
        return result;
      }
    }
    result.accepted = true;
    publish(result.outcome->record);
    if (!sub.token.empty()) {
      std::lock_guard lk(token_mutex_);
      tokens_[sub.token] = result;
    }
    return result;
  }

  Market market_;
  LockPolicy policy_;
  std::optional<std::filesystem::path> ledger_path_;
  std::ofstream ledger_file_;

  mutable std::mutex writer_mutex_;
  mutable std::mutex queue_mutex_;
  std::size_t waiting_ = 0;
  std::deque<double> virtual_busy_until_;

  mutable std::mutex publish_mutex_;
  std::shared_ptr<const MarketState> published_;
  std::vector<TradeRecord> published_ledger_;

  mutable std::mutex token_mutex_;
  std::map<std::string, SubmitResult> tokens_;
};

// Snapshot container:
//   "CPMSNAP\0" | u32 version | u64 header length | header JSON |
//   f64 arrays (little-endian, mixed-radix cell order): probability cliques,
//   probability separators, then per user (header order) cliques, separators.
namespace snapshot {

inline constexpr char kMagic[8] = {'C', 'P', 'M', 'S', 'N', 'A', 'P', '\0'};
inline constexpr std::uint32_t kVersion = 1;

namespace detail {

template <typename T>
void put(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) throw Error(Errc::storage, "truncated snapshot");
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

inline void put_tables(std::ostream& os, const TreePotentials& t) {
  for (const auto& c : t.cliques)
    for (double x : c) put(os, x);
  for (const auto& s : t.separators)
    for (double x : s) put(os, x);
}

inline void get_tables(std::istream& is, TreePotentials& t) {
  for (auto& c : t.cliques)
    for (double& x : c) x = get<double>(is);
  for (auto& s : t.separators)
    for (double& x : s) x = get<double>(is);
}

}  // namespace detail

inline void write(std::ostream& os, const MarketState& state) {
  const auto& jt = *state.model->jt;
  nlohmann::json header;
  header["version"] = kVersion;
  header["config"] = {{"lmsr_scale", state.model->config.lmsr_scale}, {"initial_q", state.model->config.initial_q}};
  header["network"] = serialize_network(state.model->net);
  header["last_seq"] = state.last_seq;
  header["users"] = nlohmann::json::array();
  for (const auto& [uid, q] : state.assets) header["users"].push_back(uid);
  header["clique_sizes"] = nlohmann::json::array();
  for (const auto& c : jt.cliques) header["clique_sizes"].push_back(c.size());
  header["separator_sizes"] = nlohmann::json::array();
  for (const auto& s : jt.separators) header["separator_sizes"].push_back(s.domain.size());
  const std::string text = header.dump();

  os.write(kMagic, sizeof(kMagic));
  detail::put<std::uint32_t>(os, kVersion);
  detail::put<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  detail::put_tables(os, *state.prob);
  for (const auto& [uid, q] : state.assets) detail::put_tables(os, *q);
  if (!os) throw Error(Errc::storage, "failed to write snapshot");
}

inline Market read(std::istream& is) {
  char magic[sizeof(kMagic)];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw Error(Errc::storage, "not a market snapshot");
  const auto version = detail::get<std::uint32_t>(is);
  if (version != kVersion) throw Error(Errc::storage, "unsupported snapshot version " + std::to_string(version));
  const auto len = detail::get<std::uint64_t>(is);
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw Error(Errc::storage, "truncated snapshot header");
  const auto header = nlohmann::json::parse(text);

  MarketConfig config{header.at("config").at("lmsr_scale").get<double>(),
                      header.at("config").at("initial_q").get<double>()};
  auto market = Market::create(parse_network(header.at("network").get<std::string>()), config);
  MarketState state = market.state();
  const auto& jt = *state.model->jt;
  const auto cliques = header.at("clique_sizes").get<std::vector<std::size_t>>();
  const auto seps = header.at("separator_sizes").get<std::vector<std::size_t>>();
  bool shape_ok = cliques.size() == jt.cliques.size() && seps.size() == jt.separators.size();
  for (std::size_t i = 0; shape_ok && i < cliques.size(); ++i) shape_ok = cliques[i] == jt.cliques[i].size();
  for (std::size_t i = 0; shape_ok && i < seps.size(); ++i) shape_ok = seps[i] == jt.separators[i].domain.size();
  if (!shape_ok) throw Error(Errc::storage, "snapshot junction tree shape does not match the compiled network");

  auto prob = std::make_shared<ProbTree>(state.model->jt, 0.0);
  detail::get_tables(is, *prob);
  prob->calibrated = true;
  state.prob = std::move(prob);
  for (const auto& uid : header.at("users").get<std::vector<std::string>>()) {
    auto q = std::make_shared<AssetTree>(state.model->jt, 0.0);
    q->owner = uid;
    detail::get_tables(is, *q);
    state.assets[uid] = std::move(q);
  }
  state.last_seq = header.at("last_seq").get<std::uint64_t>();
  return Market::from_state(std::move(state));
}

}  // namespace snapshot

}  // namespace cpm
