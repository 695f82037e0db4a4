#pragma once

// Discrete Bayesian networks: types, validation, and the two text formats
// (native JSON and a small BIF subset).

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cpm/error.hpp"

namespace cpm {

using VarId = std::size_t;

struct DiscreteVariable {
  std::string name;
  std::vector<std::string> states;

  std::optional<std::size_t> find_state(std::string_view label) const {
    auto it = std::find(states.begin(), states.end(), label);
    if (it == states.end()) return std::nullopt;
    return static_cast<std::size_t>(it - states.begin());
  }

  bool operator==(const DiscreteVariable&) const = default;
};

// p(child | parents). One row per joint parent configuration, last parent
// varying fastest; each row lists child-state probabilities in declared order.
struct Cpd {
  std::string child;
  std::vector<std::string> parents;
  std::vector<std::vector<double>> table;

  bool operator==(const Cpd&) const = default;
};

class BayesNet {
 public:
  std::vector<DiscreteVariable> variables;
  std::vector<Cpd> cpds;

  std::size_t size() const { return variables.size(); }

  std::optional<VarId> find(std::string_view name) const {
    for (VarId i = 0; i < variables.size(); ++i)
      if (variables[i].name == name) return i;
    return std::nullopt;
  }

  VarId index_of(std::string_view name) const {
    auto id = find(name);
    if (!id) throw Error(Errc::unknown_variable, "unknown variable '" + std::string(name) + "'");
    return *id;
  }

  std::size_t state_index(VarId var, std::string_view label) const {
    auto s = variables.at(var).find_state(label);
    if (!s)
      throw Error(Errc::unknown_state, "variable '" + variables[var].name + "' has no state '" +
                                           std::string(label) + "'");
    return *s;
  }

  std::size_t cardinality(VarId var) const { return variables.at(var).states.size(); }

  const Cpd* cpd_for(VarId var) const {
    for (const auto& cpd : cpds)
      if (cpd.child == variables.at(var).name) return &cpd;
    return nullptr;
  }

  std::vector<VarId> parents_of(VarId var) const {
    std::vector<VarId> out;
    if (const Cpd* cpd = cpd_for(var))
      for (const auto& p : cpd->parents) out.push_back(index_of(p));
    return out;
  }

  std::size_t arc_count() const {
    std::size_t n = 0;
    for (const auto& cpd : cpds) n += cpd.parents.size();
    return n;
  }

  bool operator==(const BayesNet&) const = default;
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

inline constexpr double kRowSumTolerance = 1e-9;

namespace detail {

// Kahn's algorithm on the parent relation; names must already resolve.
inline bool has_cycle(const BayesNet& net) {
  const std::size_t n = net.variables.size();
  std::vector<std::vector<VarId>> children(n);
  std::vector<std::size_t> indegree(n, 0);
  for (const auto& cpd : net.cpds) {
    VarId c = net.index_of(cpd.child);
    for (const auto& p : cpd.parents) {
      children[net.index_of(p)].push_back(c);
      ++indegree[c];
    }
  }
  std::vector<VarId> ready;
  for (VarId i = 0; i < n; ++i)
    if (indegree[i] == 0) ready.push_back(i);
  std::size_t seen = 0;
  while (!ready.empty()) {
    VarId v = ready.back();
    ready.pop_back();
    ++seen;
    for (VarId c : children[v])
      if (--indegree[c] == 0) ready.push_back(c);
  }
  return seen != n;
}

}  // namespace detail

inline ValidationReport validate_network(const BayesNet& net) {
  ValidationReport report;
  auto fail = [&](std::string msg) { report.violations.push_back(std::move(msg)); };

  std::map<std::string, VarId> names;
  for (VarId i = 0; i < net.variables.size(); ++i) {
    const auto& v = net.variables[i];
    if (!names.emplace(v.name, i).second) fail("duplicate variable '" + v.name + "'");
    if (v.states.size() < 2) fail("variable '" + v.name + "' has fewer than 2 states");
    std::set<std::string> labels(v.states.begin(), v.states.end());
    if (labels.size() != v.states.size()) fail("variable '" + v.name + "' has duplicate state labels");
  }

  std::map<std::string, int> cpd_count;
  for (const auto& cpd : net.cpds) ++cpd_count[cpd.child];
  for (const auto& v : net.variables) {
    int c = cpd_count[v.name];
    if (c == 0) fail("variable '" + v.name + "' has no cpd");
    if (c > 1) fail("variable '" + v.name + "' has " + std::to_string(c) + " cpds");
  }

  bool resolvable = true;
  for (const auto& cpd : net.cpds) {
    if (!names.count(cpd.child)) {
      fail("cpd for unknown variable '" + cpd.child + "'");
      resolvable = false;
      continue;
    }
    std::size_t rows = 1;
    for (const auto& p : cpd.parents) {
      auto it = names.find(p);
      if (it == names.end()) {
        fail("cpd '" + cpd.child + "' references unknown parent '" + p + "'");
        resolvable = false;
        rows = 0;
        break;
      }
      if (p == cpd.child) fail("cpd '" + cpd.child + "' lists itself as a parent");
      rows *= net.variables[it->second].states.size();
    }
    if (rows == 0) continue;
    const std::size_t cols = net.variables[names[cpd.child]].states.size();
    if (cpd.table.size() != rows) {
      fail("cpd '" + cpd.child + "' has " + std::to_string(cpd.table.size()) + " rows, expected " +
           std::to_string(rows));
      continue;
    }
    for (std::size_t r = 0; r < rows; ++r) {
      const auto& row = cpd.table[r];
      const std::string where = "cpd '" + cpd.child + "' row " + std::to_string(r);
      if (row.size() != cols) {
        fail(where + " has " + std::to_string(row.size()) + " entries, expected " + std::to_string(cols));
        continue;
      }
      double sum = 0.0;
      bool zero = false;
      bool bad = false;
      for (double x : row) {
        if (!std::isfinite(x) || x < 0.0) bad = true;
        if (x == 0.0) zero = true;
        sum += x;
      }
      if (bad) fail(where + ": negative or non-finite entry");
      if (zero) fail(where + ": zero probability entry");
      if (std::abs(sum - 1.0) > kRowSumTolerance) {
        std::ostringstream os;
        os.precision(17);
        os << where << ": row sum " << sum << " != 1";
        fail(os.str());
      }
    }
  }

  if (resolvable && detail::has_cycle(net))
    fail("parent relation contains a directed cycle");
  return report;
}

// Replaces entries below `floor` by `floor` and renormalizes each row. Used to
// make benchmark networks with structural zeros (e.g. ALARM) market-ready.
inline BayesNet floor_probabilities(BayesNet net, double floor) {
  for (auto& cpd : net.cpds)
    for (auto& row : cpd.table) {
      double sum = 0.0;
      for (double& x : row) {
        x = std::max(x, floor);
        sum += x;
      }
      for (double& x : row) x /= sum;
    }
  return net;
}

enum class NetworkFormat { native, bif };

namespace detail {

inline std::pair<std::size_t, std::size_t> line_col(std::string_view text, std::size_t offset) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

inline std::string at(std::size_t line, std::size_t col) {
  return std::to_string(line) + ":" + std::to_string(col);
}

// Structural checks shared by both readers. Numeric checks (row sums,
// positivity) belong to validate_network.
inline void check_structure(const BayesNet& net) {
  std::set<std::string> names;
  for (const auto& v : net.variables)
    if (!names.insert(v.name).second) throw Error(Errc::duplicate_variable, "duplicate variable '" + v.name + "'");
  std::set<std::string> seen;
  for (const auto& cpd : net.cpds) {
    if (!names.count(cpd.child)) throw Error(Errc::unknown_variable, "cpd for unknown variable '" + cpd.child + "'");
    if (!seen.insert(cpd.child).second)
      throw Error(Errc::malformed_table, "duplicate cpd for '" + cpd.child + "'");
    std::size_t rows = 1;
    for (const auto& p : cpd.parents) {
      auto id = net.find(p);
      if (!id) throw Error(Errc::unknown_variable, "cpd '" + cpd.child + "' references unknown parent '" + p + "'");
      rows *= net.cardinality(*id);
    }
    const std::size_t cols = net.cardinality(net.index_of(cpd.child));
    if (cpd.table.size() != rows)
      throw Error(Errc::malformed_table, "cpd '" + cpd.child + "' has " + std::to_string(cpd.table.size()) +
                                             " rows, expected " + std::to_string(rows));
    for (const auto& row : cpd.table)
      if (row.size() != cols)
        throw Error(Errc::malformed_table, "cpd '" + cpd.child + "' row has " + std::to_string(row.size()) +
                                               " entries, expected " + std::to_string(cols));
  }
  for (const auto& v : net.variables)
    if (!seen.count(v.name)) throw Error(Errc::malformed_table, "variable '" + v.name + "' has no cpd");
  for (const auto& v : net.variables) {
    if (v.states.size() < 2) throw Error(Errc::invalid_network, "variable '" + v.name + "' has fewer than 2 states");
    if (std::set<std::string>(v.states.begin(), v.states.end()).size() != v.states.size())
      throw Error(Errc::invalid_network, "variable '" + v.name + "' has duplicate state labels");
  }
  if (has_cycle(net)) throw Error(Errc::invalid_network, "parent relation contains a directed cycle");
}

inline BayesNet parse_native(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    auto [line, col] = line_col(text, e.byte == 0 ? 0 : e.byte - 1);
    throw Error(Errc::syntax, "syntax error at " + at(line, col) + ": " + e.what());
  }
  BayesNet net;
  try {
    for (const auto& v : doc.at("variables"))
      net.variables.push_back({v.at("name").get<std::string>(), v.at("states").get<std::vector<std::string>>()});
    for (const auto& c : doc.at("cpds"))
      net.cpds.push_back({c.at("child").get<std::string>(), c.at("parents").get<std::vector<std::string>>(),
                          c.at("table").get<std::vector<std::vector<double>>>()});
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::syntax, std::string("malformed network document: ") + e.what());
  }
  check_structure(net);
  return net;
}

// Tokenizer for the BIF subset: words, numbers, and single-char punctuation.
class BifLexer {
 public:
  struct Token {
    std::string text;
    std::size_t line;
    std::size_t col;
    bool punct;
  };

  explicit BifLexer(std::string_view src) : src_(src) { advance(); }

  const Token& peek() const { return tok_; }
  bool done() const { return tok_.text.empty(); }

  Token next() {
    Token t = tok_;
    advance();
    return t;
  }

  [[noreturn]] void fail(const Token& t, const std::string& msg) const {
    throw Error(Errc::syntax, "syntax error at " + at(t.line, t.col) + ": " + msg +
                                  (t.text.empty() ? " (end of input)" : " near '" + t.text + "'"));
  }

  Token expect(std::string_view text) {
    if (tok_.text != text) fail(tok_, "expected '" + std::string(text) + "'");
    return next();
  }

  Token word() {
    if (done() || tok_.punct) fail(tok_, "expected identifier");
    return next();
  }

 private:
  static bool word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.' || c == '+';
  }

  void bump() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void advance() {
    for (;;) {
      while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) bump();
      if (src_.substr(pos_, 2) == "//") {
        while (pos_ < src_.size() && src_[pos_] != '\n') bump();
        continue;
      }
      if (src_.substr(pos_, 2) == "/*") {
        while (pos_ < src_.size() && src_.substr(pos_, 2) != "*/") bump();
        if (pos_ < src_.size()) {
          bump();
          bump();
        }
        continue;
      }
      break;
    }
    tok_ = {"", line_, col_, false};
    if (pos_ >= src_.size()) return;
    if (word_char(src_[pos_])) {
      std::size_t start = pos_;
      while (pos_ < src_.size() && word_char(src_[pos_])) bump();
      tok_.text = std::string(src_.substr(start, pos_ - start));
    } else {
      tok_.text = std::string(1, src_[pos_]);
      tok_.punct = true;
      bump();
    }
  }

  std::string_view src_;
  std::size_t pos_ = 0, line_ = 1, col_ = 1;
  Token tok_;
};

inline double to_number(BifLexer& lex, const BifLexer::Token& t) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
  if (ec != std::errc() || ptr != t.text.data() + t.text.size()) lex.fail(t, "expected number");
  return v;
}

// Skips `property ... ;` and any other unrecognised `keyword ... ;` statement.
inline void skip_statement(BifLexer& lex) {
  while (!lex.done() && lex.peek().text != ";") lex.next();
  lex.expect(";");
}

inline BayesNet parse_bif(std::string_view text) {
  BifLexer lex(text);
  BayesNet net;
  struct PendingCpd {
    Cpd cpd;
    BifLexer::Token where;
  };
  std::vector<PendingCpd> pending;

  while (!lex.done()) {
    auto kw = lex.word();
    if (kw.text == "network") {
      lex.word();
      lex.expect("{");
      while (!lex.done() && lex.peek().text != "}") skip_statement(lex);
      lex.expect("}");
    } else if (kw.text == "variable") {
      DiscreteVariable var;
      var.name = lex.word().text;
      lex.expect("{");
      while (!lex.done() && lex.peek().text != "}") {
        auto inner = lex.word();
        if (inner.text != "type") {
          skip_statement(lex);
          continue;
        }
        auto kind = lex.word();
        if (kind.text != "discrete") lex.fail(kind, "only discrete variables are supported");
        lex.expect("[");
        auto count_tok = lex.word();
        auto count = static_cast<std::size_t>(to_number(lex, count_tok));
        lex.expect("]");
        lex.expect("{");
        for (;;) {
          var.states.push_back(lex.word().text);
          if (lex.peek().text == ",") {
            lex.next();
            continue;
          }
          break;
        }
        lex.expect("}");
        lex.expect(";");
        if (var.states.size() != count)
          lex.fail(count_tok, "declared " + std::to_string(count) + " states but listed " +
                                  std::to_string(var.states.size()));
      }
      lex.expect("}");
      if (net.find(var.name)) throw Error(Errc::duplicate_variable, "duplicate variable '" + var.name + "' at " +
                                                                        at(kw.line, kw.col));
      net.variables.push_back(std::move(var));
    } else if (kw.text == "probability") {
      PendingCpd p{{}, kw};
      lex.expect("(");
      p.cpd.child = lex.word().text;
      if (lex.peek().text == "|") {
        lex.next();
        for (;;) {
          p.cpd.parents.push_back(lex.word().text);
          if (lex.peek().text == ",") {
            lex.next();
            continue;
          }
          break;
        }
      }
      lex.expect(")");
      // Resolve now: rows are keyed by parent state labels.
      auto child = net.find(p.cpd.child);
      if (!child) throw Error(Errc::unknown_variable, "probability for undeclared variable '" + p.cpd.child +
                                                          "' at " + at(kw.line, kw.col));
      std::vector<VarId> parent_ids;
      std::size_t rows = 1;
      for (const auto& name : p.cpd.parents) {
        auto id = net.find(name);
        if (!id) throw Error(Errc::unknown_variable, "unknown parent '" + name + "' of '" + p.cpd.child + "' at " +
                                                         at(kw.line, kw.col));
        parent_ids.push_back(*id);
        rows *= net.cardinality(*id);
      }
      const std::size_t cols = net.cardinality(*child);
      p.cpd.table.assign(rows, {});
      lex.expect("{");
      while (!lex.done() && lex.peek().text != "}") {
        auto head = lex.next();
        auto read_values = [&]() {
          std::vector<double> vals;
          for (;;) {
            auto t = lex.next();
            vals.push_back(to_number(lex, t));
            if (lex.peek().text == ",") {
              lex.next();
              continue;
            }
            break;
          }
          lex.expect(";");
          return vals;
        };
        if (head.text == "table") {
          auto vals = read_values();
          if (!p.cpd.parents.empty())
            lex.fail(head, "'table' form is only supported for variables without parents");
          if (vals.size() != cols) lex.fail(head, "table has wrong number of entries");
          p.cpd.table[0] = std::move(vals);
        } else if (head.text == "(") {
          std::size_t row = 0;
          for (std::size_t k = 0; k < parent_ids.size(); ++k) {
            auto label = lex.word();
            auto s = net.variables[parent_ids[k]].find_state(label.text);
            if (!s) lex.fail(label, "unknown state of '" + net.variables[parent_ids[k]].name + "'");
            row = row * net.cardinality(parent_ids[k]) + *s;
            if (k + 1 < parent_ids.size()) lex.expect(",");
          }
          lex.expect(")");
          auto vals = read_values();
          if (vals.size() != cols) lex.fail(head, "row has wrong number of entries");
          p.cpd.table[row] = std::move(vals);
        } else if (head.text == "property") {
          skip_statement(lex);
        } else {
          lex.fail(head, "unsupported probability entry");
        }
      }
      lex.expect("}");
      for (const auto& row : p.cpd.table)
        if (row.size() != cols)
          throw Error(Errc::malformed_table, "probability for '" + p.cpd.child + "' at " + at(kw.line, kw.col) +
                                                 " does not cover every parent configuration");
      pending.push_back(std::move(p));
    } else {
      lex.fail(kw, "expected 'network', 'variable' or 'probability'");
    }
  }
  for (auto& p : pending) net.cpds.push_back(std::move(p.cpd));
  check_structure(net);
  return net;
}

}  // namespace detail

inline BayesNet parse_network(std::string_view text, NetworkFormat format = NetworkFormat::native) {
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos)
    throw Error(Errc::syntax, "empty network text");
  return format == NetworkFormat::native ? detail::parse_native(text) : detail::parse_bif(text);
}

inline nlohmann::json network_to_json(const BayesNet& net) {
  nlohmann::json doc;
  doc["variables"] = nlohmann::json::array();
  for (const auto& v : net.variables) doc["variables"].push_back({{"name", v.name}, {"states", v.states}});
  doc["cpds"] = nlohmann::json::array();
  for (const auto& c : net.cpds)
    doc["cpds"].push_back({{"child", c.child}, {"parents", c.parents}, {"table", c.table}});
  return doc;
}

// Canonical native text: sorted keys, two-space indent, shortest round-trip doubles.
inline std::string serialize_network(const BayesNet& net) { return network_to_json(net).dump(2) + "\n"; }

}  // namespace cpm
