#pragma once

// Text reports: junction tree structure and the three-trade BN-DEF
// walkthrough. Numbers print at full precision followed by a bracketed
// display column.

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "cpm/market.hpp"
#include "cpm/networks.hpp"

namespace cpm::report {

inline std::string var_set(const BayesNet& net, const std::vector<VarId>& vars) {
  std::string s = "{";
  for (std::size_t i = 0; i < vars.size(); ++i) {
    if (i) s += ',';
    s += net.variables[vars[i]].name;
  }
  return s + "}";
}

inline void print_structure(std::ostream& os, const BayesNet& net, const JunctionTree& jt) {
  os << "cliques:";
  for (const auto& c : jt.cliques) os << ' ' << var_set(net, c.vars);
  os << "; separator" << (jt.separators.size() == 1 ? "" : "s") << ':';
  for (const auto& s : jt.separators) os << ' ' << var_set(net, s.domain.vars);
  if (jt.separators.empty()) os << " none";
  os << "; treewidth: " << jt.treewidth << '\n';
}

inline std::string fixed(double x, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, x);
  return buf;
}

inline std::string full(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

// "key: v1 v2 [d1 d2]"
inline void row(std::ostream& os, const std::string& key, const std::vector<double>& values, int decimals = 2) {
  os << "  " << key << ':';
  for (double v : values) os << ' ' << full(v);
  os << " [";
  for (std::size_t i = 0; i < values.size(); ++i) os << (i ? " " : "") << fixed(values[i], decimals);
  os << "]\n";
}

inline std::string state_list(const BayesNet& net, const MinResult& m) {
  std::string s;
  for (const auto& a : m.argmins) {
    if (!s.empty()) s += ' ';
    s += '{';
    for (VarId v = 0; v < a.size(); ++v) s += (v ? "," : "") + net.variables[v].states[a[v]];
    s += '}';
  }
  if (m.truncated) s += " ...";
  return s;
}

inline std::string describe(const Edit& e) {
  std::string s = "p(" + e.target + "=" + e.state;
  bool first = true;
  for (const auto& [k, v] : e.assumptions) {
    s += first ? " | " : ", ";
    s += k + "=" + v;
    first = false;
  }
  return s + ")";
}

inline void print_after(std::ostream& os, const Market& m, const std::string& uid) {
  const auto& s = m.state();
  for (const auto& [name, p] : all_marginals(s)) row(os, "p(" + name + ")", p);
  row(os, uid + " expected score", {expected_assets(s, uid)});
  const auto mr = min_assets(s, uid);
  row(os, uid + " min q", {mr.value});
  row(os, uid + " min score", {s.score(mr.value)});
  os << "  " << uid << " min states: " << state_list(s.model->net, mr) << '\n';
}

inline void print_limits(std::ostream& os, const EditLimits& l) {
  row(os, "current", {l.current});
  row(os, "m(t)", {l.m_t});
  row(os, "m(not t)", {l.m_not_t});
  row(os, "limits", {l.lower, l.upper}, 4);
}

// Joe and Amy trade on BN-DEF with q0 = 100 and b = 10 / ln 100.
inline void print_walkthrough(std::ostream& os) {
  auto net = networks::bn_def();
  auto m = Market::create(net, {10.0 / std::log(100.0), 100.0});
  m.register_user("joe");
  m.register_user("amy");
  os << "market: BN-DEF, q0 = 100\n";
  row(os, "b", {m.model().config.lmsr_scale});
  os << "  ";
  print_structure(os, m.model().net, *m.model().jt);

  CommitOptions opts;
  auto step = [&](int n, const std::string& uid, const Edit& e, double value) {
    os << "\nstep " << n << ": " << uid << " sets " << describe(e) << " = " << value << '\n';
    print_limits(os, edit_limits(m.state(), uid, e));
    opts.time = n;
    m.commit_trade(uid, e, value, opts);
    print_after(os, m, uid);
  };

  step(1, "joe", {"E", "e1", {}}, 0.8);
  const auto joe_before = m.state().assets.at("joe");
  step(2, "amy", {"D", "d1", {{"F", "f2"}}}, 0.7);
  os << "  joe assets unchanged: " << (m.state().assets.at("joe") == joe_before ? "yes" : "no") << '\n';

  const Edit joe2{"E", "e1", {{"D", "d2"}}};
  const auto pv = preview_trade(m.state(), "joe", joe2);
  os << "\npreview: joe on " << describe(joe2) << '\n';
  row(os, "score if true", {pv.exp_score_if_true});
  row(os, "score if false", {pv.exp_score_if_false});
  os << "  position: " << to_string(pv.position) << '\n';
  step(3, "joe", joe2, 0.99);
}

}  // namespace cpm::report
