#pragma once

// Brute-force reference implementations over the flat joint state space.
// Only usable for small networks; every quantity here is computed without a
// junction tree.

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "cpm/market.hpp"
#include "cpm/model.hpp"

namespace oracle {

using cpm::BayesNet;
using cpm::VarId;
using State = std::vector<std::size_t>;

inline std::vector<std::size_t> cards_of(const BayesNet& net) {
  std::vector<std::size_t> c;
  for (const auto& v : net.variables) c.push_back(v.states.size());
  return c;
}

// Variable 0 varies slowest.
inline std::size_t index_of(const std::vector<std::size_t>& cards, const State& x) {
  std::size_t i = 0;
  for (std::size_t v = 0; v < cards.size(); ++v) i = i * cards[v] + x[v];
  return i;
}

inline State state_at(const std::vector<std::size_t>& cards, std::size_t i) {
  State x(cards.size());
  for (std::size_t v = cards.size(); v-- > 0;) {
    x[v] = i % cards[v];
    i /= cards[v];
  }
  return x;
}

inline std::size_t space_size(const std::vector<std::size_t>& cards) {
  std::size_t n = 1;
  for (auto c : cards) n *= c;
  return n;
}

inline std::vector<double> joint(const BayesNet& net) {
  const auto cards = cards_of(net);
  std::vector<double> p(space_size(cards));
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto x = state_at(cards, i);
    double v = 1.0;
    for (const auto& cpd : net.cpds) {
      const VarId child = net.index_of(cpd.child);
      std::size_t row = 0;
      for (const auto& name : cpd.parents) {
        const VarId par = net.index_of(name);
        row = row * cards[par] + x[par];
      }
      v *= cpd.table[row][x[child]];
    }
    p[i] = v;
  }
  return p;
}

using Assignment = std::vector<std::pair<VarId, std::size_t>>;

inline bool matches(const State& x, const Assignment& a) {
  for (const auto& [v, s] : a)
    if (x[v] != s) return false;
  return true;
}

// Flat market: the joint p and each user's q(x) stored explicitly.
struct FlatMarket {
  std::vector<std::size_t> cards;
  std::vector<double> p;
  std::map<std::string, std::vector<double>> q;
  double b = 1.0;
  double q0 = 100.0;

  FlatMarket(const BayesNet& net, double b_, double q0_) : cards(cards_of(net)), p(joint(net)), b(b_), q0(q0_) {}

  void add_user(const std::string& u) { q[u].assign(p.size(), q0); }

  double conditional(VarId t, std::size_t ts, const Assignment& a) const {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const auto x = state_at(cards, i);
      if (!matches(x, a)) continue;
      den += p[i];
      if (x[t] == ts) num += p[i];
    }
    return num / den;
  }

  // Minimum of q over states with A = a and (T = t if `is_t`, else T != t).
  double min_q(const std::string& u, VarId t, std::size_t ts, const Assignment& a, bool is_t) const {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const auto x = state_at(cards, i);
      if (!matches(x, a) || (x[t] == ts) != is_t) continue;
      m = std::min(m, q.at(u)[i]);
    }
    return m;
  }

  std::pair<double, double> limits(const std::string& u, VarId t, std::size_t ts, const Assignment& a) const {
    const double cur = conditional(t, ts, a);
    return {cur / min_q(u, t, ts, a, true), 1.0 - (1.0 - cur) / min_q(u, t, ts, a, false)};
  }

  // Jeffrey update of p(T | A = a): the target state goes to `value`, the
  // others keep their relative weights. The trader's q scales by p'/p.
  void trade(const std::string& u, VarId t, std::size_t ts, const Assignment& a, double value) {
    const double cur = conditional(t, ts, a);
    auto& qu = q.at(u);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const auto x = state_at(cards, i);
      if (!matches(x, a)) continue;
      const double ratio = x[t] == ts ? value / cur : (1.0 - value) / (1.0 - cur);
      qu[i] *= ratio;
      p[i] *= ratio;
    }
  }

  double expected_score(const std::string& u) const {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * b * std::log(q.at(u)[i]);
    return s;
  }

  std::vector<double> marginal(VarId v) const {
    std::vector<double> m(cards[v], 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) m[state_at(cards, i)[v]] += p[i];
    return m;
  }
};

struct BruteMin {
  double value = std::numeric_limits<double>::infinity();
  std::vector<State> argmins;
};

// Minimum of f over states accepted by `allow`, with ties at relative 1e-9.
inline BruteMin brute_min(const std::vector<std::size_t>& cards, const std::function<double(const State&)>& f,
                          const std::function<bool(const State&)>& allow = nullptr) {
  BruteMin r;
  const std::size_t n = space_size(cards);
  std::vector<double> vals(n, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = state_at(cards, i);
    if (allow && !allow(x)) continue;
    vals[i] = f(x);
    r.value = std::min(r.value, vals[i]);
  }
  for (std::size_t i = 0; i < n; ++i)
    if (std::isfinite(vals[i]) && cpm::nearly_equal(vals[i], r.value)) r.argmins.push_back(state_at(cards, i));
  return r;
}

}  // namespace oracle
