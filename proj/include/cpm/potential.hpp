#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "cpm/model.hpp"

namespace cpm {

// Ordered variable scope with cardinalities. Cells are addressed in mixed
// radix with the last variable varying fastest.
struct Domain {
  std::vector<VarId> vars;
  std::vector<std::size_t> cards;

  std::size_t size() const {
    std::size_t n = 1;
    for (auto c : cards) n *= c;
    return n;
  }

  std::vector<std::size_t> strides() const {
    std::vector<std::size_t> s(vars.size(), 1);
    for (std::size_t i = vars.size(); i-- > 1;) s[i - 1] = s[i] * cards[i];
    return s;
  }

  std::ptrdiff_t position(VarId v) const {
    auto it = std::find(vars.begin(), vars.end(), v);
    return it == vars.end() ? -1 : it - vars.begin();
  }

  bool contains(VarId v) const { return position(v) >= 0; }

  bool contains_all(const std::vector<VarId>& vs) const {
    return std::all_of(vs.begin(), vs.end(), [&](VarId v) { return contains(v); });
  }

  // State of the variable at `pos` in `cell`.
  std::size_t state_at(std::size_t cell, std::size_t pos) const {
    std::size_t stride = 1;
    for (std::size_t i = vars.size(); i-- > pos + 1;) stride *= cards[i];
    return (cell / stride) % cards[pos];
  }

  bool operator==(const Domain&) const = default;
};

struct Potential {
  Domain domain;
  std::vector<double> values;

  Potential() = default;
  Potential(Domain d, double fill) : domain(std::move(d)), values(domain.size(), fill) {}
  Potential(Domain d, std::vector<double> v) : domain(std::move(d)), values(std::move(v)) {}

  double sum() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }

  double min() const { return *std::min_element(values.begin(), values.end()); }
};

// For every cell of `from`, the index of the matching cell of `to`, where
// to.vars is a subset of from.vars (any order).
inline std::vector<std::uint32_t> projection_map(const Domain& from, const Domain& to) {
  const auto to_strides = to.strides();
  std::vector<std::size_t> step(from.vars.size(), 0);
  for (std::size_t i = 0; i < from.vars.size(); ++i) {
    auto p = to.position(from.vars[i]);
    if (p >= 0) step[i] = to_strides[static_cast<std::size_t>(p)];
  }
  std::vector<std::uint32_t> map(from.size());
  std::vector<std::size_t> digit(from.vars.size(), 0);
  std::size_t idx = 0;
  for (std::size_t cell = 0; cell < map.size(); ++cell) {
    map[cell] = static_cast<std::uint32_t>(idx);
    for (std::size_t i = from.vars.size(); i-- > 0;) {
      if (++digit[i] < from.cards[i]) {
        idx += step[i];
        break;
      }
      idx -= step[i] * (from.cards[i] - 1);
      digit[i] = 0;
    }
  }
  return map;
}

enum class Reduce { sum, min };

inline std::vector<double> reduce_onto(const std::vector<double>& values, const std::vector<std::uint32_t>& map,
                                       std::size_t target_size, Reduce op) {
  if (op == Reduce::sum) {
    std::vector<double> out(target_size, 0.0);
    for (std::size_t i = 0; i < values.size(); ++i) out[map[i]] += values[i];
    return out;
  }
  std::vector<double> out(target_size, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < values.size(); ++i) out[map[i]] = std::min(out[map[i]], values[i]);
  return out;
}

inline Potential marginalize(const Potential& p, const Domain& onto, Reduce op = Reduce::sum) {
  return {onto, reduce_onto(p.values, projection_map(p.domain, onto), onto.size(), op)};
}

// Allowed states per variable; an empty entry means unrestricted.
class StateFilter {
 public:
  explicit StateFilter(std::size_t n_vars = 0) : allowed_(n_vars) {}

  StateFilter& restrict_to(VarId v, std::size_t state, std::size_t card) {
    ensure(v, card);
    for (std::size_t s = 0; s < card; ++s)
      if (s != state) allowed_[v][s] = 0;
    return *this;
  }

  StateFilter& exclude(VarId v, std::size_t state, std::size_t card) {
    ensure(v, card);
    allowed_[v][state] = 0;
    return *this;
  }

  bool restricted(VarId v) const { return v < allowed_.size() && !allowed_[v].empty(); }

  bool allows(VarId v, std::size_t state) const { return !restricted(v) || allowed_[v][state] != 0; }

  bool allows_assignment(const std::vector<std::size_t>& states) const {
    for (VarId v = 0; v < states.size(); ++v)
      if (!allows(v, states[v])) return false;
    return true;
  }

  // Per-cell consistency mask for a domain, or empty if nothing in it is restricted.
  std::vector<char> mask(const Domain& d) const {
    bool any = false;
    for (VarId v : d.vars) any = any || restricted(v);
    if (!any) return {};
    std::vector<char> m(d.size(), 1);
    for (std::size_t pos = 0; pos < d.vars.size(); ++pos) {
      if (!restricted(d.vars[pos])) continue;
      for (std::size_t cell = 0; cell < m.size(); ++cell)
        if (!allows(d.vars[pos], d.state_at(cell, pos))) m[cell] = 0;
    }
    return m;
  }

 private:
  void ensure(VarId v, std::size_t card) {
    if (v >= allowed_.size()) allowed_.resize(v + 1);
    if (allowed_[v].empty()) allowed_[v].assign(card, 1);
  }

  std::vector<std::vector<char>> allowed_;
};

}  // namespace cpm
