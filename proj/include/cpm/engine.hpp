#pragma once

// Propagation over junction-tree potentials: marginal and conditional
// queries, conditional soft evidence (Jeffrey update), hard conditioning,
// min-calibration, and constrained minimization with argmin traceback.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "cpm/error.hpp"
#include "cpm/jtree.hpp"
#include "cpm/potential.hpp"

namespace cpm {

using PartialAssignment = std::vector<std::pair<VarId, std::size_t>>;

inline std::vector<VarId> variables_of(VarId target, const PartialAssignment& assumptions) {
  std::vector<VarId> vars{target};
  for (const auto& [v, s] : assumptions) vars.push_back(v);
  return vars;
}

// Clique used for an edit or query on {target} ∪ assumptions.
inline std::size_t edit_clique(const JunctionTree& jt, const std::vector<VarId>& vars) {
  auto c = jt.find_clique(vars);
  if (!c)
    throw Error(Errc::not_same_clique,
                "target and assumption variables do not share a clique; the edit is not structure-preserving");
  return *c;
}

inline Potential query_marginal(const ProbTree& tree, std::vector<VarId> vars) {
  std::sort(vars.begin(), vars.end());
  vars.erase(std::unique(vars.begin(), vars.end()), vars.end());
  const auto& jt = *tree.structure;
  const std::size_t c = edit_clique(jt, vars);
  Domain onto{vars, {}};
  for (VarId v : vars) onto.cards.push_back(jt.cards[v]);
  auto m = marginalize(tree.clique_potential(c), onto);
  const double z = m.sum();
  for (double& x : m.values) x /= z;
  return m;
}

namespace detail {

// Cells of clique `c` consistent with the assumptions.
inline std::vector<char> assumption_mask(const JunctionTree& jt, std::size_t c, const PartialAssignment& a) {
  StateFilter f(jt.variable_count());
  for (const auto& [v, s] : a) f.restrict_to(v, s, jt.cards[v]);
  auto m = f.mask(jt.cliques[c]);
  if (m.empty()) m.assign(jt.cliques[c].size(), 1);
  return m;
}

}  // namespace detail

// p(T | A = a) as a distribution over T's states, read from clique `c`.
inline std::vector<double> conditional_distribution(const ProbTree& tree, std::size_t c, VarId target,
                                                    const PartialAssignment& assumptions) {
  const auto& jt = *tree.structure;
  const Domain& d = jt.cliques[c];
  const auto pos = static_cast<std::size_t>(d.position(target));
  const auto mask = detail::assumption_mask(jt, c, assumptions);
  std::vector<double> out(jt.cards[target], 0.0);
  const auto& values = tree.cliques[c];
  for (std::size_t i = 0; i < values.size(); ++i)
    if (mask[i]) out[d.state_at(i, pos)] += values[i];
  double z = 0.0;
  for (double x : out) z += x;
  if (!(z > 0.0)) throw Error(Errc::zero_probability, "conditioning event has zero probability");
  for (double& x : out) x /= z;
  return out;
}

inline double query_conditional(const ProbTree& tree, VarId target, std::size_t state,
                                const PartialAssignment& assumptions) {
  const std::size_t c = edit_clique(*tree.structure, variables_of(target, assumptions));
  return conditional_distribution(tree, c, target, assumptions)[state];
}

struct SoftEvidence {
  VarId target = 0;
  std::size_t target_state = 0;
  PartialAssignment assumptions;
  // New p(T | A = a) over all of T's states.
  std::vector<double> new_conditional;
};

// Edit p(T = t | A = a) to `value`; the remaining mass goes to T's other
// states in proportion to their current conditional probabilities.
inline SoftEvidence make_soft_evidence(const ProbTree& tree, VarId target, std::size_t state,
                                       PartialAssignment assumptions, double value) {
  const std::size_t c = edit_clique(*tree.structure, variables_of(target, assumptions));
  auto old = conditional_distribution(tree, c, target, assumptions);
  std::vector<double> next(old.size());
  const double rest = 1.0 - old[state];
  for (std::size_t s = 0; s < old.size(); ++s) next[s] = s == state ? value : old[s] * (1.0 - value) / rest;
  return {target, state, std::move(assumptions), std::move(next)};
}

// Re-calibrates the component of clique `c` after only `c` changed, by
// passing messages outward from it.
inline void propagate_from(TreePotentials& t, std::size_t c, Reduce op = Reduce::sum) {
  const auto& jt = *t.structure;
  std::vector<std::size_t> stack{c};
  std::vector<char> seen(jt.cliques.size(), 0);
  seen[c] = 1;
  while (!stack.empty()) {
    auto from = stack.back();
    stack.pop_back();
    for (const auto& nb : jt.adjacency[from]) {
      if (seen[nb.clique]) continue;
      seen[nb.clique] = 1;
      detail::pass_message(t, nb.separator, from, op);
      stack.push_back(nb.clique);
    }
  }
}

// Jeffrey update in place; returns the clique the evidence was entered into.
inline std::size_t apply_soft_evidence_in_place(ProbTree& tree, const SoftEvidence& ev) {
  const auto& jt = *tree.structure;
  for (const auto& [v, s] : ev.assumptions)
    if (v == ev.target) throw Error(Errc::invalid_evidence, "target variable appears among the assumptions");
  if (ev.new_conditional.size() != jt.cards[ev.target])
    throw Error(Errc::invalid_evidence, "new conditional has the wrong number of states");
  double total = 0.0;
  for (double x : ev.new_conditional) {
    if (!(x > 0.0 && x < 1.0)) throw Error(Errc::invalid_evidence, "new conditional entries must lie strictly in (0, 1)");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-12) throw Error(Errc::invalid_evidence, "new conditional does not sum to 1");

  const std::size_t c = edit_clique(jt, variables_of(ev.target, ev.assumptions));
  const auto old = conditional_distribution(tree, c, ev.target, ev.assumptions);
  std::vector<double> ratio(old.size());
  for (std::size_t s = 0; s < old.size(); ++s) {
    if (!(old[s] > 0.0)) throw Error(Errc::zero_probability, "current conditional has a zero entry");
    ratio[s] = ev.new_conditional[s] / old[s];
  }
  const Domain& d = jt.cliques[c];
  const auto pos = static_cast<std::size_t>(d.position(ev.target));
  const auto mask = detail::assumption_mask(jt, c, ev.assumptions);
  auto& values = tree.cliques[c];
  for (std::size_t i = 0; i < values.size(); ++i)
    if (mask[i]) values[i] *= ratio[d.state_at(i, pos)];
  propagate_from(tree, c);
  tree.calibrated = true;
  return c;
}

inline ProbTree apply_soft_evidence(const ProbTree& tree, const SoftEvidence& ev) {
  ProbTree next = tree;
  apply_soft_evidence_in_place(next, ev);
  return next;
}

// Hard evidence: p(· | event) for a product-form event, recalibrated and
// renormalized per component.
inline ProbTree condition(const ProbTree& tree, const StateFilter& event) {
  ProbTree out = tree;
  const auto& jt = *tree.structure;
  for (std::size_t c = 0; c < jt.cliques.size(); ++c) {
    auto mask = event.mask(jt.cliques[c]);
    if (mask.empty()) continue;
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (!mask[i]) out.cliques[c][i] = 0.0;
  }
  calibrate(out);
  std::vector<double> mass(jt.roots.size());
  for (std::size_t k = 0; k < jt.roots.size(); ++k) {
    double z = 0.0;
    for (double x : out.cliques[jt.roots[k]]) z += x;
    if (!(z > 0.0)) throw Error(Errc::zero_probability, "conditioning event has zero probability");
    mass[k] = z;
  }
  for (std::size_t c = 0; c < jt.cliques.size(); ++c)
    for (double& x : out.cliques[c]) x /= mass[jt.component[c]];
  for (std::size_t s = 0; s < jt.separators.size(); ++s)
    for (double& x : out.separators[s]) x /= mass[jt.component[jt.separators[s].a]];
  out.calibrated = true;
  return out;
}

struct MinTree : TreePotentials {
  using TreePotentials::TreePotentials;

  // Product of per-component minima; for a connected tree, the minimum of
  // any single clique table.
  double global_min() const {
    double v = 1.0;
    for (std::size_t r : structure->roots) v *= *std::min_element(cliques[r].begin(), cliques[r].end());
    return v;
  }
};

inline MinTree min_calibrate(const TreePotentials& potentials) {
  MinTree t;
  static_cast<TreePotentials&>(t) = potentials;
  calibrate(t, Reduce::min);
  return t;
}

struct MinResult {
  double value = 0.0;
  // Full joint assignments (state index per variable), sorted in mixed-radix order.
  std::vector<std::vector<std::size_t>> argmins;
  bool truncated = false;
};

inline constexpr std::size_t kDefaultArgminCap = 100;
inline constexpr double kTieTolerance = 1e-9;

inline bool nearly_equal(double a, double b, double rel = kTieTolerance) {
  if (a == b) return true;
  if (!std::isfinite(a) || !std::isfinite(b)) return false;
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b));
}

// Minimum of Πc t_c / Πs t_s over joint states allowed by `constraints`,
// plus argmin states by traceback (at most `cap`, else truncated).
inline MinResult constrained_min(const TreePotentials& potentials, const StateFilter& constraints,
                                 std::size_t cap = kDefaultArgminCap) {
  const auto& jt = *potentials.structure;
  constexpr double inf = std::numeric_limits<double>::infinity();
  TreePotentials work = potentials;
  for (std::size_t c = 0; c < jt.cliques.size(); ++c) {
    auto mask = constraints.mask(jt.cliques[c]);
    if (mask.empty()) continue;
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (!mask[i]) work.cliques[c][i] = inf;
  }
  // After the collect pass each clique holds the min over its subtree, and the
  // separator toward its parent holds the message it sent.
  detail::collect(work, Reduce::min);

  MinResult result;
  result.value = 1.0;
  std::vector<double> component_min(jt.roots.size());
  for (std::size_t k = 0; k < jt.roots.size(); ++k) {
    const auto& t = work.cliques[jt.roots[k]];
    component_min[k] = *std::min_element(t.begin(), t.end());
    result.value *= component_min[k];
  }
  if (!std::isfinite(result.value))
    throw Error(Errc::invalid_argument, "constraints leave no consistent joint state");

  std::vector<std::size_t> assignment(jt.variable_count(), 0);
  const auto& order = jt.preorder;

  std::function<bool(std::size_t)> visit = [&](std::size_t k) -> bool {
    if (k == order.size()) {
      if (result.argmins.size() == cap) {
        result.truncated = true;
        return false;
      }
      result.argmins.push_back(assignment);
      return true;
    }
    const std::size_t c = order[k];
    const Domain& d = jt.cliques[c];
    const auto& table = work.cliques[c];
    double target = 0.0;
    std::vector<char> fixed(d.vars.size(), 0);
    if (const auto& p = jt.parent[c]) {
      const Separator& s = jt.separators[p->separator];
      const auto& sep_map = (s.a == c) ? s.map_a : s.map_b;
      // Separator cell implied by the variables already assigned.
      std::size_t sep_cell = 0;
      for (std::size_t i = 0; i < s.domain.vars.size(); ++i)
        sep_cell = sep_cell * s.domain.cards[i] + assignment[s.domain.vars[i]];
      target = work.separators[p->separator][sep_cell];
      for (std::size_t i = 0; i < d.vars.size(); ++i) fixed[i] = s.domain.contains(d.vars[i]);
      for (std::size_t cell = 0; cell < table.size(); ++cell) {
        if (sep_map[cell] != sep_cell || !nearly_equal(table[cell], target)) continue;
        for (std::size_t i = 0; i < d.vars.size(); ++i)
          if (!fixed[i]) assignment[d.vars[i]] = d.state_at(cell, i);
        if (!visit(k + 1)) return false;
      }
      return true;
    }
    target = component_min[jt.component[c]];
    for (std::size_t cell = 0; cell < table.size(); ++cell) {
      if (!nearly_equal(table[cell], target)) continue;
      for (std::size_t i = 0; i < d.vars.size(); ++i) assignment[d.vars[i]] = d.state_at(cell, i);
      if (!visit(k + 1)) return false;
    }
    return true;
  };
  visit(0);
  std::sort(result.argmins.begin(), result.argmins.end());
  return result;
}

}  // namespace cpm
