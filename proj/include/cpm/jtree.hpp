#pragma once

// Junction tree compilation (moralize, min-fill triangulation, maximum
// spanning tree over clique intersections) and the factored probability tree.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <tuple>
#include <vector>

#include "cpm/model.hpp"
#include "cpm/potential.hpp"

namespace cpm {

struct Separator {
  std::size_t a = 0;
  std::size_t b = 0;
  Domain domain;
  // Cell of `domain` matching each cell of clique a (resp. b).
  std::vector<std::uint32_t> map_a;
  std::vector<std::uint32_t> map_b;
};

struct Neighbor {
  std::size_t clique;
  std::size_t separator;
};

struct JunctionTree {
  std::vector<Domain> cliques;
  std::vector<Separator> separators;
  std::vector<std::vector<Neighbor>> adjacency;

  // One root per connected component (its lowest-index clique).
  std::vector<std::size_t> roots;
  std::vector<std::size_t> component;
  // Cliques in depth-first order, component by component; parents precede children.
  std::vector<std::size_t> preorder;
  std::vector<std::optional<Neighbor>> parent;

  std::vector<VarId> elimination_order;
  // Clique holding each variable's CPD family.
  std::vector<std::size_t> family_clique;
  std::vector<std::size_t> cards;
  std::size_t treewidth = 0;

  std::size_t variable_count() const { return cards.size(); }

  // Smallest clique containing all of `vars`, ties to the lowest index.
  std::optional<std::size_t> find_clique(const std::vector<VarId>& vars) const {
    std::optional<std::size_t> best;
    for (std::size_t c = 0; c < cliques.size(); ++c) {
      if (!cliques[c].contains_all(vars)) continue;
      if (!best || cliques[c].vars.size() < cliques[*best].vars.size()) best = c;
    }
    return best;
  }

  std::size_t total_clique_cells() const {
    std::size_t n = 0;
    for (const auto& c : cliques) n += c.size();
    return n;
  }
};

namespace detail {

inline std::vector<std::vector<char>> moral_graph(const BayesNet& net) {
  const std::size_t n = net.size();
  std::vector<std::vector<char>> adj(n, std::vector<char>(n, 0));
  auto link = [&](VarId a, VarId b) {
    if (a != b) adj[a][b] = adj[b][a] = 1;
  };
  for (VarId v = 0; v < n; ++v) {
    auto parents = net.parents_of(v);
    for (std::size_t i = 0; i < parents.size(); ++i) {
      link(v, parents[i]);
      for (std::size_t j = i + 1; j < parents.size(); ++j) link(parents[i], parents[j]);
    }
  }
  return adj;
}

struct Triangulation {
  std::vector<VarId> order;
  std::vector<std::vector<VarId>> cliques;  // maximal, each sorted, in creation order
};

// Greedy min-fill elimination. Ties: smaller resulting clique, then lower
// declaration index.
inline Triangulation triangulate_min_fill(std::vector<std::vector<char>> adj) {
  const std::size_t n = adj.size();
  std::vector<std::set<VarId>> nbrs(n);
  for (VarId a = 0; a < n; ++a)
    for (VarId b = 0; b < n; ++b)
      if (adj[a][b]) nbrs[a].insert(b);

  auto fill_of = [&](VarId v) {
    std::size_t fill = 0;
    for (auto i = nbrs[v].begin(); i != nbrs[v].end(); ++i)
      for (auto j = std::next(i); j != nbrs[v].end(); ++j)
        if (!adj[*i][*j]) ++fill;
    return fill;
  };

  std::vector<char> alive(n, 1);
  std::vector<std::size_t> fill(n);
  for (VarId v = 0; v < n; ++v) fill[v] = fill_of(v);

  Triangulation out;
  std::vector<std::vector<VarId>> candidates;
  for (std::size_t step = 0; step < n; ++step) {
    VarId best = n;
    for (VarId v = 0; v < n; ++v) {
      if (!alive[v]) continue;
      if (best == n || std::pair(fill[v], nbrs[v].size()) < std::pair(fill[best], nbrs[best].size())) best = v;
    }
    std::vector<VarId> clique(nbrs[best].begin(), nbrs[best].end());
    clique.push_back(best);
    std::sort(clique.begin(), clique.end());
    candidates.push_back(clique);

    std::set<VarId> dirty;
    for (VarId a : nbrs[best]) {
      for (VarId b : nbrs[best])
        if (a != b && !adj[a][b]) {
          adj[a][b] = adj[b][a] = 1;
          nbrs[a].insert(b);
          nbrs[b].insert(a);
        }
    }
    for (VarId a : nbrs[best]) {
      nbrs[a].erase(best);
      adj[a][best] = adj[best][a] = 0;
      dirty.insert(a);
      for (VarId b : nbrs[a]) dirty.insert(b);
    }
    nbrs[best].clear();
    alive[best] = 0;
    out.order.push_back(best);
    for (VarId v : dirty)
      if (alive[v]) fill[v] = fill_of(v);
  }

  // A later candidate never contains an earlier one (it lacks the earlier
  // eliminated vertex), so only subsumption by kept cliques needs checking.
  for (auto& cand : candidates) {
    bool subsumed = std::any_of(out.cliques.begin(), out.cliques.end(), [&](const std::vector<VarId>& k) {
      return std::includes(k.begin(), k.end(), cand.begin(), cand.end());
    });
    if (!subsumed) out.cliques.push_back(std::move(cand));
  }
  return out;
}

}  // namespace detail

enum class Heuristic { min_fill };

inline JunctionTree compile(const BayesNet& net, Heuristic = Heuristic::min_fill) {
  JunctionTree jt;
  const std::size_t n = net.size();
  for (VarId v = 0; v < n; ++v) jt.cards.push_back(net.cardinality(v));

  auto tri = detail::triangulate_min_fill(detail::moral_graph(net));
  jt.elimination_order = tri.order;
  for (const auto& vars : tri.cliques) {
    Domain d{vars, {}};
    for (VarId v : vars) d.cards.push_back(jt.cards[v]);
    jt.treewidth = std::max(jt.treewidth, vars.size() - 1);
    jt.cliques.push_back(std::move(d));
  }
  const std::size_t m = jt.cliques.size();

  // Kruskal on intersection sizes, heaviest first, ties by clique order.
  struct Edge {
    std::size_t weight, i, j;
    std::vector<VarId> shared;
  };
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) {
      std::vector<VarId> shared;
      std::set_intersection(jt.cliques[i].vars.begin(), jt.cliques[i].vars.end(), jt.cliques[j].vars.begin(),
                            jt.cliques[j].vars.end(), std::back_inserter(shared));
      if (!shared.empty()) edges.push_back({shared.size(), i, j, std::move(shared)});
    }
  std::stable_sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) { return x.weight > y.weight; });

  std::vector<std::size_t> uf(m);
  std::iota(uf.begin(), uf.end(), 0);
  auto find = [&](std::size_t x) {
    while (uf[x] != x) x = uf[x] = uf[uf[x]];
    return x;
  };
  jt.adjacency.assign(m, {});
  for (auto& e : edges) {
    auto ri = find(e.i), rj = find(e.j);
    if (ri == rj) continue;
    uf[ri] = rj;
    Separator s;
    s.a = e.i;
    s.b = e.j;
    s.domain.vars = std::move(e.shared);
    for (VarId v : s.domain.vars) s.domain.cards.push_back(jt.cards[v]);
    s.map_a = projection_map(jt.cliques[e.i], s.domain);
    s.map_b = projection_map(jt.cliques[e.j], s.domain);
    const std::size_t idx = jt.separators.size();
    jt.adjacency[e.i].push_back({e.j, idx});
    jt.adjacency[e.j].push_back({e.i, idx});
    jt.separators.push_back(std::move(s));
  }
  for (auto& list : jt.adjacency)
    std::sort(list.begin(), list.end(), [](const Neighbor& x, const Neighbor& y) { return x.clique < y.clique; });

  jt.parent.assign(m, std::nullopt);
  jt.component.assign(m, m);
  for (std::size_t r = 0; r < m; ++r) {
    if (jt.component[r] != m) continue;
    const std::size_t comp = jt.roots.size();
    jt.roots.push_back(r);
    std::vector<std::size_t> stack{r};
    jt.component[r] = comp;
    while (!stack.empty()) {
      auto c = stack.back();
      stack.pop_back();
      jt.preorder.push_back(c);
      for (auto it = jt.adjacency[c].rbegin(); it != jt.adjacency[c].rend(); ++it) {
        if (jt.component[it->clique] != m) continue;
        jt.component[it->clique] = comp;
        jt.parent[it->clique] = Neighbor{c, it->separator};
        stack.push_back(it->clique);
      }
    }
  }

  for (VarId v = 0; v < n; ++v) {
    auto family = net.parents_of(v);
    family.push_back(v);
    jt.family_clique.push_back(*jt.find_clique(family));
  }
  return jt;
}

// Clique and separator tables over a shared junction tree. Used both for the
// consensus distribution p and for each trader's assets q.
struct TreePotentials {
  std::shared_ptr<const JunctionTree> structure;
  std::vector<std::vector<double>> cliques;
  std::vector<std::vector<double>> separators;

  TreePotentials() = default;
  TreePotentials(std::shared_ptr<const JunctionTree> jt, double fill) : structure(std::move(jt)) {
    for (const auto& c : structure->cliques) cliques.emplace_back(c.size(), fill);
    for (const auto& s : structure->separators) separators.emplace_back(s.domain.size(), fill);
  }

  Potential clique_potential(std::size_t c) const { return {structure->cliques[c], cliques[c]}; }
  Potential separator_potential(std::size_t s) const { return {structure->separators[s].domain, separators[s]}; }

  // Πc t_c(x_c) / Πs t_s(x_s) at a full assignment, with 0/0 = 0.
  double joint_value(const std::vector<std::size_t>& states) const {
    double v = 1.0;
    auto cell_of = [&](const Domain& d) {
      std::size_t idx = 0;
      for (std::size_t i = 0; i < d.vars.size(); ++i) idx = idx * d.cards[i] + states[d.vars[i]];
      return idx;
    };
    for (std::size_t c = 0; c < cliques.size(); ++c) v *= cliques[c][cell_of(structure->cliques[c])];
    for (std::size_t s = 0; s < separators.size(); ++s) {
      const double d = separators[s][cell_of(structure->separators[s].domain)];
      if (d == 0.0) return 0.0;
      v /= d;
    }
    return v;
  }

  bool operator==(const TreePotentials& o) const {
    return structure == o.structure && cliques == o.cliques && separators == o.separators;
  }
};

struct ProbTree : TreePotentials {
  bool calibrated = false;
  using TreePotentials::TreePotentials;
};

namespace detail {

// Hugin update across one tree edge: the receiving clique absorbs the ratio
// of the sender's new separator message to the stored separator table.
inline void pass_message(TreePotentials& t, std::size_t sep_index, std::size_t from, Reduce op) {
  const Separator& s = t.structure->separators[sep_index];
  const bool from_a = (s.a == from);
  const std::size_t to = from_a ? s.b : s.a;
  const auto& map_from = from_a ? s.map_a : s.map_b;
  const auto& map_to = from_a ? s.map_b : s.map_a;
  auto fresh = reduce_onto(t.cliques[from], map_from, s.domain.size(), op);
  auto& stored = t.separators[sep_index];
  std::vector<double> ratio(fresh.size());
  for (std::size_t i = 0; i < fresh.size(); ++i) ratio[i] = stored[i] == 0.0 ? 0.0 : fresh[i] / stored[i];
  auto& target = t.cliques[to];
  for (std::size_t i = 0; i < target.size(); ++i) target[i] *= ratio[map_to[i]];
  stored = std::move(fresh);
}

inline void collect(TreePotentials& t, Reduce op) {
  const auto& jt = *t.structure;
  for (auto it = jt.preorder.rbegin(); it != jt.preorder.rend(); ++it)
    if (const auto& p = jt.parent[*it]) pass_message(t, p->separator, *it, op);
}

inline void distribute(TreePotentials& t, Reduce op) {
  const auto& jt = *t.structure;
  for (std::size_t c : jt.preorder)
    if (const auto& p = jt.parent[c]) pass_message(t, p->separator, p->clique, op);
}

}  // namespace detail

// Two-phase (collect, distribute) calibration.
inline void calibrate(TreePotentials& t, Reduce op = Reduce::sum) {
  detail::collect(t, op);
  detail::distribute(t, op);
}

inline ProbTree initialize_prob_tree(const BayesNet& net, std::shared_ptr<const JunctionTree> jt) {
  ProbTree tree(jt, 1.0);
  for (VarId v = 0; v < net.size(); ++v) {
    const Cpd* cpd = net.cpd_for(v);
    Domain family;
    for (const auto& p : cpd->parents) family.vars.push_back(net.index_of(p));
    family.vars.push_back(v);
    for (VarId x : family.vars) family.cards.push_back(net.cardinality(x));
    std::vector<double> flat;
    for (const auto& row : cpd->table) flat.insert(flat.end(), row.begin(), row.end());
    const std::size_t c = jt->family_clique[v];
    auto map = projection_map(jt->cliques[c], family);
    auto& values = tree.cliques[c];
    for (std::size_t i = 0; i < values.size(); ++i) values[i] *= flat[map[i]];
  }
  calibrate(tree);
  tree.calibrated = true;
  return tree;
}

}  // namespace cpm
