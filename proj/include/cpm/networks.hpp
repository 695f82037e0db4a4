#pragma once

#include "cpm/model.hpp"

namespace cpm::networks {

// Three binary nodes, D -> E and D -> F.
inline BayesNet bn_def() {
  BayesNet net;
  net.variables = {{"D", {"d1", "d2"}}, {"E", {"e1", "e2"}}, {"F", {"f1", "f2"}}};
  net.cpds = {
      {"D", {}, {{0.5, 0.5}}},
      {"E", {"D"}, {{0.9, 0.1}, {0.4, 0.6}}},
      {"F", {"D"}, {{0.3, 0.7}, {0.1, 0.9}}},
  };
  return net;
}

}  // namespace cpm::networks
