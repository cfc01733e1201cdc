#pragma once

// Combinatorial trees over terminals and the unique flow they carry.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <utility>
#include <vector>

#include "branched/errors.hpp"

namespace branched {

/// Tree on nodes 0..terminals-1 (terminals) and terminals..nodes()-1
/// (Steiner points). Steiner points have degree exactly 3; terminals may have
/// any positive degree.
struct SteinerTopology {
  std::size_t terminals = 0;
  std::size_t steiner = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;

  std::size_t nodes() const { return terminals + steiner; }

  std::vector<std::vector<std::size_t>> neighbors() const {
    std::vector<std::vector<std::size_t>> nb(nodes());
    for (const auto& [a, b] : edges) {
      nb[a].push_back(b);
      nb[b].push_back(a);
    }
    return nb;
  }

  /// Throws PreconditionError unless this is a tree with degree-3 Steiner
  /// points and no isolated terminal.
  void validate() const {
    const std::size_t n = nodes();
    if (terminals == 0) throw PreconditionError("SteinerTopology: no terminals");
    if (edges.size() + 1 != n) throw PreconditionError("SteinerTopology: a tree needs nodes-1 edges");
    std::vector<std::size_t> parent(n);
    for (std::size_t i = 0; i < n; ++i) parent[i] = i;
    auto find = [&](std::size_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    std::vector<std::size_t> degree(n, 0);
    for (const auto& [a, b] : edges) {
      if (a >= n || b >= n || a == b) throw PreconditionError("SteinerTopology: bad edge");
      const std::size_t ra = find(a), rb = find(b);
      if (ra == rb) throw PreconditionError("SteinerTopology: cycle");
      parent[ra] = rb;
      ++degree[a];
      ++degree[b];
    }
    for (std::size_t v = 0; v < n; ++v) {
      if (v >= terminals && degree[v] != 3)
        throw PreconditionError("SteinerTopology: Steiner points must have degree 3");
      if (n > 1 && degree[v] == 0) throw PreconditionError("SteinerTopology: isolated node");
    }
  }
};

/// All full Steiner topologies on n >= 2 terminals, (2n-5)!! of them for
/// n >= 3. Built by inserting terminal t on every edge of each topology on
/// the first t terminals, so the order (and hence each topology's index) is
/// deterministic.
inline std::vector<SteinerTopology> enumerate_full_topologies(std::size_t n) {
  if (n < 2) throw PreconditionError("enumerate_full_topologies: need at least two terminals");
  if (n == 2) return {SteinerTopology{2, 0, {{0, 1}}}};
  // Steiner indices are assigned after all n terminals.
  std::vector<SteinerTopology> current{SteinerTopology{n, 1, {{0, n}, {1, n}, {2, n}}}};
  for (std::size_t t = 3; t < n; ++t) {
    std::vector<SteinerTopology> next;
    next.reserve(current.size() * (2 * t - 3));
    for (const SteinerTopology& topo : current) {
      for (std::size_t e = 0; e < topo.edges.size(); ++e) {
        SteinerTopology grown = topo;
        const std::size_t s = n + grown.steiner++;
        const auto [a, b] = grown.edges[e];
        grown.edges[e] = {a, s};
        grown.edges.push_back({s, b});
        grown.edges.push_back({t, s});
        next.push_back(std::move(grown));
      }
    }
    current = std::move(next);
  }
  return current;
}

/// Edge flux oriented from tail to head; flux >= 0.
struct EdgeFlux {
  std::size_t tail = 0;
  std::size_t head = 0;
  double flux = 0.0;
};

/// Unique flow on the tree with divergence (out minus in) equal to
/// supplies[v] at terminal v and zero at Steiner points. Edge order follows
/// topology.edges; each edge is oriented in the direction its flux travels.
inline std::vector<EdgeFlux> tree_flow_masses(const SteinerTopology& topo, const std::vector<double>& supplies) {
  if (supplies.size() != topo.terminals)
    throw PreconditionError("tree_flow_masses: one supply per terminal required");
  double net = 0.0, scale = 0.0;
  for (double s : supplies) {
    net += s;
    scale += std::abs(s);
  }
  if (std::abs(net) > 1e-9 * std::max(1.0, scale)) {
    std::ostringstream os;
    os << "tree_flow_masses: supplies do not balance (net " << net << ")";
    throw BalanceError(os.str());
  }
  const std::size_t n = topo.nodes();
  const auto nb = topo.neighbors();
  // Subtree supply sums with the tree rooted at node 0.
  std::vector<std::size_t> order, parent(n, n);
  std::vector<bool> seen(n, false);
  order.reserve(n);
  order.push_back(0);
  seen[0] = true;
  for (std::size_t i = 0; i < order.size(); ++i)
    for (std::size_t w : nb[order[i]])
      if (!seen[w]) {
        seen[w] = true;
        parent[w] = order[i];
        order.push_back(w);
      }
  if (order.size() != n) throw PreconditionError("tree_flow_masses: topology is not connected");
  std::vector<double> subtree(n, 0.0);
  for (std::size_t v = 0; v < topo.terminals; ++v) subtree[v] = supplies[v];
  for (std::size_t i = n; i-- > 1;) subtree[parent[order[i]]] += subtree[order[i]];

  std::vector<EdgeFlux> out;
  out.reserve(topo.edges.size());
  for (const auto& [a, b] : topo.edges) {
    // Child side carries its subtree surplus toward the parent.
    const bool a_child = parent[a] == b;
    const std::size_t child = a_child ? a : b;
    const std::size_t par = a_child ? b : a;
    const double s = subtree[child];
    if (s >= 0.0) {
      out.push_back({child, par, s});
    } else {
      out.push_back({par, child, -s});
    }
  }
  return out;
}

}  // namespace branched
