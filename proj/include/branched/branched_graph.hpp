#pragma once

// Directed geometric graphs carrying mass fluxes, their Gilbert energy, and
// the synchronized traffic plan obtained by decomposing the flow into paths.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <vector>

#include "branched/errors.hpp"
#include "branched/geometry.hpp"
#include "branched/traffic_plans.hpp"

namespace branched {

struct GraphVertex {
  Point x;
  double supply = 0.0;  // mu0({v}) - mu1({v}); zero at free vertices
  bool terminal = false;
};

struct GraphEdge {
  std::size_t tail = 0;
  std::size_t head = 0;
  double flux = 0.0;
};

struct BranchedGraph {
  DomainBox box;
  std::vector<GraphVertex> vertices;
  std::vector<GraphEdge> edges;

  double edge_length(const GraphEdge& e) const { return distance(vertices[e.tail].x, vertices[e.head].x); }

  /// max_v |out(v) - in(v) - supply(v)|.
  double balance_defect() const {
    std::vector<double> div(vertices.size(), 0.0);
    for (const GraphEdge& e : edges) {
      div[e.tail] += e.flux;
      div[e.head] -= e.flux;
    }
    double worst = 0.0;
    for (std::size_t v = 0; v < vertices.size(); ++v)
      worst = std::max(worst, std::abs(div[v] - vertices[v].supply));
    return worst;
  }

  void validate() const {
    for (const GraphEdge& e : edges) {
      if (e.tail >= vertices.size() || e.head >= vertices.size())
        throw PreconditionError("BranchedGraph: edge endpoint out of range");
      if (!(e.flux > 0.0)) throw PreconditionError("BranchedGraph: zero-flux edge");
    }
    const double defect = balance_defect();
    if (defect > 1e-9) {
      std::ostringstream os;
      os << "BranchedGraph: Kirchhoff balance violated by " << defect;
      throw BalanceError(os.str());
    }
  }
};

/// sum_e flux_e^alpha * length_e.
inline double gilbert_energy(const BranchedGraph& g, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw PreconditionError("gilbert_energy: alpha must lie in (0,1]");
  g.validate();
  double e = 0.0;
  for (const GraphEdge& edge : g.edges) e += std::pow(edge.flux, alpha) * g.edge_length(edge);
  return e;
}

/// Decomposes the flow into source-to-sink paths and schedules them so that
/// all curves through an edge traverse it during the same time window at the
/// same speed. The window of edge (a,b) starts at tau(a), the longest
/// distance from a source to a along the flow, normalized by the overall
/// maximum; curves wait at vertices when needed. On such a plan the
/// synchronized and spatial multiplicities agree on every edge, so
/// energy_C = energy_E = gilbert_energy when edges do not overlap.
inline TrafficPlan graph_to_traffic_plan(const BranchedGraph& g) {
  g.validate();
  const std::size_t n = g.vertices.size();
  std::vector<std::vector<std::size_t>> out(n);
  std::vector<std::size_t> indeg(n, 0);
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    out[g.edges[e].tail].push_back(e);
    ++indeg[g.edges[e].head];
  }
  // Longest-path potentials in topological order.
  std::vector<double> tau(n, 0.0);
  std::vector<std::size_t> queue;
  for (std::size_t v = 0; v < n; ++v)
    if (indeg[v] == 0) queue.push_back(v);
  for (std::size_t i = 0; i < queue.size(); ++i) {
    const std::size_t v = queue[i];
    for (std::size_t e : out[v]) {
      const std::size_t w = g.edges[e].head;
      tau[w] = std::max(tau[w], tau[v] + g.edge_length(g.edges[e]));
      if (--indeg[w] == 0) queue.push_back(w);
    }
  }
  if (queue.size() != n) throw PreconditionError("graph_to_traffic_plan: flow has a directed cycle");
  double horizon = 0.0;
  for (double t : tau) horizon = std::max(horizon, t);

  double total = 0.0;
  for (const GraphVertex& v : g.vertices) total += std::max(0.0, v.supply);
  const double tiny = 1e-15 * std::max(total, 1e-300);

  std::vector<double> residual(g.edges.size());
  for (std::size_t e = 0; e < g.edges.size(); ++e) residual[e] = g.edges[e].flux;
  std::vector<double> supply(n), demand(n);
  for (std::size_t v = 0; v < n; ++v) {
    supply[v] = std::max(0.0, g.vertices[v].supply);
    demand[v] = std::max(0.0, -g.vertices[v].supply);
  }

  TrafficPlan plan{g.box, {}};
  for (std::size_t src = 0; src < n; ++src) {
    while (supply[src] > tiny) {
      std::vector<std::size_t> path_edges;
      std::size_t v = src;
      double amount = supply[src];
      while (demand[v] <= tiny) {
        std::size_t next = g.edges.size();
        for (std::size_t e : out[v])
          if (residual[e] > tiny) {
            next = e;
            break;
          }
        if (next == g.edges.size()) break;
        path_edges.push_back(next);
        amount = std::min(amount, residual[next]);
        v = g.edges[next].head;
      }
      if (demand[v] <= tiny) {
        // Residual imbalance below tolerance; nothing left to route.
        supply[src] = 0.0;
        break;
      }
      amount = std::min(amount, demand[v]);
      supply[src] -= amount;
      demand[v] -= amount;
      for (std::size_t e : path_edges) residual[e] -= amount;

      std::vector<double> times;
      std::vector<Point> points;
      auto push = [&](double t, const Point& x) {
        if (horizon > 0.0) t /= horizon;
        if (!times.empty() && !(t > times.back())) {
          points.back() = x;
          return;
        }
        times.push_back(t);
        points.push_back(x);
      };
      push(0.0, g.vertices[src].x);
      std::size_t at = src;
      push(tau[src], g.vertices[at].x);
      for (std::size_t e : path_edges) {
        const std::size_t w = g.edges[e].head;
        push(tau[at] + g.edge_length(g.edges[e]), g.vertices[w].x);
        push(tau[w], g.vertices[w].x);
        at = w;
      }
      if (times.back() < 1.0) {
        times.push_back(1.0);
        points.push_back(g.vertices[at].x);
      } else {
        times.back() = 1.0;
      }
      if (times.size() == 1) {
        times = {0.0, 1.0};
        points = {g.vertices[src].x, g.vertices[at].x};
      }
      plan.curves.emplace_back(std::move(times), std::move(points), amount);
    }
  }
  return plan;
}

/// CSV edge list "tail_x0..,head_x0..,flux,length".
inline void write_graph_csv(std::ostream& os, const BranchedGraph& g) {
  const std::size_t d = g.box.dim;
  for (std::size_t c = 0; c < d; ++c) os << "tail_x" << c << ',';
  for (std::size_t c = 0; c < d; ++c) os << "head_x" << c << ',';
  os << "flux,length\n" << std::setprecision(17);
  for (const GraphEdge& e : g.edges) {
    for (std::size_t c = 0; c < d; ++c) os << g.vertices[e.tail].x[c] << ',';
    for (std::size_t c = 0; c < d; ++c) os << g.vertices[e.head].x[c] << ',';
    os << e.flux << ',' << g.edge_length(e) << '\n';
  }
}

}  // namespace branched
