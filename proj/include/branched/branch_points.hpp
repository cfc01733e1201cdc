#pragma once

// Placement of Steiner points for a fixed topology.
//
// For a fixed tree the fluxes are fixed, so the Gilbert energy
//   f(X) = sum_e w_e |x_a - x_b|,   w_e = flux_e^alpha,
// is a convex function of the free coordinates. It is minimized by damped
// Newton steps on the smoothed energy sum_e w_e sqrt(|x_a - x_b|^2 + eps^2)
// while eps shrinks to 1e-12 (relative to the terminal spread).
//
// Minimizers are often degenerate: a Steiner point sits on a terminal or on
// another Steiner point. Nodes joined by a short edge are tentatively merged
// into a cluster that moves as one point (or stays pinned when it contains a
// terminal); the merge is kept when it does not raise the energy. A cluster
// is stationary iff, for each of its internal edges, the resultant pull of
// the nodes on one side does not exceed that edge's weight. Violations are
// resolved by splitting the cluster along that edge.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "branched/branched_graph.hpp"
#include "branched/errors.hpp"
#include "branched/steiner_topology.hpp"

namespace branched {

struct BranchTerminal {
  Point x;
  double supply = 0.0;  // positive at sources
};

struct OptimizedTree {
  BranchedGraph graph;
  double energy = 0.0;
  /// Norm of the minimal subgradient of the energy, relative to sum_e w_e.
  double stationarity = 0.0;
  /// Positions of all topology nodes (terminals first).
  std::vector<Point> node_positions;
  std::size_t newton_steps = 0;
};

using BranchConvergenceError = ConvergenceError<OptimizedTree>;

namespace detail {

class BranchPointOptimizer {
 public:
  BranchPointOptimizer(const SteinerTopology& topo, const std::vector<BranchTerminal>& terminals,
                       double alpha, double tol, const DomainBox& box)
      : topo_(topo), terms_(terminals), alpha_(alpha), tol_(tol), box_(box), dim_(box.dim) {
    topo_.validate();
    if (terminals.size() != topo.terminals)
      throw PreconditionError("optimize_branch_points: one terminal per topology leaf required");
    if (!(alpha > 0.0 && alpha <= 1.0))
      throw PreconditionError("optimize_branch_points: alpha must lie in (0,1]");
    if (!(tol > 0.0)) throw PreconditionError("optimize_branch_points: tol must be > 0");
    std::vector<double> supplies;
    for (const BranchTerminal& t : terminals) supplies.push_back(t.supply);
    fluxes_ = tree_flow_masses(topo, supplies);
    weight_.resize(fluxes_.size());
    total_weight_ = 0.0;
    for (std::size_t e = 0; e < fluxes_.size(); ++e) {
      weight_[e] = fluxes_[e].flux > 0.0 ? std::pow(fluxes_[e].flux, alpha) : 0.0;
      total_weight_ += weight_[e];
    }
    scale_ = 0.0;
    for (const auto& a : terminals)
      for (const auto& b : terminals) scale_ = std::max(scale_, distance(a.x, b.x));
    if (scale_ == 0.0) scale_ = box.edge;
    nodes_ = topo.nodes();
    label_.resize(nodes_);
    std::iota(label_.begin(), label_.end(), std::size_t{0});
    pos_.assign(nodes_, Point(dim_));
    for (std::size_t t = 0; t < topo.terminals; ++t) pos_[t] = terminals[t].x;
    initial_positions();
  }

  OptimizedTree run() {
    if (total_weight_ == 0.0 || topo_.steiner == 0) return finish(0.0);
    continuation(1e-1);
    for (int outer = 0; outer < 25; ++outer) {
      merge_pass();
      const auto [grad, split] = stationarity();
      const double stat = std::max(grad, split.excess);
      if (stat <= tol_) return finish(stat);
      if (split.excess > grad && split.excess > tol_) {
        apply_split(split);
        continuation(1e-4);
      } else {
        newton(0.0, 50);
      }
    }
    const auto [grad, split] = stationarity();
    const double stat = std::max(grad, split.excess);
    if (stat <= tol_) return finish(stat);
    throw BranchConvergenceError("optimize_branch_points: no stationary point within the iteration cap",
                                 finish(stat), stat);
  }

 private:
  struct Split {
    double excess = 0.0;
    std::size_t edge = 0;
    std::size_t child = 0;  // node on the side that moves away
    Point direction;
  };

  bool pinned(std::size_t lbl) const { return lbl < topo_.terminals; }
  const Point& where(std::size_t node) const { return pos_[label_[node]]; }

  // Jacobi averaging from the terminal centroid.
  void initial_positions() {
    Point c(dim_);
    for (std::size_t t = 0; t < topo_.terminals; ++t) c += pos_[t];
    c *= 1.0 / static_cast<double>(topo_.terminals);
    for (std::size_t v = topo_.terminals; v < nodes_; ++v) pos_[v] = c;
    const auto nb = topo_.neighbors();
    for (int sweep = 0; sweep < 60; ++sweep) {
      std::vector<Point> next = pos_;
      for (std::size_t v = topo_.terminals; v < nodes_; ++v) {
        Point s(dim_);
        for (std::size_t w : nb[v]) s += pos_[w];
        next[v] = s * (1.0 / static_cast<double>(nb[v].size()));
      }
      pos_ = std::move(next);
    }
  }

  bool active(std::size_t e) const {
    const auto [a, b] = topo_.edges[e];
    return weight_[e] > 0.0 && label_[a] != label_[b];
  }

  // Free cluster labels in increasing order; variable block i belongs to
  // free_[i].
  void index_free() {
    free_.clear();
    var_of_.assign(nodes_, npos);
    for (std::size_t v = topo_.terminals; v < nodes_; ++v)
      if (label_[v] == v) {
        var_of_[v] = free_.size();
        free_.push_back(v);
      }
  }

  double energy(double eps) const {
    double f = 0.0;
    const double e2 = eps * eps;
    for (std::size_t e = 0; e < weight_.size(); ++e) {
      if (!active(e)) continue;
      const auto [a, b] = topo_.edges[e];
      f += weight_[e] * std::sqrt((where(a) - where(b)).norm_squared() + e2);
    }
    return f;
  }

  double energy_at(const Eigen::VectorXd& x, double eps) {
    const auto saved = pos_;
    scatter(x);
    const double f = energy(eps);
    pos_ = saved;
    return f;
  }

  Eigen::VectorXd gather() const {
    Eigen::VectorXd x(static_cast<Eigen::Index>(free_.size() * dim_));
    for (std::size_t i = 0; i < free_.size(); ++i)
      for (std::size_t c = 0; c < dim_; ++c) x(static_cast<Eigen::Index>(i * dim_ + c)) = pos_[free_[i]][c];
    return x;
  }

  void scatter(const Eigen::VectorXd& x) {
    for (std::size_t i = 0; i < free_.size(); ++i)
      for (std::size_t c = 0; c < dim_; ++c) pos_[free_[i]][c] = x(static_cast<Eigen::Index>(i * dim_ + c));
  }

  // Gradient and Hessian of the smoothed energy in the free coordinates.
  void derivatives(double eps, Eigen::VectorXd& g, Eigen::MatrixXd& h) const {
    const auto nv = static_cast<Eigen::Index>(free_.size() * dim_);
    g.setZero(nv);
    h.setZero(nv, nv);
    const double e2 = eps * eps;
    Eigen::VectorXd delta(static_cast<Eigen::Index>(dim_));
    for (std::size_t e = 0; e < weight_.size(); ++e) {
      if (!active(e)) continue;
      const auto [a, b] = topo_.edges[e];
      const std::size_t va = var_of_[label_[a]], vb = var_of_[label_[b]];
      if (va == npos && vb == npos) continue;
      const Point d = where(a) - where(b);
      const double r = std::sqrt(d.norm_squared() + e2);
      if (r == 0.0) continue;
      for (std::size_t c = 0; c < dim_; ++c) delta(static_cast<Eigen::Index>(c)) = d[c];
      const Eigen::VectorXd grad = weight_[e] * delta / r;
      const Eigen::MatrixXd block =
          (weight_[e] / r) * (Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(dim_), static_cast<Eigen::Index>(dim_)) -
                              delta * delta.transpose() / (r * r));
      const auto D = static_cast<Eigen::Index>(dim_);
      if (va != npos) {
        const auto ia = static_cast<Eigen::Index>(va * dim_);
        g.segment(ia, D) += grad;
        h.block(ia, ia, D, D) += block;
      }
      if (vb != npos) {
        const auto ib = static_cast<Eigen::Index>(vb * dim_);
        g.segment(ib, D) -= grad;
        h.block(ib, ib, D, D) += block;
      }
      if (va != npos && vb != npos) {
        const auto ia = static_cast<Eigen::Index>(va * dim_);
        const auto ib = static_cast<Eigen::Index>(vb * dim_);
        h.block(ia, ib, D, D) -= block;
        h.block(ib, ia, D, D) -= block;
      }
    }
  }

  // Damped Newton with Armijo backtracking on the eps-smoothed energy.
  void newton(double eps, int max_iter) {
    index_free();
    if (free_.empty()) return;
    Eigen::VectorXd g;
    Eigen::MatrixXd h;
    for (int it = 0; it < max_iter; ++it) {
      derivatives(eps, g, h);
      if (g.norm() <= 1e-14 * total_weight_) return;
      const double diag = std::max(h.diagonal().maxCoeff(), 1e-300);
      h.diagonal().array() += 1e-12 * diag;
      const Eigen::VectorXd step = h.ldlt().solve(-g);
      if (!step.allFinite()) return;
      const Eigen::VectorXd x0 = gather();
      const double f0 = energy(eps);
      const double slope = g.dot(step);
      double t = 1.0;
      bool moved = false;
      for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
        const Eigen::VectorXd x1 = x0 + t * step;
        const double f1 = energy_at(x1, eps);
        if (f1 <= f0 + 1e-4 * t * slope) {
          scatter(x1);
          moved = true;
          break;
        }
        // Near the minimum the predicted decrease drops below the rounding
        // of f; fall back to the gradient norm there.
        if (std::abs(f1 - f0) <= 1e-14 * std::abs(f0)) {
          scatter(x1);
          Eigen::VectorXd g1;
          Eigen::MatrixXd h1;
          derivatives(eps, g1, h1);
          if (g1.norm() < g.norm()) {
            moved = true;
            break;
          }
          scatter(x0);
        }
      }
      ++steps_;
      if (!moved || t * step.norm() <= 1e-15 * scale_) return;
    }
  }

  void continuation(double from) {
    for (double rel = from; rel >= 1e-12 * 0.999; rel *= 1e-2) newton(rel * scale_, 100);
    newton(1e-12 * scale_, 100);
  }

  // Tries to merge the endpoints of short edges, shortest first.
  void merge_pass() {
    const double merge_len = 1e-6 * scale_;
    std::vector<std::size_t> rejected;
    while (true) {
      std::size_t cand = npos;
      double best = merge_len;
      for (std::size_t e = 0; e < weight_.size(); ++e) {
        if (!active(e) || std::find(rejected.begin(), rejected.end(), e) != rejected.end()) continue;
        const auto [a, b] = topo_.edges[e];
        if (pinned(label_[a]) && pinned(label_[b])) continue;
        const double len = distance(where(a), where(b));
        if (len < best) {
          best = len;
          cand = e;
        }
      }
      if (cand == npos) return;
      const auto saved_pos = pos_;
      const auto saved_label = label_;
      const double before = energy(0.0);
      const auto [a, b] = topo_.edges[cand];
      std::size_t keep = label_[a], drop = label_[b];
      if (pinned(drop) || (!pinned(keep) && drop < keep)) std::swap(keep, drop);
      if (!pinned(keep)) pos_[keep] = lerp(pos_[keep], pos_[drop], 0.5);
      for (std::size_t v = 0; v < nodes_; ++v)
        if (label_[v] == drop) label_[v] = keep;
      continuation(1e-6);
      if (energy(0.0) <= before + 1e-13 * total_weight_ * scale_) {
        rejected.clear();
      } else {
        pos_ = saved_pos;
        label_ = saved_label;
        rejected.push_back(cand);
      }
    }
  }

  // Relative gradient norm over free clusters and the worst split excess.
  std::pair<double, Split> stationarity() {
    index_free();
    // Pull exerted on every node by its active edges.
    std::vector<Point> pull(nodes_, Point(dim_));
    for (std::size_t e = 0; e < weight_.size(); ++e) {
      if (!active(e)) continue;
      const auto [a, b] = topo_.edges[e];
      const Point d = where(b) - where(a);
      const double len = d.norm();
      if (len == 0.0) continue;
      pull[a] += d * (weight_[e] / len);
      pull[b] -= d * (weight_[e] / len);
    }
    double grad2 = 0.0;
    for (std::size_t lbl : free_) {
      Point s(dim_);
      for (std::size_t v = 0; v < nodes_; ++v)
        if (label_[v] == lbl) s += pull[v];
      grad2 += s.norm_squared();
    }
    Split worst;
    std::vector<bool> seen(nodes_, false);
    for (std::size_t root = 0; root < nodes_; ++root) {
      // Each cluster is visited once, from its label node (a terminal when
      // pinned).
      if (label_[root] != root || seen[root]) continue;
      std::vector<std::size_t> order{root}, parent(nodes_, npos), via(nodes_, npos);
      seen[root] = true;
      for (std::size_t i = 0; i < order.size(); ++i) {
        const std::size_t v = order[i];
        for (std::size_t e = 0; e < topo_.edges.size(); ++e) {
          const auto [a, b] = topo_.edges[e];
          if (a != v && b != v) continue;
          const std::size_t w = a == v ? b : a;
          if (label_[w] != label_[root] || seen[w] || weight_[e] == 0.0) continue;
          seen[w] = true;
          parent[w] = v;
          via[w] = e;
          order.push_back(w);
        }
      }
      std::vector<Point> subtree(nodes_, Point(dim_));
      for (std::size_t i = order.size(); i-- > 1;) {
        const std::size_t v = order[i];
        subtree[v] += pull[v];
        subtree[parent[v]] += subtree[v];
        const double excess = (subtree[v].norm() - weight_[via[v]]) / total_weight_;
        if (excess > worst.excess) worst = {excess, via[v], v, subtree[v]};
      }
    }
    return {std::sqrt(grad2) / total_weight_, worst};
  }

  void apply_split(const Split& s) {
    // Detach the subtree of s.child (within its cluster) as a new free
    // cluster nudged along its resultant pull.
    const std::size_t old = label_[s.child];
    const std::size_t parent_side = topo_.edges[s.edge].first == s.child ? topo_.edges[s.edge].second
                                                                         : topo_.edges[s.edge].first;
    std::vector<std::size_t> stack{s.child};
    std::vector<bool> seen(nodes_, false);
    seen[s.child] = true;
    seen[parent_side] = true;
    std::vector<std::size_t> members;
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      members.push_back(v);
      for (const auto& [a, b] : topo_.edges) {
        if (a != v && b != v) continue;
        const std::size_t w = a == v ? b : a;
        if (seen[w] || label_[w] != old) continue;
        seen[w] = true;
        stack.push_back(w);
      }
    }
    // New label: smallest Steiner index among members (members never hold a
    // terminal, which stays on the parent side as the cluster root).
    std::size_t fresh = npos;
    for (std::size_t v : members)
      if (v >= topo_.terminals) fresh = std::min(fresh, v);
    if (fresh == npos) return;
    const Point base = pos_[old];
    if (old == fresh || std::find(members.begin(), members.end(), old) != members.end()) {
      // The old label node moved with the subtree; relabel the parent side.
      std::size_t other = npos;
      for (std::size_t v = 0; v < nodes_; ++v)
        if (label_[v] == old && std::find(members.begin(), members.end(), v) == members.end())
          other = std::min(other, v);
      for (std::size_t v = 0; v < nodes_; ++v)
        if (label_[v] == old && std::find(members.begin(), members.end(), v) == members.end()) label_[v] = other;
      pos_[other] = base;
    }
    for (std::size_t v : members) label_[v] = fresh;
    const double n = s.direction.norm();
    pos_[fresh] = n > 0.0 ? base + s.direction * (1e-6 * scale_ / n) : base;
  }

  OptimizedTree finish(double stat) {
    OptimizedTree out;
    out.stationarity = stat;
    out.newton_steps = steps_;
    out.node_positions.resize(nodes_);
    for (std::size_t v = 0; v < nodes_; ++v) out.node_positions[v] = where(v);
    BranchedGraph& g = out.graph;
    g.box = box_;
    std::vector<std::size_t> vid(nodes_, npos);
    for (std::size_t t = 0; t < topo_.terminals; ++t) {
      vid[t] = g.vertices.size();
      g.vertices.push_back({terms_[t].x, terms_[t].supply, true});
    }
    for (std::size_t v = topo_.terminals; v < nodes_; ++v) {
      const std::size_t lbl = label_[v];
      if (pinned(lbl)) {
        vid[v] = vid[lbl];
      } else if (lbl == v) {
        vid[v] = g.vertices.size();
        g.vertices.push_back({pos_[v], 0.0, false});
      }
    }
    for (std::size_t v = topo_.terminals; v < nodes_; ++v) vid[v] = vid[label_[v]];
    for (std::size_t e = 0; e < fluxes_.size(); ++e) {
      if (!active(e)) continue;
      g.edges.push_back({vid[fluxes_[e].tail], vid[fluxes_[e].head], fluxes_[e].flux});
    }
    // Drop free vertices left without edges (only zero-flux edges touched them).
    std::vector<bool> used(g.vertices.size(), false);
    for (const GraphEdge& e : g.edges) used[e.tail] = used[e.head] = true;
    std::vector<std::size_t> remap(g.vertices.size(), npos);
    std::vector<GraphVertex> kept;
    for (std::size_t v = 0; v < g.vertices.size(); ++v)
      if (used[v] || g.vertices[v].terminal) {
        remap[v] = kept.size();
        kept.push_back(g.vertices[v]);
      }
    for (GraphEdge& e : g.edges) {
      e.tail = remap[e.tail];
      e.head = remap[e.head];
    }
    g.vertices = std::move(kept);
    out.energy = 0.0;
    for (const GraphEdge& e : g.edges) out.energy += std::pow(e.flux, alpha_) * g.edge_length(e);
    return out;
  }

  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  SteinerTopology topo_;
  std::vector<BranchTerminal> terms_;
  double alpha_, tol_;
  DomainBox box_;
  std::size_t dim_;
  std::vector<EdgeFlux> fluxes_;
  std::vector<double> weight_;
  double total_weight_ = 0.0;
  double scale_ = 1.0;
  std::size_t nodes_ = 0;
  std::vector<std::size_t> label_;
  std::vector<Point> pos_;
  std::vector<std::size_t> free_, var_of_;
  std::size_t steps_ = 0;
};

}  // namespace detail

inline constexpr double kDefaultBranchTolerance = 1e-10;

/// Steiner coordinates minimizing the Gilbert energy of a fixed topology.
/// tol bounds the minimal-subgradient norm relative to sum_e flux_e^alpha.
/// Throws BranchConvergenceError (carrying the best iterate) when the
/// iteration cap is reached first.
inline OptimizedTree optimize_branch_points(const SteinerTopology& topo,
                                            const std::vector<BranchTerminal>& terminals, double alpha,
                                            const DomainBox& box, double tol = kDefaultBranchTolerance) {
  return detail::BranchPointOptimizer(topo, terminals, alpha, tol, box).run();
}

}  // namespace branched
