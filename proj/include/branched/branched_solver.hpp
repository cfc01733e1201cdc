#pragma once

// Branched distance between atomic measures, dyadic upper bounds and the
// Wasserstein sandwich.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include "branched/branch_points.hpp"
#include "branched/branched_graph.hpp"
#include "branched/errors.hpp"
#include "branched/exact_ot.hpp"
#include "branched/geometry.hpp"
#include "branched/steiner_topology.hpp"

namespace branched {

enum class DalphaMode { enumerate, heuristic };

inline constexpr std::size_t kEnumerationCap = 6;

struct DalphaResult {
  double value = 0.0;
  BranchedGraph graph;
  /// True for enumerate mode with every topology converged.
  bool exact = false;
  /// Index into enumerate_full_topologies(n); npos in heuristic mode.
  std::size_t topology_id = std::numeric_limits<std::size_t>::max();
  std::size_t topologies_tried = 0;
  /// Topologies whose optimizer stopped at its cap (their best iterate was used).
  std::size_t unconverged = 0;
};

namespace detail {

inline void check_alpha_half_open(double alpha, const char* who) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw PreconditionError(std::string(who) + ": alpha must lie in (0,1]");
}

// Net supplies mu0 - mu1 at the union of the supports. Positions of mu0 and
// mu1 closer than the merge radius are one terminal. Terminals whose net
// supply cancels are dropped unless keep_zero is set.
inline std::vector<BranchTerminal> net_terminals(const AtomicMeasure& mu0, const AtomicMeasure& mu1,
                                                 bool keep_zero = false) {
  const double r = mu0.box().merge_radius();
  std::vector<BranchTerminal> out;
  auto add = [&](const Point& x, double s) {
    for (BranchTerminal& t : out)
      if (distance(t.x, x) <= r) {
        t.supply += s;
        return;
      }
    out.push_back({x, s});
  };
  for (const Atom& a : mu0.atoms()) add(a.x, a.mass);
  for (const Atom& a : mu1.atoms()) add(a.x, -a.mass);
  if (!keep_zero) {
    const double cut = 1e-14 * (mu0.total_mass() + mu1.total_mass());
    std::erase_if(out, [&](const BranchTerminal& t) { return std::abs(t.supply) <= cut; });
  }
  return out;
}

inline void check_same_box(const AtomicMeasure& mu0, const AtomicMeasure& mu1, const char* who) {
  if (mu0.dim() != mu1.dim()) throw PreconditionError(std::string(who) + ": measures live in different dimensions");
}

inline double tree_scale(const std::vector<BranchTerminal>& t) {
  double s = 0.0;
  for (const auto& a : t)
    for (const auto& b : t) s = std::max(s, distance(a.x, b.x));
  return s;
}

// Optimizes one topology; a capped optimizer contributes its best iterate.
inline OptimizedTree optimize_or_best(const SteinerTopology& topo, const std::vector<BranchTerminal>& terms,
                                      double alpha, const DomainBox& box, std::size_t& unconverged) {
  try {
    return optimize_branch_points(topo, terms, alpha, box);
  } catch (const BranchConvergenceError& e) {
    ++unconverged;
    return e.best();
  }
}

// Agglomerative start: repeatedly join the two clusters whose supply-weighted
// centers are closest, until three remain; they meet at a last Steiner point.
inline SteinerTopology greedy_topology(const std::vector<BranchTerminal>& terms) {
  const std::size_t n = terms.size();
  SteinerTopology topo{n, n - 2, {}};
  struct Cluster {
    std::size_t node;
    Point center;
    double weight;
  };
  std::vector<Cluster> live;
  for (std::size_t i = 0; i < n; ++i) live.push_back({i, terms[i].x, std::abs(terms[i].supply)});
  std::size_t next = n;
  while (live.size() > 3) {
    std::size_t bi = 0, bj = 1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < live.size(); ++i)
      for (std::size_t j = i + 1; j < live.size(); ++j) {
        const double d = distance(live[i].center, live[j].center);
        if (d < best) {
          best = d;
          bi = i;
          bj = j;
        }
      }
    const std::size_t s = next++;
    topo.edges.push_back({live[bi].node, s});
    topo.edges.push_back({live[bj].node, s});
    const double w = live[bi].weight + live[bj].weight;
    const Point c = w > 0.0 ? (live[bi].center * live[bi].weight + live[bj].center * live[bj].weight) * (1.0 / w)
                            : lerp(live[bi].center, live[bj].center, 0.5);
    live[bi] = {s, c, w};
    live.erase(live.begin() + static_cast<std::ptrdiff_t>(bj));
  }
  const std::size_t s = next++;
  for (const Cluster& c : live) topo.edges.push_back({c.node, s});
  return topo;
}

// The two nearest-neighbor interchanges across internal edge e.
inline std::vector<SteinerTopology> nni_neighbors(const SteinerTopology& topo, std::size_t e) {
  const auto [u, v] = topo.edges[e];
  if (u < topo.terminals || v < topo.terminals) return {};
  std::vector<std::size_t> eu, ev;  // edge indices at u (resp. v) other than e
  for (std::size_t f = 0; f < topo.edges.size(); ++f) {
    if (f == e) continue;
    const auto [a, b] = topo.edges[f];
    if (a == u || b == u) eu.push_back(f);
    if (a == v || b == v) ev.push_back(f);
  }
  std::vector<SteinerTopology> out;
  for (std::size_t k = 0; k < ev.size(); ++k) {
    SteinerTopology t = topo;
    // Swap the subtree behind eu[1] with the one behind ev[k].
    auto& fu = t.edges[eu[1]];
    auto& fv = t.edges[ev[k]];
    const std::size_t su = fu.first == u ? fu.second : fu.first;
    const std::size_t sv = fv.first == v ? fv.second : fv.first;
    fu = {su, v};
    fv = {sv, u};
    out.push_back(std::move(t));
  }
  return out;
}

// Graph along the support of an optimal W_{1/alpha} vertex plan: every plan
// entry becomes a straight edge.
inline BranchedGraph plan_graph(const AtomicMeasure& mu0, const AtomicMeasure& mu1, double alpha) {
  const std::vector<BranchTerminal> all = net_terminals(mu0, mu1, true);
  const OtSolution sol = solve_kantorovich(mu0, mu1, 1.0 / alpha);
  BranchedGraph g{mu0.box(), {}, {}};
  for (const BranchTerminal& t : all) g.vertices.push_back({t.x, t.supply, true});
  const double r = mu0.box().merge_radius();
  auto vertex_of = [&](const Point& x) {
    for (std::size_t v = 0; v < g.vertices.size(); ++v)
      if (distance(g.vertices[v].x, x) <= r) return v;
    throw PreconditionError("plan_graph: atom without terminal");
  };
  std::map<std::pair<std::size_t, std::size_t>, double> flux;
  for (const PlanEntry& e : sol.plan.entries) {
    const std::size_t a = vertex_of(mu0[e.i].x), b = vertex_of(mu1[e.k].x);
    if (a != b) flux[{a, b}] += e.mass;
  }
  for (const auto& [ab, f] : flux) g.edges.push_back({ab.first, ab.second, f});
  return g;
}

inline double graph_energy_unchecked(const BranchedGraph& g, double alpha) {
  double e = 0.0;
  for (const GraphEdge& edge : g.edges) e += std::pow(edge.flux, alpha) * g.edge_length(edge);
  return e;
}

}  // namespace detail

/// d_alpha(mu0, mu1). Enumerate mode minimizes over every full Steiner
/// topology on the net terminals (at most kEnumerationCap of them);
/// degenerate trees appear through collapses found by the optimizer.
/// Heuristic mode returns an upper bound: an agglomerative topology improved
/// by nearest-neighbor interchanges, or the straight-edge graph of the
/// W_{1/alpha} plan if that is cheaper.
inline DalphaResult compute_dalpha(const AtomicMeasure& mu0, const AtomicMeasure& mu1, double alpha,
                                   DalphaMode mode = DalphaMode::enumerate) {
  detail::check_alpha_half_open(alpha, "compute_dalpha");
  detail::check_same_box(mu0, mu1, "compute_dalpha");
  detail::check_balanced(mu0.total_mass(), mu1.total_mass(), "compute_dalpha");
  const DomainBox& box = mu0.box();
  const std::vector<BranchTerminal> terms = detail::net_terminals(mu0, mu1);
  const std::size_t n = terms.size();

  DalphaResult res;
  res.graph.box = box;
  if (mode == DalphaMode::enumerate && n > kEnumerationCap) {
    throw SizeError("compute_dalpha: " + std::to_string(n) + " terminals exceed the enumeration cap of " +
                    std::to_string(kEnumerationCap) + "; use heuristic mode");
  }
  if (n < 2) {
    for (const BranchTerminal& t : terms) res.graph.vertices.push_back({t.x, t.supply, true});
    res.exact = mode == DalphaMode::enumerate;
    return res;
  }

  if (mode == DalphaMode::enumerate) {
    const std::vector<SteinerTopology> topos = enumerate_full_topologies(n);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t id = 0; id < topos.size(); ++id) {
      OptimizedTree t = detail::optimize_or_best(topos[id], terms, alpha, box, res.unconverged);
      if (t.energy < best) {
        best = t.energy;
        res.graph = std::move(t.graph);
        res.topology_id = id;
      }
    }
    res.topologies_tried = topos.size();
    res.value = best;
    res.exact = res.unconverged == 0;
    return res;
  }

  // Heuristic.
  const double scale = detail::tree_scale(terms);
  SteinerTopology topo = n == 2 ? SteinerTopology{2, 0, {{0, 1}}} : detail::greedy_topology(terms);
  OptimizedTree best = detail::optimize_or_best(topo, terms, alpha, box, res.unconverged);
  res.topologies_tried = 1;
  for (int pass = 0; pass < 50 && n > 3; ++pass) {
    bool improved = false;
    for (std::size_t e = 0; e < topo.edges.size() && !improved; ++e) {
      for (SteinerTopology& cand : detail::nni_neighbors(topo, e)) {
        OptimizedTree t = detail::optimize_or_best(cand, terms, alpha, box, res.unconverged);
        ++res.topologies_tried;
        if (t.energy < best.energy - 1e-12 * scale) {
          best = std::move(t);
          topo = std::move(cand);
          improved = true;
          break;
        }
      }
    }
    if (!improved) break;
  }
  res.value = best.energy;
  res.graph = std::move(best.graph);
  BranchedGraph straight = detail::plan_graph(mu0, mu1, alpha);
  const double straight_energy = detail::graph_energy_unchecked(straight, alpha);
  if (straight_energy < res.value) {
    res.value = straight_energy;
    res.graph = std::move(straight);
  }
  res.exact = false;
  return res;
}

/// W_{1/alpha}(mu0, mu1), a lower bound for d_alpha.
inline double dalpha_lower_bound(const AtomicMeasure& mu0, const AtomicMeasure& mu1, double alpha) {
  detail::check_alpha_half_open(alpha, "dalpha_lower_bound");
  return wasserstein(mu0, mu1, 1.0 / alpha);
}

// ---------------------------------------------------------------------------
// Dyadic bounds

namespace detail {

inline void check_threshold(std::size_t d, double alpha, const char* who) {
  check_alpha_half_open(alpha, who);
  if (!(alpha > 1.0 - 1.0 / static_cast<double>(d)))
    throw ThresholdError(std::string(who) + ": alpha must exceed 1 - 1/d = " +
                         std::to_string(1.0 - 1.0 / static_cast<double>(d)));
}

// Cost of the hierarchy below `cell` carrying the atoms idx (all inside the
// cell) from the cell center down to their positions. A lone atom follows the
// chain of centers of the nested cells containing it until it sits on one.
inline double atomic_hierarchy(const AtomicMeasure& mu, const std::vector<std::size_t>& idx,
                               const DyadicIndex& cell, double alpha) {
  const Point c = cell_center(mu.box(), cell);
  if (cell.level >= 62) {
    double s = 0.0;
    for (std::size_t i : idx) s += std::pow(mu[i].mass, alpha) * distance(c, mu[i].x);
    return s;
  }
  if (idx.size() == 1) {
    const Atom& a = mu[idx.front()];
    const double r = mu.box().merge_radius();
    DyadicIndex at = cell;
    Point here = c;
    double len = 0.0;
    while (distance(here, a.x) > r && at.level < 62) {
      at = cell_of(mu.box(), a.x, at.level + 1);
      const Point below = cell_center(mu.box(), at);
      len += distance(here, below);
      here = below;
    }
    return std::pow(a.mass, alpha) * (len + distance(here, a.x));
  }
  std::map<DyadicIndex, std::vector<std::size_t>> children;
  for (std::size_t i : idx) children[cell_of(mu.box(), mu[i].x, cell.level + 1)].push_back(i);
  double s = 0.0;
  for (const auto& [child, members] : children) {
    double m = 0.0;
    for (std::size_t i : members) m += mu[i].mass;
    s += std::pow(m, alpha) * distance(c, cell_center(mu.box(), child)) + atomic_hierarchy(mu, members, child, alpha);
  }
  return s;
}

// Sum over the nonempty cells of level l+1 of (mass)^alpha, times the
// parent-to-child center distance L sqrt(d) / 2^(l+2).
inline double cell_level_cost(const CellWeights& w, int l, double alpha) {
  double s = 0.0;
  for_each_cell(w.box.dim, l + 1, [&](const DyadicIndex& idx) {
    const double m = w.mass(idx);
    if (m > 0.0) s += std::pow(m, alpha);
  });
  return s * w.box.diameter() / std::exp2(l + 2);
}

// Cells enumerated per level are capped at 2^18; deeper levels use the
// concavity bound sum m^alpha <= N^(1-alpha) M^alpha with N = 2^((l+1)d).
inline constexpr std::size_t kCellBudgetLog2 = 18;

}  // namespace detail

/// 2^((d(1-alpha)-1) j) / (2^(1-d(1-alpha)) - 1) * L sqrt(d) / 2, the bound on
/// d_alpha(mu, a_j(mu)) for a probability measure mu.
inline double dyadic_rhs_bound(std::size_t d, double alpha, double L, int j) {
  if (d == 0 || !(L > 0.0) || j < 0) throw PreconditionError("dyadic_rhs_bound: need d >= 1, L > 0, j >= 0");
  detail::check_threshold(d, alpha, "dyadic_rhs_bound");
  const double c = static_cast<double>(d) * (1.0 - alpha) - 1.0;
  return std::exp2(c * j) / (std::exp2(-c) - 1.0) * L * std::sqrt(static_cast<double>(d)) / 2.0;
}

/// Cost of the explicit hierarchical graph carrying a_j(mu) to mu: every
/// level-l cell center feeds the centers of its nonempty children, down to
/// the atoms themselves.
inline double dyadic_upper_bound(const AtomicMeasure& mu, int j, double alpha) {
  if (j < 0 || j > 62) throw PreconditionError("dyadic_upper_bound: level out of range");
  detail::check_threshold(mu.dim(), alpha, "dyadic_upper_bound");
  std::map<DyadicIndex, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < mu.size(); ++i) cells[cell_of(mu.box(), mu[i].x, j)].push_back(i);
  double s = 0.0;
  for (const auto& [cell, members] : cells) s += detail::atomic_hierarchy(mu, members, cell, alpha);
  return s;
}

/// Same hierarchy for a diffuse measure given by exact cell weights. Levels
/// beyond the enumeration budget are bounded by concavity; for the Lebesgue
/// measure that bound is attained, so the result is exact there.
inline double dyadic_upper_bound(const CellWeights& w, int j, double alpha) {
  if (j < 0) throw PreconditionError("dyadic_upper_bound: negative level");
  w.box.validate();
  const std::size_t d = w.box.dim;
  detail::check_threshold(d, alpha, "dyadic_upper_bound");
  const int last = static_cast<int>(detail::kCellBudgetLog2 / d);  // deepest enumerated child level
  double s = 0.0;
  int l = j;
  for (; l + 1 <= last; ++l) s += detail::cell_level_cost(w, l, alpha);
  // Tail over levels l, l+1, ...: M^alpha (L sqrt d / 4) 2^(d(1-alpha)) sum_k 2^(k c).
  const double c = static_cast<double>(d) * (1.0 - alpha) - 1.0;
  const double m = w.total_mass();
  s += std::pow(m, alpha) * w.box.diameter() / 4.0 * std::exp2(static_cast<double>(d) * (1.0 - alpha)) *
       std::exp2(c * l) / (1.0 - std::exp2(c));
  return s;
}

/// Cost of the hierarchy from a_0(mu) to a_j(mu) (levels 0..j-1). Finite for
/// every alpha in (0,1]; used to probe growth below the 1 - 1/d threshold.
inline double dyadic_probe_cost(const CellWeights& w, int j, double alpha) {
  if (j < 0) throw PreconditionError("dyadic_probe_cost: negative level");
  if (static_cast<std::size_t>(j) * w.box.dim > 26) throw PreconditionError("dyadic_probe_cost: level too deep");
  detail::check_alpha_half_open(alpha, "dyadic_probe_cost");
  double s = 0.0;
  for (int l = 0; l < j; ++l) s += detail::cell_level_cost(w, l, alpha);
  return s;
}

inline double dyadic_probe_cost(const AtomicMeasure& mu, int j, double alpha) {
  if (j < 0 || j > 62) throw PreconditionError("dyadic_probe_cost: level out of range");
  detail::check_alpha_half_open(alpha, "dyadic_probe_cost");
  double total = 0.0;
  for (int l = 0; l < j; ++l) {
    std::map<DyadicIndex, double> cells;
    for (const Atom& a : mu.atoms()) cells[cell_of(mu.box(), a.x, l + 1)] += a.mass;
    double level = 0.0;
    for (const auto& [idx, m] : cells) level += std::pow(m, alpha);
    total += level * mu.box().diameter() / std::exp2(l + 2);
  }
  return total;
}

/// Least-squares slope of log2(y) against x.
inline double log2_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw PreconditionError("log2_slope: need two or more points");
  const double n = static_cast<double>(x.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(y[i] > 0.0)) throw PreconditionError("log2_slope: values must be positive");
    const double ly = std::log2(y[i]);
    sx += x[i];
    sy += ly;
    sxx += x[i] * x[i];
    sxy += x[i] * ly;
  }
  const double den = n * sxx - sx * sx;
  if (den == 0.0) throw PreconditionError("log2_slope: x values are all equal");
  return (n * sxy - sx * sy) / den;
}

// ---------------------------------------------------------------------------
// Sandwich

/// One level of the three-leg route mu0 -> a_j(mu0) -> a_j(mu1) -> mu1.
struct DyadicRecord {
  int j = 0;
  /// Hierarchical cost of both outer legs.
  double hierarchical = 0.0;
  /// dyadic_rhs_bound times M^alpha, for both legs together.
  double rhs = 0.0;
  /// Straight-edge cost sum M(i,k)^alpha l_ik of the W_{1/alpha} plan between
  /// the two approximations.
  double middle = 0.0;
  /// W_{1/alpha}(a_j mu0, a_j mu1) * support^(1-alpha), which bounds middle.
  double middle_bound = 0.0;
  std::size_t middle_support = 0;
  /// hierarchical + middle: an upper bound for d_alpha.
  double route = 0.0;
};

struct BoundRecord {
  double w_lower = 0.0;       // W_{1/alpha}
  double dalpha_upper = 0.0;  // compute_dalpha value
  bool upper_exact = false;
  double w_p = 0.0;
  double exponent = 0.0;  // d(alpha-1)+1
  double ratio = 0.0;     // dalpha_upper / w_p^exponent
  /// Level with diam/2^j <= W_{1/alpha} <= diam/2^(j-1).
  int j_star = 0;
};

struct BoundReport {
  double alpha = 0.0;
  double p = 0.0;
  std::size_t dim = 0;
  int j_min = 0;
  int j_max = 0;
  BoundRecord record;
  std::vector<DyadicRecord> dyadic;
};

inline DyadicRecord dyadic_route(const AtomicMeasure& mu0, const AtomicMeasure& mu1, double alpha, int j) {
  DyadicRecord r;
  r.j = j;
  r.hierarchical = dyadic_upper_bound(mu0, j, alpha) + dyadic_upper_bound(mu1, j, alpha);
  const DomainBox& box = mu0.box();
  r.rhs = std::pow(mu0.total_mass(), alpha) * dyadic_rhs_bound(box.dim, alpha, box.edge, j) +
          std::pow(mu1.total_mass(), alpha) * dyadic_rhs_bound(box.dim, alpha, box.edge, j);
  const AtomicMeasure a0 = dyadic_approximation(mu0, j), a1 = dyadic_approximation(mu1, j);
  const OtSolution sol = solve_kantorovich(a0, a1, 1.0 / alpha);
  for (const PlanEntry& e : sol.plan.entries) r.middle += std::pow(e.mass, alpha) * sol.plan.distance(e);
  r.middle_support = sol.plan.entries.size();
  r.middle_bound = std::pow(sol.cost, alpha) * std::pow(static_cast<double>(r.middle_support), 1.0 - alpha);
  r.route = r.hierarchical + r.middle;
  return r;
}

/// Lower bound, upper bound, ratio to W_p^(d(alpha-1)+1) and the dyadic
/// routes for j in [j_min, j_max]. Throws PropertyError if the lower bound
/// exceeds the upper one.
inline BoundReport sandwich_report(const AtomicMeasure& mu0, const AtomicMeasure& mu1, double alpha, double p,
                                   int j_min = 0, int j_max = 6) {
  detail::check_same_box(mu0, mu1, "sandwich_report");
  const std::size_t d = mu0.dim();
  detail::check_threshold(d, alpha, "sandwich_report");
  if (!(p >= 1.0 / alpha - 1e-12)) throw PreconditionError("sandwich_report: p must be >= 1/alpha");
  if (j_min < 0 || j_max < j_min) throw PreconditionError("sandwich_report: bad j range");
  BoundReport rep{alpha, p, d, j_min, j_max, {}, {}};
  BoundRecord& r = rep.record;
  r.w_lower = dalpha_lower_bound(mu0, mu1, alpha);
  const std::size_t n = detail::net_terminals(mu0, mu1).size();
  const DalphaResult up =
      compute_dalpha(mu0, mu1, alpha, n <= kEnumerationCap ? DalphaMode::enumerate : DalphaMode::heuristic);
  r.dalpha_upper = up.value;
  r.upper_exact = up.exact;
  r.w_p = wasserstein(mu0, mu1, p);
  r.exponent = static_cast<double>(d) * (alpha - 1.0) + 1.0;
  r.ratio = r.dalpha_upper == 0.0 ? 0.0 : r.dalpha_upper / std::pow(r.w_p, r.exponent);
  r.j_star = r.w_lower > 0.0
                 ? std::max(0, static_cast<int>(std::ceil(std::log2(mu0.box().diameter() / r.w_lower))))
                 : 0;
  const double slack = 1e-9 * std::max(1.0, r.dalpha_upper);
  if (r.w_lower > r.dalpha_upper + slack)
    throw PropertyError("sandwich_report: W_{1/alpha} = " + std::to_string(r.w_lower) +
                        " exceeds the d_alpha upper bound " + std::to_string(r.dalpha_upper));
  for (int j = j_min; j <= j_max; ++j) rep.dyadic.push_back(dyadic_route(mu0, mu1, alpha, j));
  return rep;
}

}  // namespace branched
