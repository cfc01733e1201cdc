#pragma once

// Exact Kantorovich transport between atomic measures for c(x,y) = |x-y|^p.
//
// The solver is the transportation simplex: a basic solution is a spanning
// tree of the bipartite graph rows x columns (n + m - 1 basic cells), node
// potentials are read off the tree, and a nonbasic cell with negative
// reduced cost enters by pushing flow around the unique tree cycle it closes.
// Optimal solutions are therefore always vertices of the transport polytope
// and their support is acyclic.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <vector>

#include "branched/errors.hpp"
#include "branched/geometry.hpp"

namespace branched {

struct PlanEntry {
  std::size_t i = 0;  // source atom
  std::size_t k = 0;  // target atom
  double mass = 0.0;
};

/// Sparse coupling between two atomic measures.
struct TransportPlan {
  std::vector<Atom> source;
  std::vector<Atom> target;
  std::vector<PlanEntry> entries;

  /// Largest deviation of a row or column sum from its marginal.
  double marginal_defect() const {
    std::vector<double> row(source.size(), 0.0), col(target.size(), 0.0);
    for (const PlanEntry& e : entries) {
      row[e.i] += e.mass;
      col[e.k] += e.mass;
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < source.size(); ++i)
      worst = std::max(worst, std::abs(row[i] - source[i].mass));
    for (std::size_t k = 0; k < target.size(); ++k)
      worst = std::max(worst, std::abs(col[k] - target[k].mass));
    return worst;
  }

  double distance(const PlanEntry& e) const { return branched::distance(source[e.i].x, target[e.k].x); }

  double cost(double p) const {
    double c = 0.0;
    for (const PlanEntry& e : entries) c += e.mass * std::pow(distance(e), p);
    return c;
  }
};

struct OtSolution {
  TransportPlan plan;
  double cost = 0.0;
  double p = 1.0;
  bool is_vertex = false;
};

namespace detail {

class TransportSimplex {
 public:
  TransportSimplex(std::span<const Atom> src, std::span<const Atom> dst, double p)
      : n_(src.size()), m_(dst.size()), cost_(n_ * m_), supply_(n_), demand_(m_) {
    double max_cost = 0.0;
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t k = 0; k < m_; ++k) {
        const double c = std::pow(branched::distance(src[i].x, dst[k].x), p);
        cost_[i * m_ + k] = c;
        max_cost = std::max(max_cost, c);
      }
    rc_tol_ = 1e-13 * (1.0 + max_cost);
    double total_src = 0.0, total_dst = 0.0;
    for (std::size_t i = 0; i < n_; ++i) total_src += (supply_[i] = src[i].mass);
    for (std::size_t k = 0; k < m_; ++k) total_dst += (demand_[k] = dst[k].mass);
    // Masses agree within tolerance (checked by the caller); rescale the
    // targets so the basis stays exactly feasible.
    for (double& b : demand_) b *= total_src / total_dst;
    flow_tol_ = 1e-15 * total_src;
  }

  std::vector<PlanEntry> solve() {
    initial_basis();
    basic_.assign(n_ * m_, false);
    for (const Cell& c : cells_) basic_[c.i * m_ + c.k] = true;
    std::size_t stall = 0;
    const std::size_t bland_after = 4 * (n_ + m_) + 16;
    const std::size_t cap = 200 * (n_ + m_) * (n_ + m_) + 10000;
    for (std::size_t iter = 0;; ++iter) {
      if (iter > cap) throw Error("solve_kantorovich: simplex iteration cap exceeded");
      compute_potentials();
      const bool bland = stall > bland_after;
      std::size_t enter = npos;
      double best = -rc_tol_;
      for (std::size_t idx = 0; idx < n_ * m_; ++idx) {
        if (basic_[idx]) continue;
        const double r = cost_[idx] - u_[idx / m_] - v_[idx % m_];
        if (r < best) {
          best = r;
          enter = idx;
          if (bland) break;
        }
      }
      if (enter == npos) break;
      const bool degenerate = pivot(enter / m_, enter % m_);
      stall = degenerate ? stall + 1 : 0;
    }
    std::vector<PlanEntry> out;
    for (const Cell& c : cells_)
      if (c.flow > flow_tol_ * 10.0) out.push_back({c.i, c.k, c.flow});
    std::sort(out.begin(), out.end(), [](const PlanEntry& a, const PlanEntry& b) {
      return a.i != b.i ? a.i < b.i : a.k < b.k;
    });
    return out;
  }

 private:
  struct Cell {
    std::size_t i, k;
    double flow;
  };
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  // North-west corner rule; on simultaneous exhaustion only the row advances
  // and the next cell enters with zero flow, so the basis has n + m - 1 cells.
  void initial_basis() {
    std::vector<double> ra = supply_, rb = demand_;
    std::size_t i = 0, k = 0;
    while (true) {
      const double x = std::max(0.0, std::min(ra[i], rb[k]));
      cells_.push_back({i, k, x});
      ra[i] -= x;
      rb[k] -= x;
      if (i + 1 == n_ && k + 1 == m_) break;
      if (k + 1 == m_ || (i + 1 < n_ && ra[i] <= rb[k])) {
        ++i;
      } else {
        ++k;
      }
    }
  }

  // Tree adjacency: node r < n is a row, node n + k is a column.
  std::vector<std::vector<std::size_t>> adjacency() const {
    std::vector<std::vector<std::size_t>> adj(n_ + m_);
    for (std::size_t c = 0; c < cells_.size(); ++c) {
      adj[cells_[c].i].push_back(c);
      adj[n_ + cells_[c].k].push_back(c);
    }
    return adj;
  }

  std::size_t other_end(std::size_t cell, std::size_t node) const {
    return node < n_ ? n_ + cells_[cell].k : cells_[cell].i;
  }

  void compute_potentials() {
    u_.assign(n_, 0.0);
    v_.assign(m_, 0.0);
    const auto adj = adjacency();
    std::vector<bool> seen(n_ + m_, false);
    std::vector<std::size_t> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
      const std::size_t node = stack.back();
      stack.pop_back();
      for (std::size_t c : adj[node]) {
        const std::size_t nb = other_end(c, node);
        if (seen[nb]) continue;
        seen[nb] = true;
        const double cst = cost_[cells_[c].i * m_ + cells_[c].k];
        if (nb < n_) {
          u_[nb] = cst - v_[cells_[c].k];
        } else {
          v_[nb - n_] = cst - u_[cells_[c].i];
        }
        stack.push_back(nb);
      }
    }
  }

  // Returns true for a degenerate (zero-step) pivot.
  bool pivot(std::size_t ei, std::size_t ek) {
    const auto adj = adjacency();
    // Tree path from column ek back to row ei.
    std::vector<std::size_t> via(n_ + m_, npos);
    std::vector<bool> seen(n_ + m_, false);
    std::vector<std::size_t> stack{n_ + ek};
    seen[n_ + ek] = true;
    while (!stack.empty()) {
      const std::size_t node = stack.back();
      stack.pop_back();
      if (node == ei) break;
      for (std::size_t c : adj[node]) {
        const std::size_t nb = other_end(c, node);
        if (seen[nb]) continue;
        seen[nb] = true;
        via[nb] = c;
        stack.push_back(nb);
      }
    }
    // Walking from row ei toward column ek, cells alternate -, +, -, ...
    std::vector<std::size_t> minus, plus;
    std::size_t node = ei;
    bool sign_minus = true;
    while (node != n_ + ek) {
      const std::size_t c = via[node];
      (sign_minus ? minus : plus).push_back(c);
      sign_minus = !sign_minus;
      node = other_end(c, node);
    }
    std::size_t leave = minus.front();
    for (std::size_t c : minus) {
      const Cell& a = cells_[c];
      const Cell& b = cells_[leave];
      if (a.flow < b.flow - flow_tol_ ||
          (a.flow <= b.flow + flow_tol_ && (a.i * m_ + a.k) < (b.i * m_ + b.k)))
        leave = c;
    }
    const double theta = std::max(0.0, cells_[leave].flow);
    for (std::size_t c : minus) cells_[c].flow = std::max(0.0, cells_[c].flow - theta);
    for (std::size_t c : plus) cells_[c].flow += theta;
    basic_[cells_[leave].i * m_ + cells_[leave].k] = false;
    cells_[leave] = {ei, ek, theta};
    basic_[ei * m_ + ek] = true;
    return theta <= flow_tol_;
  }

  std::size_t n_, m_;
  std::vector<double> cost_;
  std::vector<double> supply_, demand_;
  std::vector<Cell> cells_;
  std::vector<bool> basic_;
  std::vector<double> u_, v_;
  double rc_tol_ = 0.0;
  double flow_tol_ = 0.0;
};

inline void check_balanced(double a, double b, const char* who) {
  if (std::abs(a - b) > 1e-9) {
    std::ostringstream os;
    os << who << ": total masses differ (" << a << " vs " << b << ")";
    throw BalanceError(os.str());
  }
}

}  // namespace detail

/// Optimal vertex plan between raw atom lists (positions need not be
/// distinct). Used directly for time slices of dynamical paths.
inline OtSolution solve_transport(std::span<const Atom> src, std::span<const Atom> dst, double p) {
  if (!(p >= 1.0)) throw PreconditionError("solve_kantorovich: p must be >= 1");
  if (src.empty() || dst.empty()) throw DomainError("solve_kantorovich: empty measure");
  double a = 0.0, b = 0.0;
  for (const Atom& x : src) a += x.mass;
  for (const Atom& y : dst) b += y.mass;
  detail::check_balanced(a, b, "solve_kantorovich");
  OtSolution sol;
  sol.p = p;
  sol.plan.source.assign(src.begin(), src.end());
  sol.plan.target.assign(dst.begin(), dst.end());
  sol.plan.entries = detail::TransportSimplex(src, dst, p).solve();
  sol.cost = sol.plan.cost(p);
  sol.is_vertex = true;
  return sol;
}

inline OtSolution solve_kantorovich(const AtomicMeasure& mu0, const AtomicMeasure& mu1, double p) {
  if (mu0.dim() != mu1.dim()) throw DomainError("solve_kantorovich: dimension mismatch");
  detail::check_balanced(mu0.total_mass(), mu1.total_mass(), "solve_kantorovich");
  return solve_transport(mu0.atoms(), mu1.atoms(), p);
}

/// W_p = (min cost)^(1/p).
inline double wasserstein(const AtomicMeasure& mu0, const AtomicMeasure& mu1, double p) {
  return std::pow(solve_kantorovich(mu0, mu1, p).cost, 1.0 / p);
}

inline double wasserstein(std::span<const Atom> src, std::span<const Atom> dst, double p) {
  return std::pow(solve_transport(src, dst, p).cost, 1.0 / p);
}

/// Kantorovich dual lower bound: int f dmu0 - int f dmu1 <= W_1 for any
/// 1-Lipschitz f. The Lipschitz property is checked on all atom pairs.
inline double w1_lower_bound_dual(const AtomicMeasure& mu0, const AtomicMeasure& mu1,
                                  const std::function<double(const Point&)>& f) {
  detail::check_balanced(mu0.total_mass(), mu1.total_mass(), "w1_lower_bound_dual");
  std::vector<const Point*> pts;
  std::vector<double> vals;
  double value = 0.0;
  for (const Atom& a : mu0.atoms()) {
    const double fx = f(a.x);
    value += a.mass * fx;
    pts.push_back(&a.x);
    vals.push_back(fx);
  }
  for (const Atom& a : mu1.atoms()) {
    const double fx = f(a.x);
    value -= a.mass * fx;
    pts.push_back(&a.x);
    vals.push_back(fx);
  }
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j)
      if (std::abs(vals[i] - vals[j]) > branched::distance(*pts[i], *pts[j]) + 1e-9)
        throw PreconditionError("w1_lower_bound_dual: test function is not 1-Lipschitz on the atoms");
  return value;
}

/// True iff the support has at most n + m - 1 cells and its bipartite graph
/// contains no cycle.
inline bool assert_acyclic_support(const OtSolution& sol) {
  const std::size_t n = sol.plan.source.size();
  const std::size_t m = sol.plan.target.size();
  std::size_t support = 0;
  std::vector<std::size_t> parent(n + m);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const PlanEntry& e : sol.plan.entries) {
    if (!(e.mass > 0.0)) continue;
    ++support;
    const std::size_t a = find(e.i), b = find(n + e.k);
    if (a == b) return false;
    parent[a] = b;
  }
  return support + 1 <= n + m;
}

/// CSV rows "i,k,mass,distance" with a header line.
inline void write_plan_csv(std::ostream& os, const TransportPlan& plan) {
  os << "i,k,mass,distance\n" << std::setprecision(17);
  for (const PlanEntry& e : plan.entries)
    os << e.i << ',' << e.k << ',' << e.mass << ',' << plan.distance(e) << '\n';
}

}  // namespace branched
