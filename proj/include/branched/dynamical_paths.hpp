#pragma once

// Time-discretized atomic paths (rho_t, q_t = v_t rho_t).
//
// A path is a strictly increasing grid 0 = t_0 < ... < t_K = 1 with one
// slice per node. Slice k lists the atoms of rho at t_k together with the
// constant velocity each atom keeps on [t_k, t_{k+1}); the velocities of the
// final slice are unused. Links record how mass moves from the atoms of one
// slice to those of the next, so splits and merges happen at grid nodes
// only. Every functional is then piecewise constant in time and integrates
// exactly.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <utility>
#include <vector>

#include "branched/errors.hpp"
#include "branched/exact_ot.hpp"
#include "branched/geometry.hpp"
#include "branched/traffic_plans.hpp"

namespace branched {

struct PathAtom {
  Point x;
  double mass = 0.0;
  Point v;
};

struct TimeSlice {
  double time = 0.0;
  std::vector<PathAtom> atoms;

  double total_mass() const {
    double m = 0.0;
    for (const PathAtom& a : atoms) m += a.mass;
    return m;
  }

  std::vector<Atom> as_atoms() const {
    std::vector<Atom> out;
    out.reserve(atoms.size());
    for (const PathAtom& a : atoms) out.push_back({a.x, a.mass});
    return out;
  }
};

struct Link {
  std::size_t from = 0;
  std::size_t to = 0;
  double mass = 0.0;
};

inline constexpr std::size_t kDefaultGridSize = 256;

class DynamicalPath {
 public:
  DynamicalPath(DomainBox box, std::vector<TimeSlice> slices, std::vector<std::vector<Link>> links)
      : box_(std::move(box)), slices_(std::move(slices)), links_(std::move(links)) {
    validate();
  }

  const DomainBox& box() const noexcept { return box_; }
  const std::vector<TimeSlice>& slices() const noexcept { return slices_; }
  const TimeSlice& slice(std::size_t k) const { return slices_[k]; }
  const std::vector<std::vector<Link>>& links() const noexcept { return links_; }

  /// Number of time intervals K.
  std::size_t intervals() const noexcept { return slices_.size() - 1; }
  double duration(std::size_t k) const { return slices_[k + 1].time - slices_[k].time; }

  std::vector<double> times() const {
    std::vector<double> t;
    for (const TimeSlice& s : slices_) t.push_back(s.time);
    return t;
  }

  /// Largest mismatch between where an atom's velocity carries it and where
  /// the linked atom sits at the next node. Zero for kinematically consistent
  /// paths.
  double kinematic_defect() const {
    double worst = 0.0;
    for (std::size_t k = 0; k < intervals(); ++k)
      for (const Link& l : links_[k]) {
        const PathAtom& a = slices_[k].atoms[l.from];
        const Point arrival = a.x + a.v * duration(k);
        worst = std::max(worst, distance(arrival, slices_[k + 1].atoms[l.to].x));
      }
    return worst;
  }

 private:
  void validate() const {
    box_.validate();
    if (slices_.size() < 2) throw PreconditionError("DynamicalPath: needs at least two slices");
    if (links_.size() != slices_.size() - 1)
      throw PreconditionError("DynamicalPath: one link list per interval required");
    if (slices_.front().time != 0.0 || slices_.back().time != 1.0)
      throw PreconditionError("DynamicalPath: grid must run from 0 to 1");
    const double mass0 = slices_.front().total_mass();
    for (std::size_t k = 0; k < slices_.size(); ++k) {
      const TimeSlice& s = slices_[k];
      if (k > 0 && !(s.time > slices_[k - 1].time))
        throw PreconditionError("DynamicalPath: times must increase strictly");
      if (s.atoms.empty()) throw PreconditionError("DynamicalPath: empty slice");
      for (const PathAtom& a : s.atoms) {
        if (!(a.mass > 0.0)) throw PreconditionError("DynamicalPath: atom masses must be > 0");
        if (a.x.dim() != box_.dim || a.v.dim() != box_.dim)
          throw PreconditionError("DynamicalPath: dimension mismatch");
        for (std::size_t c = 0; c < box_.dim; ++c)
          if (!std::isfinite(a.v[c])) throw PreconditionError("DynamicalPath: velocity must be finite");
      }
      if (std::abs(s.total_mass() - mass0) > 1e-9)
        throw BalanceError("DynamicalPath: slice masses differ");
    }
    for (std::size_t k = 0; k + 1 < slices_.size(); ++k) {
      std::vector<double> out(slices_[k].atoms.size(), 0.0), in(slices_[k + 1].atoms.size(), 0.0);
      for (const Link& l : links_[k]) {
        if (l.from >= out.size() || l.to >= in.size())
          throw PreconditionError("DynamicalPath: link index out of range");
        if (!(l.mass > 0.0)) throw PreconditionError("DynamicalPath: link masses must be > 0");
        out[l.from] += l.mass;
        in[l.to] += l.mass;
      }
      for (std::size_t i = 0; i < out.size(); ++i)
        if (std::abs(out[i] - slices_[k].atoms[i].mass) > 1e-9)
          throw BalanceError("DynamicalPath: outgoing links do not match atom mass");
      for (std::size_t i = 0; i < in.size(); ++i)
        if (std::abs(in[i] - slices_[k + 1].atoms[i].mass) > 1e-9)
          throw BalanceError("DynamicalPath: incoming links do not match atom mass");
    }
  }

  DomainBox box_;
  std::vector<TimeSlice> slices_;
  std::vector<std::vector<Link>> links_;
};

// ---------------------------------------------------------------------------
// Functionals

/// G_alpha on an atomic measure: sum of m_i^alpha.
inline double galpha(const AtomicMeasure& lambda, double alpha) {
  detail::check_alpha_open(alpha, "galpha");
  double s = 0.0;
  for (const Atom& a : lambda.atoms()) s += std::pow(a.mass, alpha);
  return s;
}

/// G_alpha of a diffuse measure is infinite.
inline double galpha(const CellWeights&, double alpha) {
  detail::check_alpha_open(alpha, "galpha");
  return kInfiniteEnergy;
}

/// F(rho, q) = sum_i |v_i| m_i^alpha. Flux carried by a massless atom is not
/// absolutely continuous w.r.t. rho and yields the infinite sentinel.
inline double slice_F(const TimeSlice& s, double alpha) {
  detail::check_alpha_open(alpha, "slice_F");
  double f = 0.0;
  for (const PathAtom& a : s.atoms) {
    const double speed = a.v.norm();
    if (speed == 0.0) continue;
    if (!(a.mass > 0.0)) return kInfiniteEnergy;
    f += speed * std::pow(a.mass, alpha);
  }
  return f;
}

/// ||v||_{L^p(rho)} = (sum m |v|^p)^(1/p).
inline double velocity_norm(const TimeSlice& s, double p) {
  double acc = 0.0;
  for (const PathAtom& a : s.atoms) acc += a.mass * std::pow(a.v.norm(), p);
  return std::pow(acc, 1.0 / p);
}

/// |q|(Omega) = sum m |v|.
inline double flux_mass(const TimeSlice& s) {
  double acc = 0.0;
  for (const PathAtom& a : s.atoms) acc += a.mass * a.v.norm();
  return acc;
}

/// int_0^1 F(rho_t, q_t) dt.
inline double total_F(const DynamicalPath& path, double alpha) {
  double total = 0.0;
  for (std::size_t k = 0; k < path.intervals(); ++k) {
    const double f = slice_F(path.slice(k), alpha);
    if (is_infinite_energy(f)) return kInfiniteEnergy;
    total += f * path.duration(k);
  }
  return total;
}

/// int_0^1 sum_i m_i |v_i|^p dt.
inline double benamou_brenier_Ap(const DynamicalPath& path, double p) {
  if (!(p >= 1.0)) throw PreconditionError("benamou_brenier_Ap: p must be >= 1");
  double total = 0.0;
  for (std::size_t k = 0; k < path.intervals(); ++k) {
    double acc = 0.0;
    for (const PathAtom& a : path.slice(k).atoms) acc += a.mass * std::pow(a.v.norm(), p);
    total += acc * path.duration(k);
  }
  return total;
}

/// Smooth test function phi(t, x) with its time derivative and spatial
/// gradient.
struct TestFunction {
  std::function<double(double, const Point&)> value;
  std::function<double(double, const Point&)> dt;
  std::function<Point(double, const Point&)> grad;
};

/// int_0^1 [ int d_t phi d rho_t + int grad phi . d q_t ] dt, evaluated with
/// 5-point Gauss-Legendre quadrature on every grid interval along the
/// straight atom trajectories.
inline double continuity_residual(const DynamicalPath& path, const TestFunction& phi) {
  for (const TimeSlice& s : path.slices())
    for (const PathAtom& a : s.atoms) {
      const double v0 = phi.value(0.0, a.x), v1 = phi.value(1.0, a.x);
      if (std::abs(v0) > 1e-12 || std::abs(v1) > 1e-12)
        throw PreconditionError("continuity_residual: phi must vanish at t = 0 and t = 1");
    }
  static constexpr std::array<double, 5> nodes = {-0.9061798459386640, -0.5384693101056831, 0.0,
                                                  0.5384693101056831, 0.9061798459386640};
  static constexpr std::array<double, 5> weights = {0.2369268850561891, 0.4786286704993665,
                                                    0.5688888888888889, 0.4786286704993665,
                                                    0.2369268850561891};
  double total = 0.0;
  for (std::size_t k = 0; k < path.intervals(); ++k) {
    const double t0 = path.slice(k).time;
    const double h = path.duration(k);
    double interval = 0.0;
    for (std::size_t q = 0; q < nodes.size(); ++q) {
      const double tau = 0.5 * h * (nodes[q] + 1.0);
      double integrand = 0.0;
      for (const PathAtom& a : path.slice(k).atoms) {
        const Point x = a.x + a.v * tau;
        integrand += a.mass * (phi.dt(t0 + tau, x) + dot(phi.grad(t0 + tau, x), a.v));
      }
      interval += weights[q] * integrand;
    }
    total += 0.5 * h * interval;
  }
  return total;
}

/// Per interval W_p(rho_{t_k}, rho_{t_{k+1}}) / (t_{k+1} - t_k).
inline std::vector<double> discrete_metric_derivative(const DynamicalPath& path, double p) {
  if (!(p >= 1.0)) throw PreconditionError("discrete_metric_derivative: p must be >= 1");
  std::vector<double> out;
  out.reserve(path.intervals());
  for (std::size_t k = 0; k < path.intervals(); ++k) {
    const auto a = path.slice(k).as_atoms();
    const auto b = path.slice(k + 1).as_atoms();
    out.push_back(wasserstein(a, b, p) / path.duration(k));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reparametrization

namespace detail {

// Links a->c obtained by pushing each a->b transfer through b's outgoing
// links proportionally.
inline std::vector<Link> compose_links(const std::vector<Link>& first, const std::vector<Link>& second,
                                       const TimeSlice& middle) {
  std::vector<std::vector<const Link*>> out_of(middle.atoms.size());
  for (const Link& l : second) out_of[l.from].push_back(&l);
  std::map<std::pair<std::size_t, std::size_t>, double> acc;
  for (const Link& l : first)
    for (const Link* m : out_of[l.to])
      acc[{l.from, m->to}] += l.mass * m->mass / middle.atoms[l.to].mass;
  std::vector<Link> out;
  for (const auto& [key, mass] : acc) out.push_back({key.first, key.second, mass});
  return out;
}

// Inverse of a strictly increasing map of [0,1] onto itself, by bisection.
inline double invert_monotone(const std::function<double(double)>& phi, double target) {
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (phi(mid) < target ? lo : hi) = mid;
  }
  return std::abs(phi(lo) - target) <= std::abs(phi(hi) - target) ? lo : hi;
}

}  // namespace detail

/// The reparametrized path rho~_s = rho_{phi(s)}: slice k moves to the node
/// s_k = phi^{-1}(t_k) and velocities are rescaled by (t_{k+1}-t_k)/(s_{k+1}-s_k)
/// so every atom covers the same displacement. total_F is unchanged.
inline DynamicalPath reparametrize(const DynamicalPath& path, const std::function<double(double)>& phi) {
  if (std::abs(phi(0.0)) > 1e-12 || std::abs(phi(1.0) - 1.0) > 1e-12)
    throw PreconditionError("reparametrize: phi must map 0 to 0 and 1 to 1");
  constexpr int kSamples = 4096;
  double prev = phi(0.0);
  for (int i = 1; i <= kSamples; ++i) {
    const double cur = phi(static_cast<double>(i) / kSamples);
    if (!(cur > prev)) throw PreconditionError("reparametrize: phi must be strictly increasing");
    prev = cur;
  }
  std::vector<TimeSlice> slices = path.slices();
  for (std::size_t k = 1; k + 1 < slices.size(); ++k)
    slices[k].time = detail::invert_monotone(phi, path.slice(k).time);
  for (std::size_t k = 1; k < slices.size(); ++k)
    if (!(slices[k].time > slices[k - 1].time))
      throw PreconditionError("reparametrize: grid nodes collapse under phi");
  for (std::size_t k = 0; k + 1 < slices.size(); ++k) {
    const double scale = path.duration(k) / (slices[k + 1].time - slices[k].time);
    for (PathAtom& a : slices[k].atoms) a.v *= scale;
  }
  return DynamicalPath(path.box(), std::move(slices), path.links());
}

/// Reparametrization by cumulative F (arc length for the branched cost),
/// making slice_F equal to total_F on every interval. Intervals where
/// nothing moves are collapsed. A path with total_F = 0 is returned as is.
inline DynamicalPath reparametrize_constant_speed(const DynamicalPath& path, double alpha) {
  const double total = total_F(path, alpha);
  if (is_infinite_energy(total)) throw PreconditionError("reparametrize: path has infinite energy");
  if (total == 0.0) return path;

  std::vector<TimeSlice> slices = path.slices();
  std::vector<std::vector<Link>> links = path.links();
  std::vector<double> weight(path.intervals());
  for (std::size_t k = 0; k < path.intervals(); ++k)
    weight[k] = slice_F(path.slice(k), alpha) * path.duration(k);
  std::vector<double> old_dt(path.intervals());
  for (std::size_t k = 0; k < path.intervals(); ++k) old_dt[k] = path.duration(k);

  // Collapse static intervals, last to first so indices stay valid.
  for (std::size_t k = weight.size(); k-- > 0;) {
    if (weight[k] > 0.0) continue;
    const std::size_t intervals = slices.size() - 1;
    if (k + 1 < intervals || intervals == 1) {
      // Drop slice k; slice k+1 takes its place.
      if (k > 0) links[k - 1] = detail::compose_links(links[k - 1], links[k], slices[k]);
      slices.erase(slices.begin() + static_cast<std::ptrdiff_t>(k));
      links.erase(links.begin() + static_cast<std::ptrdiff_t>(k));
    } else {
      // Last interval: drop the final slice, slice k becomes the endpoint.
      slices.erase(slices.begin() + static_cast<std::ptrdiff_t>(k + 1));
      links.erase(links.begin() + static_cast<std::ptrdiff_t>(k));
    }
    weight.erase(weight.begin() + static_cast<std::ptrdiff_t>(k));
    old_dt.erase(old_dt.begin() + static_cast<std::ptrdiff_t>(k));
  }
  double cum = 0.0;
  slices.front().time = 0.0;
  for (std::size_t k = 0; k < weight.size(); ++k) {
    cum += weight[k];
    slices[k + 1].time = k + 1 == weight.size() ? 1.0 : cum / total;
  }
  for (std::size_t k = 0; k < weight.size(); ++k) {
    const double scale = old_dt[k] / (slices[k + 1].time - slices[k].time);
    for (PathAtom& a : slices[k].atoms) a.v *= scale;
  }
  for (PathAtom& a : slices.back().atoms) a.v = Point(a.x.dim());
  return DynamicalPath(path.box(), std::move(slices), std::move(links));
}

// ---------------------------------------------------------------------------
// Traffic plan -> dynamical path

/// Uniform grid of K intervals refined by every curve breakpoint.
inline std::vector<double> plan_time_grid(const TrafficPlan& q, std::size_t K) {
  if (K < 1) throw PreconditionError("plan_to_path: K must be >= 1");
  std::vector<double> t = common_time_grid(q);
  for (std::size_t k = 0; k <= K; ++k) t.push_back(static_cast<double>(k) / static_cast<double>(K));
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  return t;
}

/// How plan_to_path forms atoms.
///   interval: curves share an atom on [t_k, t_{k+1}) iff they coincide at
///     both ends (hence on the whole interval, where they are affine). A
///     branching point then holds co-located atoms with different
///     velocities, and total_F equals energy_C exactly.
///   node: curves at the same point at t_k form one atom for the following
///     interval whose velocity is the mass-weighted average of their chord
///     velocities (the disintegration of Q at the node time). Curves that
///     separate right after a node lose the difference, so total_F <=
///     energy_C with an O(1/K) gap at branchings.
enum class PathGrouping { interval, node };

/// rho_t = (e_t)_# Q sampled on plan_time_grid(Q, K), with links following
/// the curves.
inline DynamicalPath plan_to_path(const TrafficPlan& q, std::size_t K = kDefaultGridSize,
                                  PathGrouping grouping = PathGrouping::interval) {
  q.validate();
  if (q.curves.empty()) throw PreconditionError("plan_to_path: empty plan");
  const std::vector<double> grid = plan_time_grid(q, K);
  const double snap = q.snap();
  const std::size_t n = q.curves.size();
  const std::size_t dim = q.box.dim;

  std::vector<TimeSlice> slices(grid.size());
  std::vector<std::vector<std::size_t>> group(grid.size(), std::vector<std::size_t>(n));
  std::vector<Point> pos(n), next(n);
  for (std::size_t c = 0; c < n; ++c) pos[c] = q.curves[c].at(grid[0]);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    TimeSlice& s = slices[k];
    s.time = grid[k];
    const bool last = k + 1 == grid.size();
    if (!last)
      for (std::size_t c = 0; c < n; ++c) next[c] = q.curves[c].at(grid[k + 1]);
    const bool split_by_arrival = grouping == PathGrouping::interval && !last;
    std::vector<Point> momentum, arrival;
    for (std::size_t c = 0; c < n; ++c) {
      std::size_t g = s.atoms.size();
      for (std::size_t a = 0; a < s.atoms.size(); ++a)
        if (distance(s.atoms[a].x, pos[c]) <= snap && (!split_by_arrival || distance(arrival[a], next[c]) <= snap)) {
          g = a;
          break;
        }
      if (g == s.atoms.size()) {
        s.atoms.push_back({pos[c], 0.0, Point(dim)});
        momentum.emplace_back(dim);
        arrival.push_back(last ? pos[c] : next[c]);
      }
      group[k][c] = g;
      const double w = q.curves[c].mass;
      s.atoms[g].mass += w;
      if (!last) momentum[g] += (next[c] - pos[c]) * (w / (grid[k + 1] - grid[k]));
    }
    for (std::size_t a = 0; a < s.atoms.size(); ++a) s.atoms[a].v = momentum[a] * (1.0 / s.atoms[a].mass);
    std::swap(pos, next);
  }
  std::vector<std::vector<Link>> links(grid.size() - 1);
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    std::map<std::pair<std::size_t, std::size_t>, double> acc;
    for (std::size_t c = 0; c < n; ++c) acc[{group[k][c], group[k + 1][c]}] += q.curves[c].mass;
    for (const auto& [key, mass] : acc) links[k].push_back({key.first, key.second, mass});
  }
  return DynamicalPath(q.box, std::move(slices), std::move(links));
}

}  // namespace branched
