#pragma once

// Finite traffic plans: weighted piecewise-linear curves over t in [0,1],
// their spatial and synchronized multiplicities, and the energies E_alpha
// (spatial multiplicity) and C_alpha (synchronized multiplicity).

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>
#include <vector>

#include "branched/errors.hpp"
#include "branched/geometry.hpp"
#include "branched/point.hpp"

namespace branched {

/// Piecewise-linear curve through (times[s], points[s]) carrying a mass.
struct MassCurve {
  std::vector<double> times;
  std::vector<Point> points;
  double mass = 0.0;

  MassCurve() = default;
  MassCurve(std::vector<double> t, std::vector<Point> x, double m)
      : times(std::move(t)), points(std::move(x)), mass(m) {
    validate();
  }

  /// Constant-speed curve through the given polyline.
  static MassCurve constant_speed(const std::vector<Point>& polyline, double m) {
    if (polyline.size() < 2) throw PreconditionError("MassCurve: polyline needs two points");
    std::vector<double> cum{0.0};
    for (std::size_t s = 1; s < polyline.size(); ++s)
      cum.push_back(cum.back() + distance(polyline[s - 1], polyline[s]));
    std::vector<double> t(polyline.size());
    for (std::size_t s = 0; s < t.size(); ++s)
      t[s] = cum.back() > 0.0 ? cum[s] / cum.back() : static_cast<double>(s) / (t.size() - 1);
    t.front() = 0.0;
    t.back() = 1.0;
    return MassCurve(std::move(t), polyline, m);
  }

  void validate() const {
    if (times.size() < 2 || times.size() != points.size())
      throw PreconditionError("MassCurve: needs matching times/points, at least two");
    if (times.front() != 0.0 || times.back() != 1.0)
      throw PreconditionError("MassCurve: times must run from 0 to 1");
    for (std::size_t s = 1; s < times.size(); ++s) {
      if (!(times[s] > times[s - 1])) throw PreconditionError("MassCurve: times must increase strictly");
      if (points[s].dim() != points[0].dim()) throw PreconditionError("MassCurve: mixed dimensions");
    }
    if (!(mass > 0.0) || !std::isfinite(mass)) throw PreconditionError("MassCurve: mass must be > 0");
  }

  std::size_t segments() const { return times.size() - 1; }

  double segment_length(std::size_t s) const { return distance(points[s], points[s + 1]); }

  double length() const {
    double l = 0.0;
    for (std::size_t s = 0; s < segments(); ++s) l += segment_length(s);
    return l;
  }

  /// sigma(t), t in [0,1].
  Point at(double t) const {
    if (t <= 0.0) return points.front();
    if (t >= 1.0) return points.back();
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    const std::size_t s = static_cast<std::size_t>(it - times.begin()) - 1;
    return lerp(points[s], points[s + 1], (t - times[s]) / (times[s + 1] - times[s]));
  }

  /// Right derivative sigma'(t+) for t in [0,1).
  Point velocity(double t) const {
    auto it = std::upper_bound(times.begin(), times.end(), t);
    std::size_t s = static_cast<std::size_t>(it - times.begin());
    s = std::clamp<std::size_t>(s, 1, segments()) - 1;
    return (points[s + 1] - points[s]) * (1.0 / (times[s + 1] - times[s]));
  }

  /// Distance from x to the trace sigma([0,1]).
  double trace_distance(const Point& x) const {
    double best = distance(x, points.front());
    for (std::size_t s = 0; s < segments(); ++s)
      best = std::min(best, project_on_segment(x, points[s], points[s + 1]).distance);
    return best;
  }
};

/// Finite plan Q = sum_i w_i delta_{sigma_i}.
struct TrafficPlan {
  DomainBox box;
  std::vector<MassCurve> curves;

  /// Positions within this radius count as equal when evaluating
  /// multiplicities.
  double snap() const { return 1e-9 * box.edge; }

  double total_mass() const {
    double m = 0.0;
    for (const MassCurve& c : curves) m += c.mass;
    return m;
  }

  void validate() const {
    box.validate();
    for (const MassCurve& c : curves) {
      c.validate();
      if (c.points.front().dim() != box.dim) throw PreconditionError("TrafficPlan: dimension mismatch");
    }
  }
};

/// ((e_0)_# Q, (e_1)_# Q).
inline std::pair<AtomicMeasure, AtomicMeasure> endpoint_marginals(const TrafficPlan& q) {
  std::vector<Atom> start, end;
  for (const MassCurve& c : q.curves) {
    start.push_back({c.points.front(), c.mass});
    end.push_back({c.points.back(), c.mass});
  }
  return {make_measure(start, q.box), make_measure(end, q.box)};
}

/// |x|_Q: total mass of curves whose trace passes through x.
inline double spatial_multiplicity(const TrafficPlan& q, const Point& x) {
  const double r = q.snap();
  double m = 0.0;
  for (const MassCurve& c : q.curves)
    if (c.trace_distance(x) <= r) m += c.mass;
  return m;
}

/// |(x,t)|_Q: total mass of curves located at x at time t.
inline double synchronized_multiplicity(const TrafficPlan& q, const Point& x, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw PreconditionError("synchronized_multiplicity: t must lie in [0,1]");
  const double r = q.snap();
  double m = 0.0;
  for (const MassCurve& c : q.curves)
    if (distance(c.at(t), x) <= r) m += c.mass;
  return m;
}

namespace detail {

inline void check_alpha_closed(double alpha, const char* who) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw PreconditionError(std::string(who) + ": alpha must lie in (0,1]");
}

// Parameters u in [0,1] along [a,b] where the overlap pattern with [c,e] can
// change: the ends of a collinear overlap, or an isolated crossing point.
inline void overlap_breaks(const Point& a, const Point& b, const Point& c, const Point& e,
                           double snap, std::vector<double>& out) {
  const Point ab = b - a;
  const double len2 = ab.norm_squared();
  auto line_param = [&](const Point& p) { return dot(p - a, ab) / len2; };
  auto line_dist = [&](const Point& p) { return distance(p, a + ab * line_param(p)); };
  auto push = [&](double u) {
    if (u > 0.0 && u < 1.0) out.push_back(u);
  };
  if (line_dist(c) <= snap && line_dist(e) <= snap) {
    push(line_param(c));
    push(line_param(e));
    return;
  }
  // Closest points between the two segments.
  const Point ce = e - c;
  const Point r = a - c;
  const double ee = ce.norm_squared();
  const double f = dot(ce, r);
  double s = 0.0, t = 0.0;
  if (ee <= 0.0) {
    s = std::clamp(-dot(ab, r) / len2, 0.0, 1.0);
  } else {
    const double cc = dot(ab, r);
    const double bb = dot(ab, ce);
    const double denom = len2 * ee - bb * bb;
    s = denom > 0.0 ? std::clamp((bb * f - cc * ee) / denom, 0.0, 1.0) : 0.0;
    t = (bb * s + f) / ee;
    if (t < 0.0) {
      t = 0.0;
      s = std::clamp(-cc / len2, 0.0, 1.0);
    } else if (t > 1.0) {
      t = 1.0;
      s = std::clamp((bb - cc) / len2, 0.0, 1.0);
    }
  }
  if (distance(a + ab * s, c + ce * t) <= snap) push(s);
}

}  // namespace detail

/// E_alpha(Q) = sum_i w_i int |sigma_i(t)|_Q^(alpha-1) |sigma_i'(t)| dt.
///
/// Each segment is split wherever another segment starts or stops
/// overlapping it (or crosses it); the spatial multiplicity is constant on
/// the pieces and is evaluated at their midpoints.
inline double energy_E(const TrafficPlan& q, double alpha) {
  detail::check_alpha_closed(alpha, "energy_E");
  const double snap = q.snap();
  double total = 0.0;
  std::vector<double> breaks;
  for (const MassCurve& ci : q.curves) {
    double curve_sum = 0.0;
    for (std::size_t s = 0; s < ci.segments(); ++s) {
      const Point& a = ci.points[s];
      const Point& b = ci.points[s + 1];
      const double len = distance(a, b);
      if (len <= 0.0) continue;
      breaks.assign({0.0, 1.0});
      for (const MassCurve& cj : q.curves)
        for (std::size_t r = 0; r < cj.segments(); ++r)
          detail::overlap_breaks(a, b, cj.points[r], cj.points[r + 1], snap, breaks);
      std::sort(breaks.begin(), breaks.end());
      for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
        const double du = breaks[k + 1] - breaks[k];
        if (du <= 0.0) continue;
        const double mult = spatial_multiplicity(q, lerp(a, b, 0.5 * (breaks[k] + breaks[k + 1])));
        curve_sum += std::pow(mult, alpha - 1.0) * len * du;
      }
    }
    total += ci.mass * curve_sum;
  }
  return total;
}

/// Union of all curve breakpoint times, sorted.
inline std::vector<double> common_time_grid(const TrafficPlan& q) {
  std::vector<double> t{0.0, 1.0};
  for (const MassCurve& c : q.curves) t.insert(t.end(), c.times.begin(), c.times.end());
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  return t;
}

/// C_alpha(Q) = sum_i w_i int |(sigma_i(t), t)|_Q^(alpha-1) |sigma_i'(t)| dt.
///
/// On each interval of the common time grid every curve is affine, so two
/// curves either coincide on the whole interval (equal at both ends) or
/// meet at most once; the integrand is constant and integrates exactly.
inline double energy_C(const TrafficPlan& q, double alpha) {
  detail::check_alpha_closed(alpha, "energy_C");
  const double snap = q.snap();
  const std::vector<double> grid = common_time_grid(q);
  const std::size_t n = q.curves.size();
  std::vector<double> per_curve(n, 0.0);
  std::vector<Point> p0(n), p1(n);
  for (std::size_t g = 0; g + 1 < grid.size(); ++g) {
    for (std::size_t i = 0; i < n; ++i) {
      p0[i] = q.curves[i].at(grid[g]);
      p1[i] = q.curves[i].at(grid[g + 1]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double len = distance(p0[i], p1[i]);
      if (len <= 0.0) continue;
      double mult = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (distance(p0[i], p0[j]) <= snap && distance(p1[i], p1[j]) <= snap) mult += q.curves[j].mass;
      per_curve[i] += std::pow(mult, alpha - 1.0) * len;
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += q.curves[i].mass * per_curve[i];
  return total;
}

}  // namespace branched
