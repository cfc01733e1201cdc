#pragma once

// Seeded random inputs for the property suites. The generator is
// std::mt19937_64; positions are uniform in the box and masses follow a
// symmetric Dirichlet(1) law (normalized Gamma(1) draws) scaled to the
// requested total.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "branched/dynamical_paths.hpp"
#include "branched/geometry.hpp"
#include "branched/traffic_plans.hpp"

namespace branched {

using Rng = std::mt19937_64;

/// Independent stream for trial `index` of a suite seeded with `seed`.
inline Rng trial_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

inline double uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Uniform point in the interior of the box (stays clear of the open upper
/// faces by construction of uniform_real_distribution).
inline Point random_point(Rng& rng, const DomainBox& box) {
  Point p(box.dim);
  for (std::size_t i = 0; i < box.dim; ++i) p[i] = box.origin[i] + uniform(rng) * box.edge;
  return p;
}

inline std::vector<double> dirichlet(Rng& rng, std::size_t n, double total = 1.0) {
  std::gamma_distribution<double> gamma(1.0, 1.0);
  std::vector<double> w(n);
  double s = 0.0;
  for (double& x : w) {
    do x = gamma(rng);
    while (!(x > 0.0));
    s += x;
  }
  for (double& x : w) x *= total / s;
  return w;
}

inline AtomicMeasure random_measure(Rng& rng, const DomainBox& box, std::size_t n, double total = 1.0) {
  const std::vector<double> m = dirichlet(rng, n, total);
  std::vector<Atom> atoms;
  for (std::size_t i = 0; i < n; ++i) atoms.push_back({random_point(rng, box), m[i]});
  return make_measure(atoms, box);
}

/// Random slice; roughly one atom in four is at rest.
inline TimeSlice random_slice(Rng& rng, const DomainBox& box, std::size_t n, double total = 1.0) {
  const std::vector<double> m = dirichlet(rng, n, total);
  std::normal_distribution<double> normal(0.0, 1.0);
  TimeSlice s;
  for (std::size_t i = 0; i < n; ++i) {
    Point v(box.dim);
    if (uniform(rng) >= 0.25)
      for (std::size_t c = 0; c < box.dim; ++c) v[c] = normal(rng);
    s.atoms.push_back({random_point(rng, box), m[i], v});
  }
  return s;
}

/// Sorted interior breakpoint times plus the endpoints 0 and 1.
inline std::vector<double> random_times(Rng& rng, std::size_t segments) {
  std::vector<double> t{0.0, 1.0};
  while (t.size() < segments + 1) {
    const double u = uniform(rng, 0.02, 0.98);
    if (std::none_of(t.begin(), t.end(), [&](double s) { return std::abs(s - u) < 1e-3; })) t.push_back(u);
  }
  std::sort(t.begin(), t.end());
  return t;
}

/// Random plan with shared structure: some curves copy an earlier curve's
/// breakpoints, either on the same schedule (synchronized) or on a new one,
/// and may leave it for a new endpoint, so overlaps and branchings occur.
inline TrafficPlan random_plan(Rng& rng, const DomainBox& box, std::size_t curves, std::size_t max_segments = 3) {
  TrafficPlan q{box, {}};
  const std::vector<double> m = dirichlet(rng, curves);
  std::uniform_int_distribution<std::size_t> segs(1, max_segments);
  for (std::size_t c = 0; c < curves; ++c) {
    if (c == 0 || uniform(rng) < 0.4) {
      const std::size_t s = segs(rng);
      std::vector<Point> pts;
      for (std::size_t i = 0; i <= s; ++i) pts.push_back(random_point(rng, box));
      q.curves.emplace_back(random_times(rng, s), std::move(pts), m[c]);
      continue;
    }
    const MassCurve& base = q.curves[std::uniform_int_distribution<std::size_t>(0, c - 1)(rng)];
    std::vector<Point> pts = base.points;
    std::vector<double> times = base.times;
    if (uniform(rng) < 0.5) times = random_times(rng, pts.size() - 1);
    if (uniform(rng) < 0.5 && pts.size() > 1) {
      // Leave the base curve at its second-to-last breakpoint.
      pts.back() = random_point(rng, box);
    }
    q.curves.emplace_back(std::move(times), std::move(pts), m[c]);
  }
  return q;
}

/// Kinematically consistent random path sampled from a random plan.
inline DynamicalPath random_path(Rng& rng, const DomainBox& box, std::size_t curves, std::size_t K) {
  return plan_to_path(random_plan(rng, box, curves), K);
}

}  // namespace branched
