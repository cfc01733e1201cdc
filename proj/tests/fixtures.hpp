#pragma once

#include <cmath>
#include <vector>

#include "branched/geometry.hpp"
#include "branched/traffic_plans.hpp"

namespace fixtures {

using namespace branched;

// [-0.5, 1.5)^2 holds the Y terminals (0,0), (1, +-0.3).
inline DomainBox y_box() { return DomainBox(2, 2.0, Point{-0.5, -0.5}); }

inline AtomicMeasure y_source() { return make_measure({{Point{0.0, 0.0}, 1.0}}, y_box()); }

inline AtomicMeasure y_sinks(double h = 0.3) {
  return make_measure({{Point{1.0, h}, 0.5}, {Point{1.0, -h}, 0.5}}, y_box());
}

// Both half-mass curves run along the trunk to (0.7, 0) and on to their sink
// at the same constant speed.
inline TrafficPlan y_plan() {
  TrafficPlan q{y_box(), {}};
  q.curves.push_back(MassCurve::constant_speed({Point{0.0, 0.0}, Point{0.7, 0.0}, Point{1.0, 0.3}}, 0.5));
  q.curves.push_back(MassCurve::constant_speed({Point{0.0, 0.0}, Point{0.7, 0.0}, Point{1.0, -0.3}}, 0.5));
  return q;
}

// Two half-mass curves on the unit segment, one moving during [0, 1/2], the
// other during [1/2, 1].
inline TrafficPlan desync_plan() {
  TrafficPlan q{y_box(), {}};
  const Point a{0.0, 0.0}, b{1.0, 0.0};
  q.curves.emplace_back(std::vector<double>{0.0, 0.5, 1.0}, std::vector<Point>{a, b, b}, 0.5);
  q.curves.emplace_back(std::vector<double>{0.0, 0.5, 1.0}, std::vector<Point>{a, a, b}, 0.5);
  return q;
}

inline DomainBox unit_square() { return DomainBox(2, 1.0); }

}  // namespace fixtures
