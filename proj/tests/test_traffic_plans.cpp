#include <gtest/gtest.h>

#include <cmath>

#include "branched/random_instances.hpp"
#include "branched/traffic_plans.hpp"
#include "fixtures.hpp"

using namespace branched;

TEST(Marginals, SingleCurve) {
  TrafficPlan q{fixtures::unit_square(), {MassCurve::constant_speed({Point{0.1, 0.1}, Point{0.8, 0.4}}, 1.0)}};
  const auto [a, b] = endpoint_marginals(q);
  ASSERT_EQ(a.size(), 1u);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(a[0].x, (Point{0.1, 0.1}));
  EXPECT_EQ(b[0].x, (Point{0.8, 0.4}));
}

TEST(Marginals, SharedStart) {
  TrafficPlan q{fixtures::unit_square(),
                {MassCurve::constant_speed({Point{0.1, 0.1}, Point{0.8, 0.4}}, 0.5),
                 MassCurve::constant_speed({Point{0.1, 0.1}, Point{0.2, 0.9}}, 0.5)}};
  const auto [a, b] = endpoint_marginals(q);
  EXPECT_EQ(a.size(), 1u);
  EXPECT_DOUBLE_EQ(a[0].mass, 1.0);
  EXPECT_EQ(b.size(), 2u);
}

TEST(Marginals, YPlan) {
  const auto [a, b] = endpoint_marginals(fixtures::y_plan());
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0].x, (Point{0.0, 0.0}));
  ASSERT_EQ(b.size(), 2u);
  for (const Atom& at : b.atoms()) {
    EXPECT_DOUBLE_EQ(at.mass, 0.5);
    EXPECT_NEAR(std::abs(at.x[1]), 0.3, 1e-15);
  }
}

TEST(Multiplicity, Spatial) {
  const TrafficPlan q = fixtures::y_plan();
  EXPECT_EQ(spatial_multiplicity(q, Point{0.5, 0.5}), 0.0);
  EXPECT_DOUBLE_EQ(spatial_multiplicity(q, Point{0.35, 0.0}), 1.0);
  EXPECT_DOUBLE_EQ(spatial_multiplicity(q, Point{0.85, 0.15}), 0.5);
}

TEST(Multiplicity, Synchronized) {
  const TrafficPlan y = fixtures::y_plan();
  const double t = 0.3;
  EXPECT_DOUBLE_EQ(synchronized_multiplicity(y, y.curves[0].at(t), t), 1.0);
  const TrafficPlan d = fixtures::desync_plan();
  EXPECT_DOUBLE_EQ(synchronized_multiplicity(d, Point{0.5, 0.0}, 0.25), 0.5);
  EXPECT_DOUBLE_EQ(synchronized_multiplicity(d, Point{0.5, 0.0}, 0.75), 0.5);
  EXPECT_EQ(synchronized_multiplicity(d, Point{0.5, 0.3}, 0.5), 0.0);
  EXPECT_THROW(synchronized_multiplicity(d, Point{0.5, 0.0}, 1.5), PreconditionError);
}

TEST(Energies, SingleCurve) {
  const TrafficPlan q{fixtures::unit_square(),
                      {MassCurve::constant_speed({Point{0.1, 0.1}, Point{0.4, 0.5}, Point{0.9, 0.5}}, 1.0)}};
  for (double alpha : {0.3, 0.5, 1.0}) {
    EXPECT_NEAR(energy_E(q, alpha), 1.0, 1e-12);
    EXPECT_NEAR(energy_C(q, alpha), 1.0, 1e-12);
  }
}

TEST(Energies, YPlan) {
  const TrafficPlan q = fixtures::y_plan();
  const double expect = 0.7 + 2.0 * 0.5 * std::pow(0.5, -0.5) * std::sqrt(0.18);
  EXPECT_NEAR(expect, 1.3, 1e-12);
  EXPECT_NEAR(energy_E(q, 0.5), 1.3, 1e-9);
  EXPECT_NEAR(energy_C(q, 0.5), 1.3, 1e-9);
}

TEST(Energies, Desynchronized) {
  const TrafficPlan q = fixtures::desync_plan();
  EXPECT_NEAR(energy_E(q, 0.5), 1.0, 1e-9);
  EXPECT_NEAR(energy_C(q, 0.5), std::sqrt(2.0), 1e-9);
  for (double alpha : {0.2, 0.7}) EXPECT_NEAR(energy_C(q, alpha), std::exp2(1.0 - alpha), 1e-9);
}

TEST(Energies, LinearCaseIsMassTimesLength) {
  Rng rng(21);
  const DomainBox box(2, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const TrafficPlan q = random_plan(rng, box, 4);
    double expect = 0.0;
    for (const MassCurve& c : q.curves) expect += c.mass * c.length();
    EXPECT_NEAR(energy_C(q, 1.0), expect, 1e-9);
    EXPECT_NEAR(energy_E(q, 1.0), expect, 1e-9);
  }
}

TEST(Energies, EBelowC) {
  Rng rng(42);
  const DomainBox box(2, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    const TrafficPlan q = random_plan(rng, box, 1 + trial % 6);
    const double alpha = uniform(rng, 0.1, 1.0);
    EXPECT_LE(energy_E(q, alpha), energy_C(q, alpha) + 1e-9);
  }
}

TEST(Energies, Validation) {
  EXPECT_THROW(MassCurve({0.0, 0.5}, {Point{0, 0}, Point{1, 0}}, 1.0), PreconditionError);
  EXPECT_THROW(MassCurve({0.0, 1.0}, {Point{0, 0}, Point{1, 0}}, 0.0), PreconditionError);
  EXPECT_THROW(energy_E(fixtures::y_plan(), 1.5), PreconditionError);
}
