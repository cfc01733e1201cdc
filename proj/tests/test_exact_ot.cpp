#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "branched/exact_ot.hpp"
#include "branched/random_instances.hpp"
#include "oracles.hpp"

using namespace branched;

namespace {

AtomicMeasure on_line(std::vector<std::pair<double, double>> xm, double L = 4.0) {
  std::vector<Atom> atoms;
  for (auto [x, m] : xm) atoms.push_back({Point{x}, m});
  return make_measure(atoms, DomainBox(1, L));
}

}  // namespace

TEST(Kantorovich, SinglePair) {
  const DomainBox box(2, 2.0);
  const auto sol = solve_kantorovich(make_measure({{Point{0.0, 0.0}, 1.0}}, box),
                                     make_measure({{Point{1.0, 0.0}, 1.0}}, box), 1.0);
  EXPECT_DOUBLE_EQ(sol.cost, 1.0);
  EXPECT_EQ(sol.plan.entries.size(), 1u);
}

TEST(Kantorovich, LineMatchesMonotoneCoupling) {
  const auto a = on_line({{0.0, 0.7}, {2.0, 0.3}}), b = on_line({{1.0, 0.5}, {3.0, 0.5}});
  const auto sol = solve_kantorovich(a, b, 1.0);
  const auto mono = oracle::monotone_coupling({{0.0, 0.7}, {2.0, 0.3}}, {{1.0, 0.5}, {3.0, 0.5}});
  EXPECT_NEAR(oracle::line_cost(mono, 1.0), 1.4, 1e-12);
  EXPECT_NEAR(sol.cost, 1.4, 1e-12);
  ASSERT_EQ(sol.plan.entries.size(), 3u);
  double m01 = 0, m03 = 0, m23 = 0;
  for (const auto& e : sol.plan.entries) {
    const double from = sol.plan.source[e.i].x[0], to = sol.plan.target[e.k].x[0];
    if (from == 0.0 && to == 1.0) m01 += e.mass;
    if (from == 0.0 && to == 3.0) m03 += e.mass;
    if (from == 2.0 && to == 3.0) m23 += e.mass;
  }
  EXPECT_NEAR(m01, 0.5, 1e-12);
  EXPECT_NEAR(m03, 0.2, 1e-12);
  EXPECT_NEAR(m23, 0.3, 1e-12);
}

TEST(Kantorovich, RandomLineInstances) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::pair<double, double>> a, b;
    const auto wa = dirichlet(rng, 1 + trial % 5), wb = dirichlet(rng, 1 + trial % 7);
    for (double w : wa) a.push_back({uniform(rng, 0.0, 4.0), w});
    for (double w : wb) b.push_back({uniform(rng, 0.0, 4.0), w});
    for (double p : {1.0, 1.5, 2.0, 3.0}) {
      const double expect = oracle::line_cost(oracle::monotone_coupling(a, b), p);
      EXPECT_NEAR(solve_kantorovich(on_line(a), on_line(b), p).cost, expect, 1e-12 * std::max(1.0, expect));
    }
  }
}

TEST(Kantorovich, IdenticalMeasures) {
  const auto a = on_line({{0.5, 0.2}, {1.5, 0.3}, {3.0, 0.5}});
  for (double p : {1.0, 2.0, 4.0}) {
    const auto sol = solve_kantorovich(a, a, p);
    EXPECT_EQ(sol.cost, 0.0);
    EXPECT_EQ(sol.plan.entries.size(), 3u);
    for (const auto& e : sol.plan.entries) EXPECT_EQ(e.i, e.k);
  }
}

TEST(Kantorovich, Errors) {
  const auto a = on_line({{0.5, 1.0}}), b = on_line({{1.5, 0.5}});
  EXPECT_THROW(solve_kantorovich(a, b, 1.0), BalanceError);
  EXPECT_THROW(solve_kantorovich(a, a, 0.5), PreconditionError);
  const auto c = make_measure({{Point{0.5, 0.5}, 1.0}}, DomainBox(2, 1.0));
  EXPECT_THROW(solve_kantorovich(a, c, 1.0), Error);
}

TEST(Kantorovich, BruteForceVertices) {
  Rng rng(11);
  const DomainBox box(2, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 1 + trial % 4, m = 1 + (trial / 4) % 4;
    const auto a = random_measure(rng, box, n), b = random_measure(rng, box, m);
    for (double p : {1.0, 2.0}) {
      const auto sol = solve_kantorovich(a, b, p);
      const double brute = oracle::vertex_enumeration_cost(a.atoms(), b.atoms(), p);
      EXPECT_NEAR(sol.cost, brute, 1e-12 * std::max(1.0, brute)) << "n=" << n << " m=" << m;
      EXPECT_TRUE(sol.is_vertex);
      EXPECT_LE(sol.plan.marginal_defect(), 1e-12);
    }
  }
}

TEST(Wasserstein, Examples) {
  const DomainBox box(2, 2.0, Point{-0.5, -0.5});
  const auto x = make_measure({{Point{0.0, 0.0}, 1.0}}, box), y = make_measure({{Point{1.0, 0.5}, 1.0}}, box);
  for (double p : {1.0, 2.0, 7.5}) EXPECT_NEAR(wasserstein(x, y, p), std::sqrt(1.25), 1e-12);
  const auto sinks = make_measure({{Point{1.0, 0.3}, 0.5}, {Point{1.0, -0.3}, 0.5}}, box);
  EXPECT_NEAR(wasserstein(x, sinks, 2.0), std::sqrt(1.09), 1e-12);
  const auto h = on_line({{0.0, 0.5}, {1.0, 0.5}});
  EXPECT_EQ(wasserstein(h, h, 3.0), 0.0);
}

TEST(Wasserstein, TriangleInequality) {
  Rng rng(5);
  const DomainBox box(2, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const auto a = random_measure(rng, box, 5), b = random_measure(rng, box, 4), c = random_measure(rng, box, 6);
    for (double p : {1.0, 2.0})
      EXPECT_LE(wasserstein(a, c, p), wasserstein(a, b, p) + wasserstein(b, c, p) + 1e-12);
  }
}

TEST(DualBound, Examples) {
  const auto one = on_line({{1.0, 1.0}}), zero = on_line({{0.0, 1.0}});
  EXPECT_EQ(w1_lower_bound_dual(one, zero, [](const Point&) { return 0.0; }), 0.0);
  EXPECT_NEAR(w1_lower_bound_dual(one, zero, [](const Point& x) { return x[0]; }), 1.0, 1e-15);
}

TEST(DualBound, BelowW1) {
  Rng rng(3);
  const DomainBox box(2, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = random_measure(rng, box, 4), b = random_measure(rng, box, 5);
    const Point dir{uniform(rng, -1, 1), uniform(rng, -1, 1)}, anchor = random_point(rng, box);
    const double scale = 1.0 / std::sqrt(dir.norm_squared());
    auto f = [&](const Point& x) { return std::abs(dot(x - anchor, dir)) * scale; };  // 1-Lipschitz
    EXPECT_LE(w1_lower_bound_dual(a, b, f), wasserstein(a, b, 1.0) + 1e-12);
  }
}

TEST(Acyclic, RandomVertexPlans) {
  Rng rng(9);
  const DomainBox box(2, 1.0);
  for (std::size_t n : {4u, 16u, 64u})
    for (int trial = 0; trial < 5; ++trial) {
      const auto a = random_measure(rng, box, n), b = random_measure(rng, box, n);
      const auto sol = solve_kantorovich(a, b, 2.0);
      EXPECT_TRUE(sol.is_vertex);
      EXPECT_LE(sol.plan.entries.size(), 2 * n - 1);
      EXPECT_TRUE(assert_acyclic_support(sol));
    }
}

TEST(Acyclic, IdentityPlan) {
  const auto a = on_line({{0.5, 0.25}, {1.5, 0.25}, {2.5, 0.25}, {3.5, 0.25}});
  const auto sol = solve_kantorovich(a, a, 1.0);
  EXPECT_EQ(sol.plan.entries.size(), 4u);
  EXPECT_TRUE(assert_acyclic_support(sol));
}

TEST(Acyclic, FourCycleRejected) {
  const auto a = on_line({{0.5, 0.5}, {1.5, 0.5}});
  OtSolution sol;
  sol.plan.source = a.atoms();
  sol.plan.target = a.atoms();
  sol.plan.entries = {{0, 0, 0.25}, {0, 1, 0.25}, {1, 0, 0.25}, {1, 1, 0.25}};
  EXPECT_FALSE(assert_acyclic_support(sol));
}

TEST(PlanCsv, Header) {
  const auto a = on_line({{0.5, 1.0}}), b = on_line({{1.5, 1.0}});
  std::ostringstream os;
  write_plan_csv(os, solve_kantorovich(a, b, 1.0).plan);
  EXPECT_EQ(os.str(), "i,k,mass,distance\n0,0,1,1\n");
}
