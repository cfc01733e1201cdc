#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

#include "branched/branched_solver.hpp"
#include "branched/random_instances.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace branched;

namespace {

const SteinerTopology kY{3, 1, {{0, 3}, {1, 3}, {2, 3}}};

std::vector<BranchTerminal> y_terminals(double h) {
  return {{Point{0.0, 0.0}, 1.0}, {Point{1.0, h}, -0.5}, {Point{1.0, -h}, -0.5}};
}

oracle::YInstance y_oracle(double h, double alpha) {
  return {Point{0.0, 0.0}, Point{1.0, h}, Point{1.0, -h}, 0.5, 0.5, alpha};
}

// Cosine of the angle at the free vertex between its two outgoing edges.
double branch_cosine(const BranchedGraph& g) {
  for (std::size_t v = 0; v < g.vertices.size(); ++v) {
    if (g.vertices[v].terminal) continue;
    std::vector<Point> dirs;
    for (const GraphEdge& e : g.edges)
      if (e.tail == v) dirs.push_back(g.vertices[e.head].x - g.vertices[v].x);
    if (dirs.size() == 2)
      return dot(dirs[0], dirs[1]) / std::sqrt(dirs[0].norm_squared() * dirs[1].norm_squared());
  }
  return std::nan("");
}

}  // namespace

TEST(GilbertEnergy, Examples) {
  const DomainBox box = fixtures::y_box();
  BranchedGraph edge{box, {{Point{0, 0}, 1.0, true}, {Point{1, 0}, -1.0, true}}, {{0, 1, 1.0}}};
  EXPECT_DOUBLE_EQ(gilbert_energy(edge, 0.5), 1.0);

  BranchedGraph y{box,
                  {{Point{0, 0}, 1.0, true}, {Point{1, 0.3}, -0.5, true}, {Point{1, -0.3}, -0.5, true},
                   {Point{0.7, 0}, 0.0, false}},
                  {{0, 3, 1.0}, {3, 1, 0.5}, {3, 2, 0.5}}};
  EXPECT_NEAR(gilbert_energy(y, 0.5), 1.3, 1e-12);
  EXPECT_NEAR(gilbert_energy(y, 1.0), 0.7 + 2 * 0.5 * std::sqrt(0.18), 1e-12);

  y.edges[0].flux = 0.9;
  EXPECT_THROW(gilbert_energy(y, 0.5), BalanceError);
}

TEST(TreeFlow, Examples) {
  const auto path = tree_flow_masses(SteinerTopology{2, 0, {{0, 1}}}, {1.0, -1.0});
  ASSERT_EQ(path.size(), 1u);
  EXPECT_EQ(path[0].tail, 0u);
  EXPECT_DOUBLE_EQ(path[0].flux, 1.0);

  const auto y = tree_flow_masses(kY, {1.0, -0.5, -0.5});
  EXPECT_DOUBLE_EQ(y[0].flux, 1.0);
  EXPECT_EQ(y[0].head, 3u);
  EXPECT_DOUBLE_EQ(y[1].flux, 0.5);
  EXPECT_EQ(y[1].tail, 3u);

  const SteinerTopology star{4, 0, {{0, 1}, {0, 2}, {0, 3}}};
  const auto s = tree_flow_masses(star, {1.0, -0.2, -0.3, -0.5});
  EXPECT_DOUBLE_EQ(s[0].flux, 0.2);
  EXPECT_DOUBLE_EQ(s[1].flux, 0.3);
  EXPECT_DOUBLE_EQ(s[2].flux, 0.5);

  EXPECT_THROW(tree_flow_masses(kY, {1.0, -0.5, -0.4}), BalanceError);
}

TEST(Topologies, Counts) {
  const std::size_t expect[] = {0, 0, 1, 1, 3, 15, 105};
  for (std::size_t n = 2; n <= 6; ++n) {
    const auto all = enumerate_full_topologies(n);
    EXPECT_EQ(all.size(), expect[n]);
    for (const auto& t : all) EXPECT_NO_THROW(t.validate());
  }
}

TEST(BranchPoints, YMatchesGridSearch) {
  const auto t = optimize_branch_points(kY, y_terminals(0.3), 0.5, fixtures::y_box());
  const auto grid = oracle::grid_search(y_oracle(0.3, 0.5), Point{0.0, -0.3}, Point{1.0, 0.3}, 1e-2, 1e-4);
  EXPECT_NEAR(grid.at[0], 0.7, 1e-4);
  EXPECT_NEAR(grid.at[1], 0.0, 1e-4);
  EXPECT_NEAR(t.node_positions[3][0], 0.7, 1e-5);
  EXPECT_NEAR(t.node_positions[3][1], 0.0, 1e-5);
  EXPECT_NEAR(t.energy, 1.3, 1e-9);
  EXPECT_LE(t.energy, grid.value + 1e-12);
  EXPECT_LE(t.stationarity, kDefaultBranchTolerance);
  EXPECT_NEAR(1.0 - oracle::symmetric_branch_offset(0.5, 0.3), 0.7, 1e-12);
}

TEST(BranchPoints, LinearCaseIsW1) {
  const auto t = optimize_branch_points(kY, y_terminals(0.3), 1.0, fixtures::y_box());
  EXPECT_NEAR(t.energy, std::sqrt(1.09), 1e-9);
}

TEST(BranchPoints, WideSpreadCollapsesOntoSource) {
  const DomainBox box(2, 4.0, Point{-1.5, -1.5});
  const auto t = optimize_branch_points(kY, y_terminals(1.0), 0.5, box);
  EXPECT_NEAR(t.energy, 2.0, 1e-9);
  EXPECT_LE(distance(t.node_positions[3], Point{0.0, 0.0}), 1e-6);
  const auto grid = oracle::grid_search(y_oracle(1.0, 0.5), Point{0.0, -0.5}, Point{1.0, 0.5}, 1e-2, 1e-4);
  EXPECT_NEAR(grid.value, 2.0, 1e-12);
  EXPECT_EQ(oracle::symmetric_branch_offset(0.5, 1.0), 1.0);
}

TEST(BranchPoints, GilbertAngle) {
  for (double alpha : {0.6, 0.75, 0.9}) {
    const auto t = optimize_branch_points(kY, y_terminals(0.3), alpha, fixtures::y_box());
    const double off = oracle::symmetric_branch_offset(alpha, 0.3);
    ASSERT_LT(off, 1.0);
    EXPECT_NEAR(t.node_positions[3][0], 1.0 - off, 1e-7);
    const double cosine = branch_cosine(t.graph);
    EXPECT_NEAR(cosine, oracle::symmetric_branch_cosine(off, 0.3), 1e-4);
    EXPECT_NEAR(cosine, std::exp2(2 * alpha - 1) - 1, 1e-4);
  }
}

TEST(BranchPoints, Errors) {
  EXPECT_THROW(optimize_branch_points(kY, y_terminals(0.3), 0.5, fixtures::y_box(), 0.0), PreconditionError);
  EXPECT_THROW(optimize_branch_points(kY, {{Point{0, 0}, 1.0}, {Point{1, 0}, -1.0}}, 0.5, fixtures::y_box()),
               PreconditionError);
}

TEST(Dalpha, TwoDiracs) {
  const DomainBox box = fixtures::y_box();
  const auto x = make_measure({{Point{0.1, 0.2}, 1.0}}, box), y = make_measure({{Point{1.3, -0.1}, 1.0}}, box);
  for (double alpha : {0.2, 0.5, 1.0}) {
    EXPECT_NEAR(compute_dalpha(x, y, alpha).value, distance(Point{0.1, 0.2}, Point{1.3, -0.1}), 1e-12);
    EXPECT_NEAR(dalpha_lower_bound(x, y, alpha), distance(Point{0.1, 0.2}, Point{1.3, -0.1}), 1e-12);
  }
}

TEST(Dalpha, YInstance) {
  const auto res = compute_dalpha(fixtures::y_source(), fixtures::y_sinks(), 0.5);
  EXPECT_NEAR(res.value, 1.3, 1e-9);
  EXPECT_TRUE(res.exact);
  EXPECT_EQ(res.topologies_tried, 1u);
  EXPECT_NEAR(gilbert_energy(res.graph, 0.5), 1.3, 1e-9);
  EXPECT_NEAR(dalpha_lower_bound(fixtures::y_source(), fixtures::y_sinks(), 0.5), std::sqrt(1.09), 1e-12);
  const auto h = compute_dalpha(fixtures::y_source(), fixtures::y_sinks(), 0.5, DalphaMode::heuristic);
  EXPECT_NEAR(h.value, 1.3, 1e-9);
  EXPECT_FALSE(h.exact);
}

TEST(Dalpha, IdenticalMeasures) {
  const auto a = fixtures::y_sinks();
  const auto res = compute_dalpha(a, a, 0.7);
  EXPECT_EQ(res.value, 0.0);
  EXPECT_TRUE(res.graph.edges.empty());
  EXPECT_EQ(dalpha_lower_bound(a, a, 0.7), 0.0);
}

TEST(Dalpha, SizeCap) {
  Rng rng(4);
  const DomainBox box(2, 1.0);
  const auto a = random_measure(rng, box, 4), b = random_measure(rng, box, 3);
  EXPECT_THROW(compute_dalpha(a, b, 0.5), SizeError);
  const auto h = compute_dalpha(a, b, 0.5, DalphaMode::heuristic);
  EXPECT_GE(h.value, dalpha_lower_bound(a, b, 0.5) - 1e-9);
  EXPECT_NO_THROW(h.graph.validate());
}

TEST(Dalpha, HeuristicNotBelowEnumeration) {
  Rng rng(17);
  const DomainBox box(2, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_measure(rng, box, 1 + trial % 3), b = random_measure(rng, box, 1 + (trial / 3) % 3);
    const double alpha = uniform(rng, 0.3, 0.95);
    const auto e = compute_dalpha(a, b, alpha);
    const auto h = compute_dalpha(a, b, alpha, DalphaMode::heuristic);
    EXPECT_GE(h.value, e.value - 1e-9);
    EXPECT_LE(e.value, energy_C(graph_to_traffic_plan(e.graph), alpha) + 1e-9);
    EXPECT_NEAR(gilbert_energy(e.graph, alpha), e.value, 1e-9);
  }
}

TEST(Dalpha, Errors) {
  const auto a = fixtures::y_source();
  EXPECT_THROW(compute_dalpha(a, a, 0.0), PreconditionError);
  EXPECT_THROW(compute_dalpha(a, make_measure({{Point{1.0, 0.0}, 0.5}}, fixtures::y_box()), 0.5), BalanceError);
}

TEST(Dalpha, MassScaling) {
  Rng rng(23);
  const DomainBox box(2, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = random_measure(rng, box, 2), b = random_measure(rng, box, 3);
    const double alpha = uniform(rng, 0.55, 0.95);
    const double d = compute_dalpha(a, b, alpha).value, w = dalpha_lower_bound(a, b, alpha);
    for (double s : {0.5, 2.0}) {
      const double f = std::pow(s, alpha);
      EXPECT_NEAR(compute_dalpha(a.scaled(s), b.scaled(s), alpha).value, f * d, 1e-9);
      EXPECT_NEAR(dalpha_lower_bound(a.scaled(s), b.scaled(s), alpha), f * w, 1e-9);
    }
  }
}

TEST(DyadicRhs, Formula) {
  const double direct = std::exp2(-1.6) / (std::exp2(0.8) - 1.0) * std::sqrt(2.0) / 2.0;
  EXPECT_DOUBLE_EQ(dyadic_rhs_bound(2, 0.9, 1.0, 2), direct);
  EXPECT_NEAR(direct, 0.3147455, 1e-7);
  for (int j = 0; j < 8; ++j)
    EXPECT_NEAR(dyadic_rhs_bound(2, 0.9, 1.0, j + 1) / dyadic_rhs_bound(2, 0.9, 1.0, j), std::exp2(-0.8), 1e-12);
  EXPECT_THROW(dyadic_rhs_bound(2, 0.5, 1.0, 1), ThresholdError);
  EXPECT_THROW(dyadic_rhs_bound(3, 0.6, 1.0, 1), ThresholdError);
  EXPECT_NO_THROW(dyadic_rhs_bound(1, 0.1, 1.0, 1));
}

TEST(DyadicUpper, LebesgueMatchesClosedForm) {
  const DomainBox box(2, 1.0);
  const auto leb = CellWeights::lebesgue(box);
  for (double alpha : {0.85, 0.9, 0.95})
    for (int j = 0; j <= 5; ++j) {
      const double v = dyadic_upper_bound(leb, j, alpha);
      const double rhs = dyadic_rhs_bound(2, alpha, 1.0, j);
      EXPECT_NEAR(v, oracle::lebesgue_hierarchy(2, alpha, 1.0, j), 1e-12 * rhs);
      EXPECT_LE(v, rhs * (1 + 1e-12));
    }
}

TEST(DyadicUpper, CentersCostNothing) {
  const DomainBox box(2, 1.0);
  std::vector<Atom> atoms;
  for (double x : {0.125, 0.375, 0.875})
    for (double y : {0.125, 0.625}) atoms.push_back({Point{x, y}, 1.0 / 6});
  const auto mu = make_measure(atoms, box);
  EXPECT_EQ(dyadic_upper_bound(mu, 2, 0.9), 0.0);
  EXPECT_EQ(dyadic_upper_bound(dyadic_approximation(mu, 1), 1, 0.9), 0.0);
}

TEST(DyadicUpper, NonIncreasingInLevel) {
  Rng rng(31);
  const DomainBox box(2, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto mu = random_measure(rng, box, 1 + trial % 12);
    double prev = std::numeric_limits<double>::infinity();
    for (int j = 0; j <= 10; ++j) {
      const double v = dyadic_upper_bound(mu, j, 0.8);
      EXPECT_LE(v, prev + 1e-15);
      EXPECT_LE(v, dyadic_rhs_bound(2, 0.8, 1.0, j) * (1 + 1e-12));
      prev = v;
    }
  }
  const auto leb = CellWeights::lebesgue(box);
  for (int j = 0; j < 8; ++j) EXPECT_LT(dyadic_upper_bound(leb, j + 1, 0.9), dyadic_upper_bound(leb, j, 0.9));
}

TEST(DyadicUpper, BoundsDistanceToApproximation) {
  Rng rng(37);
  const DomainBox box(2, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const auto mu = random_measure(rng, box, 3);
    const auto a = dyadic_approximation(mu, 1);
    if (detail::net_terminals(mu, a).size() > kEnumerationCap) continue;
    EXPECT_LE(compute_dalpha(a, mu, 0.8).value, dyadic_upper_bound(mu, 1, 0.8) + 1e-9);
  }
}

TEST(DyadicProbe, SlopeSign) {
  const auto leb = CellWeights::lebesgue(DomainBox(2, 1.0));
  std::vector<double> js, low, high;
  for (int j = 1; j <= 6; ++j) {
    js.push_back(j);
    low.push_back(dyadic_probe_cost(leb, j, 0.4));
    high.push_back(dyadic_upper_bound(leb, j, 0.9));
  }
  EXPECT_GT(log2_slope(js, low), 0.0);
  EXPECT_LE(log2_slope(js, high), 2 * (1 - 0.9) - 1 + 0.05);
  EXPECT_THROW(dyadic_upper_bound(leb, 2, 0.4), ThresholdError);
}

TEST(Sandwich, Threshold) {
  EXPECT_THROW(sandwich_report(fixtures::y_source(), fixtures::y_sinks(), 0.5, 2.0), ThresholdError);
}

TEST(Sandwich, YAtThreeQuarters) {
  const auto rep = sandwich_report(fixtures::y_source(), fixtures::y_sinks(), 0.75, 2.0, 0, 3);
  EXPECT_NEAR(rep.record.exponent, 0.5, 1e-15);
  EXPECT_NEAR(rep.record.w_p, std::sqrt(1.09), 1e-12);
  EXPECT_LE(rep.record.w_lower, rep.record.dalpha_upper);
  EXPECT_TRUE(std::isfinite(rep.record.ratio));
  EXPECT_NEAR(rep.record.ratio, rep.record.dalpha_upper / std::pow(std::sqrt(1.09), 0.5), 1e-12);
  ASSERT_EQ(rep.dyadic.size(), 4u);
  for (const auto& r : rep.dyadic) {
    EXPECT_LE(r.hierarchical, r.rhs * (1 + 1e-12));
    EXPECT_GE(r.route, rep.record.dalpha_upper - 1e-9);
    EXPECT_LE(r.middle, r.middle_bound * (1 + 1e-12));
  }
  EXPECT_THROW(sandwich_report(fixtures::y_source(), fixtures::y_sinks(), 0.75, 1.2), PreconditionError);
}

TEST(Sandwich, IdenticalMeasures) {
  const auto a = fixtures::y_sinks();
  const auto rep = sandwich_report(a, a, 0.8, 1.25, 0, 0);
  EXPECT_EQ(rep.record.w_lower, 0.0);
  EXPECT_EQ(rep.record.dalpha_upper, 0.0);
  EXPECT_EQ(rep.record.w_p, 0.0);
  EXPECT_EQ(rep.record.ratio, 0.0);
}

TEST(Sandwich, LowerBelowUpperOnRandomInstances) {
  Rng rng(1);
  const DomainBox box(2, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const auto a = random_measure(rng, box, 1 + trial % 3), b = random_measure(rng, box, 1 + (trial / 3) % 3);
    for (double alpha : {0.6, 0.75, 0.9})
      EXPECT_LE(dalpha_lower_bound(a, b, alpha), compute_dalpha(a, b, alpha).value + 1e-9);
  }
}
