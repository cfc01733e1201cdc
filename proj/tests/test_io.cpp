#include <gtest/gtest.h>

#include <sstream>

#include "branched/io.hpp"
#include "branched/random_instances.hpp"
#include "fixtures.hpp"

using namespace branched;

TEST(Json, InstanceRoundTrip) {
  Rng rng(2);
  const DomainBox box(3, 2.5, Point{-1.0, 0.5, 0.0});
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_measure(rng, box, 1 + trial % 6), b = random_measure(rng, box, 1 + trial % 4);
    std::ostringstream os;
    write_instance(os, a, b);
    const Instance back = parse_instance(os.str());
    EXPECT_EQ(back.box, box);
    ASSERT_EQ(back.mu0.size(), a.size());
    ASSERT_EQ(back.mu1.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_LE(distance(back.mu0[i].x, a[i].x), 1e-12);
      EXPECT_NEAR(back.mu0[i].mass, a[i].mass, 1e-12);
    }
    for (std::size_t i = 0; i < b.size(); ++i) EXPECT_NEAR(back.mu1[i].mass, b[i].mass, 1e-12);
  }
}

TEST(Json, MeasureRoundTrip) {
  const auto mu = fixtures::y_sinks();
  std::ostringstream os;
  write_measure(os, mu);
  const auto back = parse_measure(os.str());
  EXPECT_EQ(back.box(), mu.box());
  EXPECT_EQ(back.size(), 2u);
}

TEST(Json, PlanRoundTrip) {
  const TrafficPlan q = fixtures::y_plan();
  std::ostringstream os;
  write_plan(os, q);
  const TrafficPlan back = parse_plan(os.str());
  ASSERT_EQ(back.curves.size(), 2u);
  EXPECT_NEAR(energy_C(back, 0.5), energy_C(q, 0.5), 1e-12);
  EXPECT_EQ(back.curves[0].times, q.curves[0].times);
}

TEST(Json, OriginOptional) {
  const auto mu = parse_measure(R"({"dim": 1, "L": 2, "atoms": [{"x": [1.5], "m": 1}]})");
  EXPECT_EQ(mu.box().origin, Point{0.0});
}

TEST(Json, Errors) {
  try {
    parse_instance("{\n  \"dim\": 2,\n  \"L\": 1\n  \"mu0\": []\n}", "bad.json");
    FAIL() << "no exception";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.json"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos);
  }
  try {
    parse_measure(R"({"dim": 2, "L": 1, "atoms": [{"x": [0.1, 0.2]}]})", "m.json");
    FAIL() << "no exception";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("atoms[0]"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_measure(R"({"dim": 2, "L": 1, "atoms": [{"x": [0.1], "m": 1}]})"), ParseError);
  EXPECT_THROW(parse_measure(R"({"dim": 2, "L": 1, "atoms": [{"x": [3, 0.1], "m": 1}]})"), DomainError);
  EXPECT_THROW(read_instance_file("/nonexistent/instance.json"), Error);
}

TEST(PathCsv, RoundTrip) {
  Rng rng(6);
  const DomainBox box(2, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto path = random_path(rng, box, 1 + trial % 4, 6);
    std::ostringstream os;
    write_path_csv(os, path);
    const auto back = parse_path_csv(os.str(), box);
    ASSERT_EQ(back.slices().size(), path.slices().size());
    for (double alpha : {0.3, 0.8}) EXPECT_NEAR(total_F(back, alpha), total_F(path, alpha), 1e-12);
    EXPECT_LE(back.kinematic_defect(), 1e-12);
  }
}

TEST(PathCsv, YHeader) {
  const auto path = plan_to_path(fixtures::y_plan(), 4);
  std::ostringstream os;
  write_path_csv(os, path);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "time,atom,x0,x1,mass,v0,v1");
  const auto back = parse_path_csv(os.str(), fixtures::y_box());
  EXPECT_NEAR(total_F(back, 0.5), 1.3, 1e-9);
}

TEST(PathCsv, Errors) {
  EXPECT_THROW(parse_path_csv("", fixtures::unit_square()), ParseError);
  EXPECT_THROW(parse_path_csv("time,atom,x0,x1,mass,v0,v1\n0,0,0.1,0.1,1,0\n", fixtures::unit_square()), ParseError);
  EXPECT_THROW(parse_path_csv("time,atom,x0,x1,mass,v0,v1\n0,0,0.1,abc,1,0,0\n", fixtures::unit_square()), ParseError);
}
