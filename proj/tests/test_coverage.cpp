#include <gtest/gtest.h>

#include <limits>
#include <random>

#include "cegnn/coverage.hpp"

using namespace cegnn;

namespace {

SignalGrid tank_grid() {
  const Plant tank = make_water_tank();
  return {make_setting_space(tank, 2, 20.0, std::vector<Range>{{10.0, 10.0}}), 0.25};
}

SignalGrid unit_grid(std::size_t pieces) {
  SettingSpace sp;
  sp.ref = {{0.0, 1.0}};
  sp.pieces = pieces;
  sp.horizon = 1.0;
  return {sp, 0.25};
}

}  // namespace

TEST(Beta, SplitsPieceMajor) {
  const std::vector<double> p{1.0, 2.0, 3.0, 4.0};
  const auto pieces = beta(p, 2, 2);
  ASSERT_EQ(pieces.size(), 2u);
  EXPECT_EQ(pieces[0], (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(pieces[1], (std::vector<double>{3.0, 4.0}));
  EXPECT_EQ(beta_inv(pieces), p);
}

TEST(Beta, RoundTripOnRandomPoints) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(-5, 5);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> p(6);
    for (auto& v : p) v = U(rng);
    EXPECT_EQ(beta_inv(beta(p, 3, 2)), p);
  }
  EXPECT_THROW(beta(std::vector<double>{1, 2, 3}, 2, 2), std::invalid_argument);
}

TEST(Beta, SettingAtMapsPiecesToTime) {
  const SignalGrid g = tank_grid();
  const auto s = g.space.setting_at(std::vector<double>{10.0, 8.5, 11.5});
  EXPECT_EQ(s.x0, std::vector<double>{10.0});
  EXPECT_EQ(s.ref[0][0], 8.5);
  EXPECT_EQ(s.ref[1][0], 11.5);
  EXPECT_EQ(s.piece_at(9.99), 0u);
  EXPECT_EQ(s.piece_at(10.0), 1u);
  EXPECT_EQ(s.piece_at(20.0), 1u);
  EXPECT_EQ(g.space.embed(s), (Point{10.0, 8.5, 11.5}));
}

TEST(EpsNet, TankHasSixtyFourCenters) {
  const auto net = build_eps_net(tank_grid());
  ASSERT_EQ(net.size(), 64u);
  EXPECT_EQ(net.front(), (Point{10.0, 8.25, 8.25}));
  EXPECT_EQ(net[1], (Point{10.0, 8.25, 8.75}));
  EXPECT_EQ(net.back(), (Point{10.0, 11.75, 11.75}));
}

TEST(EpsNet, UnitIntervalOnePiece) {
  const auto net = build_eps_net(unit_grid(1));
  ASSERT_EQ(net.size(), 2u);
  EXPECT_EQ(net[0], Point{0.25});
  EXPECT_EQ(net[1], Point{0.75});
}

TEST(EpsNet, CoversTheBoxAndIsSeparated) {
  const SignalGrid g = tank_grid();
  const auto net = build_eps_net(g);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> U(0, 1);
  for (int i = 0; i < 1000; ++i) {
    const Point q = g.space.from_unit(std::vector<double>{U(rng), U(rng), U(rng)});
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : net) best = std::min(best, sup_distance(q, c));
    ASSERT_LE(best, g.eps + 1e-12);
  }
  EXPECT_TRUE(is_delta_separated(net, 2 * g.eps - 1e-9).separated);
  EXPECT_FALSE(is_delta_separated(net, 2 * g.eps).separated);
}

TEST(EpsNet, RemovingAnyCenterLeavesAGap) {
  // Minimality: the center of each cell is only within eps of its own center.
  const auto net = build_eps_net(tank_grid());
  for (std::size_t i = 0; i < net.size(); i += 9) {
    for (std::size_t j = 0; j < net.size(); ++j) {
      if (j != i) {
        ASSERT_GT(sup_distance(net[i], net[j]), 0.25);
      }
    }
  }
}

TEST(EpsNet, NonIntegralCellCountRejected) {
  SignalGrid g = unit_grid(1);
  g.eps = 0.3;
  EXPECT_THROW(build_eps_net(g), ConfigError);
}

TEST(EpsNet, CapIsEnforced) {
  EXPECT_THROW(build_eps_net(tank_grid(), 10), ConfigError);
  try {
    build_eps_net(tank_grid(), 10);
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("64"), std::string::npos);
  }
}

TEST(Separation, Examples) {
  EXPECT_TRUE(is_delta_separated({{0.0}, {1.0}}, 0.5).separated);
  const auto r = is_delta_separated({{0.0, 0.0}, {0.3, 0.2}, {2.0, 2.0}}, 0.5);
  EXPECT_FALSE(r.separated);
  ASSERT_TRUE(r.violating.has_value());
  EXPECT_EQ(r.violating->first, 0u);
  EXPECT_EQ(r.violating->second, 1u);
  EXPECT_DOUBLE_EQ(r.distance, 0.3);
  EXPECT_FALSE(is_delta_separated({{0.0}, {0.5}}, 0.5).separated);  // strict
  EXPECT_TRUE(is_delta_separated({}, 1.0).separated);
}

TEST(Coverage, ZeroHalfFull) {
  CoverageTracker c(unit_grid(1), 2);  // 4 cells on [0,1]
  EXPECT_EQ(c.total_cells(), 4.0);
  EXPECT_EQ(c.ratio(), 0.0);
  c.record_visit(std::vector<double>{0.1});
  c.record_visit(std::vector<double>{0.3});
  EXPECT_EQ(c.ratio(), 0.5);
  c.record_visit(std::vector<double>{0.6});
  c.record_visit(std::vector<double>{0.9});
  EXPECT_EQ(c.ratio(), 1.0);
}

TEST(Coverage, MonotoneAndBounded) {
  const SignalGrid g = tank_grid();
  CoverageTracker c(g, 2);
  EXPECT_EQ(c.total_cells(), 256.0);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(0, 1);
  double last = 0.0;
  for (int i = 0; i < 2000; ++i) {
    c.record_visit(g.space.from_unit(std::vector<double>{U(rng), U(rng), U(rng)}));
    const double r = c.ratio();
    ASSERT_GE(r, last);
    ASSERT_LE(r, 1.0);
    last = r;
  }
  EXPECT_EQ(last, 1.0);
}

TEST(Coverage, OutOfBoxVisitIsClamped) {
  CoverageTracker c(unit_grid(1), 2);
  c.record_visit(std::vector<double>{1.7});
  EXPECT_EQ(c.clamped_visits(), 1u);
  EXPECT_EQ(c.ratio(), 0.25);
}

TEST(Coverage, SubsampledAboveCap) {
  SignalGrid g = unit_grid(4);  // 2^4 eps cells, 8^4 tracking cells at factor 4
  CoverageTracker c(g, 4, 100, 9);
  EXPECT_EQ(c.ratio(), 0.0);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(0, 1);
  for (int i = 0; i < 40000; ++i) c.record_visit(std::vector<double>{U(rng), U(rng), U(rng), U(rng)});
  EXPECT_GT(c.ratio(), 0.9);
}
