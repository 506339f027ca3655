#include <gtest/gtest.h>

#include "cegnn/controllers.hpp"
#include "cegnn/falsifier.hpp"

using namespace cegnn;

namespace {

struct Tank {
  Plant plant = make_water_tank();
  PidController pid{PidGains{32.0, 16.0, 0.0, -10.0, 10.0, 0.1}};
  ZeroController zero{1};
  SettingSpace space = make_setting_space(plant, 2, 20.0, std::vector<Range>{{10.0, 10.0}});

  System with(const Controller& c) const { return {&plant, &c, 0.1, 10, nullptr}; }
  FalsifyConfig cfg(std::size_t trials, std::uint64_t seed) const {
    FalsifyConfig f;
    f.trials = trials;
    f.seed = seed;
    f.space = space;
    return f;
  }
};

stl::FormulaPtr stabilization() {
  return stl::build_property(stl::PropertyKind::Stabilization, {{"eps_r", 0.01},
                                                                {"T1", 0},
                                                                {"T2", 3.5},
                                                                {"T3", 0},
                                                                {"T4", 1.5},
                                                                {"e", 0.025},
                                                                {"T_sim", 20}});
}

}  // namespace

TEST(Falsify, TrueHasNoCounterexamples) {
  Tank t;
  const auto r = falsify(t.with(t.pid), stl::make_true(), t.cfg(30, 1));
  EXPECT_TRUE(r.counterexamples.empty());
  EXPECT_EQ(r.examples.size(), 30u);
  EXPECT_EQ(r.trials.size(), 30u);
}

TEST(Falsify, UnsatisfiableBoundGivesOnlyCounterexamples) {
  Tank t;
  const auto r = falsify(t.with(t.pid), stl::parse_formula("y < -1e18"), t.cfg(25, 2));
  EXPECT_TRUE(r.examples.empty());
  EXPECT_EQ(r.counterexamples.size(), 25u);
}

TEST(Falsify, ZeroControllerViolatesStabilization) {
  Tank t;
  const auto r = falsify(t.with(t.zero), stabilization(), t.cfg(50, 3));
  ASSERT_FALSE(r.counterexamples.empty());
  for (std::size_t i = 1; i < r.counterexamples.size(); ++i)
    EXPECT_LE(r.counterexamples[i - 1].rho, r.counterexamples[i].rho);
}

TEST(Falsify, NominalSatisfiesStabilization) {
  Tank t;
  const auto r = falsify(t.with(t.pid), stabilization(), t.cfg(40, 4));
  EXPECT_TRUE(r.counterexamples.empty()) << r.counterexamples.front().rho;
}

TEST(Falsify, ReproducibleBitwise) {
  Tank t;
  const auto a = falsify(t.with(t.zero), stabilization(), t.cfg(40, 5));
  const auto b = falsify(t.with(t.zero), stabilization(), t.cfg(40, 5));
  ASSERT_EQ(a.trials.size(), b.trials.size());
  for (std::size_t i = 0; i < a.trials.size(); ++i) {
    EXPECT_EQ(a.trials[i].point, b.trials[i].point);
    EXPECT_EQ(a.trials[i].rho, b.trials[i].rho);
    EXPECT_EQ(a.trials[i].phase, b.trials[i].phase);
  }
}

TEST(Falsify, ThreadCountDoesNotChangeResults) {
  Tank t;
  auto c1 = t.cfg(40, 6), c4 = t.cfg(40, 6);
  c4.threads = 4;
  const auto a = falsify(t.with(t.zero), stabilization(), c1);
  const auto b = falsify(t.with(t.zero), stabilization(), c4);
  ASSERT_EQ(a.trials.size(), b.trials.size());
  for (std::size_t i = 0; i < a.trials.size(); ++i) EXPECT_EQ(a.trials[i].rho, b.trials[i].rho);
}

TEST(Falsify, VerdictsReproduceOnResimulation) {
  Tank t;
  const auto phi = stabilization();
  const System sys = t.with(t.zero);
  const auto r = falsify(sys, phi, t.cfg(40, 7));
  for (const auto& v : r.trials) {
    const auto again = evaluate_setting(sys, *phi, v.setting, false);
    ASSERT_NEAR(again.rho, v.rho, 1e-12);
    ASSERT_EQ(again.counterexample(), v.counterexample());
  }
}

TEST(Falsify, BestSoFarNeverIncreases) {
  Tank t;
  const auto r = falsify(t.with(t.pid), stabilization(), t.cfg(60, 8));
  ASSERT_EQ(r.best_so_far.size(), r.trials.size());
  for (std::size_t i = 1; i < r.best_so_far.size(); ++i) EXPECT_LE(r.best_so_far[i], r.best_so_far[i - 1]);
}

TEST(Falsify, CoverageNeverDecreases) {
  Tank t;
  CoverageTracker cov(SignalGrid{t.space, 0.25}, 2);
  double last = 0.0;
  for (std::uint64_t s = 0; s < 4; ++s) {
    const auto r = falsify(t.with(t.pid), stabilization(), t.cfg(20, 10 + s), &cov);
    EXPECT_GE(r.coverage, last);
    last = r.coverage;
  }
  EXPECT_GT(last, 0.0);
}

TEST(Falsify, HorizonLongerThanSimulationRejected) {
  Tank t;
  EXPECT_THROW(falsify(t.with(t.pid), stl::parse_formula("ev_[0,30] (y > 0)"), t.cfg(5, 1)), std::invalid_argument);
}

TEST(Falsify, MatchingPropertyNeedsReference) {
  Tank t;
  const auto phi = stl::build_property(stl::PropertyKind::Matching, {{"e", 0.5}, {"T_sim", 20}});
  EXPECT_THROW(falsify(t.with(t.pid), phi, t.cfg(5, 1)), std::invalid_argument);
  System sys = t.with(t.pid);
  sys.reference = &t.pid;
  const auto r = falsify(sys, phi, t.cfg(10, 1));
  EXPECT_TRUE(r.counterexamples.empty());
}

TEST(Matching, EmptySettings) {
  Tank t;
  const auto r = matching_test(t.with(t.zero), stabilization(), {});
  EXPECT_TRUE(r.trials.empty());
  EXPECT_TRUE(r.counterexamples.empty());
}

TEST(Matching, NominalOnGridAndZeroedNet) {
  Tank t;
  const auto settings = eps_net_settings(SignalGrid{t.space, 0.25});
  EXPECT_TRUE(matching_test(t.with(t.pid), stabilization(), settings).counterexamples.empty());
  EXPECT_FALSE(matching_test(t.with(t.zero), stabilization(), settings).counterexamples.empty());
}

TEST(Generalisation, TrialsStayOutsideExclusion) {
  Tank t;
  const auto training = eps_net_settings(SignalGrid{t.space, 0.25});
  const double radius = 0.05;
  const auto r = generalisation_test(t.with(t.pid), stabilization(), t.cfg(60, 9), training, radius);
  ASSERT_EQ(r.trials.size(), 60u);
  const auto log = trial_log(r, t.space.dim());
  EXPECT_EQ(log.size(), 60u);
  for (const auto& v : r.trials) {
    for (const auto& s : training) ASSERT_GT(sup_distance(v.point, t.space.embed(s)), radius);
  }
}

TEST(Generalisation, WholeBoxExcludedIsExhausted) {
  Tank t;
  FalsifyConfig c = t.cfg(10, 1);
  c.max_rejections = 50;
  const ControlSetting mid = t.space.setting_at(std::vector<double>{10.0, 10.0, 10.0});
  EXPECT_THROW(generalisation_test(t.with(t.pid), stabilization(), c, {mid}, 5.0), SearchSpaceExhausted);
}

TEST(Generalisation, NoExclusionIsPlainFalsify) {
  Tank t;
  const auto a = generalisation_test(t.with(t.zero), stabilization(), t.cfg(20, 2), {}, 0.1);
  const auto b = falsify(t.with(t.zero), stabilization(), t.cfg(20, 2));
  ASSERT_EQ(a.trials.size(), b.trials.size());
  for (std::size_t i = 0; i < a.trials.size(); ++i) EXPECT_EQ(a.trials[i].point, b.trials[i].point);
}
