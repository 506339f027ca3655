#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cegnn/config.hpp"
#include "cegnn/io.hpp"

using namespace cegnn;
using io::Json;

namespace {

config::ExperimentConfig tank_config() {
  return config::parse(io::read_json(std::string(CEGNN_SOURCE_DIR) + "/configs/tank.json"));
}

}  // namespace

TEST(Prop2, BoundValues) {
  const Plant lag = make_first_order_lag();
  const auto eta = prop2_bound(lag, 0.1, 1.0, 0.5);
  ASSERT_EQ(eta.size(), 3u);
  EXPECT_EQ(eta[0], 0.0);
  EXPECT_NEAR(eta[2], 0.1 * (std::exp(1.0) - 1.0), 1e-15);
  EXPECT_NEAR(eta[2], 0.171828, 1e-6);
  for (double v : prop2_bound(lag, 0.0, 1.0, 0.1)) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(prop2_bound(make_water_tank(), 0.1, 1.0, 0.1), std::invalid_argument);
}

TEST(Prop2, FirstOrderLagClosedForm) {
  // dx = -x + u: a constant input offset eps gives gap eps (1 - e^-t)
  const Plant lag = make_first_order_lag();
  const std::size_t K = 200;
  std::vector<std::vector<double>> a(K, {0.3}), b(K, {0.4});
  const auto d = check_deviation(lag, {0.0}, a, b, 0.1, 0.01, 10);
  for (std::size_t k = 0; k <= K; ++k) {
    const double t = 0.01 * static_cast<double>(k);
    EXPECT_NEAR(d.gap[k], 0.1 * (1.0 - std::exp(-t)), 1e-9);
  }
  EXPECT_LE(d.worst_excess, 0.0);
  EXPECT_LT(d.max_ratio, 1.0);
}

TEST(Prop2, RandomPerturbationsStayBelowBound) {
  const Plant lin = make_linear2d();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-1, 1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<double>> a(100), b(100);
    for (std::size_t k = 0; k < 100; ++k) {
      a[k] = {U(rng)};
      b[k] = {a[k][0] + 0.05 * U(rng)};
    }
    const auto d = check_deviation(lin, {U(rng), U(rng)}, a, b, 0.05, 0.02, 10);
    EXPECT_LE(d.worst_excess, 1e-12);
  }
}

TEST(Prop2, MismatchedSequences) {
  EXPECT_THROW(check_deviation(make_first_order_lag(), {0.0}, {{0.0}}, {}, 0.1, 0.1, 1), std::invalid_argument);
}

TEST(Config, TankParses) {
  const auto c = tank_config();
  EXPECT_EQ(c.plant_id, "water_tank");
  EXPECT_EQ(c.properties.size(), 3u);
  EXPECT_EQ(c.falsify.trials, 300u);
  EXPECT_EQ(c.net.mode, nn::InputMode::Error);
  ASSERT_TRUE(c.pstl.has_value());
  const auto e = config::assemble(c);
  EXPECT_EQ(eps_net_settings(e->grid).size(), 64u);
}

TEST(Config, UnknownKeyRejected) {
  auto j = io::read_json(std::string(CEGNN_SOURCE_DIR) + "/configs/tank.json");
  j["loop"]["max_iter"] = 3;
  try {
    config::parse(j);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("max_iter"), std::string::npos);
  }
}

TEST(Config, BadEpsRejected) {
  auto c = tank_config();
  c.eps = 0.3;
  EXPECT_THROW(config::assemble(c), ConfigError);
}

TEST(Config, EffectiveConfigRoundTrips) {
  const auto c = tank_config();
  const auto j = config::to_json(c);
  EXPECT_EQ(config::to_json(config::parse(j)), j);
}

TEST(Config, SeedOverrideDerivesAllSeeds) {
  auto c = tank_config();
  config::override_seeds(c, 100);
  EXPECT_EQ(c.net_seed, 100u);
  EXPECT_EQ(c.falsify.seed, 103u);
  EXPECT_EQ(c.confirm_seed, 105u);
}

TEST(Config, PropertyNeedsKindOrFormula) {
  auto j = io::read_json(std::string(CEGNN_SOURCE_DIR) + "/configs/tank.json");
  j["properties"] = Json::array({Json{{"params", Json::object()}}});
  EXPECT_THROW(config::parse(j), ConfigError);
  j["properties"] = Json::array({Json{{"formula", "alw_[0,20] (y > 0)"}}});
  EXPECT_NO_THROW(config::parse(j));
}

TEST(Loop, InitialTrainUsesTheGrid) {
  auto c = tank_config();
  c.initial_train.epochs = 2;
  const auto e = config::assemble(c);
  const auto st = initial_train(e->problem(), e->loop_config());
  ASSERT_EQ(st.reports.size(), 1u);
  EXPECT_EQ(st.reports[0].n_R, 64u);
  EXPECT_EQ(st.data.rows(), 64u * 200u);
  EXPECT_DOUBLE_EQ(st.reports[0].coverage, 0.25);
}

TEST(Loop, ZeroNominalViolatesPremise) {
  auto c = tank_config();
  c.nominal.type = "zero";
  const auto e = config::assemble(c);
  EXPECT_THROW(initial_train(e->problem(), e->loop_config()), PremiseViolation);
}

TEST(Loop, DatasetOnlyGrowsAndReportsAreConsistent) {
  auto c = tank_config();
  c.initial_train.epochs = 5;
  c.retrain.epochs = 5;
  c.falsify.trials = 40;
  c.confirm_trials = 30;
  c.max_iterations = 2;
  const auto e = config::assemble(c);
  std::vector<std::size_t> groups;
  const auto st = run_loop(e->problem(), e->loop_config(), [&](const LoopState& s) { groups.push_back(s.data.groups()); });
  ASSERT_GE(st.reports.size(), 2u);
  for (std::size_t i = 1; i < groups.size(); ++i) EXPECT_GE(groups[i], groups[i - 1]);
  for (std::size_t i = 1; i < st.reports.size(); ++i) {
    const auto& r = st.reports[i];
    EXPECT_LE(r.n_C_hat, r.n_C);
    EXPECT_LE(r.n_C_tilde, r.n_C);
    EXPECT_GE(r.n_R, st.reports[i - 1].n_R);
    if (!r.terminated) {
      EXPECT_EQ(r.n_R, st.reports[i - 1].n_R + r.n_C_hat + r.n_E);
    }
  }
  EXPECT_EQ(rollup(st.reports).size(), st.reports.size());
}

TEST(Loop, Deterministic) {
  auto c = tank_config();
  c.initial_train.epochs = 5;
  c.retrain.epochs = 5;
  c.falsify.trials = 30;
  c.confirm_trials = 20;
  c.max_iterations = 1;
  const auto e = config::assemble(c);
  const auto a = run_loop(e->problem(), e->loop_config());
  const auto b = run_loop(e->problem(), e->loop_config());
  EXPECT_EQ(a.net->params(), b.net->params());
  ASSERT_EQ(a.reports.size(), b.reports.size());
  for (std::size_t i = 0; i < a.reports.size(); ++i) {
    EXPECT_EQ(a.reports[i].n_C, b.reports[i].n_C);
    EXPECT_EQ(a.reports[i].selection, b.reports[i].selection);
  }
}
