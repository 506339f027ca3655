// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero when any of them fails.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include "cegnn/config.hpp"
#include "cegnn/io.hpp"
#include "cegnn/mining.hpp"
#include "oracles.hpp"

using namespace cegnn;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

double elapsed(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

config::ExperimentConfig load(const std::string& name) {
  return config::parse(io::read_json(std::string(CEGNN_SOURCE_DIR) + "/configs/" + name));
}

// Robustness against the brute-force oracle on random formulas and traces.
void robustness_matches_oracle(Outcome& o) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  oracle::FormulaGen gen(2025);
  double worst = 0.0;
  std::size_t bad = 0;
  for (int i = 0; i < 500; ++i) {
    const int depth = std::uniform_int_distribution<int>(0, 3)(rng);
    auto f = gen.formula(depth);
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 50)(rng);
    const auto tr = oracle::random_trace(rng, n, 0.5);
    const double fast = stl::robustness(*f, tr);
    const double slow = oracle::rob(*f, tr, 0);
    if (std::isinf(slow) || std::isinf(fast)) {
      bad += fast != slow;
      continue;
    }
    worst = std::max(worst, std::fabs(fast - slow));
    bad += std::fabs(fast - slow) > 1e-12;
  }
  const double t = elapsed(t0);
  o.detail << "500 cases, mismatches " << bad << ", max abs diff " << worst << ", " << t << " s ";
  o.require(bad == 0, "oracle agreement");
  o.require(t < 10.0, "time");
}

void tank_eps_net(Outcome& o) {
  const auto t0 = Clock::now();
  const auto e = config::assemble(load("tank.json"));
  const SignalGrid& g = e->grid;
  const auto net = build_eps_net(g);
  o.require(net.size() == 64, "64 centers");
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(0, 1);
  double far = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Point z(g.space.dim());
    for (double& v : z) v = U(rng);
    const Point q = g.space.from_unit(z);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : net) best = std::min(best, sup_distance(q, c));
    far = std::max(far, best);
  }
  o.require(far <= g.eps + 1e-12, "covering radius");
  o.require(is_delta_separated(net, 2 * g.eps - 1e-9).separated, "separation");
  const double t = elapsed(t0);
  o.require(t < 5.0, "time");
  o.detail << net.size() << " centers, worst distance to net " << far << " (eps " << g.eps << "), " << t << " s ";
}

void deviation_bound(Outcome& o) {
  const auto t0 = Clock::now();
  const Plant lag = make_first_order_lag();
  const double eps = 0.1, h = 0.01;
  const std::size_t K = 200;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-1, 1);
  double worst = -std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::vector<double>> a(K), b(K);
    for (std::size_t k = 0; k < K; ++k) {
      a[k] = {3.0 * U(rng)};
      b[k] = {a[k][0] + eps * U(rng)};
    }
    worst = std::max(worst, check_deviation(lag, {U(rng)}, a, b, eps, h, 10).worst_excess);
  }
  o.require(worst <= 1e-6, "random perturbations within bound");

  std::vector<std::vector<double>> a(K, {0.5}), b(K, {0.5 + eps});
  const auto d = check_deviation(lag, {0.0}, a, b, eps, h, 10);
  double analytic = 0.0;
  for (std::size_t k = 0; k <= K; ++k)
    analytic = std::max(analytic, std::fabs(d.gap[k] - eps * (1.0 - std::exp(-h * static_cast<double>(k)))));
  o.require(analytic <= 1e-9, "analytic gap");
  o.require(d.max_ratio < 1.0, "gap below bound");
  const double t = elapsed(t0);
  o.require(t < 10.0, "time");
  o.detail << "worst excess " << worst << ", analytic error " << analytic << ", ratio " << d.max_ratio << ", " << t
           << " s ";
}

struct LoopRun {
  LoopState st;
  double seconds = 0.0;
};

LoopRun run(const config::ExperimentConfig& c) {
  const auto t0 = Clock::now();
  const auto e = config::assemble(c);
  LoopRun r{run_loop(e->problem(), e->loop_config()), 0.0};
  r.seconds = elapsed(t0);
  return r;
}

double total_retrain(const LoopState& st) {
  double s = 0.0;
  for (const auto& r : st.reports) s += r.t_retrain;
  return s;
}

std::optional<LoopRun> clustered_tank;

void tank_loop(Outcome& o) {
  const auto c = load("tank.json");
  clustered_tank = run(c);
  const auto& st = clustered_tank->st;
  o.require(st.terminated, "terminated");
  o.require(st.reports.size() <= c.max_iterations + 1, "iteration budget");
  o.require(clustered_tank->seconds < 900.0, "time");
  o.require(st.reports.size() > 1 && st.reports[1].n_C > 0, "first iteration finds counterexamples");
  for (const auto& r : st.reports) {
    if (r.n_C >= 20) o.require(r.n_C_hat <= 0.15 * static_cast<double>(r.n_C), "selection ratio");
  }
  o.detail << "iterations " << st.reports.size() - 1 << ", n_C/n_C_hat:";
  for (std::size_t i = 1; i < st.reports.size(); ++i) o.detail << " " << st.reports[i].n_C << "/" << st.reports[i].n_C_hat;
  o.detail << ", " << clustered_tank->seconds << " s ";
}

void clustering_ablation(Outcome& o) {
  auto c = load("tank.json");
  c.selection.cluster = false;
  const auto off = run(c);
  o.require(off.st.terminated, "unclustered loop terminates");
  if (!clustered_tank) clustered_tank = run(load("tank.json"));
  const double on_t = total_retrain(clustered_tank->st), off_t = total_retrain(off.st);
  o.require(on_t < off_t, "clustering shortens retraining");
  o.detail << "retrain seconds clustered " << on_t << " vs unclustered " << off_t << ", unclustered iterations "
           << off.st.reports.size() - 1 << " ";
}

void combined_controllers(Outcome& o) {
  const auto c = load("tank_combined.json");
  const auto e = config::assemble(c);
  o.require(e->combined.size() == 2, "two controllers");
  if (e->combined.size() != 2) return;

  auto single = [&](const std::string& kind) {
    auto cc = c;
    cc.properties.erase(std::remove_if(cc.properties.begin(), cc.properties.end(),
                                       [&](const config::PropertySpec& p) { return p.kind != kind; }),
                        cc.properties.end());
    return config::build_spec(cc);
  };
  const auto overshoot = single("overshoot"), settling = single("settling");
  const auto settings = eps_net_settings(e->grid);
  auto worst = [&](const Controller& ctrl, const stl::FormulaPtr& phi) {
    const System sys{&e->plant, &ctrl, c.h, c.substeps, nullptr};
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& s : settings) lo = std::min(lo, evaluate_setting(sys, *phi, s, false).rho);
    return lo;
  };
  const double c1_ov = worst(*e->combined[0], overshoot), c1_st = worst(*e->combined[0], settling);
  const double c2_ov = worst(*e->combined[1], overshoot), c2_st = worst(*e->combined[1], settling);
  o.require(c1_ov > 0 && c1_st <= 0, "first controller: overshoot only");
  o.require(c2_st > 0 && c2_ov <= 0, "second controller: settling only");

  const auto both = stl::make_conjunction({overshoot, settling});
  const auto stitched = generate_combined_traces(e->plant, {e->combined[0].get(), e->combined[1].get()}, e->phi,
                                                 settings, c.combined->segment, c.h, c.substeps);
  double stitched_min = std::numeric_limits<double>::infinity();
  for (const auto& b : stitched.behaviours) stitched_min = std::min(stitched_min, stl::robustness(*both, to_trace(b)));
  o.require(!stitched.behaviours.empty() && stitched_min > 0, "stitched traces satisfy both");

  const auto loop = run(c);
  o.require(loop.st.terminated, "combined loop terminates");
  o.detail << "C1 overshoot/settling " << c1_ov << "/" << c1_st << ", C2 " << c2_ov << "/" << c2_st << ", stitched "
           << stitched.behaviours.size() << "/" << settings.size() << " min rho " << stitched_min << ", loop iterations "
           << loop.st.reports.size() - 1 << " ";
}

void pstl_volume(Outcome& o) {
  const std::vector<pstl::ParamDecl> box{{"a", pstl::Polarity::Increasing, 0.0, 1.0},
                                         {"b", pstl::Polarity::Increasing, 0.0, 1.0}};
  auto at = [](double a, double b) { return pstl::Valuation{{"a", a}, {"b", b}}; };
  const double ex = pstl::volume_underapprox({at(0.5, 0.8), at(0.8, 0.5)}, box);
  o.require(ex == 0.55, "two-point example");

  // Staircases: False iff b < height(a), height non-increasing and aligned to a 200 grid.
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> U(0, 1);
  double err_sum = 0.0;
  bool under = true;
  for (int trial = 0; trial < 20; ++trial) {
    const int steps = std::uniform_int_distribution<int>(1, 6)(rng);
    std::vector<int> cuts, heights;
    for (int i = 0; i < steps; ++i) {
      cuts.push_back(std::uniform_int_distribution<int>(1, 199)(rng));
      heights.push_back(std::uniform_int_distribution<int>(20, 200)(rng));
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.back() = 200;
    std::sort(heights.rbegin(), heights.rend());
    auto height = [&](double a) {
      for (int i = 0; i < steps; ++i)
        if (a < cuts[i] / 200.0) return heights[i] / 200.0;
      return 0.0;
    };
    // brute-force grid measure: count cells whose center is False
    std::size_t cells = 0;
    for (int i = 0; i < 200; ++i)
      for (int j = 0; j < 200; ++j) cells += (j + 0.5) / 200.0 < height((i + 0.5) / 200.0);
    const double truth = static_cast<double>(cells) / 40000.0;
    std::vector<pstl::Valuation> pts;
    while (pts.size() < 200) {
      const double a = U(rng), b = U(rng);
      if (b < height(a)) pts.push_back(at(a, b));
    }
    const double v = pstl::volume_underapprox(pts, box);
    under = under && v <= truth + 1e-12;
    err_sum += (truth - v) / truth;
  }
  const double mean_err = err_sum / 20.0;
  o.require(under, "under-approximation");
  o.require(mean_err <= 0.05, "mean relative error");

  const auto c = load("tank.json");
  const auto e = config::assemble(c);
  const auto& ps = *c.pstl;
  const auto p = pstl::build_phi_template(ps.signal, ps.params[0], ps.params[1], ps.params[2], ps.params[3]);
  const auto settings = sample_settings(e->grid.space, ps.settings, ps.seed);
  const auto ta = simulate_traces(e->plant, *e->nominal, settings, c.h, c.substeps);
  const auto tb = simulate_traces(e->plant, *e->nominal, settings, c.h, c.substeps);
  const double va = estimate_false_set(p, ta, ps.grid).volume_lower_bound;
  const double vb = estimate_false_set(p, tb, ps.grid).volume_lower_bound;
  double sigma = std::numeric_limits<double>::quiet_NaN();
  if (va > 0) sigma = pstl::policy_similarity(va, vb);
  o.require(sigma == 1.0, "identical controllers give similarity 1");
  o.detail << "example " << ex << ", staircase mean relative error " << mean_err << ", similarity " << sigma
           << " (False volume " << va << ") ";
}

void gradients_and_determinism(Outcome& o) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> U(-1, 1);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    nn::NetSpec s;
    s.hist = {1, 1, 1, 0};
    const std::size_t depth = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
    s.hidden.clear();
    for (std::size_t l = 0; l < depth; ++l)
      s.hidden.push_back({std::uniform_int_distribution<std::size_t>(2, 12)(rng), nn::Activation::Tanh});
    const nn::Net net(s, 1000 + i);
    std::vector<double> in(s.input_dim());
    for (double& v : in) v = U(rng);
    worst = std::max(worst, nn::gradient_check(net, in, std::vector<double>{U(rng)}).max_rel_error);
  }
  o.require(worst < 1e-5, "gradient check");

  auto c = load("tank.json");
  c.initial_train.epochs = 5;
  const auto e = config::assemble(c);
  const auto a = initial_train(e->problem(), e->loop_config());
  const auto b = initial_train(e->problem(), e->loop_config());
  const bool same = a.net->params() == b.net->params();
  o.require(same, "bitwise training determinism");
  o.detail << "50 nets, worst relative gradient error " << worst << ", repeated training identical: " << same << " ";
}

void zero_controller_falsified(Outcome& o) {
  const Plant tank = make_water_tank();
  const ZeroController zero{1};
  const auto phi = stl::build_property(stl::PropertyKind::Stabilization, {{"eps_r", 0.01},
                                                                          {"T1", 0},
                                                                          {"T2", 3.5},
                                                                          {"T3", 0},
                                                                          {"T4", 1.5},
                                                                          {"e", 0.025},
                                                                          {"T_sim", 20}});
  const System sys{&tank, &zero, 0.1, 10, nullptr};
  std::size_t found = 0;
  double drift = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    FalsifyConfig f;
    f.trials = 50;
    f.seed = seed;
    f.space = make_setting_space(tank, 2, 20.0, std::vector<Range>{{10.0, 10.0}});
    const auto r = falsify(sys, phi, f);
    found += !r.counterexamples.empty();
    for (const auto& v : r.counterexamples)
      drift = std::max(drift, std::fabs(evaluate_setting(sys, *phi, v.setting, false).rho - v.rho));
  }
  o.require(found == 10, "every seed finds a counterexample");
  o.require(drift <= 1e-12, "counterexamples re-verify");
  o.detail << "seeds with counterexample " << found << "/10, max re-simulation drift " << drift << " ";
}

}  // namespace

int main() {
  const std::vector<std::function<void(Outcome&)>> criteria{
      robustness_matches_oracle, tank_eps_net,         deviation_bound,
      tank_loop,                 clustering_ablation,  combined_controllers,
      pstl_volume,               gradients_and_determinism, zero_controller_falsified};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      criteria[i](o);
    } catch (const std::exception& ex) {
      o.pass = false;
      o.detail << "threw: " << ex.what();
    }
    failed += !o.pass;
    std::cout << "criterion " << i + 1 << ": " << (o.pass ? "PASS" : "FAIL") << " " << o.detail.str() << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
