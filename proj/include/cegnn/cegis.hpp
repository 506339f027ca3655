#pragma once

// The retraining loop: coverage-based initial training, matching and
// generalisation tests, counterexample selection, nominal replay, warm-start
// retraining and confirmation. Also the trajectory deviation bound checker.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cegnn/clustering.hpp"
#include "cegnn/coverage.hpp"
#include "cegnn/errors.hpp"
#include "cegnn/falsifier.hpp"
#include "cegnn/io.hpp"
#include "cegnn/neural_net.hpp"
#include "cegnn/parallel.hpp"
#include "cegnn/plant.hpp"
#include "cegnn/stl.hpp"

namespace cegnn {

struct LoopProblem {
  const Plant* plant = nullptr;
  const Controller* nominal = nullptr;
  stl::FormulaPtr phi;
  double h = 0.1;
  std::size_t substeps = 10;
  SignalGrid grid;  // its space is also the falsification box
  nn::NetSpec net;
  std::uint64_t net_seed = 0;
  /// Produces teacher behaviours; when empty the nominal controller is simulated.
  std::function<Behaviour(const ControlSetting&)> teacher;
};

struct LoopConfig {
  std::size_t max_iterations = 5;
  FalsifyConfig falsify;          // budget, seed and search parameters per iteration
  double exclusion_radius = 0.05;  // generalisation test
  SelectionConfig selection;
  std::optional<std::size_t> examples;  // examples mixed in per iteration; default = selected cex count
  std::size_t confirm_trials = 200;
  std::uint64_t confirm_seed = 1;
  nn::TrainConfig initial_train;
  nn::TrainConfig retrain;
  bool warm_start = true;
  std::size_t coverage_factor = 2;
  std::size_t threads = 1;
};

struct IterationReport {
  std::size_t iteration = 0;
  std::size_t n_T = 0;        // generalisation (or confirmation) trials
  std::size_t n_matching = 0;  // settings re-simulated by the matching test
  std::size_t n_C = 0;
  std::size_t n_C_hat = 0;    // after selection
  std::size_t n_E = 0;        // examples added
  std::size_t n_R = 0;        // training behaviours after the iteration
  std::size_t n_C_tilde = 0;  // counterexample settings still violated after retraining
  double t_test = 0.0, t_retrain = 0.0, t_retest = 0.0;  // seconds
  double coverage = 0.0;
  double train_mse = 0.0, val_mse = 0.0;
  bool confirmation = false;  // counterexamples came from a confirmation run
  bool terminated = false;    // confirmation run found nothing
  double min_rho = 0.0;
  nlohmann::json selection;
};

struct LoopState {
  std::shared_ptr<const nn::Net> net;
  nn::Dataset data;
  std::vector<IterationReport> reports;
  std::unique_ptr<CoverageTracker> coverage;
  bool terminated = false;

  std::vector<ControlSetting> settings() const {
    std::vector<ControlSetting> out;
    for (const auto& p : data.provenance) out.push_back(p.setting);
    return out;
  }
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Runs the teacher at each setting and checks it satisfies phi there.
inline std::vector<Behaviour> replay_nominal(const LoopProblem& pb, const std::vector<ControlSetting>& settings,
                                            std::size_t threads) {
  std::vector<Behaviour> out(settings.size());
  std::vector<double> rho(settings.size());
  parallel_for(settings.size(), threads, [&](std::size_t i) {
    out[i] = pb.teacher ? pb.teacher(settings[i])
                        : simulate_closed_loop(*pb.plant, *pb.nominal, settings[i], pb.h, pb.substeps);
    rho[i] = stl::robustness(*pb.phi, to_trace(out[i]), 0);
  });
  for (std::size_t i = 0; i < settings.size(); ++i) {
    if (!(rho[i] > 0.0)) {
      throw PremiseViolation("teacher violates the property (rho = " + io::fmt(rho[i]) +
                             ") at setting " + io::to_json(settings[i]).dump());
    }
  }
  return out;
}

}  // namespace detail

inline System make_system(const LoopProblem& pb, const Controller& c) {
  return System{pb.plant, &c, pb.h, pb.substeps, pb.nominal};
}

/// Simulates the nominal loop on the epsilon-net, checks the premise and
/// trains the first net. Report 0 carries n_R and the training errors.
inline LoopState initial_train(const LoopProblem& pb, const LoopConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  LoopState st;
  st.coverage = std::make_unique<CoverageTracker>(pb.grid, cfg.coverage_factor, 1e6, cfg.falsify.seed);
  const auto settings = eps_net_settings(pb.grid);
  const auto behaviours = detail::replay_nominal(pb, settings, cfg.threads);
  for (const auto& b : behaviours) {
    nn::add_behaviour(st.data, b, pb.net, "nominal", 0);
    st.coverage->record_visit(pb.grid.space.embed(b.setting));
  }
  auto net = std::make_shared<nn::Net>(pb.net, pb.net_seed);
  const nn::TrainResult tr = nn::train(*net, st.data, cfg.initial_train);
  st.net = net;
  IterationReport r;
  r.iteration = 0;
  r.n_R = st.data.groups();
  r.t_retrain = detail::seconds_since(t0);
  r.coverage = st.coverage->ratio();
  r.train_mse = tr.train_mse;
  r.val_mse = tr.val_mse;
  st.reports.push_back(r);
  return st;
}

/// One pass of the loop. Returns true when the net survived both tests and
/// the confirmation run.
inline bool retrain_iteration(const LoopProblem& pb, const LoopConfig& cfg, LoopState& st) {
  const std::size_t i = st.reports.size();
  IterationReport rep;
  rep.iteration = i;
  const auto t0 = std::chrono::steady_clock::now();
  nn::NetController ctrl(st.net);
  const System sys = make_system(pb, ctrl);

  const auto train_settings = st.settings();
  FalsifyResult m = matching_test(sys, pb.phi, train_settings, cfg.threads, false);
  FalsifyConfig fc = cfg.falsify;
  fc.space = pb.grid.space;
  fc.seed = cfg.falsify.seed + 1000003ULL * i;
  fc.threads = cfg.threads;
  FalsifyResult g = generalisation_test(sys, pb.phi, fc, train_settings, cfg.exclusion_radius, st.coverage.get());
  rep.n_matching = m.trials.size();
  rep.n_T = g.trials.size();

  std::vector<Verdict> cex = m.counterexamples;
  cex.insert(cex.end(), g.counterexamples.begin(), g.counterexamples.end());
  std::vector<Verdict> examples = g.examples;

  if (cex.empty()) {
    FalsifyConfig cc = fc;
    cc.trials = cfg.confirm_trials;
    cc.seed = cfg.confirm_seed;
    cc.exclusion.clear();
    cc.exclusion_radius = 0.0;
    FalsifyResult conf = falsify(sys, pb.phi, cc, st.coverage.get());
    rep.confirmation = true;
    rep.n_T = conf.trials.size();
    cex = conf.counterexamples;
    examples = conf.examples;
    if (cex.empty()) {
      rep.terminated = true;
      rep.t_test = detail::seconds_since(t0);
      rep.n_R = st.data.groups();
      rep.coverage = st.coverage->ratio();
      rep.train_mse = st.reports.back().train_mse;
      rep.val_mse = st.reports.back().val_mse;
      rep.min_rho = conf.trials.empty() ? 0.0 : conf.best_so_far.back();
      st.reports.push_back(rep);
      st.terminated = true;
      return true;
    }
  }
  rep.n_C = cex.size();
  rep.min_rho = cex.front().rho;
  for (const auto& v : cex) rep.min_rho = std::min(rep.min_rho, v.rho);

  std::vector<Candidate> cands;
  for (const auto& v : cex) cands.push_back({pb.grid.space.embed(v.setting), v.rho});
  SelectionConfig sc = cfg.selection;
  sc.seed = cfg.selection.seed + i;
  const Selection sel = select_cex(cands, sc);
  rep.n_C_hat = sel.chosen.size();
  rep.selection = selection_report(sel, cands);

  std::vector<Candidate> ex_cands;
  for (const auto& v : examples) ex_cands.push_back({pb.grid.space.embed(v.setting), v.rho});
  const std::size_t n_ex = cfg.examples.value_or(sel.chosen.size());
  const auto ex_idx = select_examples(ex_cands, sc.delta, n_ex);
  rep.t_test = detail::seconds_since(t0);

  // nominal replay and retraining
  const auto t1 = std::chrono::steady_clock::now();
  std::vector<ControlSetting> add;
  for (std::size_t k : sel.chosen) add.push_back(cex[k].setting);
  const std::size_t n_cex_add = add.size();
  for (std::size_t k : ex_idx) add.push_back(examples[k].setting);
  const auto replays = detail::replay_nominal(pb, add, cfg.threads);
  for (std::size_t k = 0; k < replays.size(); ++k) {
    nn::add_behaviour(st.data, replays[k], pb.net, k < n_cex_add ? "counterexample" : "example", i);
  }
  rep.n_E = ex_idx.size();
  std::shared_ptr<nn::Net> next = cfg.warm_start ? std::make_shared<nn::Net>(*st.net)
                                                 : std::make_shared<nn::Net>(pb.net, pb.net_seed + i);
  nn::TrainConfig tc = cfg.retrain;
  tc.seed = cfg.retrain.seed + i;
  const nn::TrainResult tr = nn::train(*next, st.data, tc);
  st.net = next;
  rep.t_retrain = detail::seconds_since(t1);
  rep.train_mse = tr.train_mse;
  rep.val_mse = tr.val_mse;
  rep.n_R = st.data.groups();

  // re-test the counterexample settings
  const auto t2 = std::chrono::steady_clock::now();
  nn::NetController after(st.net);
  std::vector<ControlSetting> cex_settings;
  for (const auto& v : cex) cex_settings.push_back(v.setting);
  const FalsifyResult re = matching_test(make_system(pb, after), pb.phi, cex_settings, cfg.threads, false);
  rep.n_C_tilde = re.counterexamples.size();
  rep.t_retest = detail::seconds_since(t2);
  rep.coverage = st.coverage->ratio();
  st.reports.push_back(rep);
  return false;
}

inline LoopState run_loop(const LoopProblem& pb, const LoopConfig& cfg,
                          const std::function<void(const LoopState&)>& on_iteration = {}) {
  if (cfg.max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");
  LoopState st = initial_train(pb, cfg);
  if (on_iteration) on_iteration(st);
  for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
    const bool done = retrain_iteration(pb, cfg, st);
    if (on_iteration) on_iteration(st);
    if (done) break;
  }
  return st;
}

// ---------------------------------------------------------------------------
// Reports

inline nlohmann::json to_json(const IterationReport& r) {
  return {{"iteration", r.iteration},   {"n_T", r.n_T},
          {"n_matching", r.n_matching}, {"n_C", r.n_C},
          {"n_C_hat", r.n_C_hat},       {"n_E", r.n_E},
          {"n_R", r.n_R},               {"n_C_tilde", r.n_C_tilde},
          {"t_test", r.t_test},         {"t_retrain", r.t_retrain},
          {"t_retest", r.t_retest},     {"coverage", r.coverage},
          {"train_mse", r.train_mse},   {"val_mse", std::isfinite(r.val_mse) ? nlohmann::json(r.val_mse) : nlohmann::json()},
          {"confirmation", r.confirmation}, {"terminated", r.terminated},
          {"min_rho", std::isfinite(r.min_rho) ? nlohmann::json(r.min_rho) : nlohmann::json("-inf")},
          {"selection", r.selection}};
}

/// One row per iteration with the columns i, n_T, n_C, n_C_hat, n_R, n_C_tilde,
/// t_test, t_retrain, t_retest (plus coverage and training errors).
inline io::CsvTable rollup(const std::vector<IterationReport>& reps) {
  io::CsvTable t({"i", "n_T", "n_C", "n_C_hat", "n_R", "n_C_tilde", "t_test", "t_retrain", "t_retest", "coverage",
                  "train_mse", "val_mse"});
  char buf[32];
  auto sec = [&](double s) {
    std::snprintf(buf, sizeof buf, "%.3f", s);
    return std::string(buf);
  };
  for (const auto& r : reps) {
    t.add({std::to_string(r.iteration), std::to_string(r.n_T), std::to_string(r.n_C), std::to_string(r.n_C_hat),
           std::to_string(r.n_R), std::to_string(r.n_C_tilde), sec(r.t_test), sec(r.t_retrain), sec(r.t_retest),
           io::fmt(r.coverage), io::fmt(r.train_mse), std::isfinite(r.val_mse) ? io::fmt(r.val_mse) : ""});
  }
  return t;
}

/// Outcome wording: falsification can only fail to find counterexamples.
inline std::string outcome_text(const LoopState& st, std::size_t budget) {
  const auto& last = st.reports.back();
  if (st.terminated) {
    return "no counterexample found within budget " + std::to_string(budget) + " at coverage " + io::fmt(last.coverage);
  }
  return "loop stopped at the iteration limit without a clean confirmation run (coverage " + io::fmt(last.coverage) + ")";
}

// ---------------------------------------------------------------------------
// Trajectory deviation bound

/// eta(t) = (eps * L_u / L_x) (exp(L_x t) - 1) on the grid t_k = k h.
inline std::vector<double> prop2_bound(const Plant& plant, double eps, double horizon, double h) {
  if (!plant.lipschitz_x || !plant.lipschitz_u) {
    throw std::invalid_argument("plant '" + plant.name + "' does not declare Lipschitz constants");
  }
  if (!(eps >= 0.0)) throw std::invalid_argument("eps must be >= 0");
  const double lx = *plant.lipschitz_x, lu = *plant.lipschitz_u;
  const auto K = static_cast<std::size_t>(std::llround(horizon / h)) + 1;
  std::vector<double> eta(K);
  for (std::size_t k = 0; k < K; ++k) eta[k] = eps * lu / lx * std::expm1(lx * static_cast<double>(k) * h);
  return eta;
}

struct DeviationCheck {
  std::vector<double> gap;  // sup-norm state gap per sample
  std::vector<double> eta;
  double worst_excess = -stl::kInf;  // max over samples of gap - eta
  double max_ratio = 0.0;            // max over t > 0 of gap / eta
};

/// Integrates the plant from x0 under two piecewise-constant control
/// sequences and compares the state gap with the bound. `eps` should bound
/// the pointwise difference of the sequences.
inline DeviationCheck check_deviation(const Plant& plant, const std::vector<double>& x0,
                                      const std::vector<std::vector<double>>& u_a,
                                      const std::vector<std::vector<double>>& u_b, double eps, double h,
                                      std::size_t substeps) {
  if (u_a.size() != u_b.size() || u_a.empty()) throw std::invalid_argument("control sequences must match in length");
  const double horizon = h * static_cast<double>(u_a.size());
  DeviationCheck out;
  out.eta = prop2_bound(plant, eps, horizon, h);
  std::vector<double> xa = x0, xb = x0;
  const std::vector<double> nu(plant.dist_dim, 0.0);
  const double hi = h / static_cast<double>(substeps);
  for (std::size_t k = 0; k <= u_a.size(); ++k) {
    double gap = 0.0;
    for (std::size_t c = 0; c < xa.size(); ++c) gap = std::max(gap, std::abs(xa[c] - xb[c]));
    out.gap.push_back(gap);
    out.worst_excess = std::max(out.worst_excess, gap - out.eta[k]);
    if (out.eta[k] > 0.0) out.max_ratio = std::max(out.max_ratio, gap / out.eta[k]);
    if (k == u_a.size()) break;
    for (std::size_t s = 0; s < substeps; ++s) {
      const double t = static_cast<double>(k) * h + static_cast<double>(s) * hi;
      xa = rk4_step(plant, xa, u_a[k], nu, hi, t);
      xb = rk4_step(plant, xb, u_b[k], nu, hi, t);
    }
  }
  return out;
}

}  // namespace cegnn
