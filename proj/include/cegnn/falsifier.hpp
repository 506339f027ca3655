#pragma once

// Optimisation-based falsification over control settings: Latin-hypercube
// sampling followed by Nelder-Mead restarts on robustness, plus the matching
// and generalisation tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cegnn/controller.hpp"
#include "cegnn/coverage.hpp"
#include "cegnn/errors.hpp"
#include "cegnn/io.hpp"
#include "cegnn/parallel.hpp"
#include "cegnn/plant.hpp"
#include "cegnn/stl.hpp"

namespace cegnn {

/// Closed loop under test. When the property reads `y_nom`, the reference
/// controller is simulated at the same setting to provide it.
struct System {
  const Plant* plant = nullptr;
  const Controller* controller = nullptr;
  double h = 0.1;
  std::size_t substeps = 10;
  const Controller* reference = nullptr;
};

struct Verdict {
  std::size_t trial = 0;
  ControlSetting setting;
  Point point;
  double rho = 0.0;
  bool diverged = false;
  std::string phase;  // "lhs", "nm", "fixed"
  std::shared_ptr<const Behaviour> behaviour;

  bool counterexample() const { return rho <= 0.0; }
};

inline bool reads_signal(const stl::Formula& f, const std::string& name) {
  std::vector<std::string> sig;
  stl::collect_signals(f, sig);
  return std::find(sig.begin(), sig.end(), name) != sig.end();
}

/// Simulates one setting and evaluates the property at t = 0. A diverging
/// simulation yields rho = -inf.
inline Verdict evaluate_setting(const System& sys, const stl::Formula& phi, const ControlSetting& s,
                                bool keep_behaviour = true) {
  Verdict v;
  v.setting = s;
  try {
    Behaviour b = simulate_closed_loop(*sys.plant, *sys.controller, s, sys.h, sys.substeps);
    stl::Trace tr = to_trace(b);
    if (reads_signal(phi, "y_nom")) {
      if (!sys.reference) throw std::invalid_argument("property reads y_nom but no reference controller is set");
      Behaviour nom = simulate_closed_loop(*sys.plant, *sys.reference, s, sys.h, sys.substeps);
      tr.add(stl::SampledSignal("y_nom", nom.y.step(), nom.y.dim(), nom.y.data()));
    }
    v.rho = stl::robustness(phi, tr, 0);
    if (keep_behaviour) v.behaviour = std::make_shared<const Behaviour>(std::move(b));
  } catch (const SimulationDiverged&) {
    v.rho = -stl::kInf;
    v.diverged = true;
  }
  return v;
}

struct FalsifyConfig {
  std::size_t trials = 100;  // simulation budget n_T
  std::uint64_t seed = 0;
  SettingSpace space;
  double lhs_fraction = 0.5;   // share of the budget spent on the initial sample
  std::size_t restarts = 3;    // Nelder-Mead starts taken from the lowest-robustness samples first
  double simplex_scale = 0.1;  // in unit-cube coordinates
  double nm_tolerance = 1e-4;  // simplex diameter at which a restart ends
  std::vector<Point> exclusion;
  double exclusion_radius = 0.0;
  std::size_t max_rejections = 2000;  // per sample, before the space is declared exhausted
  std::size_t threads = 1;
  bool keep_behaviours = true;
};

struct FalsifyResult {
  std::vector<Verdict> trials;           // in trial order
  std::vector<Verdict> counterexamples;  // ascending robustness
  std::vector<Verdict> examples;         // ascending robustness
  std::vector<double> best_so_far;       // running minimum of rho per trial
  double coverage = 0.0;                 // after the call, when a tracker was given
};

namespace detail {

inline bool excluded(const FalsifyConfig& cfg, const Point& p) {
  for (const Point& q : cfg.exclusion) {
    if (sup_distance(p, q) <= cfg.exclusion_radius) return true;
  }
  return false;
}

inline void sort_verdicts(FalsifyResult& r) {
  double best = stl::kInf;
  for (const Verdict& v : r.trials) {
    best = std::min(best, v.rho);
    r.best_so_far.push_back(best);
    (v.counterexample() ? r.counterexamples : r.examples).push_back(v);
  }
  auto by_rho = [](const Verdict& a, const Verdict& b) { return a.rho < b.rho || (a.rho == b.rho && a.trial < b.trial); };
  std::sort(r.counterexamples.begin(), r.counterexamples.end(), by_rho);
  std::sort(r.examples.begin(), r.examples.end(), by_rho);
}

}  // namespace detail

/// Searches the setting box for violations of `phi`. Every simulated setting
/// counts against the budget and is recorded in `coverage`; settings within
/// the exclusion radius of an excluded point are never simulated.
inline FalsifyResult falsify(const System& sys, const stl::FormulaPtr& phi, const FalsifyConfig& cfg,
                             CoverageTracker* coverage = nullptr) {
  if (cfg.trials < 1) throw std::invalid_argument("falsification budget must be >= 1");
  cfg.space.validate();
  const stl::Horizon hz = stl::obligation_horizon(*phi);
  if (hz.seconds > cfg.space.horizon + 1e-9) {
    throw std::invalid_argument("property horizon exceeds the simulation horizon");
  }
  const auto axes = cfg.space.axes();
  std::vector<std::size_t> free;
  for (std::size_t i = 0; i < axes.size(); ++i)
    if (axes[i].second > axes[i].first) free.push_back(i);
  const std::size_t dim = free.size();

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto to_point = [&](const std::vector<double>& z) {
    std::vector<double> full(axes.size(), 0.0);
    for (std::size_t i = 0; i < dim; ++i) full[free[i]] = std::clamp(z[i], 0.0, 1.0);
    return cfg.space.from_unit(full);
  };

  FalsifyResult res;
  std::map<Point, std::size_t> seen;
  auto record = [&](Verdict v, Point p, const char* phase) {
    v.trial = res.trials.size();
    v.point = p;
    v.phase = phase;
    if (coverage) coverage->record_visit(p);
    seen.emplace(std::move(p), v.trial);
    res.trials.push_back(std::move(v));
  };

  // Latin-hypercube phase; rejected or repeated samples are redrawn uniformly.
  const std::size_t n_lhs = dim == 0 ? 1 : std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(cfg.lhs_fraction * static_cast<double>(cfg.trials))), 1, cfg.trials);
  std::vector<std::vector<std::size_t>> strata(dim);
  for (auto& s : strata) {
    s.resize(n_lhs);
    for (std::size_t i = 0; i < n_lhs; ++i) s[i] = i;
    std::shuffle(s.begin(), s.end(), rng);
  }
  std::vector<Point> batch;
  std::set<Point> batch_set;
  for (std::size_t i = 0; i < n_lhs; ++i) {
    std::vector<double> z(dim);
    for (std::size_t d = 0; d < dim; ++d) z[d] = (static_cast<double>(strata[d][i]) + U(rng)) / static_cast<double>(n_lhs);
    Point p = to_point(z);
    std::size_t tries = 0;
    while (detail::excluded(cfg, p) || batch_set.count(p)) {
      if (++tries > cfg.max_rejections) {
        if (batch_set.count(p) && !detail::excluded(cfg, p)) break;  // fixed space: one point only
        throw SearchSpaceExhausted("no setting outside the exclusion region after " + std::to_string(cfg.max_rejections) +
                                   " draws; use a smaller exclusion radius");
      }
      for (double& c : z) c = U(rng);
      p = to_point(z);
    }
    if (batch_set.insert(p).second) batch.push_back(std::move(p));
  }
  std::vector<Verdict> lhs(batch.size());
  parallel_for(batch.size(), cfg.threads, [&](std::size_t i) {
    lhs[i] = evaluate_setting(sys, *phi, cfg.space.setting_at(batch[i]), cfg.keep_behaviours);
  });
  for (std::size_t i = 0; i < batch.size(); ++i) record(std::move(lhs[i]), batch[i], "lhs");

  // Nelder-Mead phase.
  if (dim > 0) {
    std::size_t attempts = 0;
    const std::size_t max_attempts = 20 * cfg.trials + 100;
    // nullopt once the budget is spent
    auto objective = [&](std::vector<double>& z) -> std::optional<double> {
      for (double& c : z) c = std::clamp(c, 0.0, 1.0);
      Point p = to_point(z);
      if (++attempts > max_attempts) return std::nullopt;
      if (detail::excluded(cfg, p)) return stl::kInf;
      if (auto it = seen.find(p); it != seen.end()) return res.trials[it->second].rho;
      if (res.trials.size() >= cfg.trials) return std::nullopt;
      Verdict v = evaluate_setting(sys, *phi, cfg.space.setting_at(p), cfg.keep_behaviours);
      const double rho = v.rho;
      record(std::move(v), p, "nm");
      return rho;
    };
    auto unit_of = [&](const Point& p) {
      std::vector<double> z(dim);
      for (std::size_t i = 0; i < dim; ++i) {
        const auto [lo, hi] = axes[free[i]];
        z[i] = (p[free[i]] - lo) / (hi - lo);
      }
      return z;
    };

    std::vector<std::size_t> order(res.trials.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return res.trials[a].rho < res.trials[b].rho; });
    std::size_t next_seed = 0;
    bool spent = false;
    while (!spent && res.trials.size() < cfg.trials && attempts <= max_attempts) {
      std::vector<double> start;
      double f0 = 0.0;
      if (next_seed < std::min(order.size(), cfg.restarts)) {
        start = unit_of(res.trials[order[next_seed]].point);
        f0 = res.trials[order[next_seed]].rho;
        ++next_seed;
      } else {
        start.resize(dim);
        for (double& c : start) c = U(rng);
        auto f = objective(start);
        if (!f) break;
        f0 = *f;
      }
      std::vector<std::vector<double>> simplex{start};
      std::vector<double> fs{f0};
      for (std::size_t d = 0; d < dim && !spent; ++d) {
        std::vector<double> z = start;
        z[d] += z[d] + cfg.simplex_scale <= 1.0 ? cfg.simplex_scale : -cfg.simplex_scale;
        auto f = objective(z);
        if (!f) spent = true;
        else {
          simplex.push_back(z);
          fs.push_back(*f);
        }
      }
      if (spent) break;
      for (std::size_t it = 0; !spent; ++it) {
        std::vector<std::size_t> idx(simplex.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return fs[a] < fs[b]; });
        std::vector<std::vector<double>> s2;
        std::vector<double> f2;
        for (std::size_t i : idx) {
          s2.push_back(simplex[i]);
          f2.push_back(fs[i]);
        }
        simplex = std::move(s2);
        fs = std::move(f2);
        double diam = 0.0;
        for (std::size_t i = 1; i < simplex.size(); ++i) diam = std::max(diam, sup_distance(simplex[i], simplex[0]));
        if (diam < cfg.nm_tolerance || it > 200 * (dim + 1)) break;

        const std::size_t n = dim;
        std::vector<double> c(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t d = 0; d < n; ++d) c[d] += simplex[i][d] / static_cast<double>(n);
        auto along = [&](double t) {
          std::vector<double> z(n);
          for (std::size_t d = 0; d < n; ++d) z[d] = c[d] + t * (simplex[n][d] - c[d]);
          return z;
        };
        std::vector<double> xr = along(-1.0);
        auto fr = objective(xr);
        if (!fr) break;
        if (*fr < fs[0]) {
          std::vector<double> xe = along(-2.0);
          auto fe = objective(xe);
          if (!fe) {
            spent = true;
            break;
          }
          if (*fe < *fr) {
            simplex[n] = xe;
            fs[n] = *fe;
          } else {
            simplex[n] = xr;
            fs[n] = *fr;
          }
        } else if (*fr < fs[n - 1]) {
          simplex[n] = xr;
          fs[n] = *fr;
        } else {
          const bool outside = *fr < fs[n];
          std::vector<double> xc = along(outside ? -0.5 : 0.5);
          auto fc = objective(xc);
          if (!fc) {
            spent = true;
            break;
          }
          if (*fc < std::min(*fr, fs[n])) {
            simplex[n] = xc;
            fs[n] = *fc;
          } else {
            for (std::size_t i = 1; i <= n && !spent; ++i) {
              for (std::size_t d = 0; d < n; ++d) simplex[i][d] = simplex[0][d] + 0.5 * (simplex[i][d] - simplex[0][d]);
              auto f = objective(simplex[i]);
              if (!f) spent = true;
              else fs[i] = *f;
            }
          }
        }
      }
    }
  }

  detail::sort_verdicts(res);
  if (coverage) res.coverage = coverage->ratio();
  return res;
}

/// Simulates exactly the given settings; no search.
inline FalsifyResult matching_test(const System& sys, const stl::FormulaPtr& phi, const std::vector<ControlSetting>& settings,
                                   std::size_t threads = 1, bool keep_behaviours = true) {
  FalsifyResult res;
  res.trials.resize(settings.size());
  parallel_for(settings.size(), threads, [&](std::size_t i) {
    res.trials[i] = evaluate_setting(sys, *phi, settings[i], keep_behaviours);
    res.trials[i].trial = i;
    res.trials[i].phase = "fixed";
  });
  detail::sort_verdicts(res);
  return res;
}

/// Falsification restricted to settings farther than `radius` (sup metric)
/// from every training setting.
inline FalsifyResult generalisation_test(const System& sys, const stl::FormulaPtr& phi, FalsifyConfig cfg,
                                         const std::vector<ControlSetting>& training, double radius,
                                         CoverageTracker* coverage = nullptr) {
  cfg.exclusion.clear();
  for (const auto& s : training) cfg.exclusion.push_back(cfg.space.embed(s));
  cfg.exclusion_radius = radius;
  return falsify(sys, phi, cfg, coverage);
}

inline io::CsvTable trial_log(const FalsifyResult& r, std::size_t dim) {
  std::vector<std::string> header{"trial", "phase"};
  for (std::size_t i = 0; i < dim; ++i) header.push_back("p" + std::to_string(i));
  header.insert(header.end(), {"rho", "class"});
  io::CsvTable t(header);
  for (const Verdict& v : r.trials) {
    std::vector<std::string> row{std::to_string(v.trial), v.phase};
    for (double c : v.point) row.push_back(io::fmt(c));
    row.push_back(io::fmt(v.rho));
    row.push_back(v.diverged ? "diverged" : (v.counterexample() ? "counterexample" : "example"));
    t.add(std::move(row));
  }
  return t;
}

}  // namespace cegnn
