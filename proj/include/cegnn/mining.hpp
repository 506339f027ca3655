#pragma once

// False-set estimation of a closed loop: simulate a fixed seeded sample of
// control settings once, then classify PSTL valuations on the stored traces.

#include <cstdint>
#include <random>
#include <vector>

#include "cegnn/coverage.hpp"
#include "cegnn/parallel.hpp"
#include "cegnn/plant.hpp"
#include "cegnn/pstl.hpp"

namespace cegnn {

/// `n` settings drawn uniformly from the box with a fixed seed.
inline std::vector<ControlSetting> sample_settings(const SettingSpace& space, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<ControlSetting> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Point z(space.dim());
    for (double& v : z) v = U(rng);
    out.push_back(space.setting_at(space.from_unit(z)));
  }
  return out;
}

inline std::vector<stl::Trace> simulate_traces(const Plant& plant, const Controller& ctrl,
                                               const std::vector<ControlSetting>& settings, double h,
                                               std::size_t substeps, std::size_t threads = 1) {
  std::vector<stl::Trace> out(settings.size());
  parallel_for(settings.size(), threads, [&](std::size_t i) {
    out[i] = to_trace(simulate_closed_loop(plant, ctrl, settings[i], h, substeps));
  });
  return out;
}

/// Valuation -> min robustness over `traces`, classified on `grid`.
inline pstl::FalseSetEstimate estimate_false_set(const pstl::PstlFormula& p, const std::vector<stl::Trace>& traces,
                                                 const std::vector<std::size_t>& grid, std::size_t threads = 1) {
  auto evaluator = [&](const pstl::Valuation& v) {
    const auto f = pstl::instantiate(p, v);
    double lo = stl::kInf;
    for (const auto& tr : traces) lo = std::min(lo, stl::robustness(*f, tr));
    return lo;
  };
  return pstl::classify_valuations(evaluator, p, grid, threads);
}

}  // namespace cegnn
