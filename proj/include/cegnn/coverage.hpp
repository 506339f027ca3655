#pragma once

// Setting space geometry: the beta / beta^-1 maps between points and
// piecewise-constant settings, grid epsilon-nets, separation checks and the
// finer-grid coverage tracker.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cegnn/errors.hpp"
#include "cegnn/plant.hpp"

namespace cegnn {

using Point = std::vector<double>;

inline double sup_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("points differ in dimension");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

/// Reference pieces of p, coordinate i*d_r + c on piece i (piece-major).
inline std::vector<std::vector<double>> beta(std::span<const double> p, std::size_t ref_dim, std::size_t pieces) {
  if (ref_dim == 0 || pieces == 0 || p.size() != ref_dim * pieces) {
    throw std::invalid_argument("point dimension must equal pieces * reference dimension");
  }
  std::vector<std::vector<double>> out(pieces, std::vector<double>(ref_dim));
  for (std::size_t i = 0; i < pieces; ++i)
    for (std::size_t c = 0; c < ref_dim; ++c) out[i][c] = p[i * ref_dim + c];
  return out;
}

inline Point beta_inv(const std::vector<std::vector<double>>& pieces) {
  Point p;
  for (const auto& piece : pieces) p.insert(p.end(), piece.begin(), piece.end());
  return p;
}

/// The box of control settings: x0 components, then reference pieces, then
/// disturbance pieces. An axis with lo == hi is fixed.
struct SettingSpace {
  std::vector<Range> x0;
  std::vector<Range> ref;
  std::vector<Range> dist;  // empty when the benchmark has no disturbance ranges
  std::size_t pieces = 1;
  double horizon = 0.0;

  std::size_t dim() const { return x0.size() + pieces * (ref.size() + dist.size()); }

  std::vector<Range> axes() const {
    std::vector<Range> a(x0.begin(), x0.end());
    for (std::size_t i = 0; i < pieces; ++i) a.insert(a.end(), ref.begin(), ref.end());
    for (std::size_t i = 0; i < pieces; ++i) a.insert(a.end(), dist.begin(), dist.end());
    return a;
  }

  void validate() const {
    if (pieces == 0) throw std::invalid_argument("setting space needs at least one piece");
    if (ref.empty()) throw std::invalid_argument("setting space needs a reference range");
    if (!(horizon > 0.0)) throw std::invalid_argument("setting space horizon must be positive");
    for (const auto& [lo, hi] : axes()) {
      if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi)) throw std::invalid_argument("empty setting box");
    }
  }

  Point embed(const ControlSetting& s) const {
    if (s.x0.size() != x0.size() || s.pieces() != pieces) throw std::invalid_argument("setting does not match space");
    Point p(s.x0.begin(), s.x0.end());
    const Point r = beta_inv(s.ref);
    p.insert(p.end(), r.begin(), r.end());
    if (!dist.empty()) {
      const Point d = beta_inv(s.dist);
      p.insert(p.end(), d.begin(), d.end());
    }
    if (p.size() != dim()) throw std::invalid_argument("setting does not match space");
    return p;
  }

  ControlSetting setting_at(std::span<const double> p) const {
    if (p.size() != dim()) throw std::invalid_argument("point dimension does not match setting space");
    ControlSetting s;
    s.horizon = horizon;
    s.x0.assign(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(x0.size()));
    const std::size_t nr = pieces * ref.size();
    s.ref = beta(p.subspan(x0.size(), nr), ref.size(), pieces);
    if (!dist.empty()) s.dist = beta(p.subspan(x0.size() + nr), dist.size(), pieces);
    return s;
  }

  bool contains(std::span<const double> p, double tol = 1e-9) const {
    const auto a = axes();
    if (p.size() != a.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (p[i] < a[i].first - tol || p[i] > a[i].second + tol) return false;
    }
    return true;
  }

  /// Maps the unit cube onto the box (fixed axes ignore their coordinate).
  Point from_unit(std::span<const double> z) const {
    const auto a = axes();
    Point p(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double t = std::clamp(z[i], 0.0, 1.0);
      p[i] = a[i].first + t * (a[i].second - a[i].first);
    }
    return p;
  }
};

inline SettingSpace make_setting_space(const Plant& plant, std::size_t pieces, double horizon,
                                       std::optional<std::vector<Range>> x0_box = std::nullopt,
                                       std::vector<Range> dist = {}) {
  SettingSpace sp;
  sp.x0 = x0_box ? *x0_box : plant.x0_box;
  sp.ref = plant.ref_range;
  sp.dist = std::move(dist);
  sp.pieces = pieces;
  sp.horizon = horizon;
  if (sp.x0.size() != plant.state_dim) throw std::invalid_argument("x0 box dimension does not match plant");
  sp.validate();
  return sp;
}

// ---------------------------------------------------------------------------
// Grids

/// Cells of side 2*eps on every free axis of the space.
struct SignalGrid {
  SettingSpace space;
  double eps = 0.25;

  /// Cells per axis; a fixed axis has one.
  std::vector<std::size_t> cells_per_axis() const {
    if (!(eps > 0.0)) throw ConfigError("grid eps must be positive");
    std::vector<std::size_t> n;
    for (const auto& [lo, hi] : space.axes()) {
      if (hi == lo) {
        n.push_back(1);
        continue;
      }
      const double c = (hi - lo) / (2.0 * eps);
      if (std::abs(c - std::round(c)) > 1e-9 * std::max(1.0, c) || std::round(c) < 1.0) {
        throw ConfigError("range width " + std::to_string(hi - lo) + " is not an integral multiple of 2*eps = " +
                          std::to_string(2.0 * eps));
      }
      n.push_back(static_cast<std::size_t>(std::llround(c)));
    }
    return n;
  }

  double cell_count() const {
    double total = 1.0;
    for (std::size_t c : cells_per_axis()) total *= static_cast<double>(c);
    return total;
  }
};

/// Cell centers of the grid in lexicographic order (first axis slowest).
inline std::vector<Point> build_eps_net(const SignalGrid& grid, double cap = 1e6) {
  const auto n = grid.cells_per_axis();
  const double total = grid.cell_count();
  if (total > cap) {
    throw ConfigError("epsilon-net has " + std::to_string(static_cast<long long>(total)) + " cells, above the cap of " +
                      std::to_string(static_cast<long long>(cap)) + "; raise the cap to at least that");
  }
  const auto axes = grid.space.axes();
  std::vector<Point> out;
  out.reserve(static_cast<std::size_t>(total));
  std::vector<std::size_t> idx(n.size(), 0);
  for (;;) {
    Point p(n.size());
    for (std::size_t i = 0; i < n.size(); ++i) {
      const auto [lo, hi] = axes[i];
      p[i] = hi == lo ? lo : lo + (2.0 * static_cast<double>(idx[i]) + 1.0) * grid.eps;
    }
    out.push_back(std::move(p));
    std::size_t i = n.size();
    while (i > 0) {
      --i;
      if (++idx[i] < n[i]) break;
      idx[i] = 0;
      if (i == 0) return out;
    }
    if (n.empty()) return out;
  }
}

inline std::vector<ControlSetting> eps_net_settings(const SignalGrid& grid, double cap = 1e6) {
  std::vector<ControlSetting> out;
  for (const Point& p : build_eps_net(grid, cap)) out.push_back(grid.space.setting_at(p));
  return out;
}

struct SeparationResult {
  bool separated = true;
  std::optional<std::pair<std::size_t, std::size_t>> violating;
  double distance = 0.0;  // of the violating pair
};

/// True iff every pair is strictly more than delta apart in the sup metric.
inline SeparationResult is_delta_separated(const std::vector<Point>& pts, double delta) {
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      const double d = sup_distance(pts[i], pts[j]);
      if (!(d > delta)) return {false, std::pair{i, j}, d};
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// Coverage

class CoverageTracker {
 public:
  /// The tracking grid refines the epsilon grid by `factor` per free axis.
  /// Above `cap` cells the ratio is measured on a seeded random subsample.
  explicit CoverageTracker(const SignalGrid& grid, std::size_t factor = 2, double cap = 1e6, std::uint64_t seed = 0)
      : axes_(grid.space.axes()) {
    if (factor < 1) throw std::invalid_argument("coverage factor must be >= 1");
    for (std::size_t c : grid.cells_per_axis()) {
      cells_.push_back(axes_[cells_.size()].first == axes_[cells_.size()].second ? 1 : c * factor);
    }
    total_ = 1.0;
    for (std::size_t c : cells_) total_ *= static_cast<double>(c);
    if (total_ > cap) {
      std::mt19937_64 rng(seed);
      const auto want = static_cast<std::size_t>(cap);
      while (sample_.size() < want) {
        Key k(cells_.size());
        for (std::size_t i = 0; i < cells_.size(); ++i) {
          k[i] = static_cast<std::uint32_t>(std::uniform_int_distribution<std::size_t>(0, cells_[i] - 1)(rng));
        }
        sample_.insert(std::move(k));
      }
    }
  }

  CoverageTracker(const CoverageTracker& o) : axes_(o.axes_), cells_(o.cells_), total_(o.total_) {
    std::lock_guard lock(o.mu_);
    visited_ = o.visited_;
    sample_ = o.sample_;
    clamped_ = o.clamped_;
  }

  void record_visit(std::span<const double> p) {
    if (p.size() != axes_.size()) throw std::invalid_argument("visit dimension does not match coverage grid");
    Key k(axes_.size());
    bool clamped = false;
    for (std::size_t i = 0; i < axes_.size(); ++i) {
      const auto [lo, hi] = axes_[i];
      if (p[i] < lo - 1e-9 || p[i] > hi + 1e-9) clamped = true;
      if (cells_[i] == 1) {
        k[i] = 0;
        continue;
      }
      const double t = (p[i] - lo) / (hi - lo) * static_cast<double>(cells_[i]);
      const auto c = static_cast<long long>(std::floor(t));
      k[i] = static_cast<std::uint32_t>(std::clamp<long long>(c, 0, static_cast<long long>(cells_[i]) - 1));
    }
    std::lock_guard lock(mu_);
    if (clamped) {
      if (clamped_ == 0) std::clog << "warning: coverage visit outside the setting box clamped to boundary cell\n";
      ++clamped_;
    }
    visited_.insert(std::move(k));
  }

  double ratio() const {
    std::lock_guard lock(mu_);
    if (sample_.empty()) return static_cast<double>(visited_.size()) / total_;
    std::size_t hit = 0;
    for (const Key& k : sample_) hit += visited_.count(k);
    return static_cast<double>(hit) / static_cast<double>(sample_.size());
  }

  std::size_t visited() const {
    std::lock_guard lock(mu_);
    return visited_.size();
  }
  double total_cells() const { return total_; }
  std::size_t clamped_visits() const {
    std::lock_guard lock(mu_);
    return clamped_;
  }
  const std::vector<std::size_t>& cells_per_axis() const { return cells_; }

 private:
  using Key = std::vector<std::uint32_t>;
  std::vector<Range> axes_;
  std::vector<std::size_t> cells_;
  double total_ = 0.0;
  mutable std::mutex mu_;
  std::set<Key> visited_;
  std::set<Key> sample_;
  std::size_t clamped_ = 0;
};

}  // namespace cegnn
