#pragma once

// Continuous-time plants, fixed-step RK4 integration and closed-loop
// simulation under zero-order hold.

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cegnn/controller.hpp"
#include "cegnn/errors.hpp"
#include "cegnn/stl.hpp"

namespace cegnn {

using Range = std::pair<double, double>;

struct Plant {
  using Dynamics = std::function<void(std::span<const double> x, std::span<const double> u,
                                      std::span<const double> nu, std::span<double> dx)>;
  using Output = std::function<void(std::span<const double> x, std::span<double> y)>;

  std::string name;
  std::size_t state_dim = 1;
  std::size_t input_dim = 1;
  std::size_t dist_dim = 0;
  std::size_t output_dim = 1;
  Dynamics dynamics;
  Output output;
  std::vector<Range> x0_box;     // per state component
  std::vector<Range> ref_range;  // per reference component (d_r == output_dim)
  std::optional<double> lipschitz_x;
  std::optional<double> lipschitz_u;
  std::optional<std::vector<Range>> state_bounds;

  std::vector<double> observe(std::span<const double> x) const {
    std::vector<double> y(output_dim);
    output(x, y);
    return y;
  }
};

/// Initial state, piecewise-constant reference and disturbance with pieces of
/// equal duration horizon / pieces().
struct ControlSetting {
  std::vector<double> x0;
  std::vector<std::vector<double>> ref;   // [piece][component]
  std::vector<std::vector<double>> dist;  // [piece][component]; empty = zero disturbance
  double horizon = 0.0;

  std::size_t pieces() const { return ref.size(); }

  std::size_t piece_at(double t) const {
    const double len = horizon / static_cast<double>(pieces());
    const auto i = static_cast<std::size_t>(std::max(0.0, std::floor(t / len + stl::kGridTol)));
    return std::min(i, pieces() - 1);
  }

  friend bool operator==(const ControlSetting&, const ControlSetting&) = default;
};

inline void validate(const ControlSetting& s, const Plant& p) {
  if (s.ref.empty()) throw std::invalid_argument("control setting needs at least one reference piece");
  if (s.x0.size() != p.state_dim) throw std::invalid_argument("x0 dimension does not match plant");
  if (!(s.horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
  for (const auto& piece : s.ref) {
    if (piece.size() != p.ref_range.size()) throw std::invalid_argument("reference dimension does not match plant");
  }
  if (!s.dist.empty()) {
    if (s.dist.size() != s.ref.size()) throw std::invalid_argument("disturbance pieces must match reference pieces");
    for (const auto& piece : s.dist) {
      if (piece.size() != p.dist_dim) throw std::invalid_argument("disturbance dimension does not match plant");
    }
  }
}

/// One closed-loop run gamma = (r, x, u, y, nu), all sampled at the controller period.
struct Behaviour {
  ControlSetting setting;
  stl::SampledSignal r, x, u, y, nu;

  std::size_t size() const { return y.size(); }
  double step() const { return y.step(); }
};

/// STL view of a behaviour: r, r_next (reference one sample ahead), y, u, x,
/// nu and the tracking error e = r - y (when dimensions agree).
inline stl::Trace to_trace(const Behaviour& b) {
  stl::Trace tr;
  tr.add(stl::SampledSignal("r", b.r.step(), b.r.dim(), b.r.data()));
  std::vector<double> next(b.r.data().size());
  const std::size_t n = b.r.size(), d = b.r.dim();
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t src = std::min(k + 1, n - 1);
    for (std::size_t c = 0; c < d; ++c) next[k * d + c] = b.r.at(src, c);
  }
  tr.add(stl::SampledSignal("r_next", b.r.step(), d, std::move(next)));
  tr.add(stl::SampledSignal("y", b.y.step(), b.y.dim(), b.y.data()));
  tr.add(stl::SampledSignal("u", b.u.step(), b.u.dim(), b.u.data()));
  tr.add(stl::SampledSignal("x", b.x.step(), b.x.dim(), b.x.data()));
  tr.add(stl::SampledSignal("nu", b.nu.step(), b.nu.dim(), b.nu.data()));
  if (b.r.dim() == b.y.dim()) {
    std::vector<double> e(b.r.data().size());
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = b.r.data()[i] - b.y.data()[i];
    tr.add(stl::SampledSignal("e", b.r.step(), d, std::move(e)));
  }
  return tr;
}

/// Classic fourth-order Runge-Kutta step with u and nu held constant.
inline std::vector<double> rk4_step(const Plant& plant, std::span<const double> x, std::span<const double> u,
                                    std::span<const double> nu, double h, double t = 0.0) {
  if (!(h > 0.0)) throw std::invalid_argument("integration step must be positive");
  const std::size_t n = x.size();
  std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n), out(n);
  auto eval = [&](std::span<const double> at, std::vector<double>& dst) {
    plant.dynamics(at, u, nu, dst);
    for (double v : dst) {
      if (!std::isfinite(v)) throw SimulationDiverged(t, {x.begin(), x.end()}, "non-finite derivative");
    }
  };
  eval(x, k1);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
  eval(tmp, k2);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
  eval(tmp, k3);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + h * k3[i];
  eval(tmp, k4);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    if (!std::isfinite(out[i])) throw SimulationDiverged(t, {x.begin(), x.end()}, "non-finite state");
  }
  return out;
}

/// Incremental closed-loop simulation. Copyable: a copy is a snapshot of the
/// plant state and the samples recorded so far (the controller is passed in
/// on each call and snapshotted separately).
class LoopSimulator {
 public:
  LoopSimulator(const Plant& plant, ControlSetting setting, double h, std::size_t substeps)
      : plant_(&plant), setting_(std::move(setting)), h_(h), substeps_(substeps) {
    validate(setting_, plant);
    if (!(h_ > 0.0)) throw std::invalid_argument("controller step must be positive");
    if (substeps_ < 1) throw std::invalid_argument("substeps must be >= 1");
    const double ratio = setting_.horizon / h_;
    if (std::abs(ratio - std::round(ratio)) > 1e-6 * std::max(1.0, ratio)) {
      throw std::invalid_argument("controller step must divide the horizon");
    }
    samples_ = static_cast<std::size_t>(std::llround(ratio)) + 1;
    x_ = setting_.x0;
  }

  std::size_t samples() const { return samples_; }
  std::size_t next_index() const { return k_; }
  bool done() const { return k_ >= samples_; }
  const std::vector<double>& state() const { return x_; }
  const ControlSetting& setting() const { return setting_; }
  double step() const { return h_; }

  /// Runs samples [next_index(), k_end) with `ctrl`.
  void advance(Controller& ctrl, std::size_t k_end) {
    k_end = std::min(k_end, samples_);
    const std::size_t dr = plant_->ref_range.size();
    const std::vector<double> zero_nu(plant_->dist_dim, 0.0);
    for (; k_ < k_end; ++k_) {
      const double t = static_cast<double>(k_) * h_;
      const std::vector<double> y = plant_->observe(x_);
      const std::size_t piece = setting_.piece_at(t);
      const std::vector<double>& r = setting_.ref[piece];
      const std::vector<double>& nu = setting_.dist.empty() ? zero_nu : setting_.dist[piece];
      std::vector<double> u = ctrl.step(ControllerInput{y, r, nu});
      if (u.size() != plant_->input_dim) throw std::invalid_argument("controller output dimension mismatch");
      for (double v : u) {
        if (!std::isfinite(v)) throw SimulationDiverged(t, x_, "controller output non-finite");
      }
      rec_r_.insert(rec_r_.end(), r.begin(), r.begin() + static_cast<std::ptrdiff_t>(dr));
      rec_y_.insert(rec_y_.end(), y.begin(), y.end());
      rec_u_.insert(rec_u_.end(), u.begin(), u.end());
      rec_x_.insert(rec_x_.end(), x_.begin(), x_.end());
      if (plant_->dist_dim > 0) rec_nu_.insert(rec_nu_.end(), nu.begin(), nu.end());
      else rec_nu_.push_back(0.0);
      if (k_ + 1 < samples_) {
        const double hi = h_ / static_cast<double>(substeps_);
        for (std::size_t s = 0; s < substeps_; ++s) {
          x_ = rk4_step(*plant_, x_, u, nu, hi, t + static_cast<double>(s) * hi);
        }
      }
    }
  }

  /// Behaviour over the samples recorded so far.
  Behaviour behaviour() const {
    if (k_ == 0) throw std::logic_error("no samples recorded");
    Behaviour b;
    b.setting = setting_;
    b.r = stl::SampledSignal("r", h_, plant_->ref_range.size(), rec_r_);
    b.y = stl::SampledSignal("y", h_, plant_->output_dim, rec_y_);
    b.u = stl::SampledSignal("u", h_, plant_->input_dim, rec_u_);
    b.x = stl::SampledSignal("x", h_, plant_->state_dim, rec_x_);
    b.nu = stl::SampledSignal("nu", h_, std::max<std::size_t>(1, plant_->dist_dim), rec_nu_);
    return b;
  }

 private:
  const Plant* plant_;
  ControlSetting setting_;
  double h_;
  std::size_t substeps_;
  std::size_t samples_ = 0;
  std::size_t k_ = 0;
  std::vector<double> x_;
  std::vector<double> rec_r_, rec_y_, rec_u_, rec_x_, rec_nu_;
};

/// Simulates the closed loop over the whole horizon; K = horizon / h + 1 samples.
/// The controller is reset first.
inline Behaviour simulate_closed_loop(const Plant& plant, Controller& ctrl, const ControlSetting& s, double h,
                                      std::size_t substeps = 10) {
  LoopSimulator sim(plant, s, h, substeps);
  ctrl.reset();
  sim.advance(ctrl, sim.samples());
  return sim.behaviour();
}

inline Behaviour simulate_closed_loop(const Plant& plant, const Controller& proto, const ControlSetting& s,
                                      double h, std::size_t substeps = 10) {
  ControllerPtr c = proto.clone();
  return simulate_closed_loop(plant, *c, s, h, substeps);
}

// ---------------------------------------------------------------------------
// Benchmark plants

/// Water tank  dx/dt = (b u - a sqrt(max(x,0))) / A,  y = x.
inline Plant make_water_tank(double area = 20.0, double inflow_gain = 5.0, double outflow_gain = 2.0) {
  Plant p;
  p.name = "water_tank";
  p.state_dim = p.input_dim = p.output_dim = 1;
  p.dynamics = [=](std::span<const double> x, std::span<const double> u, std::span<const double>,
                   std::span<double> dx) {
    dx[0] = (inflow_gain * u[0] - outflow_gain * std::sqrt(std::max(x[0], 0.0))) / area;
  };
  p.output = [](std::span<const double> x, std::span<double> y) { y[0] = x[0]; };
  p.x0_box = {{5.0, 13.0}};
  p.ref_range = {{8.0, 12.0}};
  p.lipschitz_u = inflow_gain / area;
  p.state_bounds = std::vector<Range>{{0.0, 20.0}};
  return p;
}

/// dx/dt = A x + B u with A = [[0,1],[-1,-1]], B = [0;1], y = x1.
inline Plant make_linear2d() {
  Plant p;
  p.name = "linear2d";
  p.state_dim = 2;
  p.input_dim = p.output_dim = 1;
  p.dynamics = [](std::span<const double> x, std::span<const double> u, std::span<const double>,
                  std::span<double> dx) {
    dx[0] = x[1];
    dx[1] = -x[0] - x[1] + u[0];
  };
  p.output = [](std::span<const double> x, std::span<double> y) { y[0] = x[0]; };
  p.x0_box = {{0.0, 0.0}, {0.0, 0.0}};
  p.ref_range = {{0.0, 1.0}};
  p.lipschitz_x = 2.0;  // infinity-norm of A
  p.lipschitz_u = 1.0;
  return p;
}

/// dx/dt = -x + u, y = x. Lipschitz constants L_x = L_u = 1.
inline Plant make_first_order_lag() {
  Plant p;
  p.name = "first_order_lag";
  p.state_dim = p.input_dim = p.output_dim = 1;
  p.dynamics = [](std::span<const double> x, std::span<const double> u, std::span<const double>,
                  std::span<double> dx) { dx[0] = -x[0] + u[0]; };
  p.output = [](std::span<const double> x, std::span<double> y) { y[0] = x[0]; };
  p.x0_box = {{-1.0, 1.0}};
  p.ref_range = {{-1.0, 1.0}};
  p.lipschitz_x = 1.0;
  p.lipschitz_u = 1.0;
  return p;
}

inline Plant make_plant(const std::string& id) {
  if (id == "water_tank") return make_water_tank();
  if (id == "linear2d") return make_linear2d();
  if (id == "first_order_lag") return make_first_order_lag();
  throw std::invalid_argument("unknown plant '" + id + "'");
}

}  // namespace cegnn
