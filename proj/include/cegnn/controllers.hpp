#pragma once

// Nominal discrete-time controllers and robustness-guided trace stitching
// across several controllers.

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cegnn/controller.hpp"
#include "cegnn/plant.hpp"
#include "cegnn/stl.hpp"

namespace cegnn {

struct PidGains {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;
  double u_min = -1e300;
  double u_max = 1e300;
  double h = 0.1;  // controller period

  void validate() const {
    if (!(u_min < u_max)) throw std::invalid_argument("PID saturation requires u_min < u_max");
    if (!(h > 0.0)) throw std::invalid_argument("PID period must be positive");
  }
};

struct PidState {
  double integral = 0.0;
  double prev_error = 0.0;

  friend bool operator==(const PidState&, const PidState&) = default;
};

struct PidOutput {
  PidState next;
  double u = 0.0;
};

/// One step of a positional PID with output clamping and conditional
/// integration: when the output saturates the integral keeps its old value.
inline PidOutput pid_step(const PidGains& g, const PidState& z, double y, double r) {
  const double e = r - y;
  PidState next{z.integral + g.h * e, e};
  const double raw = g.kp * e + g.ki * next.integral + g.kd * (e - z.prev_error) / g.h;
  const double u = std::clamp(raw, g.u_min, g.u_max);
  if (u != raw) next.integral = z.integral;
  return {next, u};
}

class PidController final : public Controller {
 public:
  explicit PidController(PidGains g) : gains_(g) { gains_.validate(); }

  void reset() override { state_ = {}; }

  std::vector<double> step(const ControllerInput& in) override {
    PidOutput o = pid_step(gains_, state_, in.y[0], in.r[0]);
    state_ = o.next;
    return {o.u};
  }

  std::unique_ptr<Controller> clone() const override { return std::make_unique<PidController>(*this); }

  std::string describe() const override {
    std::ostringstream os;
    os << "pid(kp=" << gains_.kp << ",ki=" << gains_.ki << ",kd=" << gains_.kd << ")";
    return os.str();
  }

  const PidGains& gains() const { return gains_; }
  const PidState& state() const { return state_; }

 private:
  PidGains gains_;
  PidState state_;
};

// ---------------------------------------------------------------------------
// Three-location switched controller

enum class Location { NoAction, Proportional, Pid };

/// Bands on |e| = |r - y|, left-closed right-open:
///   [0, dead_band) -> NoAction,  [dead_band, p_upper) -> P,  [p_upper, inf) -> PID.
struct SwitchedGains {
  double dead_band = 0.005;
  double p_upper = 0.1;
  double kp = 1.0;  // gain of the P location
  PidGains pid;

  void validate() const {
    if (!(dead_band >= 0.0 && dead_band < p_upper)) {
      throw std::invalid_argument("switched controller requires 0 <= dead_band < p_upper");
    }
    pid.validate();
  }
};

inline Location select_location(const SwitchedGains& g, double abs_error) {
  if (abs_error < g.dead_band) return Location::NoAction;
  if (abs_error < g.p_upper) return Location::Proportional;
  return Location::Pid;
}

struct SwitchedOutput {
  PidState next;
  double u = 0.0;
  Location location = Location::NoAction;
};

/// NoAction emits 0 and P emits kp*e; both leave the PID state untouched.
inline SwitchedOutput switched_step(const SwitchedGains& g, const PidState& z, double y, double r) {
  const double e = r - y;
  const Location loc = select_location(g, std::abs(e));
  switch (loc) {
    case Location::NoAction: return {z, 0.0, loc};
    case Location::Proportional: return {z, g.kp * e, loc};
    case Location::Pid: {
      PidOutput o = pid_step(g.pid, z, y, r);
      return {o.next, o.u, loc};
    }
  }
  return {z, 0.0, loc};
}

class SwitchedController final : public Controller {
 public:
  explicit SwitchedController(SwitchedGains g) : gains_(std::move(g)) { gains_.validate(); }

  void reset() override {
    state_ = {};
    last_ = Location::NoAction;
  }

  std::vector<double> step(const ControllerInput& in) override {
    SwitchedOutput o = switched_step(gains_, state_, in.y[0], in.r[0]);
    state_ = o.next;
    last_ = o.location;
    return {o.u};
  }

  std::unique_ptr<Controller> clone() const override { return std::make_unique<SwitchedController>(*this); }
  std::string describe() const override { return "switched3"; }
  Location last_location() const { return last_; }

 private:
  SwitchedGains gains_;
  PidState state_;
  Location last_ = Location::NoAction;
};

// ---------------------------------------------------------------------------
// Robustness-guided controller combination

struct SegmentChoice {
  std::size_t setting = 0;
  std::size_t segment = 0;
  std::size_t first_sample = 0;
  std::size_t winner = 0;
  std::vector<double> scores;           // robustness of the prefix per candidate
  std::vector<double> state_at_start;  // plant state when the segment began
};

struct CombinedTraces {
  std::vector<Behaviour> behaviours;        // kept stitched traces
  std::vector<std::size_t> kept_settings;   // index into the input settings
  std::vector<double> final_robustness;     // per input setting
  std::vector<SegmentChoice> log;
};

/// Stitches per-segment winners among `controllers` into one trace per setting.
///
/// For every segment all candidates run from the same snapshot (plant state
/// plus each candidate's own controller state); the winner maximises the
/// robustness of `spec` on the prefix extended by its segment, ties going to
/// the lower index. Only the winner's controller state advances. A stitched
/// trace is kept iff it satisfies `spec`.
inline CombinedTraces generate_combined_traces(const Plant& plant, const std::vector<const Controller*>& controllers,
                                               const stl::FormulaPtr& spec,
                                               const std::vector<ControlSetting>& settings, double segment,
                                               double h, std::size_t substeps = 10) {
  if (controllers.empty()) throw std::invalid_argument("need at least one controller");
  const stl::Horizon hz = stl::obligation_horizon(*spec);
  if (segment + 1e-9 < hz.seconds) {
    throw std::invalid_argument("segment length shorter than the property horizon");
  }
  const double seg_ratio = segment / h;
  if (std::abs(seg_ratio - std::round(seg_ratio)) > 1e-6) {
    throw std::invalid_argument("segment length must be a multiple of the controller step");
  }
  const auto seg_samples = static_cast<std::size_t>(std::llround(seg_ratio));

  CombinedTraces out;
  for (std::size_t si = 0; si < settings.size(); ++si) {
    const ControlSetting& s = settings[si];
    const double piece = s.horizon / static_cast<double>(s.pieces());
    const double align = piece / segment;
    if (std::abs(align - std::round(align)) > 1e-6 || std::round(align) < 1.0) {
      throw std::invalid_argument("reference pieces must align with segment boundaries");
    }

    LoopSimulator sim(plant, s, h, substeps);
    std::vector<ControllerPtr> own;
    for (const Controller* c : controllers) {
      own.push_back(c->clone());
      own.back()->reset();
    }

    for (std::size_t seg = 0; !sim.done(); ++seg) {
      const std::size_t start = sim.next_index();
      const std::size_t end = start + seg_samples;
      SegmentChoice choice{si, seg, start, 0, {}, sim.state()};
      double best = -stl::kInf;
      std::optional<LoopSimulator> best_sim;
      ControllerPtr best_ctrl;
      for (std::size_t c = 0; c < own.size(); ++c) {
        LoopSimulator cand = sim;
        ControllerPtr ctrl = own[c]->clone();
        cand.advance(*ctrl, end);
        const double score = stl::robustness(*spec, to_trace(cand.behaviour()), 0);
        choice.scores.push_back(score);
        if (!best_sim || score > best) {
          best = score;
          choice.winner = c;
          best_sim.emplace(std::move(cand));
          best_ctrl = std::move(ctrl);
        }
      }
      sim = std::move(*best_sim);
      own[choice.winner] = std::move(best_ctrl);
      out.log.push_back(std::move(choice));
    }

    Behaviour b = sim.behaviour();
    const double rho = stl::robustness(*spec, to_trace(b), 0);
    out.final_robustness.push_back(rho);
    if (rho > 0.0) {
      out.behaviours.push_back(std::move(b));
      out.kept_settings.push_back(si);
    }
  }

  if (out.behaviours.empty() && !settings.empty()) {
    std::ostringstream os;
    os << "no satisfying combined trace; worst robustness per setting:";
    for (double r : out.final_robustness) os << ' ' << r;
    throw std::runtime_error(os.str());
  }
  return out;
}

}  // namespace cegnn
