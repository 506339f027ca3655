#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cegnn {

/// Observations available to a discrete-time controller at sample k.
struct ControllerInput {
  std::span<const double> y;   // plant output y_k
  std::span<const double> r;   // reference r_k
  std::span<const double> nu;  // disturbance nu_k (may be empty)
};

/// Discrete-time feedback controller  z_{k+1} = f_c(z_k, y_k, r_k),  u_k = v(z_k, y_k, r_k).
///
/// Implementations carry their state z. `clone()` copies that state, which is
/// how simulations take snapshots and how parallel runs get private instances.
class Controller {
 public:
  virtual ~Controller() = default;

  /// Returns z to its initial state (all zeros unless documented otherwise).
  virtual void reset() = 0;

  /// Consumes one sample, advances the state and returns u_k.
  virtual std::vector<double> step(const ControllerInput& in) = 0;

  virtual std::unique_ptr<Controller> clone() const = 0;

  virtual std::string describe() const = 0;
};

using ControllerPtr = std::unique_ptr<Controller>;

/// u_k = 0 for every k.
class ZeroController final : public Controller {
 public:
  explicit ZeroController(std::size_t output_dim = 1) : dim_(output_dim) {}
  void reset() override {}
  std::vector<double> step(const ControllerInput&) override { return std::vector<double>(dim_, 0.0); }
  std::unique_ptr<Controller> clone() const override { return std::make_unique<ZeroController>(*this); }
  std::string describe() const override { return "zero"; }

 private:
  std::size_t dim_;
};

/// u_k = r_k (feed-through of the reference).
class ReferencePassthrough final : public Controller {
 public:
  void reset() override {}
  std::vector<double> step(const ControllerInput& in) override { return {in.r.begin(), in.r.end()}; }
  std::unique_ptr<Controller> clone() const override { return std::make_unique<ReferencePassthrough>(*this); }
  std::string describe() const override { return "passthrough"; }
};

}  // namespace cegnn
