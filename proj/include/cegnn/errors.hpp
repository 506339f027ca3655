#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace cegnn {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error("syntax error at offset " + std::to_string(offset) + ": " + what),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class SimulationDiverged : public std::runtime_error {
 public:
  SimulationDiverged(double t, std::vector<double> x, const std::string& why)
      : std::runtime_error("simulation diverged at t=" + std::to_string(t) + ": " + why),
        t_(t),
        x_(std::move(x)) {}

  double time() const noexcept { return t_; }
  const std::vector<double>& state() const noexcept { return x_; }

 private:
  double t_;
  std::vector<double> x_;
};

/// The nominal controller (the teacher) violates a property it is assumed to satisfy.
class PremiseViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t epoch, const std::string& why)
      : std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ": " + why),
        epoch_(epoch) {}

  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

class PolarityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Generalisation test could not find settings outside the exclusion region.
class SearchSpaceExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cegnn
