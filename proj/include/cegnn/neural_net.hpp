#pragma once

// Dense feedforward controller nets with ARX-style history inputs, Adam/MSE
// training, finite-difference gradient checking and a closed-loop adapter.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cegnn/controller.hpp"
#include "cegnn/errors.hpp"
#include "cegnn/plant.hpp"
#include "json.hpp"

namespace cegnn::nn {

enum class Activation { Tanh, Relu, Linear };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Linear: return "linear";
  }
  return "?";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  if (s == "linear") return Activation::Linear;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

/// Past-value counts per signal.
struct History {
  std::size_t n_r = 0, n_y = 0, n_u = 0, n_nu = 0;
  std::size_t longest() const { return std::max({n_r, n_y, n_u, n_nu}); }
  friend bool operator==(const History&, const History&) = default;
};

/// Separate: r and y windows enter as they are. Error: a window of e = r - y
/// (length n_y + 1) replaces both.
enum class InputMode { Separate, Error };

struct NetSpec {
  std::size_t d_r = 1, d_y = 1, d_u = 1, d_nu = 0;
  History hist;
  InputMode mode = InputMode::Separate;
  std::vector<std::pair<std::size_t, Activation>> hidden{{30, Activation::Tanh}, {30, Activation::Tanh}};

  std::size_t input_dim() const {
    const std::size_t nu = d_nu * (hist.n_nu + 1);
    if (mode == InputMode::Error) return d_y * (hist.n_y + 1) + d_u * hist.n_u + nu;
    return d_r * (hist.n_r + 1) + d_y * (hist.n_y + 1) + d_u * hist.n_u + nu;
  }
  std::size_t output_dim() const { return d_u; }

  void validate() const {
    if (d_y == 0 || d_u == 0 || d_r == 0) throw std::invalid_argument("net signal dimensions must be >= 1");
    if (mode == InputMode::Error && d_r != d_y) throw std::invalid_argument("error input requires d_r == d_y");
    for (const auto& [w, a] : hidden) {
      if (w == 0) throw std::invalid_argument("hidden layer width must be >= 1");
    }
  }
};

/// Builds the input vector at one instant. Accessors take a lag j (0 = now)
/// and return the sample; u lags start at 1.
template <class R, class Y, class U, class Nu>
void assemble_input(const NetSpec& spec, R&& r, Y&& y, U&& u, Nu&& nu, std::vector<double>& out) {
  out.clear();
  if (spec.mode == InputMode::Error) {
    for (std::size_t j = 0; j <= spec.hist.n_y; ++j) {
      const auto rj = r(j);
      const auto yj = y(j);
      for (std::size_t c = 0; c < spec.d_y; ++c) out.push_back(rj[c] - yj[c]);
    }
  } else {
    for (std::size_t j = 0; j <= spec.hist.n_r; ++j) {
      const auto rj = r(j);
      out.insert(out.end(), rj.begin(), rj.end());
    }
    for (std::size_t j = 0; j <= spec.hist.n_y; ++j) {
      const auto yj = y(j);
      out.insert(out.end(), yj.begin(), yj.end());
    }
  }
  for (std::size_t j = 1; j <= spec.hist.n_u; ++j) {
    const auto uj = u(j);
    out.insert(out.end(), uj.begin(), uj.end());
  }
  if (spec.d_nu > 0) {
    for (std::size_t j = 0; j <= spec.hist.n_nu; ++j) {
      const auto nj = nu(j);
      out.insert(out.end(), nj.begin(), nj.begin() + static_cast<std::ptrdiff_t>(spec.d_nu));
    }
  }
}

struct LayerShape {
  std::size_t in = 0, out = 0;
  Activation act = Activation::Linear;
  std::size_t offset = 0;  // weights (out x in, row-major) then biases
  std::size_t params() const { return out * in + out; }
};

inline double activate(Activation a, double z) {
  switch (a) {
    case Activation::Tanh: return std::tanh(z);
    case Activation::Relu: return z > 0.0 ? z : 0.0;
    case Activation::Linear: return z;
  }
  return z;
}

/// Derivative expressed through the activation value (and pre-activation for relu).
inline double activate_grad(Activation a, double z, double v) {
  switch (a) {
    case Activation::Tanh: return 1.0 - v * v;
    case Activation::Relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::Linear: return 1.0;
  }
  return 1.0;
}

class Net {
 public:
  Net() = default;

  /// Glorot-uniform weights (He-uniform for relu layers), zero biases.
  Net(NetSpec spec, std::uint64_t seed) : spec_(std::move(spec)), seed_(seed) {
    spec_.validate();
    std::size_t in = spec_.input_dim(), off = 0;
    for (const auto& [w, a] : spec_.hidden) {
      layers_.push_back({in, w, a, off});
      off += layers_.back().params();
      in = w;
    }
    layers_.push_back({in, spec_.output_dim(), Activation::Linear, off});
    off += layers_.back().params();
    params_.assign(off, 0.0);
    std::mt19937_64 rng(seed);
    for (const auto& L : layers_) {
      const double lim = L.act == Activation::Relu ? std::sqrt(6.0 / static_cast<double>(L.in))
                                                   : std::sqrt(6.0 / static_cast<double>(L.in + L.out));
      std::uniform_real_distribution<double> dist(-lim, lim);
      for (std::size_t i = 0; i < L.out * L.in; ++i) params_[L.offset + i] = dist(rng);
    }
    mean_.assign(spec_.input_dim(), 0.0);
    scale_.assign(spec_.input_dim(), 1.0);
  }

  const NetSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<LayerShape>& layers() const { return layers_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

  /// Per-feature standardisation x' = (x - mean) * scale.
  const std::vector<double>& input_mean() const { return mean_; }
  const std::vector<double>& input_scale() const { return scale_; }
  bool normalizer_fitted() const { return fitted_; }
  void set_normalizer(std::vector<double> mean, std::vector<double> scale) {
    if (mean.size() != spec_.input_dim() || scale.size() != spec_.input_dim()) {
      throw std::invalid_argument("normalizer dimension mismatch");
    }
    mean_ = std::move(mean);
    scale_ = std::move(scale);
    fitted_ = true;
  }

  void forward(std::span<const double> input, std::span<double> output) const {
    Workspace ws;
    forward_cached(input, ws);
    std::copy(ws.act.back().begin(), ws.act.back().end(), output.begin());
  }

  std::vector<double> forward(std::span<const double> input) const {
    std::vector<double> out(spec_.output_dim());
    forward(input, out);
    return out;
  }

  /// Activations per layer; act[0] is the normalised input.
  struct Workspace {
    std::vector<std::vector<double>> pre, act, delta;
  };

  void forward_cached(std::span<const double> input, Workspace& ws) const {
    if (input.size() != spec_.input_dim()) throw std::invalid_argument("net input dimension mismatch");
    ws.pre.resize(layers_.size() + 1);
    ws.act.resize(layers_.size() + 1);
    ws.act[0].resize(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) ws.act[0][i] = (input[i] - mean_[i]) * scale_[i];
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const LayerShape& L = layers_[l];
      const double* W = params_.data() + L.offset;
      const double* b = W + L.out * L.in;
      auto& z = ws.pre[l + 1];
      auto& a = ws.act[l + 1];
      z.resize(L.out);
      a.resize(L.out);
      const auto& x = ws.act[l];
      for (std::size_t o = 0; o < L.out; ++o) {
        double s = b[o];
        const double* row = W + o * L.in;
        for (std::size_t i = 0; i < L.in; ++i) s += row[i] * x[i];
        z[o] = s;
        a[o] = activate(L.act, s);
      }
    }
  }

  /// Adds d(weight * 0.5 * |out - target|^2)/d(params) into grad; returns the
  /// squared error sum of this row.
  double backward(std::span<const double> input, std::span<const double> target, double weight,
                  std::span<double> grad, Workspace& ws) const {
    forward_cached(input, ws);
    ws.delta.resize(layers_.size() + 1);
    const auto& y = ws.act.back();
    auto& d_out = ws.delta.back();
    d_out.resize(y.size());
    double sq = 0.0;
    for (std::size_t o = 0; o < y.size(); ++o) {
      const double r = y[o] - target[o];
      sq += r * r;
      d_out[o] = weight * r;  // output layer is linear
    }
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const LayerShape& L = layers_[l];
      const double* W = params_.data() + L.offset;
      double* gW = grad.data() + L.offset;
      double* gb = gW + L.out * L.in;
      const auto& x = ws.act[l];
      const auto& d = ws.delta[l + 1];
      for (std::size_t o = 0; o < L.out; ++o) {
        const double dz = d[o];
        if (dz == 0.0) continue;
        gb[o] += dz;
        double* grow = gW + o * L.in;
        for (std::size_t i = 0; i < L.in; ++i) grow[i] += dz * x[i];
      }
      if (l == 0) break;
      auto& dprev = ws.delta[l];
      const LayerShape& P = layers_[l - 1];
      dprev.assign(L.in, 0.0);
      for (std::size_t o = 0; o < L.out; ++o) {
        const double dz = d[o];
        if (dz == 0.0) continue;
        const double* row = W + o * L.in;
        for (std::size_t i = 0; i < L.in; ++i) dprev[i] += row[i] * dz;
      }
      for (std::size_t i = 0; i < L.in; ++i) dprev[i] *= activate_grad(P.act, ws.pre[l][i], ws.act[l][i]);
    }
    return sq;
  }

  nlohmann::json to_json() const;
  static Net from_json(const nlohmann::json& j);

 private:
  NetSpec spec_;
  std::uint64_t seed_ = 0;
  std::vector<LayerShape> layers_;
  std::vector<double> params_;
  std::vector<double> mean_, scale_;
  bool fitted_ = false;
};

// ---------------------------------------------------------------------------
// Data

struct Provenance {
  ControlSetting setting;
  std::string source;  // e.g. "nominal", "combined"
  std::size_t iteration = 0;
};

/// Flat row storage; row i belongs to behaviour group[i].
struct Dataset {
  std::size_t in_dim = 0, out_dim = 0;
  std::vector<double> x, t;
  std::vector<std::size_t> group;
  std::vector<Provenance> provenance;  // one per group

  std::size_t rows() const { return group.size(); }
  std::size_t groups() const { return provenance.size(); }
  std::span<const double> input(std::size_t i) const { return {x.data() + i * in_dim, in_dim}; }
  std::span<const double> target(std::size_t i) const { return {t.data() + i * out_dim, out_dim}; }
};

using IoPair = std::pair<std::vector<double>, std::vector<double>>;

/// One (input, target) pair per k in [max history, K): u history is the
/// recorded (teacher) control sequence.
inline std::vector<IoPair> make_io_pairs(const Behaviour& b, const NetSpec& spec) {
  const std::size_t K = b.size();
  const std::size_t k0 = spec.hist.longest();
  if (K <= k0) throw std::invalid_argument("behaviour too short for the requested history");
  std::vector<IoPair> out;
  out.reserve(K - k0);
  std::vector<double> in;
  for (std::size_t k = k0; k < K; ++k) {
    assemble_input(
        spec, [&](std::size_t j) { return b.r.row(k - j); }, [&](std::size_t j) { return b.y.row(k - j); },
        [&](std::size_t j) { return b.u.row(k - j); }, [&](std::size_t j) { return b.nu.row(k - j); }, in);
    auto u = b.u.row(k);
    out.emplace_back(in, std::vector<double>(u.begin(), u.end()));
  }
  return out;
}

/// Appends a behaviour's rows; returns its group id.
inline std::size_t add_behaviour(Dataset& d, const Behaviour& b, const NetSpec& spec, std::string source,
                                 std::size_t iteration) {
  if (d.rows() == 0 && d.groups() == 0) {
    d.in_dim = spec.input_dim();
    d.out_dim = spec.output_dim();
  }
  if (d.in_dim != spec.input_dim() || d.out_dim != spec.output_dim()) {
    throw std::invalid_argument("behaviour rows do not match dataset dimensions");
  }
  const std::size_t g = d.groups();
  for (auto& [in, tgt] : make_io_pairs(b, spec)) {
    d.x.insert(d.x.end(), in.begin(), in.end());
    d.t.insert(d.t.end(), tgt.begin(), tgt.end());
    d.group.push_back(g);
  }
  d.provenance.push_back({b.setting, std::move(source), iteration});
  return g;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch = 64;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct TrainResult {
  double train_mse = 0.0;
  double val_mse = std::numeric_limits<double>::quiet_NaN();  // NaN without a validation split
  std::vector<double> epoch_mse;                             // training-split MSE after each epoch
  std::size_t train_rows = 0, val_rows = 0;
};

/// Mean over rows and output components of the squared error.
inline double mse(const Net& net, const Dataset& d, const std::vector<std::size_t>& rows) {
  if (rows.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  Net::Workspace ws;
  for (std::size_t i : rows) {
    net.forward_cached(d.input(i), ws);
    const auto& y = ws.act.back();
    const auto t = d.target(i);
    for (std::size_t o = 0; o < y.size(); ++o) s += (y[o] - t[o]) * (y[o] - t[o]);
  }
  return s / static_cast<double>(rows.size() * d.out_dim);
}

/// Splits behaviour groups into train / validation; the validation share is
/// round(val_fraction * groups), at least one group when the fraction is
/// positive and more than one group exists.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_rows(const Dataset& d, double val_fraction,
                                                                                std::uint64_t seed) {
  std::vector<std::size_t> gids(d.groups());
  std::iota(gids.begin(), gids.end(), 0);
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  std::shuffle(gids.begin(), gids.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(gids.size())));
  if (val_fraction > 0.0 && n_val == 0 && gids.size() > 1) n_val = 1;
  if (n_val >= gids.size()) n_val = gids.size() > 0 ? gids.size() - 1 : 0;
  std::vector<char> is_val(d.groups(), 0);
  for (std::size_t i = 0; i < n_val; ++i) is_val[gids[i]] = 1;
  std::vector<std::size_t> tr, va;
  for (std::size_t i = 0; i < d.rows(); ++i) (is_val[d.group[i]] ? va : tr).push_back(i);
  return {tr, va};
}

inline void fit_normalizer(Net& net, const Dataset& d, const std::vector<std::size_t>& rows) {
  const std::size_t n = d.in_dim;
  std::vector<double> mean(n, 0.0), var(n, 0.0), scale(n, 1.0);
  for (std::size_t i : rows) {
    const auto x = d.input(i);
    for (std::size_t c = 0; c < n; ++c) mean[c] += x[c];
  }
  const double N = static_cast<double>(std::max<std::size_t>(rows.size(), 1));
  for (double& m : mean) m /= N;
  for (std::size_t i : rows) {
    const auto x = d.input(i);
    for (std::size_t c = 0; c < n; ++c) var[c] += (x[c] - mean[c]) * (x[c] - mean[c]);
  }
  for (std::size_t c = 0; c < n; ++c) {
    const double sd = std::sqrt(var[c] / N);
    scale[c] = sd > 1e-12 ? 1.0 / sd : 1.0;
  }
  net.set_normalizer(std::move(mean), std::move(scale));
}

/// Minibatch Adam on the MSE. The normaliser is fit on the training split the
/// first time a net is trained and kept afterwards.
inline TrainResult train(Net& net, const Dataset& d, const TrainConfig& cfg) {
  if (d.rows() == 0) throw std::invalid_argument("cannot train on an empty dataset");
  if (!(cfg.val_fraction >= 0.0 && cfg.val_fraction < 1.0)) throw std::invalid_argument("val_fraction must be in [0,1)");
  if (d.in_dim != net.spec().input_dim() || d.out_dim != net.spec().output_dim()) {
    throw std::invalid_argument("dataset dimensions do not match the net");
  }
  auto [tr, va] = split_rows(d, cfg.val_fraction, cfg.seed);
  if (!net.normalizer_fitted()) fit_normalizer(net, d, tr);

  std::vector<double>& p = net.params();
  const std::size_t P = p.size();
  std::vector<double> g(P), m(P, 0.0), v(P, 0.0);
  const std::size_t batch = cfg.batch == 0 || cfg.batch >= tr.size() ? tr.size() : cfg.batch;
  std::mt19937_64 rng(cfg.seed);
  Net::Workspace ws;
  TrainResult res;
  res.train_rows = tr.size();
  res.val_rows = va.size();
  std::uint64_t t = 0;
  std::vector<std::size_t> order = tr;
  for (std::size_t ep = 0; ep < cfg.epochs; ++ep) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::fill(g.begin(), g.end(), 0.0);
      const double w = 2.0 / static_cast<double>((end - start) * d.out_dim);
      for (std::size_t q = start; q < end; ++q) net.backward(d.input(order[q]), d.target(order[q]), w, g, ws);
      ++t;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
      for (std::size_t i = 0; i < P; ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        p[i] -= cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.adam_eps);
      }
    }
    const double e = mse(net, d, tr);
    if (!std::isfinite(e)) throw TrainingDiverged(ep, "non-finite training loss");
    res.epoch_mse.push_back(e);
  }
  res.train_mse = res.epoch_mse.empty() ? mse(net, d, tr) : res.epoch_mse.back();
  res.val_mse = mse(net, d, va);
  return res;
}

// ---------------------------------------------------------------------------
// Gradient check

/// Loss of one row, mean over output components of the squared error.
inline double row_loss(const Net& net, std::span<const double> input, std::span<const double> target) {
  const auto y = net.forward(input);
  double s = 0.0;
  for (std::size_t o = 0; o < y.size(); ++o) s += (y[o] - target[o]) * (y[o] - target[o]);
  return s / static_cast<double>(y.size());
}

inline std::vector<double> row_gradient(const Net& net, std::span<const double> input, std::span<const double> target) {
  std::vector<double> g(net.parameter_count(), 0.0);
  Net::Workspace ws;
  net.backward(input, target, 2.0 / static_cast<double>(net.spec().output_dim()), g, ws);
  return g;
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
};

/// Central differences against backprop. The relative error of one parameter
/// is |a - b| / max(|a|, |b|, floor); the floor keeps parameters whose true
/// gradient is zero from dividing round-off by round-off.
inline GradCheck gradient_check(Net net, std::span<const double> input, std::span<const double> target,
                                double eps = 1e-6, double floor = 1e-7) {
  if (!(eps >= 1e-7 && eps <= 1e-4)) throw std::invalid_argument("gradient check step must be in [1e-7, 1e-4]");
  const auto g = row_gradient(net, input, target);
  GradCheck out;
  auto& p = net.params();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double keep = p[i];
    p[i] = keep + eps;
    const double lp = row_loss(net, input, target);
    p[i] = keep - eps;
    const double lm = row_loss(net, input, target);
    p[i] = keep;
    const double fd = (lp - lm) / (2.0 * eps);
    const double rel = std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), floor});
    if (rel > out.max_rel_error) out = {rel, i};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Closed-loop adapter

/// Runs a net as a controller on its own past outputs. On the first step the
/// r, y and nu histories are filled by repeating the first sample and the u
/// history with zeros.
class NetController final : public Controller {
 public:
  explicit NetController(std::shared_ptr<const Net> net) : net_(std::move(net)) {}

  void reset() override {
    r_.clear();
    y_.clear();
    u_.clear();
    nu_.clear();
  }

  std::vector<double> step(const ControllerInput& in) override {
    const NetSpec& s = net_->spec();
    const History& h = s.hist;
    auto push = [](std::deque<std::vector<double>>& buf, std::span<const double> v, std::size_t keep) {
      if (buf.empty()) buf.assign(keep + 1, std::vector<double>(v.begin(), v.end()));
      else {
        buf.emplace_front(v.begin(), v.end());
        buf.pop_back();
      }
    };
    push(r_, in.r, s.mode == InputMode::Error ? h.n_y : h.n_r);
    push(y_, in.y, h.n_y);
    if (s.d_nu > 0) {
      std::vector<double> nu(in.nu.begin(), in.nu.end());
      nu.resize(s.d_nu, 0.0);
      push(nu_, nu, h.n_nu);
    }
    if (u_.empty()) u_.assign(h.n_u + 1, std::vector<double>(s.d_u, 0.0));
    assemble_input(
        s, [&](std::size_t j) { return std::span<const double>(r_[j]); },
        [&](std::size_t j) { return std::span<const double>(y_[j]); },
        [&](std::size_t j) { return std::span<const double>(u_[j - 1]); },
        [&](std::size_t j) { return std::span<const double>(nu_[j]); }, input_);
    last_input_ = input_;
    std::vector<double> u = net_->forward(input_);
    u_.push_front(u);
    u_.pop_back();
    return u;
  }

  std::unique_ptr<Controller> clone() const override { return std::make_unique<NetController>(*this); }
  std::string describe() const override { return "net"; }

  const std::vector<double>& last_input() const { return last_input_; }
  const Net& net() const { return *net_; }

 private:
  std::shared_ptr<const Net> net_;
  std::deque<std::vector<double>> r_, y_, u_, nu_;
  std::vector<double> input_, last_input_;
};

inline std::unique_ptr<Controller> as_controller(std::shared_ptr<const Net> net) {
  return std::make_unique<NetController>(std::move(net));
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr const char* kNetSchema = "cegnn.net.v1";

inline nlohmann::json Net::to_json() const {
  nlohmann::json hidden = nlohmann::json::array();
  for (const auto& [w, a] : spec_.hidden) hidden.push_back({{"width", w}, {"activation", to_string(a)}});
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& L : layers_) {
    const auto w0 = params_.begin() + static_cast<std::ptrdiff_t>(L.offset);
    const auto b0 = w0 + static_cast<std::ptrdiff_t>(L.out * L.in);
    layers.push_back({{"in", L.in},
                      {"out", L.out},
                      {"activation", to_string(L.act)},
                      {"weights", std::vector<double>(w0, b0)},
                      {"bias", std::vector<double>(b0, b0 + static_cast<std::ptrdiff_t>(L.out))}});
  }
  return {{"schema", kNetSchema},
          {"seed", seed_},
          {"spec",
           {{"d_r", spec_.d_r},
            {"d_y", spec_.d_y},
            {"d_u", spec_.d_u},
            {"d_nu", spec_.d_nu},
            {"history", {{"n_r", spec_.hist.n_r}, {"n_y", spec_.hist.n_y}, {"n_u", spec_.hist.n_u}, {"n_nu", spec_.hist.n_nu}}},
            {"input", spec_.mode == InputMode::Error ? "error" : "separate"},
            {"hidden", hidden}}},
          {"normalizer", {{"fitted", fitted_}, {"mean", mean_}, {"scale", scale_}}},
          {"layers", layers}};
}

inline Net Net::from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != kNetSchema) throw std::runtime_error("net file has unknown schema");
  const auto& s = j.at("spec");
  NetSpec spec;
  spec.d_r = s.at("d_r");
  spec.d_y = s.at("d_y");
  spec.d_u = s.at("d_u");
  spec.d_nu = s.at("d_nu");
  const auto& h = s.at("history");
  spec.hist = {h.at("n_r"), h.at("n_y"), h.at("n_u"), h.at("n_nu")};
  spec.mode = s.at("input") == "error" ? InputMode::Error : InputMode::Separate;
  spec.hidden.clear();
  for (const auto& l : s.at("hidden")) spec.hidden.emplace_back(l.at("width"), parse_activation(l.at("activation")));
  Net net(spec, j.at("seed").get<std::uint64_t>());
  const auto& layers = j.at("layers");
  if (layers.size() != net.layers_.size()) throw std::runtime_error("net file layer count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = net.layers_[l];
    const auto w = layers[l].at("weights").get<std::vector<double>>();
    const auto b = layers[l].at("bias").get<std::vector<double>>();
    if (w.size() != L.out * L.in || b.size() != L.out) throw std::runtime_error("net file layer shape mismatch");
    std::copy(w.begin(), w.end(), net.params_.begin() + static_cast<std::ptrdiff_t>(L.offset));
    std::copy(b.begin(), b.end(), net.params_.begin() + static_cast<std::ptrdiff_t>(L.offset + w.size()));
  }
  const auto& nz = j.at("normalizer");
  net.mean_ = nz.at("mean").get<std::vector<double>>();
  net.scale_ = nz.at("scale").get<std::vector<double>>();
  net.fitted_ = nz.at("fitted").get<bool>();
  if (net.mean_.size() != spec.input_dim() || net.scale_.size() != spec.input_dim()) {
    throw std::runtime_error("net file normalizer dimension mismatch");
  }
  return net;
}

}  // namespace cegnn::nn
