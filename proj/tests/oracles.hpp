#pragma once

// Independent reference implementations used by the tests: a top-down
// brute-force robustness evaluator, a Boolean evaluator, and random formula
// and trace generators.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "cegnn/stl.hpp"

namespace oracle {

using namespace cegnn::stl;

/// Sample indices k with t*step + a <= k*step <= t*step + b, written out
/// directly from the definition.
inline std::vector<std::size_t> window(std::size_t t, const Interval& iv, double step, std::size_t n) {
  std::vector<std::size_t> out;
  const double t0 = static_cast<double>(t) * step;
  const double a = iv.lo.number;
  for (std::size_t k = 0; k < n; ++k) {
    const double tk = static_cast<double>(k) * step;
    if (tk + 1e-9 * step < t0 + a) continue;
    if (!iv.to_end && tk - 1e-9 * step > t0 + iv.hi.number) continue;
    out.push_back(k);
  }
  return out;
}

inline double g_value(const Predicate& p, const Trace& tr, std::size_t k) {
  double g = tr.get(p.lhs.name).at(k, 0);
  g -= p.rhs ? tr.get(p.rhs->name).at(k, 0) : p.offset;
  return p.abs ? std::fabs(g) : g;
}

inline double rob(const Formula& f, const Trace& tr, std::size_t t) {
  const std::size_t n = tr.size();
  switch (f.op) {
    case Op::True: return kInf;
    case Op::Pred: {
      const double g = g_value(f.pred, tr, t), b = f.pred.threshold.number;
      switch (f.pred.cmp) {
        case Cmp::Gt:
        case Cmp::Ge: return g - b;
        case Cmp::Lt:
        case Cmp::Le: return b - g;
        case Cmp::Eq: return -std::fabs(g - b);
        case Cmp::Ne: return std::fabs(g - b);
      }
      return 0.0;
    }
    case Op::Not: return -rob(*f.lhs, tr, t);
    case Op::And: return std::min(rob(*f.lhs, tr, t), rob(*f.rhs, tr, t));
    case Op::Or: return std::max(rob(*f.lhs, tr, t), rob(*f.rhs, tr, t));
    case Op::Implies: return std::max(-rob(*f.lhs, tr, t), rob(*f.rhs, tr, t));
    case Op::Always: {
      double v = kInf;
      for (std::size_t k : window(t, f.interval, tr.step(), n)) v = std::min(v, rob(*f.lhs, tr, k));
      return v;
    }
    case Op::Eventually: {
      double v = -kInf;
      for (std::size_t k : window(t, f.interval, tr.step(), n)) v = std::max(v, rob(*f.lhs, tr, k));
      return v;
    }
    case Op::Until: {
      double v = -kInf;
      for (std::size_t k : window(t, f.interval, tr.step(), n)) {
        double hold = kInf;
        for (std::size_t j = t; j <= k; ++j) hold = std::min(hold, rob(*f.lhs, tr, j));
        v = std::max(v, std::min(rob(*f.rhs, tr, k), hold));
      }
      return v;
    }
  }
  return 0.0;
}

/// Boolean semantics over the same index sets.
inline bool sat(const Formula& f, const Trace& tr, std::size_t t) {
  const std::size_t n = tr.size();
  switch (f.op) {
    case Op::True: return true;
    case Op::Pred: {
      const double g = g_value(f.pred, tr, t), b = f.pred.threshold.number;
      switch (f.pred.cmp) {
        case Cmp::Gt: return g > b;
        case Cmp::Ge: return g >= b;
        case Cmp::Lt: return g < b;
        case Cmp::Le: return g <= b;
        case Cmp::Eq: return g == b;
        case Cmp::Ne: return g != b;
      }
      return false;
    }
    case Op::Not: return !sat(*f.lhs, tr, t);
    case Op::And: return sat(*f.lhs, tr, t) && sat(*f.rhs, tr, t);
    case Op::Or: return sat(*f.lhs, tr, t) || sat(*f.rhs, tr, t);
    case Op::Implies: return !sat(*f.lhs, tr, t) || sat(*f.rhs, tr, t);
    case Op::Always:
      for (std::size_t k : window(t, f.interval, tr.step(), n))
        if (!sat(*f.lhs, tr, k)) return false;
      return true;
    case Op::Eventually:
      for (std::size_t k : window(t, f.interval, tr.step(), n))
        if (sat(*f.lhs, tr, k)) return true;
      return false;
    case Op::Until:
      for (std::size_t k : window(t, f.interval, tr.step(), n)) {
        bool hold = true;
        for (std::size_t j = t; j <= k && hold; ++j) hold = sat(*f.lhs, tr, j);
        if (hold && sat(*f.rhs, tr, k)) return true;
      }
      return false;
  }
  return false;
}

/// Random formulas over scalar signals x and y.
class FormulaGen {
 public:
  explicit FormulaGen(std::uint64_t seed, double step = 0.5) : rng_(seed), step_(step) {}

  /// When `marked_shift` is set, the first `<` predicate generated gets its
  /// threshold increased by that amount; `marked_positive` reports its polarity.
  FormulaPtr formula(int depth, double marked_shift = 0.0) {
    marked_ = false;
    shift_ = marked_shift;
    return gen(depth, true);
  }
  bool marked() const { return marked_; }
  bool marked_positive() const { return marked_positive_; }

  Interval interval() {
    const int a = std::uniform_int_distribution<int>(0, 4)(rng_);
    const int w = std::uniform_int_distribution<int>(1, 6)(rng_);
    double lo = a * step_, hi = (a + w) * step_;
    if (coin(0.25)) lo += 0.3 * step_;  // off-grid bounds
    if (coin(0.25)) hi += 0.6 * step_;
    if (coin(0.1)) return interval_to_end(lo);
    return cegnn::stl::interval(lo, hi);
  }

 private:
  bool coin(double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < p; }
  double num() { return std::round(std::uniform_real_distribution<double>(-2.0, 2.0)(rng_) * 8.0) / 8.0; }

  FormulaPtr pred(bool positive) {
    const int kind = std::uniform_int_distribution<int>(0, 3)(rng_);
    Predicate p;
    p.lhs.name = coin(0.5) ? "x" : "y";
    p.threshold = Value::num(num());
    switch (kind) {
      case 0: p.cmp = Cmp::Lt; break;
      case 1: p.cmp = Cmp::Gt; break;
      case 2: p.cmp = Cmp::Ge; break;
      default:
        p.cmp = Cmp::Lt;
        p.abs = true;
        p.rhs = SignalRef{p.lhs.name == "x" ? "y" : "x", -1, false};
        p.threshold = Value::num(std::fabs(num()));
    }
    if (p.cmp == Cmp::Lt && !marked_) {
      marked_ = true;
      marked_positive_ = positive;
      p.threshold.number += shift_;
    }
    return make_pred(std::move(p));
  }

  FormulaPtr gen(int depth, bool positive) {
    if (depth == 0) return pred(positive);
    switch (std::uniform_int_distribution<int>(0, 7)(rng_)) {
      case 0: return pred(positive);
      case 1: return make_not(gen(depth - 1, !positive));
      case 2: {
        auto a = gen(depth - 1, positive);
        return make_and(a, gen(depth - 1, positive));
      }
      case 3: {
        auto a = gen(depth - 1, positive);
        return make_or(a, gen(depth - 1, positive));
      }
      case 4: {
        auto a = gen(depth - 1, !positive);
        return make_implies(a, gen(depth - 1, positive));
      }
      case 5: {
        auto iv = interval();
        return make_always(iv, gen(depth - 1, positive));
      }
      case 6: {
        auto iv = interval();
        return make_eventually(iv, gen(depth - 1, positive));
      }
      default: {
        auto iv = interval();
        auto a = gen(depth - 1, positive);
        return make_until(iv, a, gen(depth - 1, positive));
      }
    }
  }

  std::mt19937_64 rng_;
  double step_;
  bool marked_ = false;
  bool marked_positive_ = true;
  double shift_ = 0.0;
};

inline Trace random_trace(std::mt19937_64& rng, std::size_t n, double step) {
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  std::vector<double> x(n), y(n);
  for (auto& v : x) v = U(rng);
  for (auto& v : y) v = U(rng);
  Trace tr;
  tr.add(SampledSignal::scalar("x", step, x));
  tr.add(SampledSignal::scalar("y", step, y));
  return tr;
}

}  // namespace oracle
