#pragma once

// Parametric STL: valuations, polarity checks, grid classification into
// False / Valid valuations, the union volume of dominated boxes and the
// policy similarity ratio.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cegnn/errors.hpp"
#include "cegnn/parallel.hpp"
#include "cegnn/stl.hpp"
#include "json.hpp"

namespace cegnn::pstl {

/// Increasing: a larger value never lowers robustness (more Valid).
enum class Polarity { Increasing, Decreasing };

inline const char* to_string(Polarity p) { return p == Polarity::Increasing ? "increasing" : "decreasing"; }

inline Polarity parse_polarity(const std::string& s) {
  if (s == "increasing") return Polarity::Increasing;
  if (s == "decreasing") return Polarity::Decreasing;
  throw std::invalid_argument("unknown polarity '" + s + "'");
}

struct ParamDecl {
  std::string name;
  Polarity polarity = Polarity::Increasing;
  double lo = 0.0, hi = 1.0;
};

using Valuation = std::map<std::string, double>;

struct PstlFormula {
  stl::FormulaPtr tmpl;
  std::vector<ParamDecl> params;

  const ParamDecl& param(const std::string& name) const {
    for (const auto& p : params)
      if (p.name == name) return p;
    throw std::invalid_argument("unknown parameter " + name);
  }

  double box_volume() const {
    double v = 1.0;
    for (const auto& p : params) v *= p.hi - p.lo;
    return v;
  }
};

inline std::string to_string(const Valuation& v) {
  std::ostringstream os;
  os << '{';
  bool first = true;
  for (const auto& [k, x] : v) {
    os << (first ? "" : ", ") << k << "=" << stl::format_number(x);
    first = false;
  }
  os << '}';
  return os.str();
}

// ---------------------------------------------------------------------------
// Substitution

namespace detail {

inline stl::Value bind_value(const stl::Value& v, const Valuation& val) {
  if (!v.is_param()) return v;
  auto it = val.find(v.param);
  if (it == val.end()) throw std::invalid_argument("unbound parameter " + v.param);
  return stl::Value::num(it->second);
}

inline stl::FormulaPtr substitute(const stl::FormulaPtr& f, const Valuation& val) {
  using stl::Op;
  switch (f->op) {
    case Op::True: return f;
    case Op::Pred: {
      stl::Predicate p = f->pred;
      p.threshold = bind_value(p.threshold, val);
      return stl::make_pred(std::move(p));
    }
    case Op::Not: return stl::make_not(substitute(f->lhs, val));
    case Op::And: return stl::make_and(substitute(f->lhs, val), substitute(f->rhs, val));
    case Op::Or: return stl::make_or(substitute(f->lhs, val), substitute(f->rhs, val));
    case Op::Implies: return stl::make_implies(substitute(f->lhs, val), substitute(f->rhs, val));
    case Op::Always:
    case Op::Eventually:
    case Op::Until: {
      stl::Interval iv = f->interval;
      iv.lo = bind_value(iv.lo, val);
      if (!iv.to_end) iv.hi = bind_value(iv.hi, val);
      if (f->op == Op::Always) return stl::make_always(iv, substitute(f->lhs, val));
      if (f->op == Op::Eventually) return stl::make_eventually(iv, substitute(f->lhs, val));
      return stl::make_until(iv, substitute(f->lhs, val), substitute(f->rhs, val));
    }
  }
  return f;
}

/// Records the polarity each occurrence of a parameter induces; `positive`
/// tracks whether the subformula occurs under an even number of negations.
inline void occurrences(const stl::Formula& f, bool positive, std::multimap<std::string, Polarity>& out) {
  using stl::Op;
  auto note = [&](const stl::Value& v, bool larger_helps) {
    if (!v.is_param()) return;
    out.emplace(v.param, larger_helps == positive ? Polarity::Increasing : Polarity::Decreasing);
  };
  switch (f.op) {
    case Op::True: return;
    case Op::Pred: {
      const stl::Cmp c = f.pred.cmp;
      if (c == stl::Cmp::Eq || c == stl::Cmp::Ne) {
        if (f.pred.threshold.is_param()) throw PolarityError("parameter " + f.pred.threshold.param + " in a non-monotone comparison");
        return;
      }
      note(f.pred.threshold, c == stl::Cmp::Lt || c == stl::Cmp::Le);
      return;
    }
    case Op::Not: occurrences(*f.lhs, !positive, out); return;
    case Op::And:
    case Op::Or:
      occurrences(*f.lhs, positive, out);
      occurrences(*f.rhs, positive, out);
      return;
    case Op::Implies:
      occurrences(*f.lhs, !positive, out);
      occurrences(*f.rhs, positive, out);
      return;
    case Op::Always:
      note(f.interval.lo, true);
      if (!f.interval.to_end) note(f.interval.hi, false);
      occurrences(*f.lhs, positive, out);
      return;
    case Op::Eventually:
      note(f.interval.lo, false);
      if (!f.interval.to_end) note(f.interval.hi, true);
      occurrences(*f.lhs, positive, out);
      return;
    case Op::Until:
      if (f.interval.lo.is_param()) throw PolarityError("parameter " + f.interval.lo.param + " as an until lower bound");
      if (!f.interval.to_end) note(f.interval.hi, true);
      occurrences(*f.lhs, positive, out);
      occurrences(*f.rhs, positive, out);
      return;
  }
}

}  // namespace detail

/// Every occurrence of every parameter must induce its declared polarity, and
/// every template parameter must be declared.
inline void check_syntactic_polarity(const PstlFormula& p) {
  std::multimap<std::string, Polarity> occ;
  detail::occurrences(*p.tmpl, true, occ);
  for (const auto& [name, pol] : occ) {
    const ParamDecl& d = p.param(name);
    if (pol != d.polarity) {
      throw PolarityError("parameter " + name + " declared " + to_string(d.polarity) + " but occurs " + to_string(pol));
    }
  }
  for (const auto& d : p.params) {
    if (!occ.count(d.name)) throw std::invalid_argument("declared parameter " + d.name + " does not occur");
    if (!(d.lo < d.hi)) throw std::invalid_argument("parameter " + d.name + " has an empty range");
  }
}

inline stl::FormulaPtr instantiate(const PstlFormula& p, const Valuation& v) {
  for (const auto& d : p.params) {
    auto it = v.find(d.name);
    if (it == v.end()) throw std::invalid_argument("unbound parameter " + d.name);
    const double tol = 1e-12 * std::max(1.0, std::abs(d.hi - d.lo));
    if (!(it->second >= d.lo - tol && it->second <= d.hi + tol)) {
      throw std::invalid_argument("parameter " + d.name + " = " + stl::format_number(it->second) + " outside [" +
                                  stl::format_number(d.lo) + ", " + stl::format_number(d.hi) + "]");
    }
  }
  return detail::substitute(p.tmpl, v);
}

/// Phi = alw not(|s| > s_ov) and alw(not(|s| < s_st) => ev_[0,tau_tr] alw_[0,tau_st] (|s| < s_st)),
/// with |.| the infinity norm of signal `signal`.
inline PstlFormula build_phi_template(const std::string& signal = "y", ParamDecl s_ov = {"s_ov", Polarity::Increasing, 0.0, 1.0},
                                      ParamDecl s_st = {"s_st", Polarity::Increasing, 0.0, 1.0},
                                      ParamDecl tau_tr = {"tau_tr", Polarity::Increasing, 0.1, 5.0},
                                      ParamDecl tau_st = {"tau_st", Polarity::Decreasing, 0.1, 5.0}) {
  s_ov.name = "s_ov";
  s_st.name = "s_st";
  tau_tr.name = "tau_tr";
  tau_st.name = "tau_st";
  s_ov.polarity = s_st.polarity = tau_tr.polarity = Polarity::Increasing;
  tau_st.polarity = Polarity::Decreasing;
  const std::string text = "alw not(norm(" + signal + ") > $s_ov) and alw(not(norm(" + signal + ") < $s_st) => ev_[0,$tau_tr] alw_[0,$tau_st] (norm(" +
                           signal + ") < $s_st))";
  PstlFormula p{stl::parse_formula(text), {s_ov, s_st, tau_tr, tau_st}};
  check_syntactic_polarity(p);
  return p;
}

// ---------------------------------------------------------------------------
// Orientation and volumes

/// Distance of each coordinate from the "most False" end of its range, so
/// that larger oriented values are more Valid.
inline std::vector<double> orient(const Valuation& v, const std::vector<ParamDecl>& decls) {
  std::vector<double> o(decls.size());
  for (std::size_t i = 0; i < decls.size(); ++i) {
    auto it = v.find(decls[i].name);
    if (it == v.end()) throw std::invalid_argument("unbound parameter " + decls[i].name);
    const double x = it->second;
    const double tol = 1e-12 * std::max(1.0, decls[i].hi - decls[i].lo);
    if (x < decls[i].lo - tol || x > decls[i].hi + tol) throw std::invalid_argument("point outside box: " + to_string(v));
    o[i] = decls[i].polarity == Polarity::Increasing ? x - decls[i].lo : decls[i].hi - x;
    o[i] = std::clamp(o[i], 0.0, decls[i].hi - decls[i].lo);
  }
  return o;
}

/// True iff a <= b on every coordinate.
inline bool weakly_dominated(const std::vector<double>& a, const std::vector<double>& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] > b[i]) return false;
  return true;
}

namespace detail {

/// Volume of the union of boxes [0, p] over the first d coordinates.
inline double union_volume(std::vector<std::vector<double>> pts, std::size_t d) {
  // keep only maximal points
  std::vector<std::vector<double>> front;
  std::sort(pts.begin(), pts.end(), [d](const auto& a, const auto& b) {
    for (std::size_t i = d; i-- > 0;)
      if (a[i] != b[i]) return a[i] > b[i];
    return false;
  });
  for (auto& p : pts) {
    bool covered = false;
    for (const auto& q : front) {
      bool dom = true;
      for (std::size_t i = 0; i < d && dom; ++i) dom = p[i] <= q[i];
      if (dom) {
        covered = true;
        break;
      }
    }
    if (!covered) front.push_back(std::move(p));
  }
  if (front.empty()) return 0.0;
  if (d == 1) return front.front()[0];
  // front is sorted by coordinate d-1 descending; sweep slices along it
  double vol = 0.0;
  std::vector<std::vector<double>> active;
  for (std::size_t i = 0; i < front.size(); ++i) {
    active.push_back(front[i]);
    const double top = front[i][d - 1];
    const double next = i + 1 < front.size() ? front[i + 1][d - 1] : 0.0;
    if (top > next) vol += (top - next) * union_volume(active, d - 1);
  }
  return vol;
}

}  // namespace detail

/// Exact volume of the union of the boxes spanned by the minimal corner of
/// the parameter box and each False point (oriented by the declared
/// polarities).
inline double volume_underapprox(const std::vector<Valuation>& false_points, const std::vector<ParamDecl>& decls) {
  if (decls.empty()) return 0.0;
  std::vector<std::vector<double>> pts;
  for (const auto& v : false_points) pts.push_back(orient(v, decls));
  return detail::union_volume(std::move(pts), decls.size());
}

inline double policy_similarity(double false_vol_nominal, double false_vol_learned) {
  if (!(false_vol_nominal > 0.0)) throw std::invalid_argument("policy similarity needs a nonzero nominal False volume");
  if (false_vol_learned < 0.0) throw std::invalid_argument("False volume must be nonnegative");
  return false_vol_learned / false_vol_nominal;
}

// ---------------------------------------------------------------------------
// Classification

struct ClassifiedPoint {
  Valuation valuation;
  double min_robustness = 0.0;
  bool valid = false;
  bool forced = false;  // made False by the monotone closure
};

struct FalseSetEstimate {
  std::vector<ParamDecl> box;
  std::vector<ClassifiedPoint> points;
  double volume_lower_bound = 0.0;

  std::vector<Valuation> false_points() const {
    std::vector<Valuation> out;
    for (const auto& p : points)
      if (!p.valid) out.push_back(p.valuation);
    return out;
  }
  std::vector<Valuation> valid_points() const {
    std::vector<Valuation> out;
    for (const auto& p : points)
      if (p.valid) out.push_back(p.valuation);
    return out;
  }
  double box_volume() const {
    double v = 1.0;
    for (const auto& d : box) v *= d.hi - d.lo;
    return v;
  }
};

/// Grid values of one axis: the endpoints and evenly spaced interior points,
/// or the midpoint for a single sample.
inline std::vector<double> axis_values(const ParamDecl& d, std::size_t n) {
  if (n == 0) throw std::invalid_argument("grid needs at least one sample per axis");
  if (n == 1) return {0.5 * (d.lo + d.hi)};
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = d.lo + (d.hi - d.lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

/// Evaluates every grid valuation (Valid iff min robustness > 0), then forces
/// False every point dominated by a False point.
inline FalseSetEstimate classify_valuations(const std::function<double(const Valuation&)>& evaluator,
                                            const PstlFormula& p, const std::vector<std::size_t>& grid,
                                            std::size_t threads = 1) {
  if (grid.size() != p.params.size()) throw std::invalid_argument("grid needs one sample count per parameter");
  std::vector<std::vector<double>> axes;
  std::size_t total = 1;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    axes.push_back(axis_values(p.params[i], grid[i]));
    total *= grid[i];
  }
  FalseSetEstimate est;
  est.box = p.params;
  est.points.resize(total);
  for (std::size_t n = 0; n < total; ++n) {
    std::size_t rem = n;
    Valuation v;
    for (std::size_t i = grid.size(); i-- > 0;) {
      v[p.params[i].name] = axes[i][rem % grid[i]];
      rem /= grid[i];
    }
    est.points[n].valuation = std::move(v);
  }
  parallel_for(total, threads, [&](std::size_t n) {
    auto& pt = est.points[n];
    try {
      pt.min_robustness = evaluator(pt.valuation);
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string(e.what()) + " at valuation " + to_string(pt.valuation));
    }
    pt.valid = pt.min_robustness > 0.0;
  });
  std::vector<std::vector<double>> o;
  for (const auto& pt : est.points) o.push_back(orient(pt.valuation, p.params));
  for (std::size_t a = 0; a < total; ++a) {
    if (est.points[a].valid) continue;
    for (std::size_t b = 0; b < total; ++b) {
      if (est.points[b].valid && weakly_dominated(o[b], o[a])) {
        est.points[b].valid = false;
        est.points[b].forced = true;
      }
    }
  }
  est.volume_lower_bound = volume_underapprox(est.false_points(), p.params);
  return est;
}

/// Samples random valuation pairs v <= v' (oriented) and checks that the
/// robustness on every trace does not decrease from v to v'.
inline void check_empirical_polarity(const PstlFormula& p, const std::vector<stl::Trace>& traces, std::size_t pairs,
                                     std::uint64_t seed, double tol = 1e-9) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (std::size_t n = 0; n < pairs; ++n) {
    Valuation a, b;
    for (const auto& d : p.params) {
      double x = U(rng), y = U(rng);
      if (x > y) std::swap(x, y);  // x <= y in oriented units
      auto raw = [&](double t) { return d.polarity == Polarity::Increasing ? d.lo + t * (d.hi - d.lo) : d.hi - t * (d.hi - d.lo); };
      a[d.name] = raw(x);
      b[d.name] = raw(y);
    }
    const auto fa = instantiate(p, a), fb = instantiate(p, b);
    for (const auto& tr : traces) {
      const double ra = stl::robustness(*fa, tr), rb = stl::robustness(*fb, tr);
      if (ra > rb + tol) {
        throw PolarityError("declared polarity violated between " + to_string(a) + " and " + to_string(b) + ": " +
                            stl::format_number(ra) + " > " + stl::format_number(rb));
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Export

inline std::string to_csv(const FalseSetEstimate& est) {
  std::ostringstream os;
  for (const auto& d : est.box) os << d.name << ',';
  os << "class,min_robustness,forced\n";
  for (const auto& pt : est.points) {
    for (const auto& d : est.box) os << stl::format_number(pt.valuation.at(d.name)) << ',';
    os << (pt.valid ? "valid" : "false") << ',' << stl::format_number(pt.min_robustness) << ',' << (pt.forced ? 1 : 0)
       << '\n';
  }
  return os.str();
}

inline nlohmann::json summary_json(const FalseSetEstimate& est) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& d : est.box) params.push_back({{"name", d.name}, {"polarity", to_string(d.polarity)}, {"lo", d.lo}, {"hi", d.hi}});
  std::size_t n_false = 0;
  for (const auto& pt : est.points) n_false += pt.valid ? 0 : 1;
  return {{"params", params},
          {"points", est.points.size()},
          {"false_points", n_false},
          {"valid_points", est.points.size() - n_false},
          {"box_volume", est.box_volume()},
          {"false_volume_lower_bound", est.volume_lower_bound}};
}

}  // namespace cegnn::pstl
