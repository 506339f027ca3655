#pragma once

// Signal Temporal Logic: syntax tree, text parser/printer, horizon and
// quantitative robustness over uniformly sampled traces.
//
// Time is discrete. A temporal interval [a,b] anchored at sample i covers the
// indices {k : i*h + a <= k*h <= i*h + b}, truncated at the end of the trace.
// An empty window yields the identity of the reduction (+inf for min,
// -inf for max).

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cegnn/errors.hpp"

namespace cegnn::stl {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Tolerance used when mapping continuous interval bounds onto the sample grid.
inline constexpr double kGridTol = 1e-9;

class SampledSignal {
 public:
  SampledSignal() = default;

  /// `data` is row-major, one row of `dim` values per sample.
  SampledSignal(std::string name, double step, std::size_t dim, std::vector<double> data)
      : name_(std::move(name)), step_(step), dim_(dim), data_(std::move(data)) {
    if (!(step_ > 0.0) || !std::isfinite(step_)) {
      throw std::invalid_argument("signal '" + name_ + "': step must be positive and finite");
    }
    if (dim_ == 0 || data_.empty() || data_.size() % dim_ != 0) {
      throw std::invalid_argument("signal '" + name_ + "': needs at least one sample of dimension >= 1");
    }
    for (double v : data_) {
      if (!std::isfinite(v)) throw std::invalid_argument("signal '" + name_ + "': non-finite sample");
    }
  }

  static SampledSignal scalar(std::string name, double step, std::vector<double> values) {
    return SampledSignal(std::move(name), step, 1, std::move(values));
  }

  const std::string& name() const noexcept { return name_; }
  double step() const noexcept { return step_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return dim_ == 0 ? 0 : data_.size() / dim_; }
  double at(std::size_t k, std::size_t c = 0) const { return data_[k * dim_ + c]; }
  std::span<const double> row(std::size_t k) const { return {data_.data() + k * dim_, dim_}; }
  const std::vector<double>& data() const noexcept { return data_; }

  /// Values of one component across time.
  std::vector<double> component(std::size_t c) const {
    std::vector<double> out(size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = at(k, c);
    return out;
  }

  friend bool operator==(const SampledSignal&, const SampledSignal&) = default;

 private:
  std::string name_;
  double step_ = 1.0;
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

/// Named signals sharing one step and one length.
class Trace {
 public:
  void add(SampledSignal s) {
    if (!signals_.empty()) {
      const auto& first = signals_.begin()->second;
      if (first.size() != s.size() || std::abs(first.step() - s.step()) > 1e-12 * first.step()) {
        throw std::invalid_argument("signal '" + s.name() + "' does not match trace step/length");
      }
    }
    std::string key = s.name();
    signals_.insert_or_assign(std::move(key), std::move(s));
  }

  bool contains(const std::string& name) const { return signals_.count(name) != 0; }

  const SampledSignal& get(const std::string& name) const {
    auto it = signals_.find(name);
    if (it == signals_.end()) throw std::out_of_range("signal '" + name + "' missing from trace");
    return it->second;
  }

  std::size_t size() const { return signals_.empty() ? 0 : signals_.begin()->second.size(); }
  double step() const { return signals_.empty() ? 1.0 : signals_.begin()->second.step(); }
  bool empty() const { return signals_.empty(); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : signals_) out.push_back(k);
    return out;
  }

 private:
  std::map<std::string, SampledSignal> signals_;
};

enum class Cmp { Lt, Le, Gt, Ge, Eq, Ne };

inline const char* to_string(Cmp c) {
  switch (c) {
    case Cmp::Lt: return "<";
    case Cmp::Le: return "<=";
    case Cmp::Gt: return ">";
    case Cmp::Ge: return ">=";
    case Cmp::Eq: return "==";
    case Cmp::Ne: return "!=";
  }
  return "?";
}

/// A numeric constant or a named symbolic parameter (PSTL).
struct Value {
  double number = 0.0;
  std::string param;

  static Value num(double v) { return Value{v, {}}; }
  static Value sym(std::string name) { return Value{0.0, std::move(name)}; }
  bool is_param() const noexcept { return !param.empty(); }

  double get() const {
    if (is_param()) throw std::invalid_argument("unbound parameter " + param);
    return number;
  }

  friend bool operator==(const Value&, const Value&) = default;
};

struct Interval {
  Value lo = Value::num(0.0);
  Value hi = Value::num(0.0);
  bool to_end = false;  // upper bound is the end of the trace

  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Reference to a sampled signal: a scalar component, or the infinity norm of
/// the whole vector. `component < 0` requires a one-dimensional signal.
struct SignalRef {
  std::string name;
  int component = -1;
  bool norm = false;

  friend bool operator==(const SignalRef&, const SignalRef&) = default;
};

/// Atomic predicate  g(y(t)) ~ threshold  with
/// g = [abs](lhs - rhs_signal)  or  g = [abs](lhs - offset).
struct Predicate {
  SignalRef lhs;
  std::optional<SignalRef> rhs;
  double offset = 0.0;
  bool abs = false;
  Cmp cmp = Cmp::Lt;
  Value threshold;

  friend bool operator==(const Predicate&, const Predicate&) = default;
};

enum class Op { True, Pred, Not, And, Or, Implies, Always, Eventually, Until };

struct Formula;
using FormulaPtr = std::shared_ptr<const Formula>;

struct Formula {
  Op op = Op::True;
  Predicate pred;
  Interval interval;
  FormulaPtr lhs;
  FormulaPtr rhs;
};

inline bool equal(const Formula& a, const Formula& b) {
  if (a.op != b.op) return false;
  switch (a.op) {
    case Op::True: return true;
    case Op::Pred: return a.pred == b.pred;
    case Op::Not: return equal(*a.lhs, *b.lhs);
    case Op::And:
    case Op::Or:
    case Op::Implies: return equal(*a.lhs, *b.lhs) && equal(*a.rhs, *b.rhs);
    case Op::Always:
    case Op::Eventually: return a.interval == b.interval && equal(*a.lhs, *b.lhs);
    case Op::Until:
      return a.interval == b.interval && equal(*a.lhs, *b.lhs) && equal(*a.rhs, *b.rhs);
  }
  return false;
}

inline bool operator==(const Formula& a, const Formula& b) { return equal(a, b); }

// ---------------------------------------------------------------------------
// Construction

inline void validate_interval(const Interval& iv) {
  if (!iv.lo.is_param()) {
    if (!std::isfinite(iv.lo.number) || iv.lo.number < 0.0) {
      throw std::invalid_argument("malformed interval: lower bound must be finite and >= 0");
    }
  }
  if (!iv.to_end && !iv.hi.is_param() && !iv.lo.is_param()) {
    if (!(iv.lo.number < iv.hi.number)) {
      throw std::invalid_argument("malformed interval: requires a < b");
    }
  }
}

inline Interval interval(double a, double b) {
  Interval iv{Value::num(a), Value::num(b), false};
  validate_interval(iv);
  return iv;
}

inline Interval interval_to_end(double a = 0.0) {
  Interval iv{Value::num(a), Value::num(0.0), true};
  validate_interval(iv);
  return iv;
}

inline FormulaPtr make_true() { return std::make_shared<const Formula>(Formula{Op::True, {}, {}, {}, {}}); }

inline FormulaPtr make_pred(Predicate p) {
  return std::make_shared<const Formula>(Formula{Op::Pred, std::move(p), {}, {}, {}});
}

/// `signal cmp threshold` on a scalar signal.
inline FormulaPtr make_pred(std::string signal, Cmp cmp, double threshold) {
  Predicate p;
  p.lhs.name = std::move(signal);
  p.cmp = cmp;
  p.threshold = Value::num(threshold);
  return make_pred(std::move(p));
}

inline FormulaPtr make_not(FormulaPtr a) {
  return std::make_shared<const Formula>(Formula{Op::Not, {}, {}, std::move(a), {}});
}
inline FormulaPtr make_and(FormulaPtr a, FormulaPtr b) {
  return std::make_shared<const Formula>(Formula{Op::And, {}, {}, std::move(a), std::move(b)});
}
inline FormulaPtr make_or(FormulaPtr a, FormulaPtr b) {
  return std::make_shared<const Formula>(Formula{Op::Or, {}, {}, std::move(a), std::move(b)});
}
inline FormulaPtr make_implies(FormulaPtr a, FormulaPtr b) {
  return std::make_shared<const Formula>(Formula{Op::Implies, {}, {}, std::move(a), std::move(b)});
}
inline FormulaPtr make_always(Interval iv, FormulaPtr a) {
  validate_interval(iv);
  return std::make_shared<const Formula>(Formula{Op::Always, {}, std::move(iv), std::move(a), {}});
}
inline FormulaPtr make_eventually(Interval iv, FormulaPtr a) {
  validate_interval(iv);
  return std::make_shared<const Formula>(Formula{Op::Eventually, {}, std::move(iv), std::move(a), {}});
}
inline FormulaPtr make_until(Interval iv, FormulaPtr a, FormulaPtr b) {
  validate_interval(iv);
  return std::make_shared<const Formula>(Formula{Op::Until, {}, std::move(iv), std::move(a), std::move(b)});
}

/// Conjunction of a non-empty list, left-nested.
inline FormulaPtr make_conjunction(const std::vector<FormulaPtr>& parts) {
  if (parts.empty()) return make_true();
  FormulaPtr out = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) out = make_and(out, parts[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Printing

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string to_string(const Value& v) { return v.is_param() ? "$" + v.param : format_number(v.number); }

inline std::string to_string(const SignalRef& s) {
  if (s.norm) return "norm(" + s.name + ")";
  if (s.component >= 0) return s.name + "[" + std::to_string(s.component) + "]";
  return s.name;
}

inline std::string to_string(const Predicate& p) {
  std::string g = to_string(p.lhs);
  if (p.rhs) {
    g += " - " + to_string(*p.rhs);
  } else if (p.offset != 0.0) {
    g += " - " + format_number(p.offset);
  }
  if (p.abs) g = "abs(" + g + ")";
  return g + " " + to_string(p.cmp) + " " + to_string(p.threshold);
}

inline std::string to_string(const Interval& iv) {
  return "[" + to_string(iv.lo) + "," + (iv.to_end ? std::string("inf") : to_string(iv.hi)) + "]";
}

inline std::string to_string(const Formula& f) {
  switch (f.op) {
    case Op::True: return "true";
    case Op::Pred: return to_string(f.pred);
    case Op::Not: return "not (" + to_string(*f.lhs) + ")";
    case Op::And: return "(" + to_string(*f.lhs) + ") and (" + to_string(*f.rhs) + ")";
    case Op::Or: return "(" + to_string(*f.lhs) + ") or (" + to_string(*f.rhs) + ")";
    case Op::Implies: return "(" + to_string(*f.lhs) + ") => (" + to_string(*f.rhs) + ")";
    case Op::Always: return "alw_" + to_string(f.interval) + " (" + to_string(*f.lhs) + ")";
    case Op::Eventually: return "ev_" + to_string(f.interval) + " (" + to_string(*f.lhs) + ")";
    case Op::Until:
      return "(" + to_string(*f.lhs) + ") until_" + to_string(f.interval) + " (" + to_string(*f.rhs) + ")";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Parsing
//
//   formula    := disj [ '=>' formula ]
//   disj       := conj { 'or' conj }
//   conj       := until { 'and' until }
//   until      := unary [ 'until_' interval unary ]
//   unary      := 'not' unary | 'alw_' interval unary | 'ev_' interval unary
//               | 'alw' unary | 'ev' unary | primary
//   primary    := '(' formula ')' | 'true' | 'false' | predicate
//   predicate  := term cmp value
//   term       := 'abs' '(' diff ')' | diff
//   diff       := sigref [ '-' ( sigref | number ) ]
//   sigref     := ident [ '[' int ']' ] | 'norm' '(' ident ')'
//   interval   := '[' value ',' ( value | 'inf' | 'end' ) ']'
//   value      := number | '$' ident
//   cmp        := '<' | '<=' | '>' | '>=' | '==' | '!='
//
// `alw` / `ev` without a subscript range over [0, end of trace].

namespace detail {

enum class Tok { Ident, Number, Param, LParen, RParen, LBracket, RBracket, Comma, Minus, Cmp, Implies, End };

struct Token {
  Tok kind;
  std::string text;
  std::size_t offset;
};

inline std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  auto is_ident_start = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; };
  auto is_ident = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
  while (i < s.size()) {
    char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    if (is_ident_start(c)) {
      while (i < s.size() && is_ident(s[i])) ++i;
      out.push_back({Tok::Ident, std::string(s.substr(start, i - start)), start});
    } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      while (i < s.size() && (std::isdigit(static_cast<unsigned char>(s[i])) || s[i] == '.')) ++i;
      if (i < s.size() && (s[i] == 'e' || s[i] == 'E')) {
        std::size_t j = i + 1;
        if (j < s.size() && (s[j] == '+' || s[j] == '-')) ++j;
        if (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) {
          i = j;
          while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
        }
      }
      out.push_back({Tok::Number, std::string(s.substr(start, i - start)), start});
    } else if (c == '$') {
      ++i;
      while (i < s.size() && is_ident(s[i])) ++i;
      if (i == start + 1) throw ParseError("expected parameter name after '$'", start);
      out.push_back({Tok::Param, std::string(s.substr(start + 1, i - start - 1)), start});
    } else if (c == '(') {
      out.push_back({Tok::LParen, "(", i++});
    } else if (c == ')') {
      out.push_back({Tok::RParen, ")", i++});
    } else if (c == '[') {
      out.push_back({Tok::LBracket, "[", i++});
    } else if (c == ']') {
      out.push_back({Tok::RBracket, "]", i++});
    } else if (c == ',') {
      out.push_back({Tok::Comma, ",", i++});
    } else if (c == '=' && i + 1 < s.size() && s[i + 1] == '>') {
      out.push_back({Tok::Implies, "=>", i});
      i += 2;
    } else if (c == '-') {
      out.push_back({Tok::Minus, "-", i++});
    } else if (c == '<' || c == '>' || c == '=' || c == '!') {
      std::string op(1, c);
      ++i;
      if (i < s.size() && s[i] == '=') {
        op += '=';
        ++i;
      }
      if (op == "=" || op == "!") throw ParseError("unknown operator '" + op + "'", start);
      out.push_back({Tok::Cmp, op, start});
    } else {
      throw ParseError(std::string("unexpected character '") + c + "'", start);
    }
  }
  out.push_back({Tok::End, "", s.size()});
  return out;
}

class Parser {
 public:
  explicit Parser(std::string_view text) : toks_(tokenize(text)) {}

  FormulaPtr parse() {
    FormulaPtr f = formula();
    if (peek().kind != Tok::End) fail("unexpected trailing input '" + peek().text + "'");
    return f;
  }

 private:
  std::vector<Token> toks_;
  std::size_t pos_ = 0;

  const Token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  const Token& next() {
    const Token& t = toks_[pos_];
    if (pos_ + 1 < toks_.size()) ++pos_;
    return t;
  }
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, peek().offset); }

  void expect(Tok kind, const char* what) {
    if (peek().kind != kind) fail(std::string("expected ") + what);
    next();
  }
  bool is_keyword(const char* kw) const { return peek().kind == Tok::Ident && peek().text == kw; }

  FormulaPtr formula() {
    FormulaPtr lhs = disjunction();
    if (peek().kind == Tok::Implies) {
      next();
      return make_implies(lhs, formula());
    }
    return lhs;
  }

  FormulaPtr disjunction() {
    FormulaPtr f = conjunction();
    while (is_keyword("or")) {
      next();
      f = make_or(f, conjunction());
    }
    return f;
  }

  FormulaPtr conjunction() {
    FormulaPtr f = until();
    while (is_keyword("and")) {
      next();
      f = make_and(f, until());
    }
    return f;
  }

  FormulaPtr until() {
    FormulaPtr f = unary();
    if (is_keyword("until_")) {
      next();
      Interval iv = bracket_interval();
      FormulaPtr rhs = unary();
      return make_until(iv, f, rhs);
    }
    return f;
  }

  FormulaPtr unary() {
    if (peek().kind == Tok::Ident) {
      const std::string& w = peek().text;
      if (w == "not") {
        next();
        return make_not(unary());
      }
      if (w == "alw_" || w == "ev_") {
        const bool always = w == "alw_";
        next();
        Interval iv = bracket_interval();
        FormulaPtr sub = unary();
        return always ? make_always(iv, sub) : make_eventually(iv, sub);
      }
      if (w == "alw" || w == "ev") {
        const bool always = w == "alw";
        next();
        FormulaPtr sub = unary();
        return always ? make_always(interval_to_end(), sub) : make_eventually(interval_to_end(), sub);
      }
      if (w == "until_" || w == "and" || w == "or") fail("unexpected operator '" + w + "'");
      if (w.size() > 1 && w.back() == '_' && peek(1).kind == Tok::LBracket) {
        fail("unknown operator '" + w + "'");
      }
    }
    return primary();
  }

  FormulaPtr primary() {
    if (peek().kind == Tok::LParen) {
      next();
      FormulaPtr f = formula();
      expect(Tok::RParen, "')'");
      return f;
    }
    if (is_keyword("true")) {
      next();
      return make_true();
    }
    if (is_keyword("false")) {
      next();
      return make_not(make_true());
    }
    return predicate();
  }

  Value value() {
    bool negative = false;
    if (peek().kind == Tok::Minus) {
      negative = true;
      next();
    }
    if (peek().kind == Tok::Param) {
      if (negative) fail("parameters cannot be negated");
      return Value::sym(next().text);
    }
    if (peek().kind != Tok::Number) fail("expected number");
    const Token& t = next();
    char* end = nullptr;
    double v = std::strtod(t.text.c_str(), &end);
    if (end == nullptr || *end != '\0') throw ParseError("malformed number '" + t.text + "'", t.offset);
    return Value::num(negative ? -v : v);
  }

  Interval bracket_interval() {
    const std::size_t at = peek().offset;
    expect(Tok::LBracket, "'['");
    Interval iv;
    iv.lo = value();
    expect(Tok::Comma, "','");
    if (is_keyword("inf") || is_keyword("end")) {
      next();
      iv.to_end = true;
    } else {
      iv.hi = value();
    }
    expect(Tok::RBracket, "']'");
    try {
      validate_interval(iv);
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what(), at);
    }
    return iv;
  }

  SignalRef sigref() {
    if (is_keyword("norm")) {
      next();
      expect(Tok::LParen, "'('");
      if (peek().kind != Tok::Ident) fail("expected signal name");
      SignalRef s{next().text, -1, true};
      expect(Tok::RParen, "')'");
      return s;
    }
    if (peek().kind != Tok::Ident) fail("expected signal name");
    SignalRef s{next().text, -1, false};
    if (peek().kind == Tok::LBracket) {
      next();
      if (peek().kind != Tok::Number) fail("expected component index");
      s.component = std::stoi(next().text);
      expect(Tok::RBracket, "']'");
    }
    return s;
  }

  void diff(Predicate& p) {
    p.lhs = sigref();
    if (peek().kind == Tok::Minus) {
      next();
      if (peek().kind == Tok::Number) {
        p.offset = value().number;
      } else {
        p.rhs = sigref();
      }
    }
  }

  FormulaPtr predicate() {
    if (peek().kind != Tok::Ident) fail("expected formula");
    Predicate p;
    if (is_keyword("abs")) {
      next();
      expect(Tok::LParen, "'('");
      diff(p);
      expect(Tok::RParen, "')'");
      p.abs = true;
    } else {
      diff(p);
    }
    if (peek().kind != Tok::Cmp) fail("expected comparison operator");
    const std::string op = next().text;
    if (op == "<") p.cmp = Cmp::Lt;
    else if (op == "<=") p.cmp = Cmp::Le;
    else if (op == ">") p.cmp = Cmp::Gt;
    else if (op == ">=") p.cmp = Cmp::Ge;
    else if (op == "==") p.cmp = Cmp::Eq;
    else p.cmp = Cmp::Ne;
    p.threshold = value();
    return make_pred(std::move(p));
  }
};

}  // namespace detail

inline FormulaPtr parse_formula(std::string_view text) { return detail::Parser(text).parse(); }

// ---------------------------------------------------------------------------
// Horizon

struct Horizon {
  double seconds = 0.0;
  bool trace_bounded = false;  // some upper bound is the end of the trace
};

inline Horizon horizon(const Formula& f) {
  switch (f.op) {
    case Op::True:
    case Op::Pred: return {};
    case Op::Not: return horizon(*f.lhs);
    case Op::And:
    case Op::Or:
    case Op::Implies: {
      Horizon a = horizon(*f.lhs), b = horizon(*f.rhs);
      return {std::max(a.seconds, b.seconds), a.trace_bounded || b.trace_bounded};
    }
    case Op::Always:
    case Op::Eventually: {
      Horizon sub = horizon(*f.lhs);
      if (f.interval.to_end) return {sub.seconds, true};
      return {f.interval.hi.get() + sub.seconds, sub.trace_bounded};
    }
    case Op::Until: {
      Horizon a = horizon(*f.lhs), b = horizon(*f.rhs);
      Horizon out{std::max(a.seconds, b.seconds), a.trace_bounded || b.trace_bounded};
      if (f.interval.to_end) out.trace_bounded = true;
      else out.seconds += f.interval.hi.get();
      return out;
    }
  }
  return {};
}

/// Look-ahead of the obligation checked at each instant of an outer
/// `alw_[0,T]` scope (or a conjunction of such scopes). Properties written as
/// "always over the run, whenever X then Y" carry a horizon of T plus the
/// obligation; it is the obligation that bounds segment lengths and run time.
inline Horizon obligation_horizon(const Formula& f) {
  if (f.op == Op::And) {
    Horizon a = obligation_horizon(*f.lhs), b = obligation_horizon(*f.rhs);
    return {std::max(a.seconds, b.seconds), a.trace_bounded || b.trace_bounded};
  }
  if (f.op == Op::Always && !f.interval.lo.is_param() && f.interval.lo.number == 0.0) {
    return horizon(*f.lhs);
  }
  return horizon(f);
}

// ---------------------------------------------------------------------------
// Robustness

struct Window {
  std::size_t first = 0;
  std::size_t last = 0;
  bool empty = true;
};

/// Sample indices covered by `iv` anchored at sample `i` of a trace of `n` samples.
inline Window window_at(std::size_t i, const Interval& iv, double step, std::size_t n) {
  const double a = iv.lo.get();
  const auto lo_off = static_cast<std::size_t>(std::max(0.0, std::ceil(a / step - kGridTol)));
  Window w;
  if (i + lo_off >= n) return w;
  w.first = i + lo_off;
  if (iv.to_end) {
    w.last = n - 1;
  } else {
    const double b = iv.hi.get();
    const double hi_off = std::floor(b / step + kGridTol);
    w.last = std::min<std::size_t>(n - 1, i + static_cast<std::size_t>(hi_off));
  }
  w.empty = w.last < w.first;
  return w;
}

namespace detail {

inline double signal_value(const SignalRef& ref, const Trace& tr, std::size_t k) {
  const SampledSignal& s = tr.get(ref.name);
  if (ref.norm) {
    double m = 0.0;
    for (std::size_t c = 0; c < s.dim(); ++c) m = std::max(m, std::abs(s.at(k, c)));
    return m;
  }
  if (ref.component >= 0) {
    if (static_cast<std::size_t>(ref.component) >= s.dim()) {
      throw std::out_of_range("component " + std::to_string(ref.component) + " of signal '" + ref.name +
                              "' out of range");
    }
    return s.at(k, static_cast<std::size_t>(ref.component));
  }
  if (s.dim() != 1) {
    throw std::invalid_argument("signal '" + ref.name + "' is a vector; use a component or norm()");
  }
  return s.at(k, 0);
}

}  // namespace detail

/// Value of g(y(t_k)) for an atomic predicate.
inline double predicate_lhs(const Predicate& p, const Trace& tr, std::size_t k) {
  double g = detail::signal_value(p.lhs, tr, k);
  g -= p.rhs ? detail::signal_value(*p.rhs, tr, k) : p.offset;
  return p.abs ? std::abs(g) : g;
}

inline double predicate_robustness(const Predicate& p, const Trace& tr, std::size_t k) {
  const double g = predicate_lhs(p, tr, k);
  const double b = p.threshold.get();
  switch (p.cmp) {
    case Cmp::Gt:
    case Cmp::Ge: return g - b;
    case Cmp::Lt:
    case Cmp::Le: return b - g;
    case Cmp::Eq: return -std::abs(g - b);
    case Cmp::Ne: return std::abs(g - b);
  }
  return 0.0;
}

/// Robustness of `f` at every sample of `tr`, computed bottom-up.
inline std::vector<double> robustness_signal(const Formula& f, const Trace& tr) {
  const std::size_t n = tr.size();
  if (n == 0) throw std::invalid_argument("empty trace");
  std::vector<double> out(n);
  switch (f.op) {
    case Op::True:
      std::fill(out.begin(), out.end(), kInf);
      break;
    case Op::Pred:
      for (std::size_t k = 0; k < n; ++k) out[k] = predicate_robustness(f.pred, tr, k);
      break;
    case Op::Not: {
      out = robustness_signal(*f.lhs, tr);
      for (double& v : out) v = -v;
      break;
    }
    case Op::And:
    case Op::Or:
    case Op::Implies: {
      std::vector<double> a = robustness_signal(*f.lhs, tr);
      std::vector<double> b = robustness_signal(*f.rhs, tr);
      for (std::size_t k = 0; k < n; ++k) {
        if (f.op == Op::And) out[k] = std::min(a[k], b[k]);
        else if (f.op == Op::Or) out[k] = std::max(a[k], b[k]);
        else out[k] = std::max(-a[k], b[k]);
      }
      break;
    }
    case Op::Always:
    case Op::Eventually: {
      const bool always = f.op == Op::Always;
      std::vector<double> a = robustness_signal(*f.lhs, tr);
      for (std::size_t i = 0; i < n; ++i) {
        Window w = window_at(i, f.interval, tr.step(), n);
        double acc = always ? kInf : -kInf;
        if (!w.empty) {
          for (std::size_t k = w.first; k <= w.last; ++k) acc = always ? std::min(acc, a[k]) : std::max(acc, a[k]);
        }
        out[i] = acc;
      }
      break;
    }
    case Op::Until: {
      std::vector<double> a = robustness_signal(*f.lhs, tr);
      std::vector<double> b = robustness_signal(*f.rhs, tr);
      for (std::size_t i = 0; i < n; ++i) {
        Window w = window_at(i, f.interval, tr.step(), n);
        double best = -kInf;
        if (!w.empty) {
          double prefix = kInf;  // min of lhs over [i, k]
          for (std::size_t k = i; k <= w.last; ++k) {
            prefix = std::min(prefix, a[k]);
            if (k >= w.first) best = std::max(best, std::min(b[k], prefix));
          }
        }
        out[i] = best;
      }
      break;
    }
  }
  return out;
}

inline double robustness(const Formula& f, const Trace& tr, std::size_t t_index = 0) {
  if (t_index >= tr.size()) throw std::out_of_range("t_index outside trace");
  return robustness_signal(f, tr)[t_index];
}

enum class Satisfaction { Satisfied, Violated, Marginal };

inline Satisfaction classify(double rho) {
  if (rho > 0.0) return Satisfaction::Satisfied;
  if (rho < 0.0) return Satisfaction::Violated;
  return Satisfaction::Marginal;
}

/// Names of all signals a formula reads.
inline void collect_signals(const Formula& f, std::vector<std::string>& out) {
  auto add = [&](const std::string& s) {
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  };
  if (f.op == Op::Pred) {
    add(f.pred.lhs.name);
    if (f.pred.rhs) add(f.pred.rhs->name);
  }
  if (f.lhs) collect_signals(*f.lhs, out);
  if (f.rhs) collect_signals(*f.rhs, out);
}

// ---------------------------------------------------------------------------
// Control property templates

enum class PropertyKind { Matching, Stabilization, Settling, Overshoot };

inline PropertyKind parse_property_kind(const std::string& s) {
  if (s == "matching") return PropertyKind::Matching;
  if (s == "stabilization") return PropertyKind::Stabilization;
  if (s == "settling") return PropertyKind::Settling;
  if (s == "overshoot") return PropertyKind::Overshoot;
  throw std::invalid_argument("unknown property kind '" + s + "'");
}

/// Signal names the property templates read.
struct PropertySignals {
  std::string reference = "r";
  std::string reference_next = "r_next";  // reference shifted one sample ahead
  std::string output = "y";
  std::string nominal_output = "y_nom";   // output of the nominal loop (matching only)
};

/// Builds the matching / stabilization / settling / overshoot properties.
///
/// Parameter names:
///   matching       T_sim, e
///   stabilization  T_sim, eps_r, T1, T2, T3, T4, e
///   settling       T_sim, eps_r, T5, T6, e_settle
///   overshoot      T_sim, eps_r, T7, T8, eps_y
/// `dt` is accepted and ignored: the step trigger always compares one sample ahead.
///
/// The overshoot trigger fires on increasing steps only (r_next - r > eps_r).
inline FormulaPtr build_property(PropertyKind kind, const std::map<std::string, double>& params,
                                 const PropertySignals& sig = {}) {
  auto get = [&](const char* name) {
    auto it = params.find(name);
    if (it == params.end()) throw std::invalid_argument(std::string("missing parameter ") + name);
    return it->second;
  };
  auto diff_pred = [](const std::string& a, const std::string& b, bool abs, Cmp cmp, double thr) {
    Predicate p;
    p.lhs.name = a;
    p.rhs = SignalRef{b, -1, false};
    p.abs = abs;
    p.cmp = cmp;
    p.threshold = Value::num(thr);
    return make_pred(std::move(p));
  };
  const double t_sim = get("T_sim");
  auto step_trigger = [&](bool two_sided) {
    return diff_pred(sig.reference_next, sig.reference, two_sided, Cmp::Gt, get("eps_r"));
  };
  switch (kind) {
    case PropertyKind::Matching:
      return make_always(interval(0.0, t_sim), diff_pred(sig.output, sig.nominal_output, true, Cmp::Lt, get("e")));
    case PropertyKind::Stabilization: {
      FormulaPtr near = diff_pred(sig.output, sig.reference, true, Cmp::Lt, get("e"));
      FormulaPtr body = make_eventually(interval(get("T1"), get("T2")), make_always(interval(get("T3"), get("T4")), near));
      return make_always(interval(0.0, t_sim), make_implies(step_trigger(true), body));
    }
    case PropertyKind::Settling: {
      FormulaPtr near = diff_pred(sig.output, sig.reference, true, Cmp::Lt, get("e_settle"));
      return make_always(interval(0.0, t_sim),
                         make_implies(step_trigger(true), make_always(interval(get("T5"), get("T6")), near)));
    }
    case PropertyKind::Overshoot: {
      FormulaPtr below = diff_pred(sig.output, sig.reference, false, Cmp::Lt, get("eps_y"));
      return make_always(interval(0.0, t_sim),
                         make_implies(step_trigger(false), make_always(interval(get("T7"), get("T8")), below)));
    }
  }
  throw std::invalid_argument("unknown property kind");
}

}  // namespace cegnn::stl
