#pragma once

// Experiment configuration: a single JSON document with a fixed schema.
// Unknown keys are rejected; every seed has a fixed default and the
// effective configuration can be written back out.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cegnn/cegis.hpp"
#include "cegnn/controllers.hpp"
#include "cegnn/errors.hpp"
#include "cegnn/pstl.hpp"
#include "json.hpp"

namespace cegnn::config {

using Json = nlohmann::json;

namespace detail {

inline void allow(const Json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError("'" + where + "' must be an object");
  std::set<std::string> ok(keys.begin(), keys.end());
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!ok.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in '" + where + "'");
  }
}

template <class T>
T get(const Json& j, const char* key, const std::string& where, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError("bad value for '" + where + "." + key + "': " + e.what());
  }
}

template <class T>
T need(const Json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError("missing key '" + where + "." + key + "'");
  return get<T>(j, key, where, T{});
}

}  // namespace detail

struct ControllerSpec {
  std::string type = "pid";  // pid | switched | zero
  PidGains pid;
  SwitchedGains switched;
};

struct PropertySpec {
  std::string kind;  // a template name, or empty with `formula` set
  std::map<std::string, double> params;
  std::string formula;
};

struct CombinedSpec {
  std::vector<ControllerSpec> controllers;
  double segment = 10.0;
};

struct PstlSpec {
  std::string signal = "e";
  std::vector<pstl::ParamDecl> params;
  std::vector<std::size_t> grid{5, 5, 5, 5};
  std::size_t settings = 16;  // sampled control settings per valuation
  std::uint64_t seed = 7;
};

struct Prop2Spec {
  std::string plant = "first_order_lag";
  double eps = 0.1;
  double horizon = 2.0;
  double h = 0.01;
  std::size_t substeps = 10;
  std::size_t trials = 100;
  std::uint64_t seed = 1;
};

struct ExperimentConfig {
  std::string plant_id = "water_tank";
  std::optional<std::vector<Range>> x0_box;
  double t_sim = 20.0;
  double h = 0.1;
  std::size_t substeps = 10;
  ControllerSpec nominal;
  std::optional<CombinedSpec> combined;
  std::vector<PropertySpec> properties;
  std::size_t pieces = 2;
  double eps = 0.25;
  std::size_t coverage_factor = 2;
  double net_cap = 1e6;
  nn::NetSpec net;
  std::uint64_t net_seed = 42;
  nn::TrainConfig initial_train;
  nn::TrainConfig retrain;
  bool warm_start = true;
  FalsifyConfig falsify;
  std::size_t max_iterations = 5;
  double exclusion_radius = 0.05;
  SelectionConfig selection;
  std::optional<std::size_t> examples;
  std::size_t confirm_trials = 200;
  std::uint64_t confirm_seed = 4242;
  std::optional<PstlSpec> pstl;
  Prop2Spec prop2;
  std::string output_dir = "out";
  std::size_t threads = 1;
};

// ---------------------------------------------------------------------------
// Parsing

inline ControllerSpec parse_controller(const Json& j, const std::string& where, double h) {
  using detail::get;
  ControllerSpec c;
  c.type = get<std::string>(j, "type", where, "pid");
  auto pid = [&](const Json& p, const std::string& w) {
    detail::allow(p, w, {"type", "kp", "ki", "kd", "u_min", "u_max"});
    PidGains g;
    g.kp = get<double>(p, "kp", w, 0.0);
    g.ki = get<double>(p, "ki", w, 0.0);
    g.kd = get<double>(p, "kd", w, 0.0);
    g.u_min = get<double>(p, "u_min", w, -1e300);
    g.u_max = get<double>(p, "u_max", w, 1e300);
    g.h = h;
    try {
      g.validate();
    } catch (const std::exception& e) {
      throw ConfigError(w + ": " + e.what());
    }
    return g;
  };
  if (c.type == "pid") {
    c.pid = pid(j, where);
  } else if (c.type == "switched") {
    detail::allow(j, where, {"type", "dead_band", "p_upper", "kp", "pid"});
    c.switched.dead_band = get<double>(j, "dead_band", where, 0.005);
    c.switched.p_upper = get<double>(j, "p_upper", where, 0.1);
    c.switched.kp = get<double>(j, "kp", where, 1.0);
    c.switched.pid = pid(j.value("pid", Json::object()), where + ".pid");
    try {
      c.switched.validate();
    } catch (const std::exception& e) {
      throw ConfigError(where + ": " + e.what());
    }
  } else if (c.type == "zero") {
    detail::allow(j, where, {"type"});
  } else {
    throw ConfigError("unknown controller type '" + c.type + "' in '" + where + "'");
  }
  return c;
}

inline std::unique_ptr<Controller> make_controller(const ControllerSpec& c) {
  if (c.type == "pid") return std::make_unique<PidController>(c.pid);
  if (c.type == "switched") return std::make_unique<SwitchedController>(c.switched);
  return std::make_unique<ZeroController>(1);
}

inline nn::TrainConfig parse_train(const Json& j, const std::string& where, nn::TrainConfig d) {
  using detail::get;
  detail::allow(j, where, {"epochs", "batch", "lr", "val_fraction", "seed"});
  d.epochs = get<std::size_t>(j, "epochs", where, d.epochs);
  d.batch = get<std::size_t>(j, "batch", where, d.batch);
  d.lr = get<double>(j, "lr", where, d.lr);
  d.val_fraction = get<double>(j, "val_fraction", where, d.val_fraction);
  d.seed = get<std::uint64_t>(j, "seed", where, d.seed);
  if (!(d.val_fraction >= 0.0 && d.val_fraction < 1.0)) throw ConfigError(where + ".val_fraction must be in [0,1)");
  return d;
}

inline std::vector<Range> parse_box(const Json& j, const std::string& where) {
  std::vector<Range> out;
  if (!j.is_array()) throw ConfigError("'" + where + "' must be a list of [lo, hi] pairs");
  for (const auto& r : j) {
    if (!r.is_array() || r.size() != 2) throw ConfigError("'" + where + "' must be a list of [lo, hi] pairs");
    out.emplace_back(r[0].get<double>(), r[1].get<double>());
    if (!(out.back().first <= out.back().second)) throw ConfigError("'" + where + "' has an empty range");
  }
  return out;
}

inline ExperimentConfig parse(const Json& root) {
  using detail::allow;
  using detail::get;
  ExperimentConfig c;
  allow(root, "config", {"plant", "simulation", "nominal", "combined", "properties", "grid", "net", "training",
                         "falsify", "loop", "pstl", "prop2", "output_dir", "threads"});

  const Json plant = root.value("plant", Json::object());
  allow(plant, "plant", {"id", "x0_box"});
  c.plant_id = get<std::string>(plant, "id", "plant", c.plant_id);
  if (plant.contains("x0_box")) c.x0_box = parse_box(plant.at("x0_box"), "plant.x0_box");

  const Json sim = root.value("simulation", Json::object());
  allow(sim, "simulation", {"T_sim", "h", "substeps"});
  c.t_sim = get<double>(sim, "T_sim", "simulation", c.t_sim);
  c.h = get<double>(sim, "h", "simulation", c.h);
  c.substeps = get<std::size_t>(sim, "substeps", "simulation", c.substeps);
  if (!(c.h > 0.0) || !(c.t_sim > 0.0) || c.substeps < 1) throw ConfigError("simulation needs T_sim > 0, h > 0, substeps >= 1");

  if (!root.contains("nominal")) throw ConfigError("missing key 'config.nominal'");
  c.nominal = parse_controller(root.at("nominal"), "nominal", c.h);

  if (root.contains("combined")) {
    const Json& cj = root.at("combined");
    allow(cj, "combined", {"controllers", "segment"});
    CombinedSpec cs;
    cs.segment = get<double>(cj, "segment", "combined", cs.segment);
    const Json list = cj.value("controllers", Json::array());
    for (std::size_t i = 0; i < list.size(); ++i) {
      cs.controllers.push_back(parse_controller(list[i], "combined.controllers[" + std::to_string(i) + "]", c.h));
    }
    if (cs.controllers.empty()) throw ConfigError("combined needs at least one controller");
    c.combined = cs;
  }

  if (!root.contains("properties") || !root.at("properties").is_array() || root.at("properties").empty()) {
    throw ConfigError("'properties' must be a nonempty list");
  }
  for (std::size_t i = 0; i < root.at("properties").size(); ++i) {
    const Json& pj = root.at("properties")[i];
    const std::string w = "properties[" + std::to_string(i) + "]";
    allow(pj, w, {"kind", "params", "formula"});
    PropertySpec p;
    p.kind = get<std::string>(pj, "kind", w, "");
    p.formula = get<std::string>(pj, "formula", w, "");
    if (pj.contains("params")) p.params = pj.at("params").get<std::map<std::string, double>>();
    if (p.kind.empty() == p.formula.empty()) throw ConfigError(w + " needs exactly one of 'kind' or 'formula'");
    c.properties.push_back(std::move(p));
  }

  const Json grid = root.value("grid", Json::object());
  allow(grid, "grid", {"pieces", "eps", "coverage_factor", "cap"});
  c.pieces = get<std::size_t>(grid, "pieces", "grid", c.pieces);
  c.eps = get<double>(grid, "eps", "grid", c.eps);
  c.coverage_factor = get<std::size_t>(grid, "coverage_factor", "grid", c.coverage_factor);
  c.net_cap = get<double>(grid, "cap", "grid", c.net_cap);

  const Json net = root.value("net", Json::object());
  allow(net, "net", {"hidden", "history", "input", "seed"});
  if (net.contains("hidden")) {
    c.net.hidden.clear();
    for (const auto& l : net.at("hidden")) {
      allow(l, "net.hidden[]", {"width", "activation"});
      c.net.hidden.emplace_back(l.at("width").get<std::size_t>(), nn::parse_activation(l.value("activation", "tanh")));
    }
  }
  const Json hist = net.value("history", Json::object());
  allow(hist, "net.history", {"n_r", "n_y", "n_u", "n_nu"});
  c.net.hist = {get<std::size_t>(hist, "n_r", "net.history", 0), get<std::size_t>(hist, "n_y", "net.history", 0),
                get<std::size_t>(hist, "n_u", "net.history", 0), get<std::size_t>(hist, "n_nu", "net.history", 0)};
  const std::string input = get<std::string>(net, "input", "net", "separate");
  if (input != "separate" && input != "error") throw ConfigError("net.input must be 'separate' or 'error'");
  c.net.mode = input == "error" ? nn::InputMode::Error : nn::InputMode::Separate;
  c.net_seed = get<std::uint64_t>(net, "seed", "net", c.net_seed);

  const Json tr = root.value("training", Json::object());
  allow(tr, "training", {"initial", "retrain", "warm_start"});
  c.initial_train = parse_train(tr.value("initial", Json::object()), "training.initial", c.initial_train);
  c.retrain = parse_train(tr.value("retrain", Json::object()), "training.retrain", c.retrain);
  c.warm_start = get<bool>(tr, "warm_start", "training", c.warm_start);

  const Json fz = root.value("falsify", Json::object());
  allow(fz, "falsify", {"trials", "seed", "lhs_fraction", "restarts", "simplex_scale", "nm_tolerance"});
  c.falsify.trials = get<std::size_t>(fz, "trials", "falsify", 300);
  c.falsify.seed = get<std::uint64_t>(fz, "seed", "falsify", 42);
  c.falsify.lhs_fraction = get<double>(fz, "lhs_fraction", "falsify", c.falsify.lhs_fraction);
  c.falsify.restarts = get<std::size_t>(fz, "restarts", "falsify", c.falsify.restarts);
  c.falsify.simplex_scale = get<double>(fz, "simplex_scale", "falsify", c.falsify.simplex_scale);
  c.falsify.nm_tolerance = get<double>(fz, "nm_tolerance", "falsify", c.falsify.nm_tolerance);
  if (c.falsify.trials < 1) throw ConfigError("falsify.trials must be >= 1");

  const Json lp = root.value("loop", Json::object());
  allow(lp, "loop", {"max_iterations", "exclusion_radius", "cluster", "delta", "k_rho", "k_max", "examples",
                     "confirm_trials", "confirm_seed", "selection_seed"});
  c.max_iterations = get<std::size_t>(lp, "max_iterations", "loop", c.max_iterations);
  if (c.max_iterations < 1) throw ConfigError("loop.max_iterations must be >= 1");
  c.exclusion_radius = get<double>(lp, "exclusion_radius", "loop", c.exclusion_radius);
  c.selection.cluster = get<bool>(lp, "cluster", "loop", true);
  c.selection.delta = get<double>(lp, "delta", "loop", 2.0 * c.eps);
  c.selection.k_rho = get<std::size_t>(lp, "k_rho", "loop", 3);
  c.selection.k_max = get<std::size_t>(lp, "k_max", "loop", 10);
  c.selection.seed = get<std::uint64_t>(lp, "selection_seed", "loop", 42);
  if (lp.contains("examples") && !lp.at("examples").is_null()) c.examples = lp.at("examples").get<std::size_t>();
  c.confirm_trials = get<std::size_t>(lp, "confirm_trials", "loop", c.confirm_trials);
  c.confirm_seed = get<std::uint64_t>(lp, "confirm_seed", "loop", c.confirm_seed);

  if (root.contains("pstl")) {
    const Json& pj = root.at("pstl");
    allow(pj, "pstl", {"signal", "params", "grid", "settings", "seed"});
    PstlSpec ps;
    ps.signal = get<std::string>(pj, "signal", "pstl", ps.signal);
    ps.grid = get<std::vector<std::size_t>>(pj, "grid", "pstl", ps.grid);
    ps.settings = get<std::size_t>(pj, "settings", "pstl", ps.settings);
    ps.seed = get<std::uint64_t>(pj, "seed", "pstl", ps.seed);
    const Json params = pj.value("params", Json::object());
    allow(params, "pstl.params", {"s_ov", "s_st", "tau_tr", "tau_st"});
    const pstl::PstlFormula d = pstl::build_phi_template(ps.signal);
    for (const auto& decl : d.params) {
      pstl::ParamDecl p = decl;
      if (params.contains(decl.name)) {
        const auto r = parse_box(Json::array({params.at(decl.name)}), "pstl.params." + decl.name);
        p.lo = r[0].first;
        p.hi = r[0].second;
      }
      ps.params.push_back(p);
    }
    if (ps.grid.size() != ps.params.size()) throw ConfigError("pstl.grid needs one count per parameter");
    c.pstl = ps;
  }

  const Json p2 = root.value("prop2", Json::object());
  allow(p2, "prop2", {"plant", "eps", "horizon", "h", "substeps", "trials", "seed"});
  c.prop2.plant = get<std::string>(p2, "plant", "prop2", c.prop2.plant);
  c.prop2.eps = get<double>(p2, "eps", "prop2", c.prop2.eps);
  c.prop2.horizon = get<double>(p2, "horizon", "prop2", c.prop2.horizon);
  c.prop2.h = get<double>(p2, "h", "prop2", c.prop2.h);
  c.prop2.substeps = get<std::size_t>(p2, "substeps", "prop2", c.prop2.substeps);
  c.prop2.trials = get<std::size_t>(p2, "trials", "prop2", c.prop2.trials);
  c.prop2.seed = get<std::uint64_t>(p2, "seed", "prop2", c.prop2.seed);

  c.output_dir = get<std::string>(root, "output_dir", "config", c.output_dir);
  c.threads = get<std::size_t>(root, "threads", "config", c.threads);
  return c;
}

/// Replaces every seed with one derived from `seed`.
inline void override_seeds(ExperimentConfig& c, std::uint64_t seed) {
  c.net_seed = seed;
  c.initial_train.seed = seed + 1;
  c.retrain.seed = seed + 2;
  c.falsify.seed = seed + 3;
  c.selection.seed = seed + 4;
  c.confirm_seed = seed + 5;
  if (c.pstl) c.pstl->seed = seed + 6;
  c.prop2.seed = seed + 7;
}

// ---------------------------------------------------------------------------
// Effective configuration

inline Json controller_json(const ControllerSpec& c) {
  auto pid = [](const PidGains& g) {
    return Json{{"kp", g.kp}, {"ki", g.ki}, {"kd", g.kd}, {"u_min", g.u_min}, {"u_max", g.u_max}};
  };
  if (c.type == "pid") {
    Json j = pid(c.pid);
    j["type"] = "pid";
    return j;
  }
  if (c.type == "switched") {
    return {{"type", "switched"}, {"dead_band", c.switched.dead_band}, {"p_upper", c.switched.p_upper},
            {"kp", c.switched.kp}, {"pid", pid(c.switched.pid)}};
  }
  return {{"type", "zero"}};
}

inline Json to_json(const ExperimentConfig& c) {
  auto box = [](const std::vector<Range>& b) {
    Json a = Json::array();
    for (const auto& [lo, hi] : b) a.push_back({lo, hi});
    return a;
  };
  auto train = [](const nn::TrainConfig& t) {
    return Json{{"epochs", t.epochs}, {"batch", t.batch}, {"lr", t.lr}, {"val_fraction", t.val_fraction}, {"seed", t.seed}};
  };
  Json plant{{"id", c.plant_id}};
  if (c.x0_box) plant["x0_box"] = box(*c.x0_box);
  Json props = Json::array();
  for (const auto& p : c.properties) {
    Json j;
    if (!p.kind.empty()) j["kind"] = p.kind;
    if (!p.formula.empty()) j["formula"] = p.formula;
    if (!p.params.empty()) j["params"] = p.params;
    props.push_back(j);
  }
  Json hidden = Json::array();
  for (const auto& [w, a] : c.net.hidden) hidden.push_back({{"width", w}, {"activation", nn::to_string(a)}});
  Json out{{"plant", plant},
           {"simulation", {{"T_sim", c.t_sim}, {"h", c.h}, {"substeps", c.substeps}}},
           {"nominal", controller_json(c.nominal)},
           {"properties", props},
           {"grid", {{"pieces", c.pieces}, {"eps", c.eps}, {"coverage_factor", c.coverage_factor}, {"cap", c.net_cap}}},
           {"net",
            {{"hidden", hidden},
             {"history", {{"n_r", c.net.hist.n_r}, {"n_y", c.net.hist.n_y}, {"n_u", c.net.hist.n_u}, {"n_nu", c.net.hist.n_nu}}},
             {"input", c.net.mode == nn::InputMode::Error ? "error" : "separate"},
             {"seed", c.net_seed}}},
           {"training", {{"initial", train(c.initial_train)}, {"retrain", train(c.retrain)}, {"warm_start", c.warm_start}}},
           {"falsify",
            {{"trials", c.falsify.trials},
             {"seed", c.falsify.seed},
             {"lhs_fraction", c.falsify.lhs_fraction},
             {"restarts", c.falsify.restarts},
             {"simplex_scale", c.falsify.simplex_scale},
             {"nm_tolerance", c.falsify.nm_tolerance}}},
           {"loop",
            {{"max_iterations", c.max_iterations},
             {"exclusion_radius", c.exclusion_radius},
             {"cluster", c.selection.cluster},
             {"delta", c.selection.delta},
             {"k_rho", c.selection.k_rho},
             {"k_max", c.selection.k_max},
             {"examples", c.examples ? Json(*c.examples) : Json()},
             {"confirm_trials", c.confirm_trials},
             {"confirm_seed", c.confirm_seed},
             {"selection_seed", c.selection.seed}}},
           {"prop2",
            {{"plant", c.prop2.plant},
             {"eps", c.prop2.eps},
             {"horizon", c.prop2.horizon},
             {"h", c.prop2.h},
             {"substeps", c.prop2.substeps},
             {"trials", c.prop2.trials},
             {"seed", c.prop2.seed}}},
           {"output_dir", c.output_dir},
           {"threads", c.threads}};
  if (c.combined) {
    Json list = Json::array();
    for (const auto& k : c.combined->controllers) list.push_back(controller_json(k));
    out["combined"] = {{"controllers", list}, {"segment", c.combined->segment}};
  }
  if (c.pstl) {
    Json params = Json::object();
    for (const auto& p : c.pstl->params) params[p.name] = {p.lo, p.hi};
    out["pstl"] = {{"signal", c.pstl->signal}, {"params", params}, {"grid", c.pstl->grid},
                   {"settings", c.pstl->settings}, {"seed", c.pstl->seed}};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Assembly

inline stl::FormulaPtr build_spec(const ExperimentConfig& c) {
  std::vector<stl::FormulaPtr> parts;
  for (const auto& p : c.properties) {
    if (!p.formula.empty()) {
      parts.push_back(stl::parse_formula(p.formula));
      continue;
    }
    auto params = p.params;
    params.emplace("T_sim", c.t_sim);
    try {
      parts.push_back(stl::build_property(stl::parse_property_kind(p.kind), params));
    } catch (const std::invalid_argument& e) {
      throw ConfigError("property '" + p.kind + "': " + e.what());
    }
  }
  return stl::make_conjunction(parts);
}

/// Everything a command needs, with owned controllers and plant.
struct Experiment {
  ExperimentConfig cfg;
  Plant plant;
  std::unique_ptr<Controller> nominal;
  std::vector<std::unique_ptr<Controller>> combined;
  stl::FormulaPtr phi;
  SignalGrid grid;

  LoopProblem problem() const {
    LoopProblem pb;
    pb.plant = &plant;
    pb.nominal = nominal.get();
    pb.phi = phi;
    pb.h = cfg.h;
    pb.substeps = cfg.substeps;
    pb.grid = grid;
    pb.net = cfg.net;
    pb.net.d_r = plant.ref_range.size();
    pb.net.d_y = plant.output_dim;
    pb.net.d_u = plant.input_dim;
    pb.net.d_nu = plant.dist_dim;
    pb.net_seed = cfg.net_seed;
    if (!combined.empty()) {
      std::vector<const Controller*> cs;
      for (const auto& c : combined) cs.push_back(c.get());
      const double segment = cfg.combined->segment;
      pb.teacher = [this, cs, segment](const ControlSetting& s) {
        try {
          return generate_combined_traces(plant, cs, phi, {s}, segment, cfg.h, cfg.substeps).behaviours.front();
        } catch (const std::runtime_error& e) {
          throw PremiseViolation(std::string("combined teacher: ") + e.what());
        }
      };
    }
    return pb;
  }

  LoopConfig loop_config() const {
    LoopConfig l;
    l.max_iterations = cfg.max_iterations;
    l.falsify = cfg.falsify;
    l.falsify.space = grid.space;
    l.falsify.threads = cfg.threads;
    l.exclusion_radius = cfg.exclusion_radius;
    l.selection = cfg.selection;
    l.examples = cfg.examples;
    l.confirm_trials = cfg.confirm_trials;
    l.confirm_seed = cfg.confirm_seed;
    l.initial_train = cfg.initial_train;
    l.retrain = cfg.retrain;
    l.warm_start = cfg.warm_start;
    l.coverage_factor = cfg.coverage_factor;
    l.threads = cfg.threads;
    return l;
  }
};

inline std::unique_ptr<Experiment> assemble(const ExperimentConfig& c) {
  auto e = std::make_unique<Experiment>();
  e->cfg = c;
  try {
    e->plant = make_plant(c.plant_id);
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(ex.what());
  }
  e->nominal = make_controller(c.nominal);
  if (c.combined) {
    for (const auto& k : c.combined->controllers) e->combined.push_back(make_controller(k));
  }
  e->phi = build_spec(c);
  try {
    e->grid.space = make_setting_space(e->plant, c.pieces, c.t_sim, c.x0_box);
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(ex.what());
  }
  e->grid.eps = c.eps;
  e->grid.cells_per_axis();  // validates integrality
  return e;
}

}  // namespace cegnn::config
