#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "cegnn/cegis.hpp"
#include "cegnn/config.hpp"
#include "cegnn/io.hpp"
#include "cegnn/mining.hpp"

namespace fs = std::filesystem;
using namespace cegnn;
using Json = nlohmann::json;

namespace {

enum Exit : int {
  kOk = 0,
  kUnexpected = 1,
  kUsage = 2,
  kCexFound = 3,
  kMissingFile = 4,
  kConfig = 5,
  kPremise = 6,
  kDiverged = 7,
  kExhausted = 8,
  kBoundViolated = 9,
  kIterationLimit = 10,
  kPolarity = 11,
};

const char* kExitHelp =
    "Exit codes:\n"
    "  0  success (falsify: no counterexample found)\n"
    "  1  unexpected error\n"
    "  2  usage error\n"
    "  3  falsify: counterexample found\n"
    "  4  missing input file\n"
    "  5  invalid configuration or schema violation\n"
    "  6  premise violation (the teacher violates the property)\n"
    "  7  simulation or training diverged\n"
    "  8  falsification search space exhausted\n"
    "  9  check-prop2: measured gap exceeds the bound\n"
    "  10 loop: iteration limit reached without a clean confirmation run\n"
    "  11 PSTL polarity misdeclaration\n";

struct MissingFile : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::string out;
};

fs::path require_file(const std::string& p) {
  if (p.empty() || !fs::is_regular_file(p)) throw MissingFile("file not found: " + (p.empty() ? "<none>" : p));
  return p;
}

// The run log is the only place wall-clock timestamps are written.
class RunLog {
 public:
  RunLog(const fs::path& dir, const std::string& cmd) : os_((fs::create_directories(dir), dir / "run.log"), std::ios::app) {
    line("start " + cmd);
  }
  ~RunLog() { line("end"); }
  void line(const std::string& msg) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", std::gmtime(&now));
    os_ << buf << ' ' << msg << '\n';
    os_.flush();
  }

 private:
  std::ofstream os_;
};

struct Context {
  std::unique_ptr<config::Experiment> exp;
  fs::path out;
};

Context load(const Globals& g) {
  const Json j = io::read_json(require_file(g.config));
  config::ExperimentConfig c = config::parse(j);
  if (g.seed) config::override_seeds(c, *g.seed);
  if (g.threads) c.threads = std::max<std::size_t>(1, *g.threads);
  if (!g.out.empty()) c.output_dir = g.out;
  Context ctx;
  ctx.exp = config::assemble(c);
  ctx.out = c.output_dir;
  return ctx;
}

void write_effective(const Context& ctx) { io::write_json(ctx.out / "effective_config.json", config::to_json(ctx.exp->cfg)); }

std::shared_ptr<const nn::Net> load_net(const std::string& path) {
  return std::make_shared<nn::Net>(nn::Net::from_json(io::read_json(require_file(path))));
}

io::CsvTable dataset_table(const nn::Dataset& d) {
  std::vector<std::string> header{"group", "source", "iteration"};
  for (std::size_t i = 0; i < d.in_dim; ++i) header.push_back("in" + std::to_string(i));
  for (std::size_t i = 0; i < d.out_dim; ++i) header.push_back("out" + std::to_string(i));
  io::CsvTable t(header);
  for (std::size_t r = 0; r < d.rows(); ++r) {
    const auto& pv = d.provenance[d.group[r]];
    std::vector<std::string> row{std::to_string(d.group[r]), pv.source, std::to_string(pv.iteration)};
    for (double v : d.input(r)) row.push_back(io::fmt(v));
    for (double v : d.target(r)) row.push_back(io::fmt(v));
    t.add(std::move(row));
  }
  return t;
}

io::CsvTable points_table(const std::vector<Point>& pts, std::size_t dim) {
  std::vector<std::string> header;
  for (std::size_t i = 0; i < dim; ++i) header.push_back("p" + std::to_string(i));
  io::CsvTable t(header);
  for (const auto& p : pts) {
    std::vector<std::string> row;
    for (double v : p) row.push_back(io::fmt(v));
    t.add(std::move(row));
  }
  return t;
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const Globals& g, bool dry_run) {
  Context ctx = load(g);
  const auto& e = *ctx.exp;
  const auto pts = build_eps_net(e.grid, e.cfg.net_cap);
  if (dry_run) {
    std::cout << "planned settings: " << pts.size() << "\n";
    return kOk;
  }
  RunLog log(ctx.out, "gen-data");
  write_effective(ctx);
  const LoopProblem pb = e.problem();
  const auto settings = eps_net_settings(e.grid, e.cfg.net_cap);
  const auto behaviours = detail::replay_nominal(pb, settings, e.cfg.threads);
  nn::Dataset data;
  CoverageTracker cov(e.grid, e.cfg.coverage_factor, e.cfg.net_cap, e.cfg.falsify.seed);
  for (const auto& b : behaviours) {
    nn::add_behaviour(data, b, pb.net, "nominal", 0);
    cov.record_visit(e.grid.space.embed(b.setting));
  }
  dataset_table(data).save(ctx.out / "dataset.csv");
  points_table(pts, e.grid.space.dim()).save(ctx.out / "net.csv");
  io::write_json(ctx.out / "coverage.json", {{"settings", settings.size()},
                                             {"rows", data.rows()},
                                             {"eps", e.grid.eps},
                                             {"cells_per_axis", e.grid.cells_per_axis()},
                                             {"coverage_cells", cov.total_cells()},
                                             {"coverage", cov.ratio()}});
  std::cout << "behaviours: " << settings.size() << "\nrows: " << data.rows() << "\n";
  return kOk;
}

int cmd_train(const Globals& g) {
  Context ctx = load(g);
  RunLog log(ctx.out, "train");
  write_effective(ctx);
  const auto& e = *ctx.exp;
  const LoopState st = initial_train(e.problem(), e.loop_config());
  io::write_json(ctx.out / "net.json", st.net->to_json());
  io::write_json(ctx.out / "train_report.json", to_json(st.reports.front()));
  std::cout << "n_R: " << st.reports.front().n_R << "\ntrain_mse: " << io::fmt(st.reports.front().train_mse) << "\n";
  return kOk;
}

int cmd_falsify(const Globals& g, const std::string& net_path, std::optional<std::size_t> trials) {
  Context ctx = load(g);
  RunLog log(ctx.out, "falsify");
  write_effective(ctx);
  const auto& e = *ctx.exp;
  std::unique_ptr<Controller> owned;
  const Controller* ctrl = e.nominal.get();
  if (!net_path.empty()) {
    owned = nn::as_controller(load_net(net_path));
    ctrl = owned.get();
  }
  FalsifyConfig fc = e.loop_config().falsify;
  if (trials) fc.trials = *trials;
  const LoopProblem pb = e.problem();
  const FalsifyResult r = falsify(make_system(pb, *ctrl), e.phi, fc);
  trial_log(r, e.grid.space.dim()).save(ctx.out / "falsify_trials.csv");
  Json cex = Json::array();
  for (std::size_t i = 0; i < r.counterexamples.size(); ++i) {
    const Verdict& v = r.counterexamples[i];
    const std::string stem = "cex_" + std::to_string(i);
    if (v.behaviour) io::save_behaviour(ctx.out / "cex" / stem, *v.behaviour);
    cex.push_back({{"trial", v.trial},
                   {"rho", std::isfinite(v.rho) ? Json(v.rho) : Json("-inf")},
                   {"diverged", v.diverged},
                   {"setting", io::to_json(v.setting)},
                   {"trace", v.behaviour ? "cex/" + stem + ".csv" : ""}});
  }
  const bool found = !r.counterexamples.empty();
  io::write_json(ctx.out / "falsify_summary.json",
                 {{"result", found ? "cex found" : "no cex found"},
                  {"trials", r.trials.size()},
                  {"n_C", r.counterexamples.size()},
                  {"min_rho", r.best_so_far.empty() || !std::isfinite(r.best_so_far.back()) ? Json() : Json(r.best_so_far.back())},
                  {"counterexamples", cex}});
  std::cout << (found ? "cex found" : "no cex found") << "\ntrials: " << r.trials.size()
            << "\nn_C: " << r.counterexamples.size() << "\n";
  return found ? kCexFound : kOk;
}

pstl::PstlFormula make_template(const config::PstlSpec& ps) {
  return pstl::build_phi_template(ps.signal, ps.params[0], ps.params[1], ps.params[2], ps.params[3]);
}

struct Mined {
  pstl::FalseSetEstimate nominal;
  std::optional<pstl::FalseSetEstimate> learned;
  std::optional<double> sigma;
};

Mined mine(const config::Experiment& e, const Controller* learned) {
  const auto& ps = *e.cfg.pstl;
  const auto p = make_template(ps);
  const auto settings = sample_settings(e.grid.space, ps.settings, ps.seed);
  const std::size_t th = e.cfg.threads;
  Mined m;
  const auto nominal_traces = simulate_traces(e.plant, *e.nominal, settings, e.cfg.h, e.cfg.substeps, th);
  pstl::check_empirical_polarity(p, nominal_traces, 20, ps.seed);
  m.nominal = estimate_false_set(p, nominal_traces, ps.grid, th);
  if (learned) {
    const auto traces = simulate_traces(e.plant, *learned, settings, e.cfg.h, e.cfg.substeps, th);
    m.learned = estimate_false_set(p, traces, ps.grid, th);
    if (m.nominal.volume_lower_bound > 0.0) m.sigma = pstl::policy_similarity(m.nominal.volume_lower_bound, m.learned->volume_lower_bound);
  }
  return m;
}

Json mined_json(const Mined& m) {
  Json j{{"nominal", pstl::summary_json(m.nominal)}};
  if (m.learned) j["learned"] = pstl::summary_json(*m.learned);
  j["sigma"] = m.sigma ? Json(*m.sigma) : Json();
  if (m.learned && !m.sigma) j["sigma_note"] = "undefined: nominal false-set volume estimate is zero";
  return j;
}

int cmd_loop(const Globals& g) {
  Context ctx = load(g);
  RunLog log(ctx.out, "loop");
  write_effective(ctx);
  const auto& e = *ctx.exp;
  const LoopProblem pb = e.problem();
  const LoopConfig lc = e.loop_config();
  const LoopState st = run_loop(pb, lc, [&](const LoopState& s) {
    const auto& r = s.reports.back();
    const std::string tag = std::to_string(r.iteration);
    io::write_json(ctx.out / "iterations" / ("report_" + tag + ".json"), to_json(r));
    io::write_json(ctx.out / "nets" / ("net_" + tag + ".json"), s.net->to_json());
    log.line("iteration " + tag + " done");
    std::cout << "iteration " << tag << ": n_C=" << r.n_C << " n_C_hat=" << r.n_C_hat << " n_R=" << r.n_R
              << (r.terminated ? " (confirmed)" : "") << std::endl;
  });
  rollup(st.reports).save(ctx.out / "rollup.csv");
  Json reports = Json::array();
  for (const auto& r : st.reports) reports.push_back(to_json(r));
  io::write_json(ctx.out / "reports.json", reports);
  io::write_json(ctx.out / "net.json", st.net->to_json());
  const std::size_t budget = st.terminated ? lc.confirm_trials : lc.falsify.trials;
  Json summary{{"terminated", st.terminated},
               {"iterations", st.reports.size() - 1},
               {"outcome", outcome_text(st, budget)},
               {"coverage", st.reports.back().coverage}};
  if (e.cfg.pstl) {
    nn::NetController learned(st.net);
    summary["pstl"] = mined_json(mine(e, &learned));
  }
  io::write_json(ctx.out / "summary.json", summary);
  std::cout << summary["outcome"].get<std::string>() << "\n";
  return st.terminated ? kOk : kIterationLimit;
}

int cmd_mine_pstl(const Globals& g, const std::string& net_path) {
  Context ctx = load(g);
  const auto& e = *ctx.exp;
  if (!e.cfg.pstl) throw ConfigError("mine-pstl needs a 'pstl' section in the config");
  RunLog log(ctx.out, "mine-pstl");
  write_effective(ctx);
  std::unique_ptr<Controller> learned;
  if (!net_path.empty()) learned = nn::as_controller(load_net(net_path));
  const Mined m = mine(e, learned.get());
  io::write_text(ctx.out / "pstl_nominal.csv", pstl::to_csv(m.nominal));
  if (m.learned) io::write_text(ctx.out / "pstl_learned.csv", pstl::to_csv(*m.learned));
  const Json j = mined_json(m);
  io::write_json(ctx.out / "pstl_summary.json", j);
  std::cout << j.dump(2) << "\n";
  return kOk;
}

int cmd_check_prop2(const Globals& g) {
  Context ctx = load(g);
  RunLog log(ctx.out, "check-prop2");
  write_effective(ctx);
  const auto& c = ctx.exp->cfg.prop2;
  const Plant plant = make_plant(c.plant);
  const auto steps = static_cast<std::size_t>(std::llround(c.horizon / c.h));
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0), X(-1.0, 1.0);
  std::vector<double> worst_gap(steps + 1, 0.0);
  std::vector<double> eta;
  double worst_excess = -stl::kInf, max_ratio = 0.0;
  for (std::size_t t = 0; t < c.trials; ++t) {
    std::vector<double> x0(plant.state_dim);
    for (double& v : x0) v = X(rng);
    std::vector<std::vector<double>> ua(steps, std::vector<double>(plant.input_dim)), ub = ua;
    for (std::size_t k = 0; k < steps; ++k) {
      for (std::size_t j = 0; j < plant.input_dim; ++j) {
        ua[k][j] = U(rng);
        ub[k][j] = ua[k][j] + c.eps * U(rng);
      }
    }
    const DeviationCheck d = check_deviation(plant, x0, ua, ub, c.eps, c.h, c.substeps);
    eta = d.eta;
    for (std::size_t k = 0; k < d.gap.size(); ++k) worst_gap[k] = std::max(worst_gap[k], d.gap[k]);
    worst_excess = std::max(worst_excess, d.worst_excess);
    max_ratio = std::max(max_ratio, d.max_ratio);
  }
  io::CsvTable t({"t", "eta", "max_gap"});
  for (std::size_t k = 0; k < eta.size(); ++k) {
    t.add({io::fmt(static_cast<double>(k) * c.h), io::fmt(eta[k]), io::fmt(worst_gap[k])});
  }
  t.save(ctx.out / "prop2.csv");
  const bool ok = worst_excess <= 1e-6;
  io::write_json(ctx.out / "prop2_summary.json",
                 {{"trials", c.trials}, {"worst_excess", worst_excess}, {"max_ratio", max_ratio}, {"holds", ok}});
  std::cout << (ok ? "bound holds" : "bound violated") << "\nmax_ratio: " << io::fmt(max_ratio) << "\n";
  return ok ? kOk : kBoundViolated;
}

int cmd_report(const Globals& g, const std::string& dir_arg) {
  fs::path dir = dir_arg;
  if (dir.empty()) {
    if (!g.out.empty()) {
      dir = g.out;
    } else {
      dir = config::parse(io::read_json(require_file(g.config))).output_dir;
    }
  }
  const Json reports = io::read_json(require_file((dir / "reports.json").string()));
  io::CsvTable t({"i", "n_T", "n_C", "n_C_hat", "n_R", "n_C_tilde", "t_test", "t_retrain", "t_retest", "coverage"});
  char buf[32];
  auto sec = [&](const Json& v) {
    std::snprintf(buf, sizeof buf, "%.3f", v.get<double>());
    return std::string(buf);
  };
  std::printf("%3s %6s %6s %6s %6s %6s %9s %9s %9s %9s\n", "i", "n_T", "n_C", "n_C^", "n_R", "n_C~", "t_test", "t_retr",
              "t_retest", "coverage");
  for (const auto& r : reports) {
    std::printf("%3zu %6zu %6zu %6zu %6zu %6zu %9.3f %9.3f %9.3f %9.5f\n", r["iteration"].get<std::size_t>(),
                r["n_T"].get<std::size_t>(), r["n_C"].get<std::size_t>(), r["n_C_hat"].get<std::size_t>(),
                r["n_R"].get<std::size_t>(), r["n_C_tilde"].get<std::size_t>(), r["t_test"].get<double>(),
                r["t_retrain"].get<double>(), r["t_retest"].get<double>(), r["coverage"].get<double>());
    t.add({r["iteration"].dump(), r["n_T"].dump(), r["n_C"].dump(), r["n_C_hat"].dump(), r["n_R"].dump(),
           r["n_C_tilde"].dump(), sec(r["t_test"]), sec(r["t_retrain"]), sec(r["t_retest"]), io::fmt(r["coverage"].get<double>())});
  }
  t.save(dir / "table.csv");
  if (fs::is_regular_file(dir / "summary.json")) {
    std::cout << io::read_json(dir / "summary.json").value("outcome", "") << "\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterexample-guided training of neural feedback controllers"};
  app.footer(kExitHelp);
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "experiment configuration (JSON)");
  app.add_option("--seed-override", g.seed, "derive every seed from this value");
  app.add_option("--threads", g.threads, "worker threads (default from config, 1 for bit-reproducibility)");
  app.add_option("--out", g.out, "output directory (overrides the config)");

  bool dry_run = false;
  auto* gen = app.add_subcommand("gen-data", "simulate the nominal loop on the epsilon-net and write the dataset");
  gen->add_flag("--dry-run", dry_run, "print the planned setting count and write nothing");

  app.add_subcommand("train", "train the initial net on the epsilon-net dataset");

  std::string net_path;
  std::optional<std::size_t> trials;
  auto* fal = app.add_subcommand("falsify", "falsify the nominal controller or a trained net (exit 3 on cex)");
  fal->add_option("--net", net_path, "net JSON to falsify instead of the nominal controller");
  fal->add_option("--trials", trials, "simulation budget (default from config)");

  app.add_subcommand("loop", "run the training-falsification loop");

  std::string mine_net;
  auto* mp = app.add_subcommand("mine-pstl", "estimate PSTL false-set volumes and policy similarity");
  mp->add_option("--net", mine_net, "learned net to compare against the nominal controller");

  app.add_subcommand("check-prop2", "check the trajectory deviation bound on random control perturbations");

  std::string report_dir;
  auto* rep = app.add_subcommand("report", "print and tabulate saved iteration reports");
  rep->add_option("--dir", report_dir, "directory holding reports.json (default: output directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  if (g.config.empty() && cmd != "report") {
    std::cerr << "error: --config is required\n";
    return kUsage;
  }
  try {
    if (cmd == "gen-data") return cmd_gen_data(g, dry_run);
    if (cmd == "train") return cmd_train(g);
    if (cmd == "falsify") return cmd_falsify(g, net_path, trials);
    if (cmd == "loop") return cmd_loop(g);
    if (cmd == "mine-pstl") return cmd_mine_pstl(g, mine_net);
    if (cmd == "check-prop2") return cmd_check_prop2(g);
    if (cmd == "report") {
      if (g.config.empty() && g.out.empty() && report_dir.empty()) {
        std::cerr << "error: report needs --dir, --out or --config\n";
        return kUsage;
      }
      return cmd_report(g, report_dir);
    }
  } catch (const MissingFile& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kMissingFile;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return kConfig;
  } catch (const PremiseViolation& e) {
    std::cerr << "premise violation: " << e.what() << "\n";
    return kPremise;
  } catch (const SimulationDiverged& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kDiverged;
  } catch (const TrainingDiverged& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kDiverged;
  } catch (const SearchSpaceExhausted& e) {
    std::cerr << "search space exhausted: " << e.what() << "\n";
    return kExhausted;
  } catch (const PolarityError& e) {
    std::cerr << "polarity error: " << e.what() << "\n";
    return kPolarity;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUnexpected;
  }
  return kUsage;
}
