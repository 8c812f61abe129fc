// Command-line driver: state-file pipeline around the egg core library.
//
// A state file is a JSON document holding the boundary geometry, the current
// hierarchical space, the geometry map coefficients and (optionally) a control
// map plus the report of the last operation. Subcommands read and rewrite it.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "egg/dwr.hpp"
#include "egg/domopt.hpp"
#include "egg/svg.hpp"

using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNoConvergence = 2;

// ---------------------------------------------------------------------------
// serialization

json space_to_json(const egg::ThbSpace& s) {
  json j;
  j["p"] = s.p;
  j["alpha"] = s.alpha;
  j["n0"] = s.mesh.n0;
  auto& levels = j["levels"] = json::array();
  for (const auto& lvl : s.mesh.active) {
    json l = json::array();
    for (const auto& [ex, ey] : lvl) l.push_back({ex, ey});
    levels.push_back(std::move(l));
  }
  return j;
}

egg::SpacePtr space_from_json(const json& j, const std::string& path) {
  for (const auto& [key, val] : j.items())
    if (key != "p" && key != "alpha" && key != "n0" && key != "levels")
      throw egg::Error("unknown key " + path + "." + key);
  for (const char* key : {"p", "alpha", "n0", "levels"})
    if (!j.contains(key)) throw egg::Error("missing key " + path + "." + key);
  egg::HierarchicalMesh mesh;
  mesh.n0 = j["n0"].get<int>();
  for (const auto& lvl : j["levels"]) {
    std::set<std::pair<int, int>> s;
    for (const auto& e : lvl) {
      if (!e.is_array() || e.size() != 2)
        throw egg::Error(path + ".levels entries must be [ex, ey]");
      s.insert({e[0].get<int>(), e[1].get<int>()});
    }
    mesh.active.push_back(std::move(s));
  }
  mesh.validate();
  return std::make_shared<egg::ThbSpace>(
      egg::build_thb_space(mesh, j["p"].get<int>(), j["alpha"].get<int>()));
}

json coeffs_to_json(const Eigen::MatrixX2d& c) {
  json j = json::array();
  for (int i = 0; i < c.rows(); ++i) j.push_back({c(i, 0), c(i, 1)});
  return j;
}

Eigen::MatrixX2d coeffs_from_json(const json& j, int n, const std::string& path) {
  if (!j.is_array() || static_cast<int>(j.size()) != n)
    throw egg::Error(path + ": coefficient count does not match the space");
  Eigen::MatrixX2d c(n, 2);
  for (int i = 0; i < n; ++i) {
    c(i, 0) = j[i][0].get<double>();
    c(i, 1) = j[i][1].get<double>();
  }
  return c;
}

json report_to_json(const egg::SolveReport& r) {
  // wall time is deliberately omitted: reports must be byte-reproducible
  json j;
  j["converged"] = r.converged;
  j["iterations"] = static_cast<int>(r.iters.empty() ? 0 : r.iters.size() - 1);
  j["min_detJ"] = r.min_detJ;
  j["dofs"] = r.dofs;
  j["mu_zero_warning"] = r.mu_zero_warning;
  j["used_fallback"] = r.used_fallback;
  if (!r.note.empty()) j["note"] = r.note;
  auto& hist = j["history"] = json::array();
  for (const auto& it : r.iters)
    hist.push_back({{"residual", it.residual},
                    {"increment", it.increment},
                    {"step", it.step},
                    {"linear_iters", it.linear_iters}});
  return j;
}

// ---------------------------------------------------------------------------
// state file

struct State {
  egg::BoundaryData geometry;
  egg::SpacePtr space;
  Eigen::MatrixX2d x;  // empty until solved / initialized
  bool has_s = false;
  egg::SpacePtr s_space;
  Eigen::MatrixX2d s_coeffs;
  json report;
};

State load_state(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw egg::Error("cannot open state file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw egg::Error("state file " + path + ": " + e.what());
  }
  for (const auto& [key, val] : j.items())
    if (key != "geometry" && key != "space" && key != "x" && key != "s" &&
        key != "report")
      throw egg::Error("unknown key " + key);
  for (const char* key : {"geometry", "space"})
    if (!j.contains(key)) throw egg::Error("missing key " + std::string(key));
  State st;
  {
    // reuse the geometry schema by round-tripping through a temp document
    const std::string tmp = path + ".geom.tmp";
    std::ofstream out(tmp);
    out << j["geometry"].dump() << "\n";
    out.close();
    st.geometry = egg::load_geometry(tmp);
    std::remove(tmp.c_str());
  }
  st.space = space_from_json(j["space"], "space");
  if (j.contains("x"))
    st.x = coeffs_from_json(j["x"], st.space->numDofs(), "x");
  if (j.contains("s")) {
    const auto& js = j["s"];
    for (const auto& [key, val] : js.items())
      if (key != "space" && key != "coeffs")
        throw egg::Error("unknown key s." + key);
    st.s_space = space_from_json(js.at("space"), "s.space");
    st.s_coeffs = coeffs_from_json(js.at("coeffs"), st.s_space->numDofs(), "s.coeffs");
    st.has_s = true;
  }
  if (j.contains("report")) st.report = j["report"];
  return st;
}

void save_state(const std::string& path, const State& st) {
  json j;
  {
    const std::string tmp = path + ".geom.tmp";
    egg::save_geometry(tmp, st.geometry);
    std::ifstream in(tmp);
    in >> j["geometry"];
    std::remove(tmp.c_str());
  }
  j["space"] = space_to_json(*st.space);
  if (st.x.rows() > 0) j["x"] = coeffs_to_json(st.x);
  if (st.has_s) {
    j["s"]["space"] = space_to_json(*st.s_space);
    j["s"]["coeffs"] = coeffs_to_json(st.s_coeffs);
  }
  if (!st.report.is_null()) j["report"] = st.report;
  std::ofstream out(path);
  if (!out) throw egg::Error("cannot write state file: " + path);
  out << j.dump(2) << "\n";
}

egg::GeometryMap state_map(const State& st) {
  if (st.x.rows() == 0) throw egg::Error("state has no geometry map; run solve");
  return egg::GeometryMap{st.space, st.x};
}

egg::ControlMap state_control(const State& st) {
  if (!st.has_s) throw egg::Error("state has no control map; run reparam");
  return egg::ControlMap{egg::GeometryMap{st.s_space, st.s_coeffs}};
}

// ---------------------------------------------------------------------------
// flag parsing helpers

egg::Method parse_method(const std::string& m) {
  if (m == "newton") return egg::Method::Newton;
  if (m == "newton-krylov") return egg::Method::NewtonKrylov;
  if (m == "ptc") return egg::Method::Ptc;
  if (m == "picard") return egg::Method::Picard;
  if (m == "direct-winslow") return egg::Method::DirectWinslow;
  throw egg::Error("unknown method: " + m);
}

egg::Tau parse_tau(const std::string& t) {
  if (t == "id") return egg::Tau::Id;
  if (t == "div") return egg::Tau::Div;
  if (t == "ls") return egg::Tau::Ls;
  throw egg::Error("unknown tau variant: " + t);
}

// Config-file twin of the CLI flags; unknown keys rejected. CLI values win
// whenever the flag was given on the command line.
struct Config {
  int p = 3, alpha = 2, n0 = 4;
  double fit_tol = 1e-10;
  std::string method = "newton", tau = "id";
  double mu = 0.0, eps = 1e-4, tol_residual = -1.0, tol_increment = 1e-10;
  int max_iters = 50;
  bool fallback = false;
  std::string goal = "bijectivity";
  double beta = 0.2;
  int rounds = 6;
  double k = 1.0;
  std::string cost = "area", constraint = "cone";
  int isolines = 10;
  bool mesh_overlay = false;
};

void read_config(const std::string& path, Config& c) {
  std::ifstream in(path);
  if (!in) throw egg::Error("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw egg::Error("config file " + path + ": " + e.what());
  }
  auto geti = [&](const json& o, const char* k, int& v) {
    if (o.contains(k)) v = o.at(k).get<int>();
  };
  auto getd = [&](const json& o, const char* k, double& v) {
    if (o.contains(k)) v = o.at(k).get<double>();
  };
  auto gets = [&](const json& o, const char* k, std::string& v) {
    if (o.contains(k)) v = o.at(k).get<std::string>();
  };
  auto getb = [&](const json& o, const char* k, bool& v) {
    if (o.contains(k)) v = o.at(k).get<bool>();
  };
  auto check = [&](const json& o, const std::string& path_,
                   std::initializer_list<const char*> keys) {
    for (const auto& [key, val] : o.items()) {
      bool ok = false;
      for (const char* k : keys) ok |= key == k;
      if (!ok) throw egg::Error("unknown key " + path_ + key);
    }
  };
  check(j, "", {"space", "solver", "dwr", "domopt", "export", "fit_tol"});
  getd(j, "fit_tol", c.fit_tol);
  if (j.contains("space")) {
    check(j["space"], "space.", {"p", "alpha", "n0"});
    geti(j["space"], "p", c.p);
    geti(j["space"], "alpha", c.alpha);
    geti(j["space"], "n0", c.n0);
  }
  if (j.contains("solver")) {
    const auto& s = j["solver"];
    check(s, "solver.",
          {"method", "tau", "mu", "eps", "tol_residual", "tol_increment",
           "max_iters", "fallback"});
    gets(s, "method", c.method);
    gets(s, "tau", c.tau);
    getd(s, "mu", c.mu);
    getd(s, "eps", c.eps);
    getd(s, "tol_residual", c.tol_residual);
    getd(s, "tol_increment", c.tol_increment);
    geti(s, "max_iters", c.max_iters);
    getb(s, "fallback", c.fallback);
  }
  if (j.contains("dwr")) {
    check(j["dwr"], "dwr.", {"goal", "beta", "rounds"});
    gets(j["dwr"], "goal", c.goal);
    getd(j["dwr"], "beta", c.beta);
    geti(j["dwr"], "rounds", c.rounds);
  }
  if (j.contains("domopt")) {
    check(j["domopt"], "domopt.", {"k", "cost", "constraint"});
    getd(j["domopt"], "k", c.k);
    gets(j["domopt"], "cost", c.cost);
    gets(j["domopt"], "constraint", c.constraint);
  }
  if (j.contains("export")) {
    check(j["export"], "export.", {"isolines", "mesh_overlay"});
    geti(j["export"], "isolines", c.isolines);
    getb(j["export"], "mesh_overlay", c.mesh_overlay);
  }
}

egg::SolverConfig solver_config(const Config& c) {
  egg::SolverConfig cfg;
  cfg.method = parse_method(c.method);
  cfg.tau = parse_tau(c.tau);
  cfg.mu = c.mu;
  cfg.eps = c.eps;
  cfg.tol_residual = c.tol_residual;
  cfg.tol_increment = c.tol_increment;
  cfg.max_iters = c.max_iters;
  cfg.fallback = c.fallback;
  return cfg;
}

void write_history_csv(const std::string& path, const egg::SolveReport& r) {
  std::ofstream out(path);
  if (!out) throw egg::Error("cannot write history file: " + path);
  out << "iteration,residual,increment,step,linear_iters\n";
  for (std::size_t i = 0; i < r.iters.size(); ++i)
    out << i << ',' << r.iters[i].residual << ',' << r.iters[i].increment << ','
        << r.iters[i].step << ',' << r.iters[i].linear_iters << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EGG-based planar parameterization pipeline"};
  app.require_subcommand(1);
  std::string config_path, state_path = "egg-state.json";
  unsigned seed = 0;
  app.add_option("--config", config_path, "JSON config file (flag twins)");
  app.add_option("--state", state_path, "state file path")->capture_default_str();
  app.add_option("--seed", seed, "seed for any randomized sampling")
      ->capture_default_str();

  Config cfg;

  // init
  auto* init = app.add_subcommand("init", "load a geometry and build the Coons warm start");
  std::string geom_path;
  init->add_option("geometry", geom_path, "boundary geometry JSON")->required();
  auto* o_p = init->add_option("--p", cfg.p, "spline degree");
  auto* o_alpha = init->add_option("--alpha", cfg.alpha, "regularity");
  auto* o_n0 = init->add_option("--n0", cfg.n0, "elements per side at level 0");
  auto* o_fit = init->add_option("--fit-tol", cfg.fit_tol, "boundary trace fit tolerance");

  // solve
  auto* solve = app.add_subcommand("solve", "solve the parameterization problem");
  auto* o_method = solve->add_option("--method", cfg.method, "newton|newton-krylov|ptc|picard|direct-winslow");
  auto* o_tau = solve->add_option("--tau", cfg.tau, "id|div|ls");
  auto* o_mu = solve->add_option("--mu", cfg.mu, "stabilization mu");
  auto* o_eps = solve->add_option("--eps", cfg.eps, "metric regularization");
  auto* o_tolr = solve->add_option("--tol-residual", cfg.tol_residual, "residual tolerance");
  auto* o_toli = solve->add_option("--tol-increment", cfg.tol_increment, "increment tolerance");
  auto* o_maxit = solve->add_option("--max-iters", cfg.max_iters, "iteration cap");
  bool use_s = false, fresh = false;
  solve->add_flag("--use-s", use_s, "solve the reparameterized problem with the stored control map");
  solve->add_flag("--fresh", fresh, "restart from the Coons patch instead of the stored map");
  auto* o_fallback = solve->add_flag("--fallback", cfg.fallback, "fall back to stabilized Picard on failure");
  std::string history_path;
  solve->add_option("--history", history_path, "write residual history CSV");

  // adapt
  auto* adapt = app.add_subcommand("adapt", "goal-oriented adaptive loop");
  auto* o_goal = adapt->add_option("--goal", cfg.goal, "bijectivity|winslow");
  auto* o_beta = adapt->add_option("--beta", cfg.beta, "marking fraction");
  auto* o_rounds = adapt->add_option("--rounds", cfg.rounds, "maximum rounds");

  // reparam
  auto* reparam = app.add_subcommand("reparam", "build a control map from the current solution");
  std::string mode;
  reparam->add_option("mode", mode, "maxprinciple|constrained|boundary-orth")->required();
  auto* o_k = reparam->add_option("--k", cfg.k, "diffusivity exponent");
  auto* o_cost = reparam->add_option("--cost", cfg.cost, "cost functional name");
  auto* o_constraint = reparam->add_option("--constraint", cfg.constraint, "cone|bezier|pointwise|coarse-slack");
  std::string sides = "north-south";
  reparam->add_option("--sides", sides, "north-south|east-west")->capture_default_str();
  bool sprime = false;
  double sprime_k = 0.75, sprime_beta = 300.0;
  reparam->add_flag("--sprime", sprime, "apply the s-prime post-processing");
  reparam->add_option("--sprime-k", sprime_k, "")->capture_default_str();
  reparam->add_option("--sprime-beta", sprime_beta, "")->capture_default_str();

  // quality
  auto* quality = app.add_subcommand("quality", "quality functional report");
  std::vector<std::string> which;
  quality->add_option("--which", which, "functional names (default: all)");
  std::vector<double> restrict_box;
  quality->add_option("--restrict", restrict_box, "x0 x1 y0 y1 parametric window")->expected(4);
  std::string out_path;
  quality->add_option("--out", out_path, "write report JSON here (default stdout)");

  // export
  auto* exp = app.add_subcommand("export", "SVG or JSON export");
  std::string svg_path, json_path;
  exp->add_option("--svg", svg_path, "SVG output path");
  exp->add_option("--json", json_path, "JSON output path");
  auto* o_isolines = exp->add_option("--isolines", cfg.isolines, "isolines per family");
  auto* o_mesh = exp->add_flag("--mesh", cfg.mesh_overlay, "overlay element boundaries");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (!config_path.empty()) {
      Config file_cfg;
      read_config(config_path, file_cfg);
      // CLI overrides config: keep CLI values only where flags were given
      Config merged = file_cfg;
      auto keep = [](const CLI::Option* o) { return o && o->count() > 0; };
      if (keep(o_p)) merged.p = cfg.p;
      if (keep(o_alpha)) merged.alpha = cfg.alpha;
      if (keep(o_n0)) merged.n0 = cfg.n0;
      if (keep(o_fit)) merged.fit_tol = cfg.fit_tol;
      if (keep(o_method)) merged.method = cfg.method;
      if (keep(o_tau)) merged.tau = cfg.tau;
      if (keep(o_mu)) merged.mu = cfg.mu;
      if (keep(o_eps)) merged.eps = cfg.eps;
      if (keep(o_tolr)) merged.tol_residual = cfg.tol_residual;
      if (keep(o_toli)) merged.tol_increment = cfg.tol_increment;
      if (keep(o_maxit)) merged.max_iters = cfg.max_iters;
      if (keep(o_fallback)) merged.fallback = cfg.fallback;
      if (keep(o_goal)) merged.goal = cfg.goal;
      if (keep(o_beta)) merged.beta = cfg.beta;
      if (keep(o_rounds)) merged.rounds = cfg.rounds;
      if (keep(o_k)) merged.k = cfg.k;
      if (keep(o_cost)) merged.cost = cfg.cost;
      if (keep(o_constraint)) merged.constraint = cfg.constraint;
      if (keep(o_isolines)) merged.isolines = cfg.isolines;
      if (keep(o_mesh)) merged.mesh_overlay = cfg.mesh_overlay;
      cfg = merged;
    }

    if (init->parsed()) {
      State st;
      st.geometry = egg::load_geometry(geom_path);
      st.space = egg::build_initial_space(st.geometry, cfg.n0, cfg.p, cfg.alpha,
                                          cfg.fit_tol);
      const egg::QuadratureCache cache = egg::build_quadrature(st.space);
      st.x = egg::coons_patch(st.geometry, cache).coeffs;
      st.report = json{{"op", "init"}, {"dofs", st.space->numDofs()}};
      save_state(state_path, st);
      return kExitOk;
    }

    State st = load_state(state_path);

    if (solve->parsed()) {
      const egg::QuadratureCache cache = egg::build_quadrature(st.space);
      egg::GeometryMap x0 = (st.x.rows() > 0 && !fresh)
                                ? state_map(st)
                                : egg::coons_patch(st.geometry, cache);
      egg::SolverConfig scfg = solver_config(cfg);
      egg::ControlMap s;
      const egg::ControlMap* sp = nullptr;
      if (use_s) {
        s = state_control(st);
        sp = &s;
      }
      // the boundary correspondence stays the original one; the control map
      // only enters the interior operator
      egg::apply_dirichlet(cache, x0, egg::boundary_trace(st.geometry));
      if (scfg.method == egg::Method::DirectWinslow &&
          egg::min_det_j(cache, x0) <= 0.0) {
        // the direct minimizer needs a bijective start; untangle first
        egg::SolverConfig pre = scfg;
        pre.method = egg::Method::Newton;
        pre.tau = egg::Tau::Id;
        pre.fallback = true;
        x0 = egg::solve(cache, x0, pre, sp).first;
      }
      auto [x, rep] = egg::solve(cache, x0, scfg, sp);
      st.x = x.coeffs;
      st.report = report_to_json(rep);
      st.report["op"] = "solve";
      if (!history_path.empty()) write_history_csv(history_path, rep);
      save_state(state_path, st);
      return rep.converged ? kExitOk : kExitNoConvergence;
    }

    if (adapt->parsed()) {
      egg::AdaptConfig acfg;
      if (cfg.goal == "bijectivity")
        acfg.goal = egg::GoalKind::Bijectivity;
      else if (cfg.goal == "winslow")
        acfg.goal = egg::GoalKind::Winslow;
      else
        throw egg::Error("unknown goal: " + cfg.goal);
      acfg.beta = cfg.beta;
      acfg.max_rounds = cfg.rounds;
      acfg.solver = solver_config(cfg);
      const egg::SpacePtr space0 = std::make_shared<egg::ThbSpace>(
          egg::build_thb_space(egg::uniform_mesh(st.space->mesh.n0),
                               st.space->p, st.space->alpha));
      const egg::AdaptResult res = egg::adapt_loop(st.geometry, space0, acfg);
      st.space = res.x.space;
      st.x = res.x.coeffs;
      json rounds = json::array();
      for (const auto& r : res.rounds)
        rounds.push_back({{"dofs", r.dofs},
                          {"num_negative", r.num_negative},
                          {"estimate", r.estimate},
                          {"marked", r.marked},
                          {"converged", r.solve.converged}});
      st.report = json{{"op", "adapt"},
                       {"goal", cfg.goal},
                       {"satisfied", res.satisfied},
                       {"rounds", rounds}};
      if (!res.note.empty()) st.report["note"] = res.note;
      save_state(state_path, st);
      return res.satisfied ? kExitOk : kExitNoConvergence;
    }

    if (reparam->parsed()) {
      const egg::GeometryMap x = state_map(st);
      egg::ControlMap s;
      if (mode == "maxprinciple") {
        s = egg::maxprinciple_reparam(x, cfg.k, st.space);
      } else if (mode == "constrained") {
        egg::ConstraintSet c;
        if (cfg.constraint == "cone")
          c = egg::make_cone_constraint(st.space);
        else if (cfg.constraint == "bezier")
          c = egg::make_bezier_constraint(st.space);
        else if (cfg.constraint == "pointwise")
          c = egg::make_pointwise_constraint(st.space, nullptr);
        else if (cfg.constraint == "coarse-slack")
          c = egg::make_coarse_slack_constraint(st.space);
        else
          throw egg::Error("unknown constraint kind: " + cfg.constraint);
        egg::DomOptReport rep;
        s = egg::optimize_domain(x, {egg::CostTerm{cfg.cost, 1.0, true, {}}}, c,
                                 st.space, {}, &rep);
        st.report = json{{"op", "reparam"},
                         {"mode", mode},
                         {"cost_initial", rep.cost_initial},
                         {"cost_final", rep.cost_final},
                         {"kkt_residual", rep.kkt_residual},
                         {"outer_iters", rep.outer_iters}};
      } else if (mode == "boundary-orth") {
        const egg::OrthSides os = sides == "east-west"
                                      ? egg::OrthSides::EastWest
                                      : egg::OrthSides::NorthSouth;
        s = egg::boundary_orth_pipeline(x, os, st.space);
        if (sprime) {
          // recompute the geometry with s, then smooth s with the
          // anisotropic diffusion step
          const egg::QuadratureCache cache = egg::build_quadrature(st.space);
          egg::GeometryMap x0 = egg::coons_patch(st.geometry, cache);
          egg::apply_dirichlet(cache, x0, egg::boundary_trace(st.geometry));
          egg::SolverConfig scfg = solver_config(cfg);
          scfg.fallback = true;
          auto [xr, rep] = egg::solve(cache, x0, scfg, &s);
          if (!rep.converged)
            throw egg::Error("recompute for sprime did not converge");
          s = egg::sprime_postprocess(s, xr, sprime_k, sprime_beta);
        }
      } else {
        throw egg::Error("unknown reparam mode: " + mode);
      }
      if (st.report.is_null() || mode != "constrained")
        st.report = json{{"op", "reparam"}, {"mode", mode}};
      st.has_s = true;
      st.s_space = s.map.space;
      st.s_coeffs = s.map.coeffs;
      save_state(state_path, st);
      return kExitOk;
    }

    if (quality->parsed()) {
      const egg::GeometryMap x = state_map(st);
      const egg::QuadratureCache cache = egg::build_quadrature(st.space);
      std::optional<egg::QualityRestrict> box;
      if (!restrict_box.empty())
        box = egg::QualityRestrict{restrict_box[0], restrict_box[1],
                                   restrict_box[2], restrict_box[3]};
      const std::vector<std::string>& names =
          which.empty() ? egg::quality_names() : which;
      const egg::QualityReport rep = egg::evaluate(cache, x, names, box);
      json j{{"op", "quality"},
             {"min_detJ", rep.min_detJ},
             {"max_detJ", rep.max_detJ},
             {"num_negative", rep.num_negative},
             {"dofs", rep.dofs}};
      for (const auto& [name, val] : rep.values) j["values"][name] = val;
      if (out_path.empty()) {
        std::cout << j.dump(2) << "\n";
      } else {
        std::ofstream out(out_path);
        if (!out) throw egg::Error("cannot write report: " + out_path);
        out << j.dump(2) << "\n";
      }
      st.report = j;
      save_state(state_path, st);
      return kExitOk;
    }

    if (exp->parsed()) {
      const egg::GeometryMap x = state_map(st);
      if (svg_path.empty() && json_path.empty())
        throw egg::Error("export: give --svg and/or --json");
      if (!svg_path.empty()) {
        egg::SvgOptions so;
        so.isolines_xi = so.isolines_eta = cfg.isolines;
        so.mesh_overlay = cfg.mesh_overlay;
        egg::export_svg(x, so, svg_path);
      }
      if (!json_path.empty()) {
        json j;
        j["space"] = space_to_json(*st.space);
        j["x"] = coeffs_to_json(st.x);
        std::ofstream out(json_path);
        if (!out) throw egg::Error("cannot write export: " + json_path);
        out << j.dump(2) << "\n";
      }
      return kExitOk;
    }
  } catch (const egg::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
