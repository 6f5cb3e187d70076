#include "incentive/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string_view>
#include <thread>

#include <json.hpp>

#include "incentive/stability.hpp"

namespace incentive {

using json = nlohmann::json;

std::string to_string(GameKind kind) {
  switch (kind) {
    case GameKind::kCournot: return "cournot";
    case GameKind::kRouting: return "routing";
    case GameKind::kQuadraticToy: return "quadratic_toy";
  }
  return "?";
}

std::string to_string(Algorithm alg) {
  switch (alg) {
    case Algorithm::kAlg1: return "alg1";
    case Algorithm::kAlg2: return "alg2";
    case Algorithm::kDoubleLoop: return "double_loop";
  }
  return "?";
}

Benchmark build_benchmark(const GameConfig& game) {
  switch (game.kind) {
    case GameKind::kCournot: return cournot_oracle(game.cournot);
    case GameKind::kRouting: return routing_oracle(game.routing);
    case GameKind::kQuadraticToy: return quadratic_toy(game.toy);
  }
  throw StructuralError("unknown game kind");
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

[[noreturn]] void fail(const std::string& msg) { throw ConfigError("config: " + msg); }

std::string join(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

void check_keys(const json& j, const std::string& path, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) fail((path.empty() ? "top level" : path) + " must be an object");
  for (const auto& item : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      fail("unknown field \"" + join(path, item.key()) + "\"");
    }
  }
}

double number(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path + " must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) fail(path + " must be finite");
  return x;
}

long long integer(const json& v, const std::string& path) {
  if (v.is_number_integer()) return v.get<long long>();
  if (v.is_number_float()) {
    const double x = v.get<double>();
    if (std::isfinite(x) && std::floor(x) == x && std::abs(x) < 9e15) return static_cast<long long>(x);
  }
  fail(path + " must be an integer");
}

bool boolean(const json& v, const std::string& path) {
  if (!v.is_boolean()) fail(path + " must be true or false");
  return v.get<bool>();
}

std::string text(const json& v, const std::string& path) {
  if (!v.is_string()) fail(path + " must be a string");
  return v.get<std::string>();
}

// Array of numbers; a scalar is broadcast when the expected length n is known.
Vector vec(const json& v, const std::string& path, int n = -1) {
  if (v.is_number() && n > 0) return Vector::Constant(n, number(v, path));
  if (!v.is_array()) fail(path + " must be an array of numbers");
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (size_t i = 0; i < v.size(); ++i) {
    out[static_cast<Eigen::Index>(i)] = number(v[i], path + "[" + std::to_string(i) + "]");
  }
  if (n >= 0 && out.size() != n) {
    fail(path + " must have " + std::to_string(n) + " entries, got " + std::to_string(out.size()));
  }
  return out;
}

Matrix mat(const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) fail(path + " must be a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(v.size());
  Eigen::Index cols = -1;
  Matrix m;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Vector row = vec(v[static_cast<size_t>(r)], path + "[" + std::to_string(r) + "]");
    if (cols < 0) {
      cols = row.size();
      m.resize(rows, cols);
    } else if (row.size() != cols) {
      fail(path + " rows must all have the same length");
    }
    m.row(r) = row.transpose();
  }
  return m;
}

std::vector<int> int_list(const json& v, const std::string& path) {
  if (!v.is_array()) fail(path + " must be an array of integers");
  std::vector<int> out;
  for (size_t i = 0; i < v.size(); ++i) {
    out.push_back(static_cast<int>(integer(v[i], path + "[" + std::to_string(i) + "]")));
  }
  return out;
}

CournotSpec parse_cournot(const json& j, const std::string& path) {
  check_keys(j, path, {"type", "n", "p0", "gamma", "cost", "objective", "kappa", "output_weight",
                       "output_target", "incentive_lower", "incentive_upper", "stability_weights"});
  const int n = j.contains("n") ? static_cast<int>(integer(j["n"], join(path, "n"))) : 2;
  if (n < 1) fail(join(path, "n") + " must be >= 1");
  CournotSpec spec = CournotSpec::symmetric(n, 10.0, 2.0, 1.0);
  if (j.contains("p0")) spec.p0 = number(j["p0"], join(path, "p0"));
  if (j.contains("gamma")) spec.gamma = vec(j["gamma"], join(path, "gamma"), n);
  if (j.contains("cost")) spec.cost_linear = vec(j["cost"], join(path, "cost"), n);
  if (j.contains("objective")) {
    const std::string o = text(j["objective"], join(path, "objective"));
    if (o == "welfare") {
      spec.objective = CournotSpec::Objective::kWelfare;
    } else if (o == "output_target") {
      spec.objective = CournotSpec::Objective::kOutputTarget;
    } else {
      fail(join(path, "objective") + " must be \"welfare\" or \"output_target\"");
    }
  }
  if (j.contains("kappa")) spec.kappa = number(j["kappa"], join(path, "kappa"));
  if (j.contains("output_weight")) spec.output_weight = number(j["output_weight"], join(path, "output_weight"));
  if (j.contains("output_target")) spec.output_target = vec(j["output_target"], join(path, "output_target"), n);
  if (j.contains("incentive_lower")) spec.incentive_lower = vec(j["incentive_lower"], join(path, "incentive_lower"), n);
  if (j.contains("incentive_upper")) spec.incentive_upper = vec(j["incentive_upper"], join(path, "incentive_upper"), n);
  if (j.contains("stability_weights")) {
    spec.stability_weights = vec(j["stability_weights"], join(path, "stability_weights"), n);
  }
  return spec;
}

RoutingSpec parse_routing(const json& j, const std::string& path) {
  check_keys(j, path, {"type", "preset", "num_nodes", "edges", "od_pairs", "tolled_edges", "kappa",
                       "incentive_lower", "incentive_upper", "stability_weights"});
  RoutingSpec spec;
  bool have_network = false;
  if (j.contains("preset")) {
    const std::string preset = text(j["preset"], join(path, "preset"));
    if (preset != "pigou") fail(join(path, "preset") + " must be \"pigou\"");
    spec = RoutingSpec::pigou();
    have_network = true;
  }
  if (j.contains("num_nodes")) spec.num_nodes = static_cast<int>(integer(j["num_nodes"], join(path, "num_nodes")));
  if (j.contains("edges")) {
    const json& edges = j["edges"];
    if (!edges.is_array()) fail(join(path, "edges") + " must be an array");
    spec.edges.clear();
    for (size_t e = 0; e < edges.size(); ++e) {
      const std::string ep = join(path, "edges") + "[" + std::to_string(e) + "]";
      check_keys(edges[e], ep, {"from", "to", "m", "b"});
      RoutingSpec::Edge edge;
      if (!edges[e].contains("from") || !edges[e].contains("to")) fail(ep + " needs \"from\" and \"to\"");
      edge.from = static_cast<int>(integer(edges[e]["from"], join(ep, "from")));
      edge.to = static_cast<int>(integer(edges[e]["to"], join(ep, "to")));
      if (edges[e].contains("m")) edge.m = number(edges[e]["m"], join(ep, "m"));
      if (edges[e].contains("b")) edge.b = number(edges[e]["b"], join(ep, "b"));
      spec.edges.push_back(edge);
    }
    have_network = true;
    if (!j.contains("tolled_edges")) spec.tolled_edges.clear();
  }
  if (j.contains("od_pairs")) {
    const json& ods = j["od_pairs"];
    if (!ods.is_array()) fail(join(path, "od_pairs") + " must be an array");
    spec.od_pairs.clear();
    for (size_t i = 0; i < ods.size(); ++i) {
      const std::string op = join(path, "od_pairs") + "[" + std::to_string(i) + "]";
      check_keys(ods[i], op, {"origin", "destination", "demand", "paths"});
      RoutingSpec::OdPair od;
      if (!ods[i].contains("origin") || !ods[i].contains("destination") || !ods[i].contains("paths")) {
        fail(op + " needs \"origin\", \"destination\" and \"paths\"");
      }
      od.origin = static_cast<int>(integer(ods[i]["origin"], join(op, "origin")));
      od.destination = static_cast<int>(integer(ods[i]["destination"], join(op, "destination")));
      if (ods[i].contains("demand")) od.demand = number(ods[i]["demand"], join(op, "demand"));
      const json& paths = ods[i]["paths"];
      if (!paths.is_array()) fail(join(op, "paths") + " must be an array of edge lists");
      for (size_t k = 0; k < paths.size(); ++k) {
        od.paths.push_back(int_list(paths[k], join(op, "paths") + "[" + std::to_string(k) + "]"));
      }
      spec.od_pairs.push_back(std::move(od));
    }
    if (!j.contains("stability_weights")) spec.stability_weights = Vector();
  }
  if (!have_network) fail(path + " needs either \"preset\" or \"edges\"");
  if (j.contains("tolled_edges")) spec.tolled_edges = int_list(j["tolled_edges"], join(path, "tolled_edges"));
  if (j.contains("kappa")) spec.kappa = number(j["kappa"], join(path, "kappa"));
  const int d = static_cast<int>(spec.tolled_edges.empty() ? spec.edges.size() : spec.tolled_edges.size());
  if (j.contains("incentive_lower")) {
    spec.incentive_lower = vec(j["incentive_lower"], join(path, "incentive_lower"), d);
  } else if (spec.incentive_lower.size() != d) {
    spec.incentive_lower = Vector::Zero(d);
  }
  if (j.contains("incentive_upper")) {
    spec.incentive_upper = vec(j["incentive_upper"], join(path, "incentive_upper"), d);
  } else if (spec.incentive_upper.size() != d) {
    spec.incentive_upper = Vector::Constant(d, 10.0);
  }
  if (j.contains("stability_weights")) {
    spec.stability_weights = vec(j["stability_weights"], join(path, "stability_weights"),
                                 static_cast<int>(spec.od_pairs.size()));
  }
  return spec;
}

QuadraticToySpec parse_toy(const json& j, const std::string& path) {
  check_keys(j, path, {"type", "dim_x", "dim_theta", "seed", "S", "B", "theta_ref", "incentive_lower",
                       "incentive_upper"});
  const int dx = j.contains("dim_x") ? static_cast<int>(integer(j["dim_x"], join(path, "dim_x"))) : 1;
  const int dt = j.contains("dim_theta") ? static_cast<int>(integer(j["dim_theta"], join(path, "dim_theta"))) : 1;
  if (dx < 1 || dt < 1) fail(path + " dimensions must be >= 1");
  QuadraticToySpec spec = j.contains("seed")
                              ? random_quadratic_toy_spec(dx, dt, static_cast<std::uint64_t>(integer(j["seed"], join(path, "seed"))))
                              : QuadraticToySpec::canonical(dx, dt);
  if (j.contains("S")) spec.S = mat(j["S"], join(path, "S"));
  if (j.contains("B")) spec.B = mat(j["B"], join(path, "B"));
  if (j.contains("theta_ref")) spec.theta_ref = vec(j["theta_ref"], join(path, "theta_ref"), dt);
  if (j.contains("incentive_lower")) spec.incentive_lower = vec(j["incentive_lower"], join(path, "incentive_lower"), dt);
  if (j.contains("incentive_upper")) spec.incentive_upper = vec(j["incentive_upper"], join(path, "incentive_upper"), dt);
  return spec;
}

GameConfig parse_game(const json& j) {
  if (!j.is_object() || !j.contains("type")) fail("game must be an object with a \"type\"");
  const std::string type = text(j["type"], "game.type");
  GameConfig g;
  if (type == "cournot") {
    g.kind = GameKind::kCournot;
    g.cournot = parse_cournot(j, "game");
  } else if (type == "routing") {
    g.kind = GameKind::kRouting;
    g.routing = parse_routing(j, "game");
  } else if (type == "quadratic_toy") {
    g.kind = GameKind::kQuadraticToy;
    g.toy = parse_toy(j, "game");
  } else {
    fail("game.type must be one of cournot, routing, quadratic_toy");
  }
  return g;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    const size_t upto = std::min<size_t>(e.byte, json_text.size());
    const long line = 1 + std::count(json_text.begin(), json_text.begin() + static_cast<long>(upto), '\n');
    fail("parse error at line " + std::to_string(line) + ": " + e.what());
  }
  check_keys(root, "", {"game", "algorithm", "schedule", "noise", "iterations", "gap_every", "seeds",
                        "output_dir", "theta0", "x0", "reference", "equilibrium", "constants",
                        "rate_k_min", "record_wall_time", "threads"});
  if (!root.contains("game")) fail("missing required field \"game\"");
  if (!root.contains("algorithm")) fail("missing required field \"algorithm\"");

  ExperimentConfig cfg;
  cfg.game = parse_game(root["game"]);
  const std::string alg = text(root["algorithm"], "algorithm");
  if (alg == "alg1") {
    cfg.algorithm = Algorithm::kAlg1;
  } else if (alg == "alg2") {
    cfg.algorithm = Algorithm::kAlg2;
  } else if (alg == "double_loop") {
    cfg.algorithm = Algorithm::kDoubleLoop;
  } else {
    fail("algorithm must be one of alg1, alg2, double_loop");
  }

  const bool simplex_game = cfg.game.kind == GameKind::kRouting;
  if ((cfg.algorithm == Algorithm::kAlg1 && simplex_game) ||
      (cfg.algorithm == Algorithm::kAlg2 && !simplex_game)) {
    fail("algorithm/space mismatch: " + alg + " cannot run on " + to_string(cfg.game.kind) +
         (simplex_game ? " (simplex strategies; use alg2)" : " (unconstrained strategies; use alg1)"));
  }

  cfg.schedule = simplex_game ? ScheduleParams::simplex_profile(0.5, 0.5, Vector())
                              : ScheduleParams::unconstrained_profile(0.5, 0.5, Vector());
  if (root.contains("schedule")) {
    const json& s = root["schedule"];
    check_keys(s, "schedule", {"alpha", "beta", "alpha_exp", "beta_exp", "nu_exp", "exploratory"});
    if (s.contains("alpha")) cfg.schedule.alpha0 = number(s["alpha"], "schedule.alpha");
    if (s.contains("beta")) cfg.schedule.beta0 = number(s["beta"], "schedule.beta");
    if (s.contains("alpha_exp")) cfg.schedule.alpha_exp = number(s["alpha_exp"], "schedule.alpha_exp");
    if (s.contains("beta_exp")) cfg.schedule.beta_exp = number(s["beta_exp"], "schedule.beta_exp");
    if (s.contains("nu_exp")) {
      if (s["nu_exp"].is_null()) {
        cfg.schedule.nu_exp.reset();
      } else {
        cfg.schedule.nu_exp = number(s["nu_exp"], "schedule.nu_exp");
      }
    }
    if (s.contains("exploratory")) cfg.schedule.exploratory = boolean(s["exploratory"], "schedule.exploratory");
  }
  if (root.contains("noise")) {
    const json& n = root["noise"];
    check_keys(n, "noise", {"sigma_v", "sigma_f"});
    if (n.contains("sigma_v")) cfg.sigma_v = number(n["sigma_v"], "noise.sigma_v");
    if (n.contains("sigma_f")) cfg.sigma_f = number(n["sigma_f"], "noise.sigma_f");
  }
  if (root.contains("iterations")) cfg.iterations = integer(root["iterations"], "iterations");
  if (root.contains("gap_every")) cfg.gap_every = integer(root["gap_every"], "gap_every");
  if (root.contains("seeds")) {
    const json& s = root["seeds"];
    if (!s.is_array() || s.empty()) fail("seeds must be a non-empty array of integers");
    cfg.seeds.clear();
    for (size_t i = 0; i < s.size(); ++i) {
      const long long v = integer(s[i], "seeds[" + std::to_string(i) + "]");
      if (v < 0) fail("seeds must be nonnegative");
      cfg.seeds.push_back(static_cast<std::uint64_t>(v));
    }
  }
  if (root.contains("output_dir")) cfg.output_dir = text(root["output_dir"], "output_dir");
  if (root.contains("theta0")) cfg.theta0 = vec(root["theta0"], "theta0");
  if (root.contains("x0")) cfg.x0 = vec(root["x0"], "x0");
  if (root.contains("reference")) {
    const json& r = root["reference"];
    check_keys(r, "reference", {"outer_iters", "inner_tol", "inner_max_iter", "outer_step", "stationarity_tol"});
    if (r.contains("outer_iters")) cfg.reference.outer_iters = static_cast<int>(integer(r["outer_iters"], "reference.outer_iters"));
    if (r.contains("inner_tol")) cfg.reference.inner_tol = number(r["inner_tol"], "reference.inner_tol");
    if (r.contains("inner_max_iter")) cfg.reference.inner_max_iter = integer(r["inner_max_iter"], "reference.inner_max_iter");
    if (r.contains("outer_step")) cfg.reference.outer_step = number(r["outer_step"], "reference.outer_step");
    if (r.contains("stationarity_tol")) cfg.reference.stationarity_tol = number(r["stationarity_tol"], "reference.stationarity_tol");
  }
  if (root.contains("equilibrium")) {
    const json& e = root["equilibrium"];
    check_keys(e, "equilibrium", {"tol", "max_iter"});
    if (e.contains("tol")) cfg.equilibrium.tol = number(e["tol"], "equilibrium.tol");
    if (e.contains("max_iter")) cfg.equilibrium.max_iter = integer(e["max_iter"], "equilibrium.max_iter");
  }
  if (root.contains("constants")) {
    const json& c = root["constants"];
    check_keys(c, "constants", {"enabled", "n_samples", "grid_per_axis", "seed", "nu_min", "box_radius"});
    if (c.contains("enabled")) cfg.constants.enabled = boolean(c["enabled"], "constants.enabled");
    if (c.contains("n_samples")) cfg.constants.n_samples = static_cast<int>(integer(c["n_samples"], "constants.n_samples"));
    if (c.contains("grid_per_axis")) cfg.constants.grid_per_axis = static_cast<int>(integer(c["grid_per_axis"], "constants.grid_per_axis"));
    if (c.contains("seed")) cfg.constants.seed = static_cast<std::uint64_t>(integer(c["seed"], "constants.seed"));
    if (c.contains("nu_min")) cfg.constants.nu_min = number(c["nu_min"], "constants.nu_min");
    if (c.contains("box_radius")) cfg.constants.box_radius = number(c["box_radius"], "constants.box_radius");
  }
  if (root.contains("rate_k_min")) cfg.rate_k_min = number(root["rate_k_min"], "rate_k_min");
  if (root.contains("record_wall_time")) cfg.record_wall_time = boolean(root["record_wall_time"], "record_wall_time");
  if (root.contains("threads")) cfg.threads = static_cast<int>(integer(root["threads"], "threads"));

  // Cross-field rules.
  if (cfg.iterations < 1) fail("iterations must be >= 1");
  if (cfg.gap_every < 1) fail("gap_every must be >= 1");
  if (cfg.sigma_v < 0.0 || cfg.sigma_f < 0.0) fail("noise sigmas must be >= 0");
  if (cfg.threads < 0) fail("threads must be >= 0");
  if (cfg.reference.outer_iters < 1) fail("reference.outer_iters must be >= 1");
  if (!(cfg.reference.inner_tol > 0.0)) fail("reference.inner_tol must be > 0");
  if (!(cfg.equilibrium.tol > 0.0)) fail("equilibrium.tol must be > 0");
  if (cfg.constants.enabled && cfg.constants.n_samples < 2) fail("constants.n_samples must be >= 2");
  if (cfg.constants.grid_per_axis < 1) fail("constants.grid_per_axis must be >= 1");

  Benchmark bench = [&] {
    try {
      return build_benchmark(cfg.game);
    } catch (const StructuralError& e) {
      fail(std::string("game: ") + e.what());
    } catch (const ParameterError& e) {
      fail(std::string("game: ") + e.what());
    }
  }();
  cfg.schedule.lambda = bench.game->stability_weights();
  try {
    cfg.schedule.validate();
  } catch (const ParameterError& e) {
    fail(e.what());
  }
  if (cfg.theta0 && cfg.theta0->size() != bench.incentives.dim()) {
    fail("theta0 must have " + std::to_string(bench.incentives.dim()) + " entries");
  }
  if (cfg.x0) {
    try {
      assert_profile(bench.space(), *cfg.x0);
    } catch (const StructuralError& e) {
      fail(std::string("x0: ") + e.what());
    }
    if (bench.space().is_simplex() && (cfg.x0->array() <= 0.0).any()) {
      fail("x0 must be strictly positive for the simplex algorithm");
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

IncentiveParams initial_theta(const ExperimentConfig& cfg, const Benchmark& bench) {
  const Vector raw = cfg.theta0 ? *cfg.theta0 : Vector::Zero(bench.incentives.dim());
  return project_incentives(bench.incentives, raw);
}

StrategyProfile initial_profile(const ExperimentConfig& cfg, const Benchmark& bench) {
  return cfg.x0 ? *cfg.x0 : bench.space().default_point();
}

// ---------------------------------------------------------------------------
// Summary serialization

namespace {

// Non-finite doubles are written as strings so the summary always round-trips.
json put(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

double get_double(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    return std::numeric_limits<double>::quiet_NaN();
  }
  return j.get<double>();
}

json put(const std::optional<double>& x) { return x ? put(*x) : json(nullptr); }

std::optional<double> get_opt(const json& j) {
  if (j.is_null()) return std::nullopt;
  return get_double(j);
}

json put(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(put(x));
  return a;
}

std::vector<double> get_vec(const json& j) {
  std::vector<double> v;
  for (const auto& x : j) v.push_back(get_double(x));
  return v;
}

json put(const ConstantsReport& c) {
  return json{{"num_players", c.num_players},
              {"strategy_dim", c.strategy_dim},
              {"lambda_norm", put(c.lambda_norm)},
              {"H_u", put(c.H_u)},
              {"rho_theta", put(c.rho_theta)},
              {"rho_x", put(c.rho_x)},
              {"H_star", put(c.H_star)},
              {"H_tilde_star", put(c.H_tilde_star)},
              {"H_tilde", put(c.H_tilde)},
              {"H_psi", put(c.H_psi)},
              {"mu_hat", put(c.mu_hat)},
              {"M_hat", put(c.M_hat)},
              {"V_star_hat", put(c.V_star_hat)},
              {"samples", c.samples},
              {"skipped_singular", c.skipped_singular},
              {"theta_points", c.theta_points},
              {"note", "sampled estimates: lower bounds of suprema, upper bounds of rho_x and mu"}};
}

ConstantsReport get_constants(const json& j) {
  ConstantsReport c;
  c.num_players = j.at("num_players").get<int>();
  c.strategy_dim = j.at("strategy_dim").get<int>();
  c.lambda_norm = get_double(j.at("lambda_norm"));
  c.H_u = get_double(j.at("H_u"));
  c.rho_theta = get_double(j.at("rho_theta"));
  c.rho_x = get_double(j.at("rho_x"));
  c.H_star = get_double(j.at("H_star"));
  c.H_tilde_star = get_double(j.at("H_tilde_star"));
  c.H_tilde = get_double(j.at("H_tilde"));
  c.H_psi = get_double(j.at("H_psi"));
  c.mu_hat = get_double(j.at("mu_hat"));
  c.M_hat = get_double(j.at("M_hat"));
  c.V_star_hat = get_double(j.at("V_star_hat"));
  c.samples = j.at("samples").get<int>();
  c.skipped_singular = j.at("skipped_singular").get<int>();
  c.theta_points = j.at("theta_points").get<int>();
  return c;
}

json put(const ConstantsCheckReport& r) {
  json checks = json::array();
  for (const auto& c : r.checks) {
    checks.push_back({{"name", c.name},
                      {"formula", c.formula},
                      {"lhs", put(c.lhs)},
                      {"bound_reciprocal", put(c.bound_reciprocal)},
                      {"bound_left_to_right", put(c.bound_left_to_right)},
                      {"satisfied_reciprocal", c.satisfied_reciprocal},
                      {"satisfied_left_to_right", c.satisfied_left_to_right},
                      {"slack_reciprocal", put(c.slack_reciprocal)},
                      {"slack_left_to_right", put(c.slack_left_to_right)}});
  }
  return json{{"regime", r.regime == Regime::kUnconstrained ? "unconstrained" : "simplex"},
              {"checks", checks},
              {"warnings", r.warnings},
              {"all_satisfied_reciprocal", r.all_satisfied_reciprocal()},
              {"all_satisfied_left_to_right", r.all_satisfied_left_to_right()}};
}

ConstantsCheckReport get_check(const json& j) {
  ConstantsCheckReport r;
  r.regime = j.at("regime").get<std::string>() == "unconstrained" ? Regime::kUnconstrained : Regime::kSimplex;
  for (const auto& c : j.at("checks")) {
    ConstraintCheck k;
    k.name = c.at("name").get<std::string>();
    k.formula = c.at("formula").get<std::string>();
    k.lhs = get_double(c.at("lhs"));
    k.bound_reciprocal = get_double(c.at("bound_reciprocal"));
    k.bound_left_to_right = get_double(c.at("bound_left_to_right"));
    k.satisfied_reciprocal = c.at("satisfied_reciprocal").get<bool>();
    k.satisfied_left_to_right = c.at("satisfied_left_to_right").get<bool>();
    k.slack_reciprocal = get_double(c.at("slack_reciprocal"));
    k.slack_left_to_right = get_double(c.at("slack_left_to_right"));
    r.checks.push_back(std::move(k));
  }
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  return r;
}

}  // namespace

std::string emit_summary(const ExperimentSummary& s) {
  json seeds = json::array();
  for (const auto& r : s.seeds) {
    seeds.push_back({{"seed", r.seed},
                     {"completed", r.completed},
                     {"failure", r.failure},
                     {"iterations", r.iterations},
                     {"final_theta", put(r.final_theta)},
                     {"final_eps_theta", put(r.final_eps_theta)},
                     {"final_eps_x", put(r.final_eps_x)},
                     {"rate_slope_theta", put(r.rate_slope_theta)},
                     {"rate_slope_x", put(r.rate_slope_x)},
                     {"singularity_events", r.singularity_events},
                     {"min_coordinate", put(r.min_coordinate)},
                     {"mixing_floor_violations", r.mixing_floor_violations},
                     {"trace_file", r.trace_file}});
  }
  json j{{"game", s.game},
         {"algorithm", s.algorithm},
         {"iterations", s.iterations},
         {"gap_every", s.gap_every},
         {"rate_k_min", put(s.rate_k_min)},
         {"theta_star", s.theta_star ? put(*s.theta_star) : json(nullptr)},
         {"f_star", put(s.f_star)},
         {"reference_failure", s.reference_failure},
         {"final_theta", put(s.final_theta)},
         {"rate_slope_theta", put(s.rate_slope_theta)},
         {"rate_slope_x", put(s.rate_slope_x)},
         {"constants", s.constants ? put(*s.constants) : json(nullptr)},
         {"schedule_check", s.schedule_check ? put(*s.schedule_check) : json(nullptr)},
         {"delta_u_sq", put(s.delta_u_sq)},
         {"delta_f_sq", put(s.delta_f_sq)},
         {"failed_seeds", s.failed_seeds},
         {"seeds", seeds}};
  return j.dump(2) + "\n";
}

ExperimentSummary parse_summary(const std::string& json_text) {
  const json j = json::parse(json_text);
  ExperimentSummary s;
  s.game = j.at("game").get<std::string>();
  s.algorithm = j.at("algorithm").get<std::string>();
  s.iterations = j.at("iterations").get<long long>();
  s.gap_every = j.at("gap_every").get<long long>();
  s.rate_k_min = get_double(j.at("rate_k_min"));
  if (!j.at("theta_star").is_null()) s.theta_star = get_vec(j.at("theta_star"));
  s.f_star = get_opt(j.at("f_star"));
  s.reference_failure = j.at("reference_failure").get<std::string>();
  s.final_theta = get_vec(j.at("final_theta"));
  s.rate_slope_theta = get_opt(j.at("rate_slope_theta"));
  s.rate_slope_x = get_opt(j.at("rate_slope_x"));
  if (!j.at("constants").is_null()) s.constants = get_constants(j.at("constants"));
  if (!j.at("schedule_check").is_null()) s.schedule_check = get_check(j.at("schedule_check"));
  s.delta_u_sq = get_double(j.at("delta_u_sq"));
  s.delta_f_sq = get_double(j.at("delta_f_sq"));
  s.failed_seeds = j.at("failed_seeds").get<int>();
  for (const auto& r : j.at("seeds")) {
    SeedSummary x;
    x.seed = r.at("seed").get<std::uint64_t>();
    x.completed = r.at("completed").get<bool>();
    x.failure = r.at("failure").get<std::string>();
    x.iterations = r.at("iterations").get<long long>();
    x.final_theta = get_vec(r.at("final_theta"));
    x.final_eps_theta = get_opt(r.at("final_eps_theta"));
    x.final_eps_x = get_opt(r.at("final_eps_x"));
    x.rate_slope_theta = get_opt(r.at("rate_slope_theta"));
    x.rate_slope_x = get_opt(r.at("rate_slope_x"));
    x.singularity_events = r.at("singularity_events").get<int>();
    x.min_coordinate = get_opt(r.at("min_coordinate"));
    x.mixing_floor_violations = r.at("mixing_floor_violations").get<long long>();
    x.trace_file = r.at("trace_file").get<std::string>();
    s.seeds.push_back(std::move(x));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Traces and rate fits

namespace {

void append_double(std::string& out, double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  out.append(buf, res.ptr);
}

}  // namespace

std::string trace_to_csv(const RunTrace& trace, int incentive_dim) {
  std::string out = "k,eps_theta,eps_x,vi_residual";
  for (int j = 0; j < incentive_dim; ++j) out += ",theta_" + std::to_string(j);
  out += ",wall_time_ns\n";
  for (const auto& row : trace.rows) {
    out += std::to_string(row.k);
    out += ',';
    if (row.eps_theta) append_double(out, *row.eps_theta);
    out += ',';
    if (row.eps_x) append_double(out, *row.eps_x);
    out += ',';
    append_double(out, row.vi_residual);
    for (int j = 0; j < incentive_dim; ++j) {
      out += ',';
      append_double(out, row.theta[j]);
    }
    out += ',';
    out += std::to_string(row.wall_time_ns);
    out += '\n';
  }
  return out;
}

double fit_rate(const std::vector<double>& k, const std::vector<double>& gap, double k_min) {
  if (k.size() != gap.size()) throw StructuralError("fit_rate: k and gap differ in length");
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  int n = 0;
  for (size_t i = 0; i < k.size(); ++i) {
    if (!(k[i] >= k_min) || !(k[i] > 0.0) || !(gap[i] > 0.0) || !std::isfinite(gap[i])) continue;
    const double lx = std::log(k[i]);
    const double ly = std::log(gap[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++n;
  }
  if (n < 10) {
    throw ParameterError("fit_rate: need at least 10 positive gap samples with k >= " +
                         std::to_string(k_min) + ", got " + std::to_string(n));
  }
  const double denom = n * sxx - sx * sx;
  if (!(denom > 0.0)) throw ParameterError("fit_rate: all samples share one k");
  return (n * sxy - sx * sy) / denom;
}

double fit_rate(const std::vector<TraceRow>& rows, double k_min, GapColumn column) {
  std::vector<double> k;
  std::vector<double> gap;
  for (const auto& row : rows) {
    const auto& g = column == GapColumn::kTheta ? row.eps_theta : row.eps_x;
    if (!g) continue;
    k.push_back(static_cast<double>(row.k));
    gap.push_back(*g);
  }
  return fit_rate(k, gap, k_min);
}

// ---------------------------------------------------------------------------
// Running

namespace {

std::optional<double> rate_or_none(const RunTrace& trace, double k_min, GapColumn column) {
  try {
    return fit_rate(trace.rows, k_min, column);
  } catch (const ParameterError&) {
    return std::nullopt;
  }
}

std::vector<double> to_std(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

ConstantsReport constants_for(const ExperimentConfig& cfg, const Benchmark& bench) {
  int per_axis = cfg.constants.grid_per_axis;
  while (per_axis > 1 && std::pow(per_axis, bench.incentives.dim()) > 4096) --per_axis;
  const auto grid = incentive_grid(bench.incentives, per_axis);
  ConstantsOptions opts;
  opts.n_samples = cfg.constants.n_samples;
  opts.seed = cfg.constants.seed;
  opts.equilibrium = cfg.equilibrium;
  const StrategySpace& space = bench.space();
  if (space.is_simplex()) {
    double nu_min = cfg.constants.nu_min;
    nu_min = std::min(nu_min, 0.5 / space.max_block_dim());
    return estimate_constants(*bench.game, *bench.objective, bench.geometry, grid,
                              dirichlet_sampler(space, nu_min), opts);
  }
  Vector lo = Vector::Constant(space.total_dim(), std::numeric_limits<double>::infinity());
  Vector hi = -lo;
  std::optional<StrategyProfile> warm;
  for (const auto& theta : grid) {
    const EquilibriumSolution eq = solve_equilibrium(*bench.game, theta, bench.geometry, cfg.equilibrium, warm);
    if (!eq.converged) continue;
    warm = eq.x_star;
    lo = lo.cwiseMin(eq.x_star);
    hi = hi.cwiseMax(eq.x_star);
  }
  if (!lo.allFinite()) {
    lo = Vector::Zero(space.total_dim());
    hi = Vector::Zero(space.total_dim());
  }
  lo.array() -= cfg.constants.box_radius;
  hi.array() += cfg.constants.box_radius;
  return estimate_constants(*bench.game, *bench.objective, bench.geometry, grid, box_sampler(lo, hi), opts);
}

struct SeedOutcome {
  SeedSummary summary;
  std::string csv;
};

SeedOutcome run_seed(const ExperimentConfig& cfg, const Benchmark& bench, const ScheduleParams& schedule,
                     const std::optional<GapReference>& reference, std::uint64_t seed, double k_min) {
  SeedOutcome out;
  out.summary.seed = seed;
  const IncentiveParams theta0 = initial_theta(cfg, bench);
  const StrategyProfile x0 = initial_profile(cfg, bench);
  RunTrace trace;
  try {
    if (cfg.algorithm == Algorithm::kDoubleLoop) {
      const DoubleLoopResult dl = solve_double_loop(*bench.game, *bench.objective, bench.geometry,
                                                    bench.incentives, theta0, cfg.reference);
      for (const auto& step : dl.trace) {
        TraceRow row;
        row.k = step.iteration;
        row.theta = step.theta;
        row.eps_theta = (step.theta - dl.theta_star).squaredNorm();
        row.vi_residual = step.inner_residual;
        trace.rows.push_back(std::move(row));
      }
      trace.completed = dl.completed;
      trace.failure = dl.failure;
      trace.iterations = static_cast<long long>(dl.trace.size());
      trace.final_theta = dl.theta_star;
      trace.final_x = dl.x_star;
    } else {
      NoiseModel noise{cfg.sigma_v, cfg.sigma_f, seed};
      RunConfig rc;
      rc.iterations = cfg.iterations;
      rc.gap_every = cfg.gap_every;
      rc.record_wall_time = cfg.record_wall_time;
      trace = cfg.algorithm == Algorithm::kAlg1
                  ? run_algorithm1(*bench.game, *bench.objective, bench.geometry, bench.incentives,
                                   schedule, noise, theta0, x0, rc, reference)
                  : run_algorithm2(*bench.game, *bench.objective, bench.geometry, bench.incentives,
                                   schedule, noise, theta0, x0, rc, reference);
    }
  } catch (const std::exception& e) {
    out.summary.completed = false;
    out.summary.failure = e.what();
    return out;
  }
  SeedSummary& s = out.summary;
  s.completed = trace.completed;
  s.failure = trace.failure;
  s.iterations = trace.iterations;
  s.final_theta = to_std(trace.final_theta);
  if (!trace.rows.empty()) {
    s.final_eps_theta = trace.rows.back().eps_theta;
    s.final_eps_x = trace.rows.back().eps_x;
  }
  s.rate_slope_theta = rate_or_none(trace, k_min, GapColumn::kTheta);
  s.rate_slope_x = rate_or_none(trace, k_min, GapColumn::kX);
  s.singularity_events = trace.singularity_events;
  if (bench.space().is_simplex() && cfg.algorithm != Algorithm::kDoubleLoop) {
    s.min_coordinate = trace.min_coordinate;
  }
  s.mixing_floor_violations = trace.mixing_floor_violations;
  out.csv = trace_to_csv(trace, bench.incentives.dim());
  return out;
}

std::optional<double> mean_of(const std::vector<SeedSummary>& seeds,
                              std::optional<double> SeedSummary::*field) {
  double sum = 0.0;
  int n = 0;
  for (const auto& s : seeds) {
    if (s.*field) {
      sum += *(s.*field);
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

}  // namespace

ExperimentSummary run_experiment(const ExperimentConfig& cfg, const RunOptions& options) {
  const Benchmark bench = build_benchmark(cfg.game);
  ScheduleParams schedule = cfg.schedule;
  schedule.lambda = bench.game->stability_weights();
  const std::vector<std::uint64_t> seeds = options.seeds ? *options.seeds : cfg.seeds;
  const std::filesystem::path out_dir = options.output_dir ? *options.output_dir : cfg.output_dir;
  const auto log = [&](const std::string& msg) {
    if (!options.quiet) std::cerr << msg << "\n";
  };

  ExperimentSummary summary;
  summary.game = to_string(cfg.game.kind);
  summary.algorithm = to_string(cfg.algorithm);
  summary.iterations = cfg.iterations;
  summary.gap_every = cfg.gap_every;
  summary.rate_k_min = cfg.rate_k_min ? *cfg.rate_k_min : static_cast<double>(cfg.iterations) / 2.0;
  summary.delta_u_sq = NoiseModel{cfg.sigma_v, cfg.sigma_f, 0}.delta_u_sq(bench.space().max_block_dim());
  summary.delta_f_sq = NoiseModel{cfg.sigma_v, cfg.sigma_f, 0}.delta_f_sq(bench.incentives.dim());

  std::optional<GapReference> reference;
  if (cfg.algorithm != Algorithm::kDoubleLoop) {
    log("solving the double-loop reference");
    const DoubleLoopResult dl = solve_double_loop(*bench.game, *bench.objective, bench.geometry,
                                                  bench.incentives, initial_theta(cfg, bench), cfg.reference);
    if (dl.completed) {
      summary.theta_star = to_std(dl.theta_star);
      summary.f_star = dl.f_star;
      reference = GapReference{dl.theta_star, cfg.equilibrium};
    } else {
      summary.reference_failure = dl.failure;
    }
  }

  if (cfg.constants.enabled) {
    log("estimating constants");
    summary.constants = constants_for(cfg, bench);
    summary.schedule_check = check_constants(
        schedule, *summary.constants,
        bench.space().is_simplex() ? Regime::kSimplex : Regime::kUnconstrained);
  }

  if (options.write_files) std::filesystem::create_directories(out_dir);

  std::vector<SeedOutcome> outcomes(seeds.size());
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const size_t workers = std::min<size_t>(cfg.threads > 0 ? static_cast<size_t>(cfg.threads) : hw, seeds.size());
  std::atomic<size_t> next{0};
  auto work = [&] {
    for (size_t i = next++; i < seeds.size(); i = next++) {
      outcomes[i] = run_seed(cfg, bench, schedule, reference, seeds[i], summary.rate_k_min);
      if (options.write_files && !outcomes[i].csv.empty()) {
        const std::string name = "trace_seed_" + std::to_string(seeds[i]) + ".csv";
        std::ofstream f(out_dir / name, std::ios::binary);
        f << outcomes[i].csv;
        outcomes[i].summary.trace_file = name;
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  std::vector<double> theta_sum;
  int completed = 0;
  for (auto& o : outcomes) {
    log("seed " + std::to_string(o.summary.seed) + (o.summary.completed ? ": done" : ": failed: " + o.summary.failure));
    if (o.summary.completed) {
      if (theta_sum.empty()) theta_sum.assign(o.summary.final_theta.size(), 0.0);
      for (size_t j = 0; j < theta_sum.size(); ++j) theta_sum[j] += o.summary.final_theta[j];
      ++completed;
    } else {
      ++summary.failed_seeds;
    }
    summary.seeds.push_back(std::move(o.summary));
  }
  for (double& t : theta_sum) t /= completed;
  summary.final_theta = theta_sum;
  summary.rate_slope_theta = mean_of(summary.seeds, &SeedSummary::rate_slope_theta);
  summary.rate_slope_x = mean_of(summary.seeds, &SeedSummary::rate_slope_x);

  if (options.write_files) {
    std::ofstream f(out_dir / "summary.json", std::ios::binary);
    f << emit_summary(summary);
  }
  return summary;
}

}  // namespace incentive
