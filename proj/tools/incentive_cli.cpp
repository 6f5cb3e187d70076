// Command-line front end: run experiments, check stability conditions, solve equilibria.

#include <cstdint>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "incentive/experiment.hpp"
#include "incentive/stability.hpp"

namespace {

using namespace incentive;
using json = nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitPartial = 3;

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(item);
  return parts;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> seeds;
  for (const auto& p : split_commas(s)) {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(p, &used);
    if (used != p.size()) throw ConfigError("--seeds: not an integer: " + p);
    seeds.push_back(v);
  }
  if (seeds.empty()) throw ConfigError("--seeds: empty list");
  return seeds;
}

Vector parse_theta(const std::string& s) {
  const auto parts = split_commas(s);
  Vector theta(static_cast<Eigen::Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) {
    std::size_t used = 0;
    theta[static_cast<Eigen::Index>(i)] = std::stod(parts[i], &used);
    if (used != parts[i].size()) throw ConfigError("--theta: not a number: " + parts[i]);
  }
  return theta;
}

json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

int cmd_run(const std::string& path, const std::string& out_dir, const std::string& seeds, bool quiet) {
  const ExperimentConfig cfg = load_config(path);
  RunOptions opts;
  opts.quiet = quiet;
  if (!out_dir.empty()) opts.output_dir = out_dir;
  if (!seeds.empty()) opts.seeds = parse_seeds(seeds);
  const ExperimentSummary summary = run_experiment(cfg, opts);
  const auto dir = opts.output_dir ? *opts.output_dir : cfg.output_dir;
  if (!quiet) {
    std::cout << "summary: " << (dir / "summary.json").string() << "\n";
    std::cout << "final theta:";
    for (double t : summary.final_theta) std::cout << " " << t;
    std::cout << "\n";
    if (summary.rate_slope_theta) std::cout << "rate slope (theta): " << *summary.rate_slope_theta << "\n";
    if (summary.rate_slope_x) std::cout << "rate slope (x): " << *summary.rate_slope_x << "\n";
    if (summary.schedule_check) {
      for (const auto& w : summary.schedule_check->warnings) std::cout << "warning: " << w << "\n";
    }
  }
  const int n = static_cast<int>(summary.seeds.size());
  if (summary.failed_seeds == 0) return kExitOk;
  return summary.failed_seeds == n ? kExitRuntime : kExitPartial;
}

int cmd_check_stability(const std::string& path) {
  const ExperimentConfig cfg = load_config(path);
  const Benchmark bench = build_benchmark(cfg.game);
  const IncentiveParams theta = initial_theta(cfg, bench);
  const StrategySpace& space = bench.space();
  const int n = cfg.constants.n_samples;

  json out;
  out["theta"] = to_json(theta);
  StabilityReport report;
  if (space.is_simplex()) {
    const double nu_min = std::min(cfg.constants.nu_min, 0.5 / space.max_block_dim());
    report = check_stability_simplex(*bench.game, theta,
                                     draw_samples(dirichlet_sampler(space, nu_min), n, cfg.constants.seed));
    out["condition"] = "lambda_max(Z^T (H~ + H~^T) Z) < 0";
  } else {
    const EquilibriumSolution eq = solve_equilibrium(*bench.game, theta, bench.geometry, cfg.equilibrium);
    const Vector r = Vector::Constant(space.total_dim(), cfg.constants.box_radius);
    report = check_stability_unconstrained(
        *bench.game, theta, draw_samples(box_sampler(eq.x_star - r, eq.x_star + r), n, cfg.constants.seed),
        bench.geometry.smoothness_h_psi());
    out["condition"] = "lambda_max(H + H^T) < -2 H_psi";
  }
  out["holds"] = report.holds;
  out["max_eigenvalue"] = report.max_eigenvalue;
  out["threshold"] = report.threshold;
  out["worst_margin"] = report.worst_margin;
  out["samples"] = report.samples;
  out["violations"] = report.violations;
  out["note"] = "sampled check: holds means not falsified on the sample";
  std::cout << out.dump(2) << "\n";
  return kExitOk;
}

int cmd_solve_eq(const std::string& path, const std::string& theta_text) {
  const ExperimentConfig cfg = load_config(path);
  const Benchmark bench = build_benchmark(cfg.game);
  const Vector theta = parse_theta(theta_text);
  if (theta.size() != bench.incentives.dim()) {
    throw ConfigError("--theta must have " + std::to_string(bench.incentives.dim()) + " entries");
  }
  const EquilibriumSolution eq = solve_equilibrium(*bench.game, theta, bench.geometry, cfg.equilibrium);
  json out{{"theta", to_json(theta)},
           {"x_star", to_json(eq.x_star)},
           {"residual", eq.residual},
           {"iterations", eq.iterations},
           {"converged", eq.converged},
           {"objective", bench.objective->value(theta, eq.x_star)}};
  std::cout << out.dump(2) << "\n";
  return eq.converged ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-loop incentive design experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string seeds;
  std::string theta;
  bool quiet = false;

  auto* run = app.add_subcommand("run", "Run an experiment config and write traces plus a summary");
  run->add_option("config", config_path, "Experiment config (JSON)")->required();
  run->add_option("--output-dir", out_dir, "Override the config's output directory");
  run->add_option("--seeds", seeds, "Comma-separated seeds overriding the config");
  run->add_flag("--quiet", quiet, "Suppress progress output");

  auto* stab = app.add_subcommand("check-stability", "Check the sampled variational-stability condition");
  stab->add_option("config", config_path, "Experiment config (JSON)")->required();

  auto* eq = app.add_subcommand("solve-eq", "Solve the lower-level equilibrium at a given incentive");
  eq->add_option("config", config_path, "Experiment config (JSON)")->required();
  eq->add_option("--theta", theta, "Comma-separated incentive vector")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmd_run(config_path, out_dir, seeds, quiet);
    if (*stab) return cmd_check_stability(config_path);
    if (*eq) return cmd_solve_eq(config_path, theta);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
