#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "incentive/constants_report.hpp"
#include "incentive/equilibrium.hpp"
#include "incentive/games.hpp"
#include "incentive/schedules.hpp"
#include "incentive/single_loop.hpp"

namespace incentive {

/// Invalid or unparsable experiment configuration. The message names the field or rule.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class GameKind { kCournot, kRouting, kQuadraticToy };
enum class Algorithm { kAlg1, kAlg2, kDoubleLoop };

std::string to_string(GameKind kind);
std::string to_string(Algorithm alg);

struct GameConfig {
  GameKind kind = GameKind::kQuadraticToy;
  CournotSpec cournot;
  RoutingSpec routing;
  QuadraticToySpec toy;
};

Benchmark build_benchmark(const GameConfig& game);

struct ConstantsConfig {
  bool enabled = true;
  int n_samples = 1000;
  int grid_per_axis = 5;
  std::uint64_t seed = 0;
  /// Simplex sampling region min_j x_j >= nu_min.
  double nu_min = 1e-3;
  /// FullSpace sampling box: the hull of the grid equilibria padded by this radius.
  double box_radius = 1.0;
};

struct ExperimentConfig {
  GameConfig game;
  Algorithm algorithm = Algorithm::kAlg1;
  ScheduleParams schedule;  // lambda filled from the game's stability weights
  double sigma_v = 0.0;
  double sigma_f = 0.0;
  long long iterations = 10000;
  long long gap_every = 100;
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path output_dir = "out";
  std::optional<Vector> theta0;
  std::optional<Vector> x0;
  DoubleLoopOptions reference;
  EquilibriumOptions equilibrium;
  ConstantsConfig constants;
  /// Smallest k used by the rate fit; defaults to K / 2.
  std::optional<double> rate_k_min;
  bool record_wall_time = false;
  /// Concurrent seeds; 0 picks the hardware concurrency.
  int threads = 0;
};

/// Strict JSON loading: unknown fields, wrong types and cross-field violations throw ConfigError.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Starting incentive (theta0 projected, or zero projected) and profile (x0 or the default point).
IncentiveParams initial_theta(const ExperimentConfig& cfg, const Benchmark& bench);
StrategyProfile initial_profile(const ExperimentConfig& cfg, const Benchmark& bench);

struct SeedSummary {
  std::uint64_t seed = 0;
  bool completed = false;
  std::string failure;
  long long iterations = 0;
  std::vector<double> final_theta;
  std::optional<double> final_eps_theta;
  std::optional<double> final_eps_x;
  std::optional<double> rate_slope_theta;
  std::optional<double> rate_slope_x;
  int singularity_events = 0;
  std::optional<double> min_coordinate;
  long long mixing_floor_violations = 0;
  std::string trace_file;

  bool operator==(const SeedSummary&) const = default;
};

struct ExperimentSummary {
  std::string game;
  std::string algorithm;
  long long iterations = 0;
  long long gap_every = 0;
  double rate_k_min = 0.0;
  std::optional<std::vector<double>> theta_star;
  std::optional<double> f_star;
  std::string reference_failure;
  /// Mean over completed seeds.
  std::vector<double> final_theta;
  std::optional<double> rate_slope_theta;
  std::optional<double> rate_slope_x;
  std::optional<ConstantsReport> constants;
  std::optional<ConstantsCheckReport> schedule_check;
  double delta_u_sq = 0.0;
  double delta_f_sq = 0.0;
  std::vector<SeedSummary> seeds;
  int failed_seeds = 0;

  bool operator==(const ExperimentSummary&) const = default;
};

std::string emit_summary(const ExperimentSummary& summary);
ExperimentSummary parse_summary(const std::string& json_text);

struct RunOptions {
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::vector<std::uint64_t>> seeds;
  bool write_files = true;
  bool quiet = true;
};

/**
 * Runs every seed (concurrently, one independent run per worker), writes
 * trace_seed_<s>.csv per seed and summary.json, and returns the summary.
 * Per-seed failures are recorded, not thrown.
 */
ExperimentSummary run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {});

/// Trace as CSV: k, eps_theta, eps_x, vi_residual, theta_0..theta_{d-1}, wall_time_ns.
std::string trace_to_csv(const RunTrace& trace, int incentive_dim);

enum class GapColumn { kTheta, kX };

/// OLS slope of log(gap) on log(k) over rows with k >= k_min and a positive gap. Needs 10 rows.
double fit_rate(const std::vector<TraceRow>& rows, double k_min, GapColumn column);
double fit_rate(const std::vector<double>& k, const std::vector<double>& gap, double k_min);

}  // namespace incentive
