#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "incentive/bregman.hpp"
#include "incentive/equilibrium.hpp"
#include "incentive/game_core.hpp"
#include "incentive/schedules.hpp"

namespace incentive {

/// Additive zero-mean Gaussian noise on the payoff-gradient and designer-gradient feedback.
struct NoiseModel {
  double sigma_v = 0.0;
  double sigma_f = 0.0;
  std::uint64_t seed = 0;

  /// Second-moment bounds of the estimation errors: d_max sigma_v^2 and d sigma_f^2.
  double delta_u_sq(int max_block_dim) const { return max_block_dim * sigma_v * sigma_v; }
  double delta_f_sq(int incentive_dim) const { return incentive_dim * sigma_f * sigma_f; }
  void validate() const;
};

/// clean + N(0, sigma^2 I). sigma = 0 returns clean without touching the generator.
Vector make_noisy(double sigma, std::mt19937_64& rng, const Vector& clean);

struct RunState {
  long long k = 0;
  IncentiveParams theta;
  StrategyProfile x;  // the mixed profile for the simplex algorithm
  StrategyProfile x_unmixed;  // the mirror-step output before mixing (equal to x otherwise)
  std::optional<double> nu;   // mixing weight that produced x, if any
  std::mt19937_64 rng;
};

struct TraceRow {
  long long k = 0;
  IncentiveParams theta;
  std::optional<double> eps_theta;
  std::optional<double> eps_x;
  double vi_residual = 0.0;
  std::int64_t wall_time_ns = 0;
};

struct RunTrace {
  std::vector<TraceRow> rows;
  bool completed = true;
  std::string failure;
  long long iterations = 0;
  IncentiveParams final_theta;
  StrategyProfile final_x;
  int singularity_events = 0;
  /// Smallest coordinate of any iterate x_k, k >= 1 (simplex runs; +inf otherwise).
  double min_coordinate = 0.0;
  /// Iterates k >= 1 with some coordinate below nu_{k-1} / d^i.
  long long mixing_floor_violations = 0;
  double delta_u_sq = 0.0;
  double delta_f_sq = 0.0;
};

/// Reference data for the gap columns: the optimal incentive and the lower-level solver settings.
struct GapReference {
  IncentiveParams theta_star;
  EquilibriumOptions options;
};

struct RunConfig {
  long long iterations = 10000;
  /// A trace row is recorded at k = 0, every gap_every iterations and at k = K.
  long long gap_every = 100;
  bool record_wall_time = false;
  double active_tol = kDefaultActiveTol;
  /// Optional hook called on every iterate; used by tests to inspect the raw sequence.
  std::function<void(const RunState&)> observer;
};

/**
 * Single-loop incentive design on an unconstrained game: per iteration one noisy mirror
 * step of the agents, then one projected step of the designer along the extended gradient
 * evaluated at the updated profile.
 */
RunTrace run_algorithm1(const GameOracle& game, const DesignerObjective& objective,
                        const BregmanGeometry& geom, const IncentiveSpace& incentives,
                        const ScheduleParams& schedule, const NoiseModel& noise,
                        const IncentiveParams& theta0, const StrategyProfile& x0,
                        const RunConfig& config,
                        const std::optional<GapReference>& reference = std::nullopt);

/**
 * Simplex variant: multiplicative-weights step, then mixing with the uniform profile with
 * weight nu_k (skipped in exploratory mode without a nu exponent), then the designer step at
 * the mixed profile. x0 must be strictly positive.
 */
RunTrace run_algorithm2(const GameOracle& game, const DesignerObjective& objective,
                        const BregmanGeometry& geom, const IncentiveSpace& incentives,
                        const ScheduleParams& schedule, const NoiseModel& noise,
                        const IncentiveParams& theta0, const StrategyProfile& x0,
                        const RunConfig& config,
                        const std::optional<GapReference>& reference = std::nullopt);

}  // namespace incentive
