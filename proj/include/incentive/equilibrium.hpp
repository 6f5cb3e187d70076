#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "incentive/bregman.hpp"
#include "incentive/game_core.hpp"
#include "incentive/sensitivity.hpp"

namespace incentive {

struct EquilibriumSolution {
  StrategyProfile x_star;
  double residual = 0.0;
  long long iterations = 0;
  bool converged = false;
  /// Step size in use when the solver stopped.
  double step = 0.0;
  int step_halvings = 0;
};

struct EquilibriumOptions {
  double tol = 1e-12;
  long long max_iter = 200000;
  double initial_step = 1.0;
  /// A residual this many times larger than the best seen so far counts as divergence.
  double divergence_factor = 1e3;
};

/**
 * Lower-level solver: mirror descent in the game's own geometry with step
 * beta^i = lambda^i beta. beta is halved (and the run restarted from the best iterate)
 * whenever the VI residual diverges or stalls, and grown by 1.5x while progress is
 * sublinear, capped at the last step that failed. Deterministic; never throws on
 * non-convergence.
 */
EquilibriumSolution solve_equilibrium(const GameOracle& game, const IncentiveParams& theta,
                                      const BregmanGeometry& geom, const EquilibriumOptions& options,
                                      const std::optional<StrategyProfile>& warm_start = std::nullopt);

/// Equilibrium map theta -> x_*(theta) that warm-starts from the previous answer and
/// throws std::runtime_error on non-convergence. Not thread-safe (it caches the last answer).
EquilibriumMap make_equilibrium_map(std::shared_ptr<const GameOracle> game, BregmanGeometry geom,
                                    EquilibriumOptions options);

struct DoubleLoopOptions {
  int outer_iters = 500;
  double inner_tol = 1e-12;
  long long inner_max_iter = 200000;
  double outer_step = 1.0;
  /// Stop once the projected step moves theta by less than this.
  double stationarity_tol = 1e-12;
  double active_tol = kDefaultActiveTol;
};

struct DoubleLoopStep {
  int iteration = 0;
  IncentiveParams theta;
  double f_value = 0.0;
  double grad_norm = 0.0;
  double step = 0.0;
  long long inner_iterations = 0;
  double inner_residual = 0.0;
};

struct DoubleLoopResult {
  IncentiveParams theta_star;
  double f_star = 0.0;
  StrategyProfile x_star;
  std::vector<DoubleLoopStep> trace;
  bool completed = true;
  std::string failure;
};

/**
 * Double-loop baseline: re-solve the equilibrium to inner_tol, take an exact extended
 * gradient at (theta, x_*(theta)) and a projected gradient step with backtracking on
 * f_*(theta) = f(theta, x_*(theta)). Inner non-convergence aborts with a partial trace.
 */
DoubleLoopResult solve_double_loop(const GameOracle& game, const DesignerObjective& objective,
                                   const BregmanGeometry& geom, const IncentiveSpace& incentives,
                                   const IncentiveParams& theta0, const DoubleLoopOptions& options);

struct GapMetrics {
  double eps_theta = 0.0;
  double eps_x = 0.0;
};

/**
 * eps_theta = ||theta_k - theta_*||^2 and eps_x = D(x_*(theta), x_k). With nu supplied the
 * reference equilibrium is first mixed with the uniform profile: (1 - nu) x_* + nu / d^i.
 */
GapMetrics gap_metrics(const EquilibriumSolution& eq, const IncentiveParams& theta_star_ref,
                       const IncentiveParams& theta_k, const StrategyProfile& x_k,
                       const BregmanGeometry& geom, const StrategySpace& space,
                       std::optional<double> nu = std::nullopt);

}  // namespace incentive
