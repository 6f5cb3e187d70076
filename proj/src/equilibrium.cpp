#include "incentive/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace incentive {
namespace {

// Iterations without a new best residual before the step is halved.
constexpr long long kStallPatience = 2000;
// Residual ratio above which an improving step counts as slow progress.
constexpr double kSlowProgress = 0.9;

StrategyProfile admissible_start(const StrategySpace& space, const BregmanGeometry& geom,
                                 const std::optional<StrategyProfile>& warm_start) {
  if (!warm_start) return space.default_point();
  if (warm_start->size() != space.total_dim()) {
    throw StructuralError("solve_equilibrium: warm start has the wrong dimension");
  }
  StrategyProfile x = *warm_start;
  // Multiplicative weights cannot revive a coordinate that is exactly zero.
  if (geom.is_entropy() && (x.array() <= 0.0).any()) x = mix_with_uniform(space, x, 1e-10);
  return x;
}

// An underflowed weight would be stuck at zero (and outside the KL domain) from then on.
void lift_underflow(const StrategySpace& space, StrategyProfile& x) {
  constexpr double kFloor = 1e-300;
  for (int i = 0; i < space.num_blocks(); ++i) {
    auto xi = x.segment(space.offset(i), space.block_dim(i));
    if (xi.minCoeff() >= kFloor) continue;
    xi = xi.cwiseMax(kFloor);
    xi /= xi.sum();
  }
}

}  // namespace

EquilibriumSolution solve_equilibrium(const GameOracle& game, const IncentiveParams& theta,
                                      const BregmanGeometry& geom, const EquilibriumOptions& options,
                                      const std::optional<StrategyProfile>& warm_start) {
  if (!(options.tol > 0.0)) throw ParameterError("solve_equilibrium: tol must be positive");
  const StrategySpace& space = game.space();
  geom.check_compatible(space);
  const Vector& lambda = game.stability_weights();

  EquilibriumSolution sol;
  StrategyProfile x = admissible_start(space, geom, warm_start);
  Vector v = game.payoff_gradient(theta, x);
  double r = vi_residual_from_gradient(space, lambda, x, v);

  StrategyProfile best_x = x;
  Vector best_v = v;
  double best_r = r;
  long long last_improvement = 0;
  double step = options.initial_step;
  // Slow (sublinear) progress grows the step, but never past the last step that failed.
  double step_cap = options.initial_step * 1e8;
  double r_prev = r;

  long long it = 0;
  while (best_r > options.tol && it < options.max_iter) {
    ++it;
    StrategyProfile x_next = mirror_step(geom, space, x, v, lambda * step);
    if (geom.is_entropy()) lift_underflow(space, x_next);
    Vector v_next = game.payoff_gradient(theta, x_next);
    const double r_next = vi_residual_from_gradient(space, lambda, x_next, v_next);

    const bool diverged = !std::isfinite(r_next) || r_next > options.divergence_factor * best_r;
    const bool stalled = it - last_improvement > kStallPatience;
    if (diverged || stalled) {
      step *= 0.5;
      step_cap = step;
      ++sol.step_halvings;
      x = best_x;
      v = best_v;
      r_prev = best_r;
      last_improvement = it;
      if (step < 1e-300) break;
      continue;
    }
    x = std::move(x_next);
    v = std::move(v_next);
    if (r_next < r_prev && r_next > kSlowProgress * r_prev) step = std::min(step * 1.5, step_cap);
    r_prev = r_next;
    if (r_next < best_r) {
      best_r = r_next;
      best_x = x;
      best_v = v;
      last_improvement = it;
    }
  }

  sol.x_star = std::move(best_x);
  sol.residual = best_r;
  sol.iterations = it;
  sol.converged = best_r <= options.tol;
  sol.step = step;
  return sol;
}

EquilibriumMap make_equilibrium_map(std::shared_ptr<const GameOracle> game, BregmanGeometry geom,
                                    EquilibriumOptions options) {
  auto last = std::make_shared<std::optional<StrategyProfile>>();
  return [game = std::move(game), geom = std::move(geom), options,
          last](const IncentiveParams& theta) -> StrategyProfile {
    EquilibriumSolution sol = solve_equilibrium(*game, theta, geom, options, *last);
    if (!sol.converged) {
      // Retry cold in case the warm start sat in a bad region.
      sol = solve_equilibrium(*game, theta, geom, options);
    }
    if (!sol.converged) {
      throw std::runtime_error("equilibrium solver did not converge (residual " +
                               std::to_string(sol.residual) + " after " +
                               std::to_string(sol.iterations) + " iterations)");
    }
    *last = sol.x_star;
    return sol.x_star;
  };
}

DoubleLoopResult solve_double_loop(const GameOracle& game, const DesignerObjective& objective,
                                   const BregmanGeometry& geom, const IncentiveSpace& incentives,
                                   const IncentiveParams& theta0, const DoubleLoopOptions& options) {
  EquilibriumOptions inner;
  inner.tol = options.inner_tol;
  inner.max_iter = options.inner_max_iter;

  DoubleLoopResult result;
  IncentiveParams theta = project_incentives(incentives, theta0);

  auto solve_at = [&](const IncentiveParams& th,
                      const std::optional<StrategyProfile>& warm) -> std::optional<EquilibriumSolution> {
    EquilibriumSolution sol = solve_equilibrium(game, th, geom, inner, warm);
    if (!sol.converged) sol = solve_equilibrium(game, th, geom, inner);
    if (!sol.converged) return std::nullopt;
    return sol;
  };

  std::optional<EquilibriumSolution> eq = solve_at(theta, std::nullopt);
  if (!eq) {
    result.completed = false;
    result.failure = "inner equilibrium solve did not converge at the initial incentive";
    result.theta_star = theta;
    return result;
  }
  double f = objective.value(theta, eq->x_star);
  double t = options.outer_step;

  for (int it = 0; it < options.outer_iters; ++it) {
    const Vector g = extended_gradient(game, objective, theta, eq->x_star, options.active_tol).grad_theta;

    DoubleLoopStep rec;
    rec.iteration = it;
    rec.theta = theta;
    rec.f_value = f;
    rec.grad_norm = g.norm();
    rec.inner_iterations = eq->iterations;
    rec.inner_residual = eq->residual;

    bool accepted = false;
    bool stationary = false;
    IncentiveParams theta_next;
    std::optional<EquilibriumSolution> eq_next;
    double f_next = f;
    for (int ls = 0; ls < 60; ++ls) {
      theta_next = project_incentives(incentives, theta - t * g);
      const Vector delta = theta_next - theta;
      if (delta.norm() <= options.stationarity_tol) {
        stationary = true;
        break;
      }
      eq_next = solve_at(theta_next, eq->x_star);
      if (!eq_next) {
        result.completed = false;
        result.failure = "inner equilibrium solve did not converge at outer iteration " +
                         std::to_string(it);
        break;
      }
      f_next = objective.value(theta_next, eq_next->x_star);
      const double model = f + g.dot(delta) + delta.squaredNorm() / (2.0 * t);
      const double slack = 16.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(f));
      if (f_next <= model + slack) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    rec.step = t;
    result.trace.push_back(rec);
    if (!result.completed || stationary || !accepted) break;

    theta = theta_next;
    eq = std::move(eq_next);
    f = f_next;
    t = std::min(2.0 * t, options.outer_step);
  }

  result.theta_star = theta;
  result.f_star = f;
  result.x_star = eq->x_star;
  return result;
}

GapMetrics gap_metrics(const EquilibriumSolution& eq, const IncentiveParams& theta_star_ref,
                       const IncentiveParams& theta_k, const StrategyProfile& x_k,
                       const BregmanGeometry& geom, const StrategySpace& space,
                       std::optional<double> nu) {
  if (theta_star_ref.size() != theta_k.size()) {
    throw StructuralError("gap_metrics: incentive dimension mismatch");
  }
  GapMetrics m;
  m.eps_theta = (theta_k - theta_star_ref).squaredNorm();
  const StrategyProfile reference = nu ? mix_with_uniform(space, eq.x_star, *nu) : eq.x_star;
  m.eps_x = divergence(geom, space, reference, x_k);
  return m;
}

}  // namespace incentive
