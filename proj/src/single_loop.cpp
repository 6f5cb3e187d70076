#include "incentive/single_loop.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "incentive/sensitivity.hpp"

namespace incentive {

void NoiseModel::validate() const {
  if (!(sigma_v >= 0.0) || !std::isfinite(sigma_v)) throw ParameterError("noise: sigma_v must be >= 0");
  if (!(sigma_f >= 0.0) || !std::isfinite(sigma_f)) throw ParameterError("noise: sigma_f must be >= 0");
}

Vector make_noisy(double sigma, std::mt19937_64& rng, const Vector& clean) {
  if (sigma == 0.0) return clean;
  std::normal_distribution<double> normal(0.0, sigma);
  Vector out = clean;
  for (Eigen::Index j = 0; j < out.size(); ++j) out[j] += normal(rng);
  return out;
}

namespace {

enum class Variant { kUnconstrained, kSimplex };

StrategyProfile mixed(const StrategySpace& space, const StrategyProfile& x, double nu) {
  // nu_0 = 1 under the certified schedule: the first mixed iterate is the uniform profile.
  if (nu >= 1.0) return space.uniform();
  return mix_with_uniform(space, x, nu);
}

class TraceRecorder {
 public:
  TraceRecorder(const GameOracle& game, const BregmanGeometry& geom,
                const std::optional<GapReference>& reference, bool record_wall_time)
      : game_(game),
        geom_(geom),
        reference_(reference),
        record_wall_time_(record_wall_time),
        start_(std::chrono::steady_clock::now()) {}

  // theta_prev and nu_prev are the incentive and mixing weight that produced x_k.
  void record(RunTrace& trace, long long k, const IncentiveParams& theta, const StrategyProfile& x,
              const std::optional<IncentiveParams>& theta_prev, std::optional<double> nu_prev) {
    TraceRow row;
    row.k = k;
    row.theta = theta;
    row.vi_residual = vi_residual(game_, theta, x);
    if (reference_) {
      row.eps_theta = (theta - reference_->theta_star).squaredNorm();
      if (theta_prev) {
        EquilibriumSolution eq =
            solve_equilibrium(game_, *theta_prev, geom_, reference_->options, warm_);
        if (!eq.converged) eq = solve_equilibrium(game_, *theta_prev, geom_, reference_->options);
        if (eq.converged) {
          warm_ = eq.x_star;
          const StrategyProfile ref =
              nu_prev ? mixed(game_.space(), eq.x_star, *nu_prev) : eq.x_star;
          row.eps_x = divergence(geom_, game_.space(), ref, x);
        }
      }
    }
    if (record_wall_time_) {
      row.wall_time_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                             std::chrono::steady_clock::now() - start_)
                             .count();
    }
    trace.rows.push_back(std::move(row));
  }

 private:
  const GameOracle& game_;
  const BregmanGeometry& geom_;
  const std::optional<GapReference>& reference_;
  bool record_wall_time_;
  std::chrono::steady_clock::time_point start_;
  std::optional<StrategyProfile> warm_;
};

RunTrace run(Variant variant, const GameOracle& game, const DesignerObjective& objective,
             const BregmanGeometry& geom, const IncentiveSpace& incentives,
             const ScheduleParams& schedule, const NoiseModel& noise,
             const IncentiveParams& theta0, const StrategyProfile& x0, const RunConfig& config,
             const std::optional<GapReference>& reference) {
  const StrategySpace& space = game.space();
  const bool simplex = variant == Variant::kSimplex;
  const char* name = simplex ? "run_algorithm2" : "run_algorithm1";
  if (space.is_simplex() != simplex) {
    throw StructuralError(std::string(name) + ": strategy space has the wrong kind");
  }
  if (geom.is_entropy() != simplex) {
    throw StructuralError(std::string(name) + ": geometry does not pair with the space");
  }
  geom.check_compatible(space);
  if (config.iterations < 1) throw ParameterError(std::string(name) + ": need K >= 1");
  if (config.gap_every < 1) throw ParameterError(std::string(name) + ": gap_every must be >= 1");
  schedule.validate();
  noise.validate();
  if (schedule.lambda.size() != space.num_blocks()) {
    throw StructuralError(std::string(name) + ": need one lambda per player");
  }
  if (!schedule.exploratory && simplex != schedule.nu_exp.has_value()) {
    throw ParameterError(std::string(name) + ": schedule profile does not match the algorithm");
  }
  if (theta0.size() != incentives.dim() || game.incentive_dim() != incentives.dim()) {
    throw StructuralError(std::string(name) + ": incentive dimension mismatch");
  }
  assert_profile(space, x0);
  if (simplex && (x0.array() <= 0.0).any()) {
    throw StructuralError("run_algorithm2: x0 must be strictly positive");
  }
  if (reference && reference->theta_star.size() != incentives.dim()) {
    throw StructuralError(std::string(name) + ": reference incentive has the wrong dimension");
  }

  RunTrace trace;
  trace.delta_u_sq = noise.delta_u_sq(space.max_block_dim());
  trace.delta_f_sq = noise.delta_f_sq(incentives.dim());
  trace.min_coordinate = simplex ? std::numeric_limits<double>::infinity()
                                 : std::numeric_limits<double>::quiet_NaN();

  RunState state;
  state.theta = project_incentives(incentives, theta0);
  state.x = x0;
  state.x_unmixed = x0;
  state.rng.seed(noise.seed);

  TraceRecorder recorder(game, geom, reference, config.record_wall_time);
  recorder.record(trace, 0, state.theta, state.x, std::nullopt, std::nullopt);
  if (config.observer) config.observer(state);

  std::optional<Vector> last_direction;
  bool retried = false;

  for (long long k = 0; k < config.iterations; ++k) {
    const StepSizes steps = step_sizes(schedule, k);

    const Vector v_hat = make_noisy(noise.sigma_v, state.rng, game.payoff_gradient(state.theta, state.x));
    StrategyProfile x_next;
    try {
      x_next = mirror_step(geom, space, state.x, v_hat, steps.beta_per_block);
    } catch (const DomainError& e) {
      trace.completed = false;
      trace.failure = "iteration " + std::to_string(k) + ": " + e.what();
      break;
    }
    std::optional<double> nu;
    StrategyProfile x_unmixed = x_next;
    if (simplex && steps.nu) {
      nu = *steps.nu;
      x_next = mixed(space, x_next, *nu);
    }
    if (simplex) {
      for (int i = 0; i < space.num_blocks(); ++i) {
        const int d = space.block_dim(i);
        const double lowest = x_next.segment(space.offset(i), d).minCoeff();
        trace.min_coordinate = std::min(trace.min_coordinate, lowest);
        if (nu && lowest < std::min(*nu, 1.0) / d) ++trace.mixing_floor_violations;
      }
    }
#ifndef NDEBUG
    assert_profile(space, x_next, 1e-9);
#endif

    Vector direction;
    try {
      const Vector g = extended_gradient(game, objective, state.theta, x_next, config.active_tol).grad_theta;
      direction = make_noisy(noise.sigma_f, state.rng, g);
      retried = false;
    } catch (const SingularityError& e) {
      ++trace.singularity_events;
      if (!last_direction || retried) {
        trace.completed = false;
        trace.failure = "iteration " + std::to_string(k) + ": " + e.what();
        break;
      }
      direction = *last_direction;
      retried = true;
    }
    last_direction = direction;

    IncentiveParams theta_prev = state.theta;
    state.theta = project_incentives(incentives, state.theta - steps.alpha * direction);
    state.x = std::move(x_next);
    state.x_unmixed = std::move(x_unmixed);
    state.nu = nu;
    state.k = k + 1;
    if (!state.theta.allFinite() || !state.x.allFinite()) {
      trace.completed = false;
      trace.failure = "iteration " + std::to_string(k) + ": iterates are no longer finite";
      break;
    }
    if (config.observer) config.observer(state);
    if (state.k % config.gap_every == 0 || state.k == config.iterations) {
      recorder.record(trace, state.k, state.theta, state.x, theta_prev, nu);
    }
  }

  trace.iterations = state.k;
  trace.final_theta = state.theta;
  trace.final_x = state.x;
  return trace;
}

}  // namespace

RunTrace run_algorithm1(const GameOracle& game, const DesignerObjective& objective,
                        const BregmanGeometry& geom, const IncentiveSpace& incentives,
                        const ScheduleParams& schedule, const NoiseModel& noise,
                        const IncentiveParams& theta0, const StrategyProfile& x0,
                        const RunConfig& config, const std::optional<GapReference>& reference) {
  return run(Variant::kUnconstrained, game, objective, geom, incentives, schedule, noise, theta0, x0,
             config, reference);
}

RunTrace run_algorithm2(const GameOracle& game, const DesignerObjective& objective,
                        const BregmanGeometry& geom, const IncentiveSpace& incentives,
                        const ScheduleParams& schedule, const NoiseModel& noise,
                        const IncentiveParams& theta0, const StrategyProfile& x0,
                        const RunConfig& config, const std::optional<GapReference>& reference) {
  return run(Variant::kSimplex, game, objective, geom, incentives, schedule, noise, theta0, x0,
             config, reference);
}

}  // namespace incentive
