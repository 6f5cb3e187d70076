#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "incentive/bregman.hpp"
#include "incentive/constants_report.hpp"
#include "incentive/equilibrium.hpp"
#include "incentive/game_core.hpp"

namespace incentive {

/**
 * Outcome of a sampled definiteness check. "holds" means the condition was not falsified
 * on any sample; margin = threshold - max_eigenvalue, so positive margins are good.
 */
struct StabilityReport {
  bool holds = false;
  double max_eigenvalue = 0.0;
  double threshold = 0.0;
  double worst_margin = 0.0;
  int samples = 0;
  int violations = 0;
  StrategyProfile worst_point;
};

/// H^lambda(x) with blocks lambda^i d v^i / d x^j.
Matrix weighted_jacobian(const GameOracle& game, const IncentiveParams& theta,
                         const StrategyProfile& x);

/// Condition: lambda_max(H + H^T) < -2 H_psi at every sample.
StabilityReport check_stability_unconstrained(const GameOracle& game, const IncentiveParams& theta,
                                              const std::vector<StrategyProfile>& samples,
                                              double h_psi);

/**
 * Condition: H~ + H~^T negative definite at every sample, where H~ has blocks
 * lambda^i d/dx^j (v^i + log(x^i) / lambda^i) = H^lambda + diag(1 / x). The quadratic form
 * is restricted to the tangent space of the product of simplices, the only directions
 * x - x' can take. Throws DomainError on a sample with a non-positive coordinate.
 */
StabilityReport check_stability_simplex(const GameOracle& game, const IncentiveParams& theta,
                                        const std::vector<StrategyProfile>& samples);

/// Orthonormal basis (columns) of {u : sum of u over every block is 0}.
Matrix simplex_tangent_basis(const StrategySpace& space);

/**
 * sum_i lambda^i <v^i(x), x_*^i - x^i> - D(x_*, x): nonnegative exactly when the
 * variational-stability inequality holds at x.
 */
double variational_stability_margin(const GameOracle& game, const BregmanGeometry& geom,
                                    const IncentiveParams& theta, const StrategyProfile& x_star,
                                    const StrategyProfile& x);

using ProfileSampler = std::function<StrategyProfile(std::mt19937_64&)>;

/// Uniform points of the box [lower, upper] (FullSpace).
ProfileSampler box_sampler(Vector lower, Vector upper);
/**
 * Dirichlet(1, ..., 1) per block, then squeezed into the region min_j x_j >= nu_min by
 * x -> (1 - d^i nu_min) x + nu_min. nu_min = 0 samples the whole simplex.
 */
ProfileSampler dirichlet_sampler(const StrategySpace& space, double nu_min = 0.0);

std::vector<StrategyProfile> draw_samples(const ProfileSampler& sampler, int n, std::uint64_t seed);

struct ConstantsOptions {
  int n_samples = 1000;
  std::uint64_t seed = 0;
  EquilibriumOptions equilibrium;
  double active_tol = kDefaultActiveTol;
};

/**
 * Monte-Carlo estimates of the constants. Pair i uses theta_grid[i mod |grid|] and two
 * fresh profiles from the sampler; the generator is consumed in a fixed order, so a
 * larger n_samples extends the same sample and every running maximum is monotone in it.
 * Samples with a numerically singular d v / d x are skipped and counted.
 */
ConstantsReport estimate_constants(const GameOracle& game, const DesignerObjective& objective,
                                   const BregmanGeometry& geom,
                                   const std::vector<IncentiveParams>& theta_grid,
                                   const ProfileSampler& sampler, const ConstantsOptions& options);

/// Evenly spaced grid with `per_axis` points per coordinate of the incentive box (capped at 4096 points).
std::vector<IncentiveParams> incentive_grid(const IncentiveSpace& incentives, int per_axis);

}  // namespace incentive
