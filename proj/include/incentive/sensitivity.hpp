#pragma once

#include <functional>
#include <optional>

#include "incentive/game_core.hpp"

namespace incentive {

/// Conditioning of every linear solve performed while assembling an extended gradient.
struct GradientDiagnostics {
  /// Condition estimate (1 / rcond) of d v / d x; +inf when it is numerically singular.
  double condition_jacobian_x = 0.0;
  /// Condition estimate of A L A^T (simplex, inverse route) or of the bordered KKT matrix.
  std::optional<double> condition_constraint_system;
  /// True when the bordered KKT system was used because d v / d x is singular.
  bool used_bordered_system = false;
};

/// Estimate of grad f_*(theta) assembled at a (possibly non-equilibrium) profile.
struct ExtendedGradient {
  Vector grad_theta;
  GradientDiagnostics diagnostics;
};

/**
 * Pieces of the equilibrium-map Jacobian on products of simplices:
 * J = L - L A^T [A L A^T]^{-1} A L with L = [d v / d x]^{-1}, so that
 * d x_* / d theta = -J d v / d theta.
 *
 * When d v / d x is singular but the bordered matrix [[dv/dx, A^T], [A, 0]] is not,
 * J is taken as the leading block of the bordered inverse (equal to the formula above
 * whenever L exists) and L is left empty.
 */
struct SimplexJacobianPieces {
  std::optional<Matrix> L;
  Matrix A;
  Matrix J;
  GradientDiagnostics diagnostics;
};

/// Threshold above which d v / d x is treated as singular.
inline constexpr double kMaxCondition = 1e12;
/// Coordinates at or below this value are treated as active nonnegativity constraints.
inline constexpr double kDefaultActiveTol = 1e-9;

/// grad_theta f - [dv/dtheta]^T [dv/dx]^{-T} grad_x f, through one transposed LU solve.
ExtendedGradient extended_gradient_unconstrained(const GameOracle& game,
                                                 const DesignerObjective& objective,
                                                 const IncentiveParams& theta,
                                                 const StrategyProfile& x);

/// Constraint matrix: identity rows of active coordinates, then the per-block all-ones rows.
Matrix simplex_constraint_matrix(const StrategySpace& space, const StrategyProfile& x,
                                 double active_tol);

SimplexJacobianPieces simplex_jacobian_pieces(const GameOracle& game, const IncentiveParams& theta,
                                              const StrategyProfile& x,
                                              double active_tol = kDefaultActiveTol);

/// grad_theta f - [dv/dtheta]^T J^T grad_x f with J from simplex_jacobian_pieces.
ExtendedGradient extended_gradient_simplex(const GameOracle& game, const DesignerObjective& objective,
                                           const IncentiveParams& theta, const StrategyProfile& x,
                                           double active_tol = kDefaultActiveTol);

/// Dispatches on the kind of the game's strategy space.
ExtendedGradient extended_gradient(const GameOracle& game, const DesignerObjective& objective,
                                   const IncentiveParams& theta, const StrategyProfile& x,
                                   double active_tol = kDefaultActiveTol);

/// Maps theta to the (unique) equilibrium x_*(theta); throws if it cannot be computed.
using EquilibriumMap = std::function<StrategyProfile(const IncentiveParams&)>;

/// Central differences of theta -> f(theta, x_*(theta)); validation oracle only.
Vector finite_difference_gradient(const DesignerObjective& objective, const IncentiveParams& theta,
                                  const EquilibriumMap& equilibrium, double h);

/// Central-difference Jacobian of theta -> x_*(theta), shape (sum d^i) x d.
Matrix finite_difference_equilibrium_jacobian(const IncentiveParams& theta,
                                              const EquilibriumMap& equilibrium, double h);

}  // namespace incentive
