#include "incentive/sensitivity.hpp"

#include <cmath>
#include <limits>

namespace incentive {
namespace {

double condition_of(const Eigen::PartialPivLU<Matrix>& lu) {
  // The rcond estimator is unreliable once a pivot vanishes, so check the pivots first.
  const Vector pivots = lu.matrixLU().diagonal().cwiseAbs();
  if (pivots.size() > 0 && !(pivots.minCoeff() > pivots.maxCoeff() / kMaxCondition)) {
    return std::numeric_limits<double>::infinity();
  }
  const double rcond = lu.rcond();
  return rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
}

void check_shapes(const GameOracle& game, const IncentiveParams& theta, const StrategyProfile& x) {
  if (x.size() != game.space().total_dim()) {
    throw StructuralError("extended gradient: profile length does not match the game");
  }
  if (theta.size() != game.incentive_dim()) {
    throw StructuralError("extended gradient: incentive dimension does not match the game");
  }
}

// Bordered system [[M, A^T], [A, 0]]; its leading block inverse is J.
Matrix bordered_matrix(const Matrix& m, const Matrix& a) {
  const Eigen::Index n = m.rows();
  const Eigen::Index r = a.rows();
  Matrix k = Matrix::Zero(n + r, n + r);
  k.topLeftCorner(n, n) = m;
  k.topRightCorner(n, r) = a.transpose();
  k.bottomLeftCorner(r, n) = a;
  return k;
}

}  // namespace

ExtendedGradient extended_gradient_unconstrained(const GameOracle& game,
                                                 const DesignerObjective& objective,
                                                 const IncentiveParams& theta,
                                                 const StrategyProfile& x) {
  check_shapes(game, theta, x);
  ExtendedGradient out;
  out.grad_theta = objective.grad_theta(theta, x);
  const Vector gx = objective.grad_x(theta, x);
  if (gx.isZero(0.0)) {
    out.diagnostics.condition_jacobian_x = 0.0;
    return out;
  }

  const Matrix m = game.jacobian_x(theta, x);
  const Eigen::PartialPivLU<Matrix> lu(m);
  const double cond = condition_of(lu);
  out.diagnostics.condition_jacobian_x = cond;
  if (!(cond < kMaxCondition)) {
    throw SingularityError("extended_gradient_unconstrained: d v / d x is singular", cond);
  }
  // [dv/dx]^T y = grad_x f
  const Vector y = lu.transpose().solve(gx);
  out.grad_theta -= game.jacobian_theta(theta, x).transpose() * y;
  return out;
}

Matrix simplex_constraint_matrix(const StrategySpace& space, const StrategyProfile& x,
                                 double active_tol) {
  if (!space.is_simplex()) throw StructuralError("constraint matrix requires a simplex space");
  if (x.size() != space.total_dim()) throw StructuralError("constraint matrix: dimension mismatch");
  std::vector<Eigen::Index> active;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    if (x[j] <= active_tol) active.push_back(j);
  }
  const auto rows = static_cast<Eigen::Index>(active.size()) + space.num_blocks();
  Matrix a = Matrix::Zero(rows, space.total_dim());
  Eigen::Index r = 0;
  for (Eigen::Index j : active) a(r++, j) = 1.0;
  for (int i = 0; i < space.num_blocks(); ++i) {
    a.block(r++, space.offset(i), 1, space.block_dim(i)).setOnes();
  }
  return a;
}

SimplexJacobianPieces simplex_jacobian_pieces(const GameOracle& game, const IncentiveParams& theta,
                                              const StrategyProfile& x, double active_tol) {
  check_shapes(game, theta, x);
  const StrategySpace& space = game.space();
  SimplexJacobianPieces pieces;
  pieces.A = simplex_constraint_matrix(space, x, active_tol);

  const Eigen::ColPivHouseholderQR<Matrix> qr_a(pieces.A);
  if (qr_a.rank() < pieces.A.rows()) {
    throw StructuralError("simplex_jacobian_pieces: constraint matrix is rank deficient (rank " +
                          std::to_string(qr_a.rank()) + " of " + std::to_string(pieces.A.rows()) +
                          " rows); every coordinate of some block is active");
  }

  const Matrix m = game.jacobian_x(theta, x);
  const Eigen::Index n = m.rows();
  const Eigen::PartialPivLU<Matrix> lu(m);
  const double cond = condition_of(lu);
  pieces.diagnostics.condition_jacobian_x = cond;

  if (cond < kMaxCondition) {
    Matrix l = lu.solve(Matrix::Identity(n, n));
    const Matrix la_t = l * pieces.A.transpose();
    const Matrix ala_t = pieces.A * la_t;
    const Eigen::PartialPivLU<Matrix> lu_s(ala_t);
    const double cond_s = condition_of(lu_s);
    pieces.diagnostics.condition_constraint_system = cond_s;
    if (!(cond_s < kMaxCondition)) {
      throw SingularityError("simplex_jacobian_pieces: A L A^T is singular", cond_s);
    }
    pieces.J = l - la_t * lu_s.solve(pieces.A * l);
    pieces.L = std::move(l);
    return pieces;
  }

  // d v / d x is singular (e.g. a constant-latency edge): use the bordered system.
  const Matrix k = bordered_matrix(m, pieces.A);
  const Eigen::PartialPivLU<Matrix> lu_k(k);
  const double cond_k = condition_of(lu_k);
  pieces.diagnostics.condition_constraint_system = cond_k;
  pieces.diagnostics.used_bordered_system = true;
  if (!(cond_k < kMaxCondition)) {
    throw SingularityError(
        "simplex_jacobian_pieces: d v / d x is singular and so is its constrained restriction",
        cond_k);
  }
  Matrix rhs = Matrix::Zero(k.rows(), n);
  rhs.topRows(n).setIdentity();
  pieces.J = lu_k.solve(rhs).topRows(n);
  return pieces;
}

ExtendedGradient extended_gradient_simplex(const GameOracle& game, const DesignerObjective& objective,
                                           const IncentiveParams& theta, const StrategyProfile& x,
                                           double active_tol) {
  check_shapes(game, theta, x);
  ExtendedGradient out;
  out.grad_theta = objective.grad_theta(theta, x);
  const Vector gx = objective.grad_x(theta, x);
  if (gx.isZero(0.0)) return out;

  SimplexJacobianPieces pieces = simplex_jacobian_pieces(game, theta, x, active_tol);
  out.diagnostics = pieces.diagnostics;
  out.grad_theta -= game.jacobian_theta(theta, x).transpose() * (pieces.J.transpose() * gx);
  return out;
}

ExtendedGradient extended_gradient(const GameOracle& game, const DesignerObjective& objective,
                                   const IncentiveParams& theta, const StrategyProfile& x,
                                   double active_tol) {
  if (game.space().is_simplex()) {
    return extended_gradient_simplex(game, objective, theta, x, active_tol);
  }
  return extended_gradient_unconstrained(game, objective, theta, x);
}

Vector finite_difference_gradient(const DesignerObjective& objective, const IncentiveParams& theta,
                                  const EquilibriumMap& equilibrium, double h) {
  if (!(h > 0.0)) throw ParameterError("finite_difference_gradient: h must be positive");
  Vector grad(theta.size());
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    IncentiveParams plus = theta;
    IncentiveParams minus = theta;
    plus[j] += h;
    minus[j] -= h;
    const double f_plus = objective.value(plus, equilibrium(plus));
    const double f_minus = objective.value(minus, equilibrium(minus));
    grad[j] = (f_plus - f_minus) / (2.0 * h);
  }
  return grad;
}

Matrix finite_difference_equilibrium_jacobian(const IncentiveParams& theta,
                                              const EquilibriumMap& equilibrium, double h) {
  if (!(h > 0.0)) throw ParameterError("finite_difference_equilibrium_jacobian: h must be positive");
  const StrategyProfile x0 = equilibrium(theta);
  Matrix jac(x0.size(), theta.size());
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    IncentiveParams plus = theta;
    IncentiveParams minus = theta;
    plus[j] += h;
    minus[j] -= h;
    jac.col(j) = (equilibrium(plus) - equilibrium(minus)) / (2.0 * h);
  }
  return jac;
}

}  // namespace incentive
