#include "incentive/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "incentive/sensitivity.hpp"

namespace incentive {
namespace {

double max_symmetric_eigenvalue(const Matrix& s) {
  if (s.rows() == 0) return -std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().maxCoeff();
}

void absorb(StabilityReport& report, double max_eig, const StrategyProfile& x) {
  ++report.samples;
  const double margin = report.threshold - max_eig;
  if (!(margin > 0.0)) ++report.violations;
  if (report.samples == 1 || max_eig > report.max_eigenvalue) {
    report.max_eigenvalue = max_eig;
    report.worst_margin = margin;
    report.worst_point = x;
  }
}

// Dual norm of the norm psi is 1-strongly convex in: l2 for Mahalanobis, l_inf for entropy.
double dual_norm_sq(const BregmanGeometry& geom, const Vector& g) {
  if (geom.is_entropy()) {
    const double m = g.cwiseAbs().maxCoeff();
    return m * m;
  }
  return g.squaredNorm();
}

double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

}  // namespace

Matrix weighted_jacobian(const GameOracle& game, const IncentiveParams& theta,
                         const StrategyProfile& x) {
  const StrategySpace& space = game.space();
  const Vector& lambda = game.stability_weights();
  Matrix h = game.jacobian_x(theta, x);
  for (int i = 0; i < space.num_blocks(); ++i) {
    h.middleRows(space.offset(i), space.block_dim(i)) *= lambda[i];
  }
  return h;
}

StabilityReport check_stability_unconstrained(const GameOracle& game, const IncentiveParams& theta,
                                              const std::vector<StrategyProfile>& samples,
                                              double h_psi) {
  StabilityReport report;
  report.threshold = -2.0 * h_psi;
  for (const auto& x : samples) {
    const Matrix h = weighted_jacobian(game, theta, x);
    absorb(report, max_symmetric_eigenvalue(h + h.transpose()), x);
  }
  report.holds = report.samples > 0 && report.violations == 0;
  return report;
}

Matrix simplex_tangent_basis(const StrategySpace& space) {
  const int n = space.total_dim();
  Matrix z = Matrix::Zero(n, n - space.num_blocks());
  int col = 0;
  for (int i = 0; i < space.num_blocks(); ++i) {
    const int d = space.block_dim(i);
    if (d < 2) continue;
    Eigen::HouseholderQR<Matrix> qr(Matrix::Ones(d, 1));
    const Matrix q = qr.householderQ();
    z.block(space.offset(i), col, d, d - 1) = q.rightCols(d - 1);
    col += d - 1;
  }
  return z;
}

StabilityReport check_stability_simplex(const GameOracle& game, const IncentiveParams& theta,
                                        const std::vector<StrategyProfile>& samples) {
  const StrategySpace& space = game.space();
  if (!space.is_simplex()) throw StructuralError("check_stability_simplex: game is not on simplices");
  const Matrix z = simplex_tangent_basis(space);
  StabilityReport report;
  report.threshold = 0.0;
  for (const auto& x : samples) {
    if ((x.array() <= 0.0).any()) {
      throw DomainError("check_stability_simplex: sample has a non-positive coordinate");
    }
    Matrix h = weighted_jacobian(game, theta, x);
    h.diagonal() += x.cwiseInverse();
    absorb(report, max_symmetric_eigenvalue(z.transpose() * (h + h.transpose()) * z), x);
  }
  report.holds = report.samples > 0 && report.violations == 0;
  return report;
}

double variational_stability_margin(const GameOracle& game, const BregmanGeometry& geom,
                                    const IncentiveParams& theta, const StrategyProfile& x_star,
                                    const StrategyProfile& x) {
  const StrategySpace& space = game.space();
  const Vector wv = weight_blocks(space, game.stability_weights(), game.payoff_gradient(theta, x));
  return wv.dot(x_star - x) - divergence(geom, space, x_star, x);
}

ProfileSampler box_sampler(Vector lower, Vector upper) {
  if (lower.size() != upper.size() || ((upper - lower).array() < 0.0).any()) {
    throw StructuralError("box_sampler: bounds must have equal size and lower <= upper");
  }
  return [lower = std::move(lower), upper = std::move(upper)](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    StrategyProfile x(lower.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) x[j] = lower[j] + u(rng) * (upper[j] - lower[j]);
    return x;
  };
}

ProfileSampler dirichlet_sampler(const StrategySpace& space, double nu_min) {
  if (!space.is_simplex()) throw StructuralError("dirichlet_sampler: space is not a product of simplices");
  for (int d : space.block_dims()) {
    if (!(nu_min >= 0.0) || d * nu_min >= 1.0) {
      throw ParameterError("dirichlet_sampler: need 0 <= nu_min < 1 / d^i");
    }
  }
  return [space, nu_min](std::mt19937_64& rng) {
    std::exponential_distribution<double> e(1.0);
    StrategyProfile x(space.total_dim());
    for (int i = 0; i < space.num_blocks(); ++i) {
      const int off = space.offset(i);
      const int d = space.block_dim(i);
      for (int j = 0; j < d; ++j) x[off + j] = e(rng);
      auto block = x.segment(off, d);
      block /= block.sum();
      block = ((1.0 - d * nu_min) * block.array() + nu_min).matrix();
    }
    return x;
  };
}

std::vector<StrategyProfile> draw_samples(const ProfileSampler& sampler, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<StrategyProfile> out;
  out.reserve(static_cast<size_t>(std::max(n, 0)));
  for (int s = 0; s < n; ++s) out.push_back(sampler(rng));
  return out;
}

std::vector<IncentiveParams> incentive_grid(const IncentiveSpace& incentives, int per_axis) {
  if (per_axis < 1) throw ParameterError("incentive_grid: need at least one point per axis");
  const int d = incentives.dim();
  long long total = 1;
  for (int j = 0; j < d; ++j) {
    total *= per_axis;
    if (total > 4096) throw ParameterError("incentive_grid: grid would exceed 4096 points");
  }
  std::vector<IncentiveParams> grid;
  std::vector<int> idx(static_cast<size_t>(d), 0);
  for (long long g = 0; g < total; ++g) {
    IncentiveParams theta(d);
    for (int j = 0; j < d; ++j) {
      const double t = per_axis == 1 ? 0.5 : static_cast<double>(idx[static_cast<size_t>(j)]) / (per_axis - 1);
      theta[j] = incentives.lower()[j] + t * (incentives.upper()[j] - incentives.lower()[j]);
    }
    grid.push_back(theta);
    for (int j = 0; j < d; ++j) {
      if (++idx[static_cast<size_t>(j)] < per_axis) break;
      idx[static_cast<size_t>(j)] = 0;
    }
  }
  return grid;
}

ConstantsReport estimate_constants(const GameOracle& game, const DesignerObjective& objective,
                                   const BregmanGeometry& geom,
                                   const std::vector<IncentiveParams>& theta_grid,
                                   const ProfileSampler& sampler, const ConstantsOptions& options) {
  if (options.n_samples < 2) throw ParameterError("estimate_constants: need n_samples >= 2");
  if (theta_grid.empty()) throw ParameterError("estimate_constants: empty incentive grid");
  const StrategySpace& space = game.space();
  geom.check_compatible(space);
  const Vector& lambda = game.stability_weights();

  ConstantsReport r;
  r.num_players = space.num_blocks();
  r.strategy_dim = space.total_dim();
  r.lambda_norm = lambda.norm();
  r.H_psi = geom.smoothness_h_psi();
  r.theta_points = static_cast<int>(theta_grid.size());

  const Matrix tangent = space.is_simplex() ? simplex_tangent_basis(space) : Matrix();
  double hu_sq = 0.0;
  double ht_sq = 0.0;
  double rho_x = std::numeric_limits<double>::infinity();

  std::mt19937_64 rng(options.seed);
  for (int s = 0; s < options.n_samples; ++s) {
    const IncentiveParams& theta = theta_grid[static_cast<size_t>(s) % theta_grid.size()];
    const StrategyProfile x = sampler(rng);
    const StrategyProfile y = sampler(rng);
    ++r.samples;

    const double d_xy = divergence(geom, space, x, y);
    const Vector vx = game.payoff_gradient(theta, x);
    const Vector vy = game.payoff_gradient(theta, y);
    if (d_xy > 0.0) {
      for (int i = 0; i < space.num_blocks(); ++i) {
        const Vector dv = vx.segment(space.offset(i), space.block_dim(i)) -
                          vy.segment(space.offset(i), space.block_dim(i));
        hu_sq = std::max(hu_sq, dual_norm_sq(geom, dv) / d_xy);
      }
    }

    r.rho_theta = std::max(r.rho_theta, spectral_norm(game.jacobian_theta(theta, x)));

    Matrix jx = game.jacobian_x(theta, x);
    if (space.is_simplex()) jx = tangent.transpose() * jx * tangent;
    double smin = 0.0;
    double smax = 0.0;
    if (jx.size() > 0) {
      Eigen::JacobiSVD<Matrix> svd(jx);
      smax = svd.singularValues()(0);
      smin = svd.singularValues()(svd.singularValues().size() - 1);
    }
    if (!(smin > 1e-12 * std::max(1.0, smax))) {
      ++r.skipped_singular;
      continue;
    }
    rho_x = std::min(rho_x, smin);

    try {
      const Vector gx = extended_gradient(game, objective, theta, x, options.active_tol).grad_theta;
      const Vector gy = extended_gradient(game, objective, theta, y, options.active_tol).grad_theta;
      if (d_xy > 0.0) ht_sq = std::max(ht_sq, (gx - gy).squaredNorm() / d_xy);
    } catch (const SingularityError&) {
      ++r.skipped_singular;
    }
  }
  r.H_u = std::sqrt(hu_sq);
  r.H_tilde = std::sqrt(ht_sq);
  r.rho_x = std::isfinite(rho_x) ? rho_x : 0.0;
  if (r.rho_x > 0.0) {
    r.H_star = r.rho_theta / r.rho_x;
    r.H_tilde_star = (1.0 + space.total_dim()) * r.rho_theta / r.rho_x;
  }

  // Quantities of f_*(theta) = f(theta, x_*(theta)) on the grid.
  struct GridPoint {
    IncentiveParams theta;
    double f;
    Vector grad;
  };
  std::vector<GridPoint> points;
  std::optional<StrategyProfile> warm;
  for (const auto& theta : theta_grid) {
    EquilibriumSolution eq = solve_equilibrium(game, theta, geom, options.equilibrium, warm);
    if (!eq.converged) eq = solve_equilibrium(game, theta, geom, options.equilibrium);
    if (!eq.converged) continue;
    warm = eq.x_star;
    try {
      Vector g = extended_gradient(game, objective, theta, eq.x_star, options.active_tol).grad_theta;
      r.M_hat = std::max(r.M_hat, g.norm());
      r.V_star_hat = std::max(r.V_star_hat, game.payoff_gradient(theta, eq.x_star).cwiseAbs().maxCoeff());
      points.push_back({theta, objective.value(theta, eq.x_star), std::move(g)});
    } catch (const SingularityError&) {
      ++r.skipped_singular;
    }
  }
  double mu = std::numeric_limits<double>::infinity();
  for (const auto& a : points) {
    for (const auto& b : points) {
      const Vector delta = a.theta - b.theta;
      const double dist_sq = delta.squaredNorm();
      if (dist_sq <= 0.0) continue;
      mu = std::min(mu, (a.f - b.f - b.grad.dot(delta)) / dist_sq);
    }
  }
  r.mu_hat = std::isfinite(mu) ? std::max(mu, 0.0) : 0.0;
  return r;
}

}  // namespace incentive
