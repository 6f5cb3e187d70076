#pragma once

namespace incentive {

/**
 * Sampled estimates of the constants in the convergence conditions. Every entry is a
 * Monte-Carlo lower bound of a supremum (or upper bound of an infimum for rho_x and mu),
 * so "satisfied" downstream means "not falsified on the sample".
 */
struct ConstantsReport {
  int num_players = 1;
  int strategy_dim = 1;  // sum d^i
  double lambda_norm = 1.0;

  double H_u = 0.0;        // Lipschitz constant of v w.r.t. the aggregate divergence
  double rho_theta = 0.0;  // max ||d v / d theta||_2
  double rho_x = 0.0;      // min singular value of d v / d x (tangent space on simplices)
  double H_star = 0.0;     // rho_theta / rho_x
  double H_tilde_star = 0.0;  // (1 + sum d^i) rho_theta / rho_x
  double H_tilde = 0.0;    // Lipschitz constant of the extended gradient w.r.t. the divergence
  double H_psi = 0.0;      // smoothness of the potential (Mahalanobis only)
  double mu_hat = 0.0;     // sampled strong-convexity modulus of f_*
  double M_hat = 0.0;      // max sampled ||grad f_*||_2
  double V_star_hat = 0.0; // max sampled ||v_theta(x_*(theta))||_inf

  int samples = 0;
  int skipped_singular = 0;
  int theta_points = 0;

  bool operator==(const ConstantsReport&) const = default;
};

}  // namespace incentive
