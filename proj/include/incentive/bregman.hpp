#pragma once

#include <vector>

#include "incentive/game_core.hpp"

namespace incentive {

/**
 * Mirror-map geometry of the agents' dynamics.
 *
 * Mahalanobis: psi^i(x) = 1/2 x^T Q^i x with Q^i symmetric positive definite and
 * lambda_min(Q^i) >= 1, so psi^i is 1-strongly convex. Pairs with FullSpace.
 *
 * Entropy: psi^i is the negative Shannon entropy, D is the KL divergence. Pairs with Simplex.
 */
class BregmanGeometry {
 public:
  enum class Kind { kMahalanobis, kEntropy };

  static BregmanGeometry mahalanobis(std::vector<Matrix> q_blocks);
  /// Q^i = I for every block of the given space.
  static BregmanGeometry euclidean(const StrategySpace& space);
  static BregmanGeometry entropy();

  Kind kind() const { return kind_; }
  bool is_entropy() const { return kind_ == Kind::kEntropy; }
  const std::vector<Matrix>& q_blocks() const { return q_; }
  /// Largest singular value over the Q^i; 0 for the entropy geometry (unused there).
  double smoothness_h_psi() const { return h_psi_; }

  /// Throws StructuralError if the geometry does not pair with the space.
  void check_compatible(const StrategySpace& space) const;

  /// Solves Q^i y = b for block i (Mahalanobis only).
  Vector solve_block(int i, const Vector& b) const;

 private:
  BregmanGeometry(Kind kind, std::vector<Matrix> q);

  Kind kind_;
  std::vector<Matrix> q_;
  std::vector<Eigen::LLT<Matrix>> q_factors_;
  double h_psi_ = 0.0;
};

/// Divergence of a single block: 1/2 (a-b)^T Q (a-b) or KL(a || b).
double block_divergence(const BregmanGeometry& geom, int block, const Vector& a, const Vector& b);

/// Aggregate divergence sum_i D_{psi^i}(a^i, b^i).
double divergence(const BregmanGeometry& geom, const StrategySpace& space, const StrategyProfile& a,
                  const StrategyProfile& b);

/**
 * Per-block prox step argmax_{x'} { <v_hat^i, x'^i> - 1/beta^i D(x'^i, x^i) }.
 * Mahalanobis: x^i + beta^i (Q^i)^{-1} v_hat^i. Entropy: multiplicative weights
 * x_j exp(beta^i v_hat_j) / Z, evaluated with max-subtraction.
 */
StrategyProfile mirror_step(const BregmanGeometry& geom, const StrategySpace& space,
                            const StrategyProfile& x, const Vector& v_hat, const Vector& beta);

/// (1 - nu) x^i + nu 1/d^i in every block; nu must lie in (0, 1).
StrategyProfile mix_with_uniform(const StrategySpace& space, const StrategyProfile& x, double nu);

}  // namespace incentive
