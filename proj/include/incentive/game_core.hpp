#pragma once

#include <vector>

#include "incentive/types.hpp"

namespace incentive {

/// Tolerance used for simplex membership checks.
inline constexpr double kSimplexTolerance = 1e-12;

/**
 * Product strategy space X = X^1 x ... x X^n. Each block is either all of R^{d^i}
 * (FullSpace) or the probability simplex in R^{d^i} (Simplex).
 */
class StrategySpace {
 public:
  enum class Kind { kFullSpace, kSimplex };

  StrategySpace(Kind kind, std::vector<int> block_dims);

  static StrategySpace full_space(std::vector<int> block_dims) {
    return StrategySpace(Kind::kFullSpace, std::move(block_dims));
  }
  static StrategySpace simplex(std::vector<int> block_dims) {
    return StrategySpace(Kind::kSimplex, std::move(block_dims));
  }

  Kind kind() const { return kind_; }
  bool is_simplex() const { return kind_ == Kind::kSimplex; }
  int num_blocks() const { return static_cast<int>(dims_.size()); }
  int block_dim(int i) const { return dims_[static_cast<size_t>(i)]; }
  int offset(int i) const { return offsets_[static_cast<size_t>(i)]; }
  int total_dim() const { return total_; }
  int max_block_dim() const;
  const std::vector<int>& block_dims() const { return dims_; }

  /// Zeros for FullSpace, the uniform profile for Simplex.
  StrategyProfile default_point() const;
  /// Uniform distribution 1/d^i in every block (valid for both kinds).
  StrategyProfile uniform() const;

  bool operator==(const StrategySpace& other) const {
    return kind_ == other.kind_ && dims_ == other.dims_;
  }

 private:
  Kind kind_;
  std::vector<int> dims_;
  std::vector<int> offsets_;
  int total_ = 0;
};

/// Axis-aligned box Theta = [lower, upper] of incentive parameters.
class IncentiveSpace {
 public:
  IncentiveSpace(Vector lower, Vector upper);

  int dim() const { return static_cast<int>(lower_.size()); }
  const Vector& lower() const { return lower_; }
  const Vector& upper() const { return upper_; }
  bool contains(const IncentiveParams& theta, double tol = 0.0) const;

 private:
  Vector lower_;
  Vector upper_;
};

/**
 * Payoff-gradient oracle of a parameterized game. Agents maximize payoff, so
 * payoff_gradient returns v_theta(x) (the negated cost for cost-based games).
 * All evaluations are pure functions of (theta, x).
 */
class GameOracle {
 public:
  virtual ~GameOracle() = default;

  virtual const StrategySpace& space() const = 0;
  virtual int incentive_dim() const = 0;

  /// Stacked v_theta(x) of length sum d^i.
  virtual Vector payoff_gradient(const IncentiveParams& theta, const StrategyProfile& x) const = 0;
  /// d v / d x, shape (sum d^i) x (sum d^i).
  virtual Matrix jacobian_x(const IncentiveParams& theta, const StrategyProfile& x) const = 0;
  /// d v / d theta, shape (sum d^i) x d.
  virtual Matrix jacobian_theta(const IncentiveParams& theta, const StrategyProfile& x) const = 0;

  /// Positive per-block weights lambda^i of the weighted VI.
  virtual const Vector& stability_weights() const = 0;
};

/// Upper-level objective f(theta, x), minimized by the designer.
class DesignerObjective {
 public:
  virtual ~DesignerObjective() = default;

  virtual double value(const IncentiveParams& theta, const StrategyProfile& x) const = 0;
  virtual Vector grad_theta(const IncentiveParams& theta, const StrategyProfile& x) const = 0;
  virtual Vector grad_x(const IncentiveParams& theta, const StrategyProfile& x) const = 0;

  /// Known strong-convexity modulus of f_*, 0 when unknown.
  virtual double strong_convexity_mu() const { return 0.0; }
};

/// Weighted gradient lambda^i * v^i expanded to coordinates.
Vector weight_blocks(const StrategySpace& space, const Vector& lambda, const Vector& v);

/**
 * Equilibrium gap of the weighted VI at x.
 *
 * Simplex: max over x' of sum_i lambda^i <v^i(x), x'^i - x^i>, attained at a vertex per block.
 * FullSpace: the space is unbounded, so the weighted gradient norm sum_i lambda^i ||v^i(x)||_2
 * is returned instead. Both are zero exactly at solutions.
 */
double vi_residual(const GameOracle& game, const IncentiveParams& theta, const StrategyProfile& x);

/// Same gap from an already evaluated payoff gradient.
double vi_residual_from_gradient(const StrategySpace& space, const Vector& lambda,
                                 const StrategyProfile& x, const Vector& v);

/// Euclidean projection onto the incentive box (elementwise clamp).
IncentiveParams project_incentives(const IncentiveSpace& space, const Vector& theta_raw);

/// Throws StructuralError naming the block and the violated constraint.
void assert_profile(const StrategySpace& space, const StrategyProfile& x,
                    double tol = kSimplexTolerance);

/// Non-throwing variant of assert_profile.
bool profile_is_valid(const StrategySpace& space, const StrategyProfile& x,
                      double tol = kSimplexTolerance);

}  // namespace incentive
