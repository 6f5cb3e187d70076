#include "incentive/game_core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace incentive {

StrategySpace::StrategySpace(Kind kind, std::vector<int> block_dims)
    : kind_(kind), dims_(std::move(block_dims)) {
  if (dims_.empty()) throw StructuralError("strategy space needs at least one block");
  offsets_.reserve(dims_.size());
  for (size_t i = 0; i < dims_.size(); ++i) {
    if (dims_[i] < 1) {
      throw StructuralError("block " + std::to_string(i) + " has dimension " +
                            std::to_string(dims_[i]) + " < 1");
    }
    offsets_.push_back(total_);
    total_ += dims_[i];
  }
}

int StrategySpace::max_block_dim() const { return *std::max_element(dims_.begin(), dims_.end()); }

StrategyProfile StrategySpace::default_point() const {
  return is_simplex() ? uniform() : StrategyProfile::Zero(total_);
}

StrategyProfile StrategySpace::uniform() const {
  StrategyProfile x(total_);
  for (int i = 0; i < num_blocks(); ++i) {
    x.segment(offset(i), block_dim(i)).setConstant(1.0 / block_dim(i));
  }
  return x;
}

IncentiveSpace::IncentiveSpace(Vector lower, Vector upper)
    : lower_(std::move(lower)), upper_(std::move(upper)) {
  if (lower_.size() == 0) throw StructuralError("incentive space needs dimension >= 1");
  if (lower_.size() != upper_.size()) {
    throw StructuralError("incentive bounds have different lengths");
  }
  for (Eigen::Index j = 0; j < lower_.size(); ++j) {
    if (!std::isfinite(lower_[j]) || !std::isfinite(upper_[j])) {
      throw StructuralError("incentive box must be bounded (coordinate " + std::to_string(j) + ")");
    }
    if (lower_[j] > upper_[j]) {
      throw StructuralError("incentive lower bound exceeds upper bound at coordinate " +
                            std::to_string(j));
    }
  }
}

bool IncentiveSpace::contains(const IncentiveParams& theta, double tol) const {
  if (theta.size() != lower_.size()) return false;
  return ((theta.array() >= lower_.array() - tol) && (theta.array() <= upper_.array() + tol)).all();
}

Vector weight_blocks(const StrategySpace& space, const Vector& lambda, const Vector& v) {
  Vector out = v;
  for (int i = 0; i < space.num_blocks(); ++i) {
    out.segment(space.offset(i), space.block_dim(i)) *= lambda[i];
  }
  return out;
}

double vi_residual_from_gradient(const StrategySpace& space, const Vector& lambda,
                                 const StrategyProfile& x, const Vector& v) {
  if (x.size() != space.total_dim() || v.size() != space.total_dim()) {
    throw StructuralError("vi_residual: dimension mismatch between profile, gradient and space");
  }
  if (lambda.size() != space.num_blocks()) {
    throw StructuralError("vi_residual: stability weights do not match the block count");
  }
  double gap = 0.0;
  for (int i = 0; i < space.num_blocks(); ++i) {
    const auto vi = v.segment(space.offset(i), space.block_dim(i));
    if (space.is_simplex()) {
      const auto xi = x.segment(space.offset(i), space.block_dim(i));
      gap += lambda[i] * (vi.maxCoeff() - vi.dot(xi));
    } else {
      gap += lambda[i] * vi.norm();
    }
  }
  // The simplex gap is nonnegative in exact arithmetic; clip rounding noise.
  return std::max(gap, 0.0);
}

double vi_residual(const GameOracle& game, const IncentiveParams& theta, const StrategyProfile& x) {
  const StrategySpace& space = game.space();
  if (x.size() != space.total_dim()) {
    throw StructuralError("vi_residual: profile has length " + std::to_string(x.size()) +
                          ", space expects " + std::to_string(space.total_dim()));
  }
  if (theta.size() != game.incentive_dim()) {
    throw StructuralError("vi_residual: incentive dimension mismatch");
  }
  return vi_residual_from_gradient(space, game.stability_weights(), x,
                                   game.payoff_gradient(theta, x));
}

IncentiveParams project_incentives(const IncentiveSpace& space, const Vector& theta_raw) {
  if (theta_raw.size() != space.dim()) {
    throw StructuralError("project_incentives: expected dimension " + std::to_string(space.dim()) +
                          ", got " + std::to_string(theta_raw.size()));
  }
  return theta_raw.cwiseMax(space.lower()).cwiseMin(space.upper());
}

namespace {

// Returns an empty string when x is valid, otherwise a description of the first violation.
std::string describe_violation(const StrategySpace& space, const StrategyProfile& x, double tol) {
  std::ostringstream msg;
  if (x.size() != space.total_dim()) {
    msg << "dimension: profile has length " << x.size() << " but blocks sum to "
        << space.total_dim();
    return msg.str();
  }
  if (!x.allFinite()) return "profile has non-finite entries";
  if (!space.is_simplex()) return {};
  for (int i = 0; i < space.num_blocks(); ++i) {
    const auto xi = x.segment(space.offset(i), space.block_dim(i));
    const double lowest = xi.minCoeff();
    if (lowest < -tol) {
      msg << "block " << i << ": negative coordinate " << lowest;
      return msg.str();
    }
    const double sum = xi.sum();
    if (std::abs(sum - 1.0) > tol) {
      msg << "block " << i << ": sum ≠ 1 (sum = " << sum << ")";
      return msg.str();
    }
  }
  return {};
}

}  // namespace

void assert_profile(const StrategySpace& space, const StrategyProfile& x, double tol) {
  const std::string problem = describe_violation(space, x, tol);
  if (!problem.empty()) throw StructuralError(problem);
}

bool profile_is_valid(const StrategySpace& space, const StrategyProfile& x, double tol) {
  return describe_violation(space, x, tol).empty();
}

}  // namespace incentive
