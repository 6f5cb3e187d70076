#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace incentive {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Flat stacked strategy profile x = (x^1, ..., x^n); block layout is owned by a StrategySpace.
using StrategyProfile = Eigen::VectorXd;
/// Incentive parameters theta in R^d.
using IncentiveParams = Eigen::VectorXd;

/// Shapes or memberships that do not line up (wrong block sizes, off-simplex points, ...).
class StructuralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A point outside the domain of a function (e.g. KL divergence against a zero coordinate).
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An invalid scalar parameter (non-positive step size, mixing weight outside (0,1), ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A linear system that is singular or too ill-conditioned to solve reliably.
class SingularityError : public std::runtime_error {
 public:
  SingularityError(const std::string& what, double condition_estimate)
      : std::runtime_error(what + " (condition estimate " + std::to_string(condition_estimate) + ")"),
        condition_estimate_(condition_estimate) {}

  double condition_estimate() const { return condition_estimate_; }

 private:
  double condition_estimate_;
};

}  // namespace incentive
