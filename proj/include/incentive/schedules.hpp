#pragma once

#include <optional>
#include <string>
#include <vector>

#include "incentive/types.hpp"

namespace incentive {

struct ConstantsReport;

/**
 * Step-size schedule alpha_k = alpha / (k+1)^alpha_exp, beta_k = beta / (k+1)^beta_exp,
 * beta_k^i = lambda^i beta_k and, for the simplex algorithm, nu_k = 1 / (k+1)^nu_exp.
 *
 * Outside exploratory mode the exponents must be one of the two certified profiles:
 * (1, 2/3, none) for unconstrained games or (1/2, 2/7, 4/7) for simplex games.
 */
struct ScheduleParams {
  double alpha0 = 1.0;
  double beta0 = 1.0;
  double alpha_exp = 1.0;
  double beta_exp = 2.0 / 3.0;
  std::optional<double> nu_exp;
  Vector lambda;
  bool exploratory = false;

  static ScheduleParams unconstrained_profile(double alpha, double beta, Vector lambda);
  static ScheduleParams simplex_profile(double alpha, double beta, Vector lambda);

  /// Throws ParameterError on non-positive constants or a non-certified exponent profile.
  void validate() const;
};

struct StepSizes {
  double alpha = 0.0;
  double beta = 0.0;
  Vector beta_per_block;
  std::optional<double> nu;
};

StepSizes step_sizes(const ScheduleParams& params, long long k);

enum class Regime { kUnconstrained, kSimplex };

/**
 * One inequality of the step-size conditions. The printed constant expressions
 * ("1/N . H_u^2 ||lambda||^2" and friends) can be grouped two ways, so both are evaluated:
 *   reciprocal:    the bound is 1 / (c . N . H_u^2 . ||lambda||^2)
 *   left_to_right: the bound is (1/c) . N . H_u^2 . ||lambda||^2 (as typeset, read left to right)
 */
struct ConstraintCheck {
  std::string name;
  std::string formula;
  double lhs = 0.0;
  double bound_reciprocal = 0.0;
  double bound_left_to_right = 0.0;
  bool satisfied_reciprocal = false;
  bool satisfied_left_to_right = false;
  double slack_reciprocal = 0.0;     // bound - lhs
  double slack_left_to_right = 0.0;  // bound - lhs

  bool operator==(const ConstraintCheck&) const = default;
};

struct ConstantsCheckReport {
  Regime regime = Regime::kUnconstrained;
  std::vector<ConstraintCheck> checks;
  std::vector<std::string> warnings;

  bool all_satisfied_reciprocal() const;
  bool all_satisfied_left_to_right() const;

  bool operator==(const ConstantsCheckReport&) const = default;
};

/// Evaluates the step-size conditions; violations become warnings, never errors.
ConstantsCheckReport check_constants(const ScheduleParams& params, const ConstantsReport& est,
                                     Regime regime);

}  // namespace incentive
