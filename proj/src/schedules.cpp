#include "incentive/schedules.hpp"

#include <cmath>
#include <sstream>

#include "incentive/constants_report.hpp"

namespace incentive {
namespace {

bool close(double a, double b) { return std::abs(a - b) <= 1e-12; }

ConstraintCheck make_check(std::string name, std::string formula, double lhs, double coefficient,
                           double product) {
  ConstraintCheck c;
  c.name = std::move(name);
  c.formula = std::move(formula);
  c.lhs = lhs;
  c.bound_reciprocal = 1.0 / (coefficient * product);
  c.bound_left_to_right = product / coefficient;
  c.satisfied_reciprocal = lhs <= c.bound_reciprocal;
  c.satisfied_left_to_right = lhs <= c.bound_left_to_right;
  c.slack_reciprocal = c.bound_reciprocal - lhs;
  c.slack_left_to_right = c.bound_left_to_right - lhs;
  return c;
}

}  // namespace

ScheduleParams ScheduleParams::unconstrained_profile(double alpha, double beta, Vector lambda) {
  ScheduleParams p;
  p.alpha0 = alpha;
  p.beta0 = beta;
  p.alpha_exp = 1.0;
  p.beta_exp = 2.0 / 3.0;
  p.lambda = std::move(lambda);
  return p;
}

ScheduleParams ScheduleParams::simplex_profile(double alpha, double beta, Vector lambda) {
  ScheduleParams p;
  p.alpha0 = alpha;
  p.beta0 = beta;
  p.alpha_exp = 0.5;
  p.beta_exp = 2.0 / 7.0;
  p.nu_exp = 4.0 / 7.0;
  p.lambda = std::move(lambda);
  return p;
}

void ScheduleParams::validate() const {
  if (!(alpha0 >= 0.0) || !std::isfinite(alpha0)) throw ParameterError("schedule: alpha must be >= 0");
  if (!(beta0 > 0.0) || !std::isfinite(beta0)) throw ParameterError("schedule: beta must be > 0");
  if (lambda.size() == 0 || (lambda.array() <= 0.0).any()) {
    throw ParameterError("schedule: lambda must be a non-empty positive vector");
  }
  if (exploratory) return;
  const bool unconstrained = close(alpha_exp, 1.0) && close(beta_exp, 2.0 / 3.0) && !nu_exp;
  const bool simplex = close(alpha_exp, 0.5) && close(beta_exp, 2.0 / 7.0) && nu_exp &&
                       close(*nu_exp, 4.0 / 7.0);
  if (!unconstrained && !simplex) {
    throw ParameterError(
        "schedule: exponents must be (1, 2/3) or (1/2, 2/7, 4/7) unless exploratory mode is on");
  }
}

StepSizes step_sizes(const ScheduleParams& params, long long k) {
  if (k < 0) throw ParameterError("step_sizes: k must be >= 0");
  const double kp1 = static_cast<double>(k) + 1.0;
  StepSizes s;
  s.alpha = params.alpha0 / std::pow(kp1, params.alpha_exp);
  s.beta = params.beta0 / std::pow(kp1, params.beta_exp);
  s.beta_per_block = params.lambda * s.beta;
  if (params.nu_exp) s.nu = 1.0 / std::pow(kp1, *params.nu_exp);
  return s;
}

bool ConstantsCheckReport::all_satisfied_reciprocal() const {
  for (const auto& c : checks) {
    if (!c.satisfied_reciprocal) return false;
  }
  return true;
}

bool ConstantsCheckReport::all_satisfied_left_to_right() const {
  for (const auto& c : checks) {
    if (!c.satisfied_left_to_right) return false;
  }
  return true;
}

ConstantsCheckReport check_constants(const ScheduleParams& params, const ConstantsReport& est,
                                     Regime regime) {
  ConstantsCheckReport report;
  report.regime = regime;
  const double n = est.num_players;
  const double lam2 = params.lambda.size() > 0 ? params.lambda.squaredNorm()
                                               : est.lambda_norm * est.lambda_norm;
  const double ratio = params.alpha0 / std::pow(params.beta0, 1.5);
  const double hu2_lam2 = est.H_u * est.H_u * lam2;

  if (regime == Regime::kUnconstrained) {
    report.checks.push_back(
        make_check("beta", "beta <= 1/N * H_u^2 * ||lambda||^2", params.beta0, n, hu2_lam2));
    report.checks.push_back(make_check("alpha_over_beta_1.5",
                                       "alpha / beta^(3/2) <= 1/12 * H_psi * H_tilde * H_star",
                                       ratio, 12.0, est.H_psi * est.H_tilde * est.H_star));
  } else {
    report.checks.push_back(make_check("beta", "beta <= 1/6 * N * H_u^2 * ||lambda||^2",
                                       params.beta0, 6.0, n * hu2_lam2));
    report.checks.push_back(make_check("alpha_over_beta_1.5",
                                       "alpha / beta^(3/2) <= 1/7 * H_tilde * H_tilde_star", ratio,
                                       7.0, est.H_tilde * est.H_tilde_star));
  }

  for (const auto& c : report.checks) {
    if (c.satisfied_reciprocal && c.satisfied_left_to_right) continue;
    std::ostringstream w;
    w << c.formula << ": lhs " << c.lhs << " vs bound " << c.bound_reciprocal
      << " (reciprocal reading, " << (c.satisfied_reciprocal ? "ok" : "violated") << ") / "
      << c.bound_left_to_right << " (left-to-right reading, "
      << (c.satisfied_left_to_right ? "ok" : "violated") << ")";
    report.warnings.push_back(w.str());
  }
  return report;
}

}  // namespace incentive
