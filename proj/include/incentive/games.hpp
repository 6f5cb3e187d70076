#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "incentive/bregman.hpp"
#include "incentive/game_core.hpp"

namespace incentive {

/// A game, the designer's objective on it, the incentive box and the agents' geometry.
struct Benchmark {
  std::string name;
  std::shared_ptr<const GameOracle> game;
  std::shared_ptr<const DesignerObjective> objective;
  IncentiveSpace incentives;
  BregmanGeometry geometry;

  const StrategySpace& space() const { return game->space(); }
};

// ---------------------------------------------------------------------------
// Cournot oligopoly with per-firm taxes.

struct CournotSpec {
  enum class Objective {
    kWelfare,       // f = -(consumer surplus + producer surplus) + kappa ||theta||^2
    kOutputTarget,  // f = w ||a - target||^2 + kappa ||theta||^2
  };

  int n = 2;
  double p0 = 10.0;
  Vector gamma;        // price impact per firm, > 0
  Vector cost_linear;  // constant marginal cost per firm
  Objective objective = Objective::kWelfare;
  double kappa = 1e-2;
  double output_weight = 1.0;
  Vector output_target;  // defaults to zeros
  Vector incentive_lower;
  Vector incentive_upper;
  Vector stability_weights;  // defaults to ones
  std::vector<Matrix> q_blocks;  // defaults to identity blocks

  /// Symmetric instance: identical gamma and cost for every firm, box [lo, hi]^n.
  static CournotSpec symmetric(int n, double p0, double gamma, double cost, double lo = -5.0,
                               double hi = 5.0);
};

/// Throws StructuralError on an inconsistent spec.
void validate(const CournotSpec& spec);

/**
 * v^i(a) = p0 - sum_j gamma^j a^j - gamma^i a^i - c^i - theta^i, so
 * d v / d a = -(1 gamma^T + diag(gamma)) and d v / d theta = -I.
 */
Benchmark cournot_oracle(const CournotSpec& spec);

/// Closed-form equilibrium: solves (1 gamma^T + diag(gamma)) a = p0 - c - theta.
Vector cournot_equilibrium(const CournotSpec& spec, const IncentiveParams& theta);

// ---------------------------------------------------------------------------
// Nonatomic routing with affine latencies t^e(x) = m^e x + b^e and per-edge tolls.

struct RoutingSpec {
  struct Edge {
    int from = 0;
    int to = 0;
    double m = 0.0;
    double b = 0.0;
  };
  struct OdPair {
    int origin = 0;
    int destination = 0;
    double demand = 1.0;
    std::vector<std::vector<int>> paths;  // edge indices in travel order
  };

  int num_nodes = 0;
  std::vector<Edge> edges;
  std::vector<OdPair> od_pairs;
  /// Edges that carry a toll, one incentive coordinate each; defaults to every edge.
  std::vector<int> tolled_edges;
  double kappa = 1e-2;
  Vector incentive_lower;
  Vector incentive_upper;
  Vector stability_weights;  // defaults to the demands

  /// Two parallel links with latencies x and 1, unit demand, toll on the first link, box [0, 1].
  static RoutingSpec pigou();
};

void validate(const RoutingSpec& spec);

class RoutingGame final : public GameOracle {
 public:
  explicit RoutingGame(RoutingSpec spec);

  const StrategySpace& space() const override { return space_; }
  int incentive_dim() const override { return static_cast<int>(spec_.tolled_edges.size()); }
  Vector payoff_gradient(const IncentiveParams& theta, const StrategyProfile& q) const override;
  Matrix jacobian_x(const IncentiveParams& theta, const StrategyProfile& q) const override;
  Matrix jacobian_theta(const IncentiveParams& theta, const StrategyProfile& q) const override;
  const Vector& stability_weights() const override { return lambda_; }

  const RoutingSpec& spec() const { return spec_; }
  /// Edge flows x^e = sum_{i,k} rho^i q^{ik} delta^{eik}.
  Vector edge_flows(const StrategyProfile& q) const;
  /// Path costs sum_e (t^e(x^e) + toll^e) delta^{eik}, stacked like q.
  Vector path_costs(const IncentiveParams& theta, const StrategyProfile& q) const;
  /// Edge-path incidence (edges x paths) and per-path demand.
  const Matrix& incidence() const { return incidence_; }
  const Vector& path_demand() const { return path_demand_; }
  /// Tolls expanded to every edge.
  Vector edge_tolls(const IncentiveParams& theta) const;

 private:
  RoutingSpec spec_;
  StrategySpace space_;
  Vector lambda_;
  Matrix incidence_;
  Vector path_demand_;
  Vector slopes_;
  Vector intercepts_;
  Matrix toll_map_;  // edges x tolled edges
};

/// Default objective: total system travel time sum_e x^e t^e(x^e) (tolls excluded) + kappa ||theta||^2.
Benchmark routing_oracle(const RoutingSpec& spec);

// ---------------------------------------------------------------------------
// Linear-quadratic family with an analytic equilibrium.

struct QuadraticToySpec {
  Matrix S;  // symmetric positive definite, lambda_min >= 1
  Matrix B;
  Vector theta_ref;
  Vector incentive_lower;
  Vector incentive_upper;

  /// S = I, B = I (padded), theta_ref = 1, box [-10, 10]^d.
  static QuadraticToySpec canonical(int dim_x, int dim_theta);
};

/// v_theta(x) = B theta - S x; f = 1/2 ||theta - theta_ref||^2 + 1/2 ||x||^2.
Benchmark quadratic_toy(const QuadraticToySpec& spec);
/// Random instance: S = I + R R^T / dim, B and theta_ref standard normal. Same seed, same instance.
Benchmark quadratic_toy(int dim_x, int dim_theta, std::uint64_t seed);
QuadraticToySpec random_quadratic_toy_spec(int dim_x, int dim_theta, std::uint64_t seed);

/// x_*(theta) = S^{-1} B theta.
Vector quadratic_toy_equilibrium(const QuadraticToySpec& spec, const IncentiveParams& theta);

}  // namespace incentive
