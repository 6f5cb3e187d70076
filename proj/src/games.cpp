#include "incentive/games.hpp"

#include <cmath>
#include <random>
#include <set>

namespace incentive {
namespace {

std::vector<Matrix> identity_blocks(const StrategySpace& space) {
  std::vector<Matrix> q;
  for (int d : space.block_dims()) q.push_back(Matrix::Identity(d, d));
  return q;
}

// ---------------------------------------------------------------------------

class CournotGame final : public GameOracle {
 public:
  explicit CournotGame(const CournotSpec& spec)
      : spec_(spec),
        space_(StrategySpace::full_space(std::vector<int>(static_cast<size_t>(spec.n), 1))),
        lambda_(spec.stability_weights) {
    // d v / d a = -(1 gamma^T + diag(gamma))
    jac_x_ = -(Vector::Ones(spec.n) * spec.gamma.transpose());
    jac_x_.diagonal() -= spec.gamma;
  }

  const StrategySpace& space() const override { return space_; }
  int incentive_dim() const override { return spec_.n; }

  Vector payoff_gradient(const IncentiveParams& theta, const StrategyProfile& a) const override {
    const double supply = spec_.gamma.dot(a);
    Vector v = (spec_.p0 - supply) - spec_.gamma.cwiseProduct(a).array() - spec_.cost_linear.array() -
               theta.array();
    return v;
  }
  Matrix jacobian_x(const IncentiveParams&, const StrategyProfile&) const override { return jac_x_; }
  Matrix jacobian_theta(const IncentiveParams&, const StrategyProfile&) const override {
    return -Matrix::Identity(spec_.n, spec_.n);
  }
  const Vector& stability_weights() const override { return lambda_; }

 private:
  CournotSpec spec_;
  StrategySpace space_;
  Vector lambda_;
  Matrix jac_x_;
};

class CournotWelfare final : public DesignerObjective {
 public:
  explicit CournotWelfare(const CournotSpec& spec) : spec_(spec) {}

  // W = 1/2 (p0 - p) Q + sum_i a^i (p - c^i), p = p0 - sum_j gamma^j a^j, Q = sum_j a^j.
  double value(const IncentiveParams& theta, const StrategyProfile& a) const override {
    const double g = spec_.gamma.dot(a);
    const double q = a.sum();
    const double price = spec_.p0 - g;
    const double welfare = 0.5 * g * q + a.dot((price - spec_.cost_linear.array()).matrix());
    return -welfare + spec_.kappa * theta.squaredNorm();
  }
  Vector grad_theta(const IncentiveParams& theta, const StrategyProfile&) const override {
    return 2.0 * spec_.kappa * theta;
  }
  Vector grad_x(const IncentiveParams&, const StrategyProfile& a) const override {
    const double g = spec_.gamma.dot(a);
    const double q = a.sum();
    // dW/da^k = p0 - g/2 - gamma^k q / 2 - c^k
    Vector dw = (spec_.p0 - 0.5 * g) - 0.5 * q * spec_.gamma.array() - spec_.cost_linear.array();
    return -dw;
  }

 private:
  CournotSpec spec_;
};

class CournotOutputTarget final : public DesignerObjective {
 public:
  explicit CournotOutputTarget(const CournotSpec& spec) : spec_(spec) {}

  double value(const IncentiveParams& theta, const StrategyProfile& a) const override {
    return spec_.output_weight * (a - spec_.output_target).squaredNorm() +
           spec_.kappa * theta.squaredNorm();
  }
  Vector grad_theta(const IncentiveParams& theta, const StrategyProfile&) const override {
    return 2.0 * spec_.kappa * theta;
  }
  Vector grad_x(const IncentiveParams&, const StrategyProfile& a) const override {
    return 2.0 * spec_.output_weight * (a - spec_.output_target);
  }

 private:
  CournotSpec spec_;
};

CournotSpec with_defaults(CournotSpec spec) {
  if (spec.stability_weights.size() == 0) spec.stability_weights = Vector::Ones(spec.n);
  if (spec.output_target.size() == 0) spec.output_target = Vector::Zero(spec.n);
  return spec;
}

// ---------------------------------------------------------------------------

class TotalTravelTime final : public DesignerObjective {
 public:
  TotalTravelTime(std::shared_ptr<const RoutingGame> game, double kappa)
      : game_(std::move(game)), kappa_(kappa) {}

  double value(const IncentiveParams& theta, const StrategyProfile& q) const override {
    const Vector x = game_->edge_flows(q);
    double total = 0.0;
    const auto& edges = game_->spec().edges;
    for (size_t e = 0; e < edges.size(); ++e) {
      const double xe = x[static_cast<Eigen::Index>(e)];
      total += xe * (edges[e].m * xe + edges[e].b);
    }
    return total + kappa_ * theta.squaredNorm();
  }
  Vector grad_theta(const IncentiveParams& theta, const StrategyProfile&) const override {
    return 2.0 * kappa_ * theta;
  }
  Vector grad_x(const IncentiveParams&, const StrategyProfile& q) const override {
    const Vector x = game_->edge_flows(q);
    const auto& edges = game_->spec().edges;
    Vector marginal(x.size());
    for (size_t e = 0; e < edges.size(); ++e) {
      const auto idx = static_cast<Eigen::Index>(e);
      marginal[idx] = 2.0 * edges[e].m * x[idx] + edges[e].b;
    }
    return game_->path_demand().cwiseProduct(game_->incidence().transpose() * marginal);
  }

 private:
  std::shared_ptr<const RoutingGame> game_;
  double kappa_;
};

// ---------------------------------------------------------------------------

class QuadraticToyGame final : public GameOracle {
 public:
  explicit QuadraticToyGame(const QuadraticToySpec& spec)
      : spec_(spec),
        space_(StrategySpace::full_space({static_cast<int>(spec.S.rows())})),
        lambda_(Vector::Ones(1)) {}

  const StrategySpace& space() const override { return space_; }
  int incentive_dim() const override { return static_cast<int>(spec_.B.cols()); }
  Vector payoff_gradient(const IncentiveParams& theta, const StrategyProfile& x) const override {
    return spec_.B * theta - spec_.S * x;
  }
  Matrix jacobian_x(const IncentiveParams&, const StrategyProfile&) const override { return -spec_.S; }
  Matrix jacobian_theta(const IncentiveParams&, const StrategyProfile&) const override {
    return spec_.B;
  }
  const Vector& stability_weights() const override { return lambda_; }

 private:
  QuadraticToySpec spec_;
  StrategySpace space_;
  Vector lambda_;
};

class QuadraticToyObjective final : public DesignerObjective {
 public:
  explicit QuadraticToyObjective(Vector theta_ref) : theta_ref_(std::move(theta_ref)) {}

  double value(const IncentiveParams& theta, const StrategyProfile& x) const override {
    return 0.5 * (theta - theta_ref_).squaredNorm() + 0.5 * x.squaredNorm();
  }
  Vector grad_theta(const IncentiveParams& theta, const StrategyProfile&) const override {
    return theta - theta_ref_;
  }
  Vector grad_x(const IncentiveParams&, const StrategyProfile& x) const override { return x; }

 private:
  Vector theta_ref_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Cournot

CournotSpec CournotSpec::symmetric(int n, double p0, double gamma, double cost, double lo,
                                   double hi) {
  CournotSpec spec;
  spec.n = n;
  spec.p0 = p0;
  spec.gamma = Vector::Constant(n, gamma);
  spec.cost_linear = Vector::Constant(n, cost);
  spec.incentive_lower = Vector::Constant(n, lo);
  spec.incentive_upper = Vector::Constant(n, hi);
  return spec;
}

void validate(const CournotSpec& spec) {
  if (spec.n < 1) throw StructuralError("cournot: need at least one firm");
  const auto n = static_cast<Eigen::Index>(spec.n);
  if (spec.gamma.size() != n || spec.cost_linear.size() != n) {
    throw StructuralError("cournot: gamma and cost_linear must have one entry per firm");
  }
  if ((spec.gamma.array() <= 0.0).any()) throw StructuralError("cournot: gamma must be positive");
  if (spec.incentive_lower.size() != n || spec.incentive_upper.size() != n) {
    throw StructuralError("cournot: the per-firm tax box needs one bound per firm");
  }
  if (!(spec.p0 > spec.cost_linear.maxCoeff() + spec.incentive_upper.maxCoeff())) {
    throw StructuralError("cournot: p0 must exceed max cost + max tax");
  }
  if (spec.stability_weights.size() != 0 &&
      (spec.stability_weights.size() != n || (spec.stability_weights.array() <= 0.0).any())) {
    throw StructuralError("cournot: stability weights must be positive, one per firm");
  }
  if (spec.output_target.size() != 0 && spec.output_target.size() != n) {
    throw StructuralError("cournot: output target needs one entry per firm");
  }
  if (spec.kappa < 0.0 || spec.output_weight < 0.0) {
    throw StructuralError("cournot: kappa and output_weight must be nonnegative");
  }
  if (!spec.q_blocks.empty() && spec.q_blocks.size() != static_cast<size_t>(spec.n)) {
    throw StructuralError("cournot: need one Q block per firm");
  }
}

Benchmark cournot_oracle(const CournotSpec& raw) {
  validate(raw);
  const CournotSpec spec = with_defaults(raw);
  auto game = std::make_shared<CournotGame>(spec);
  std::shared_ptr<const DesignerObjective> objective;
  if (spec.objective == CournotSpec::Objective::kWelfare) {
    objective = std::make_shared<CournotWelfare>(spec);
  } else {
    objective = std::make_shared<CournotOutputTarget>(spec);
  }
  auto geometry = BregmanGeometry::mahalanobis(spec.q_blocks.empty() ? identity_blocks(game->space())
                                                                     : spec.q_blocks);
  geometry.check_compatible(game->space());
  return Benchmark{"cournot", game, objective,
                   IncentiveSpace(spec.incentive_lower, spec.incentive_upper), geometry};
}

Vector cournot_equilibrium(const CournotSpec& spec, const IncentiveParams& theta) {
  Matrix m = Vector::Ones(spec.n) * spec.gamma.transpose();
  m.diagonal() += spec.gamma;
  const Vector rhs = (spec.p0 - spec.cost_linear.array() - theta.array()).matrix();
  return m.partialPivLu().solve(rhs);
}

// ---------------------------------------------------------------------------
// Routing

RoutingSpec RoutingSpec::pigou() {
  RoutingSpec spec;
  spec.num_nodes = 2;
  spec.edges = {{0, 1, 1.0, 0.0}, {0, 1, 0.0, 1.0}};
  spec.od_pairs = {{0, 1, 1.0, {{0}, {1}}}};
  spec.tolled_edges = {0};
  spec.kappa = 0.0;
  spec.incentive_lower = Vector::Zero(1);
  spec.incentive_upper = Vector::Ones(1);
  return spec;
}

void validate(const RoutingSpec& spec) {
  if (spec.num_nodes < 2) throw StructuralError("routing: need at least two nodes");
  if (spec.edges.empty()) throw StructuralError("routing: need at least one edge");
  if (spec.od_pairs.empty()) throw StructuralError("routing: need at least one OD pair");
  const int num_edges = static_cast<int>(spec.edges.size());
  for (int e = 0; e < num_edges; ++e) {
    const auto& edge = spec.edges[static_cast<size_t>(e)];
    if (edge.from < 0 || edge.from >= spec.num_nodes || edge.to < 0 || edge.to >= spec.num_nodes) {
      throw StructuralError("routing: edge " + std::to_string(e) + " references an unknown node");
    }
    if (edge.m < 0.0 || edge.b < 0.0) {
      throw StructuralError("routing: edge " + std::to_string(e) + " needs m >= 0 and b >= 0");
    }
  }
  for (size_t i = 0; i < spec.od_pairs.size(); ++i) {
    const auto& od = spec.od_pairs[i];
    const std::string tag = "routing: OD pair " + std::to_string(i);
    if (!(od.demand > 0.0)) throw StructuralError(tag + " needs positive demand");
    if (od.paths.empty()) throw StructuralError(tag + " has no paths");
    for (size_t k = 0; k < od.paths.size(); ++k) {
      const auto& path = od.paths[k];
      if (path.empty()) throw StructuralError(tag + " path " + std::to_string(k) + " is empty");
      int node = od.origin;
      for (int e : path) {
        if (e < 0 || e >= num_edges) {
          throw StructuralError(tag + " path " + std::to_string(k) + " uses unknown edge " +
                                std::to_string(e));
        }
        const auto& edge = spec.edges[static_cast<size_t>(e)];
        if (edge.from != node) {
          throw StructuralError(tag + " path " + std::to_string(k) + " is not connected at edge " +
                                std::to_string(e));
        }
        node = edge.to;
      }
      if (node != od.destination) {
        throw StructuralError(tag + " path " + std::to_string(k) + " does not end at the destination");
      }
    }
  }
  std::set<int> seen;
  for (int e : spec.tolled_edges) {
    if (e < 0 || e >= num_edges) throw StructuralError("routing: tolled edge out of range");
    if (!seen.insert(e).second) throw StructuralError("routing: tolled edge listed twice");
  }
  const auto d = static_cast<Eigen::Index>(spec.tolled_edges.empty() ? spec.edges.size()
                                                                      : spec.tolled_edges.size());
  if (spec.incentive_lower.size() != d || spec.incentive_upper.size() != d) {
    throw StructuralError("routing: toll box needs one bound per tolled edge");
  }
  if (spec.stability_weights.size() != 0 &&
      (spec.stability_weights.size() != static_cast<Eigen::Index>(spec.od_pairs.size()) ||
       (spec.stability_weights.array() <= 0.0).any())) {
    throw StructuralError("routing: stability weights must be positive, one per OD pair");
  }
  if (spec.kappa < 0.0) throw StructuralError("routing: kappa must be nonnegative");
}

namespace {

std::vector<int> path_counts(const RoutingSpec& spec) {
  std::vector<int> dims;
  for (const auto& od : spec.od_pairs) dims.push_back(static_cast<int>(od.paths.size()));
  return dims;
}

RoutingSpec routing_defaults(RoutingSpec spec) {
  if (spec.tolled_edges.empty()) {
    for (int e = 0; e < static_cast<int>(spec.edges.size()); ++e) spec.tolled_edges.push_back(e);
  }
  if (spec.stability_weights.size() == 0) {
    spec.stability_weights.resize(static_cast<Eigen::Index>(spec.od_pairs.size()));
    for (size_t i = 0; i < spec.od_pairs.size(); ++i) {
      spec.stability_weights[static_cast<Eigen::Index>(i)] = spec.od_pairs[i].demand;
    }
  }
  return spec;
}

}  // namespace

RoutingGame::RoutingGame(RoutingSpec spec)
    : spec_((validate(spec), routing_defaults(std::move(spec)))),
      space_(StrategySpace::simplex(path_counts(spec_))),
      lambda_(spec_.stability_weights) {
  const auto num_edges = static_cast<Eigen::Index>(spec_.edges.size());
  const auto num_paths = static_cast<Eigen::Index>(space_.total_dim());
  incidence_ = Matrix::Zero(num_edges, num_paths);
  path_demand_.resize(num_paths);
  Eigen::Index p = 0;
  for (const auto& od : spec_.od_pairs) {
    for (const auto& path : od.paths) {
      for (int e : path) incidence_(e, p) += 1.0;
      path_demand_[p] = od.demand;
      ++p;
    }
  }
  slopes_.resize(num_edges);
  intercepts_.resize(num_edges);
  for (Eigen::Index e = 0; e < num_edges; ++e) {
    slopes_[e] = spec_.edges[static_cast<size_t>(e)].m;
    intercepts_[e] = spec_.edges[static_cast<size_t>(e)].b;
  }
  toll_map_ = Matrix::Zero(num_edges, static_cast<Eigen::Index>(spec_.tolled_edges.size()));
  for (size_t t = 0; t < spec_.tolled_edges.size(); ++t) {
    toll_map_(spec_.tolled_edges[t], static_cast<Eigen::Index>(t)) = 1.0;
  }
}

Vector RoutingGame::edge_flows(const StrategyProfile& q) const {
  return incidence_ * path_demand_.cwiseProduct(q);
}

Vector RoutingGame::edge_tolls(const IncentiveParams& theta) const { return toll_map_ * theta; }

Vector RoutingGame::path_costs(const IncentiveParams& theta, const StrategyProfile& q) const {
  const Vector x = edge_flows(q);
  const Vector edge_cost = slopes_.cwiseProduct(x) + intercepts_ + edge_tolls(theta);
  return incidence_.transpose() * edge_cost;
}

Vector RoutingGame::payoff_gradient(const IncentiveParams& theta, const StrategyProfile& q) const {
  return -path_costs(theta, q);
}

Matrix RoutingGame::jacobian_x(const IncentiveParams&, const StrategyProfile&) const {
  // d c^{ik} / d q^{jl} = sum_e delta^{eik} m^e delta^{ejl} rho^j
  return -(incidence_.transpose() * slopes_.asDiagonal() * incidence_ * path_demand_.asDiagonal());
}

Matrix RoutingGame::jacobian_theta(const IncentiveParams&, const StrategyProfile&) const {
  return -(incidence_.transpose() * toll_map_);
}

Benchmark routing_oracle(const RoutingSpec& spec) {
  auto game = std::make_shared<RoutingGame>(spec);
  auto objective = std::make_shared<TotalTravelTime>(game, game->spec().kappa);
  return Benchmark{"routing", game, objective,
                   IncentiveSpace(game->spec().incentive_lower, game->spec().incentive_upper),
                   BregmanGeometry::entropy()};
}

// ---------------------------------------------------------------------------
// Quadratic toy

QuadraticToySpec QuadraticToySpec::canonical(int dim_x, int dim_theta) {
  QuadraticToySpec spec;
  spec.S = Matrix::Identity(dim_x, dim_x);
  spec.B = Matrix::Identity(dim_x, dim_theta);
  spec.theta_ref = Vector::Ones(dim_theta);
  spec.incentive_lower = Vector::Constant(dim_theta, -10.0);
  spec.incentive_upper = Vector::Constant(dim_theta, 10.0);
  return spec;
}

QuadraticToySpec random_quadratic_toy_spec(int dim_x, int dim_theta, std::uint64_t seed) {
  if (dim_x < 1 || dim_theta < 1) throw StructuralError("quadratic_toy: dimensions must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
      for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = normal(rng);
    }
    return m;
  };
  QuadraticToySpec spec = QuadraticToySpec::canonical(dim_x, dim_theta);
  const Matrix r = draw(dim_x, dim_x);
  spec.S = Matrix::Identity(dim_x, dim_x) + r * r.transpose() / dim_x;
  spec.B = draw(dim_x, dim_theta);
  spec.theta_ref = draw(dim_theta, 1).col(0);
  return spec;
}

Benchmark quadratic_toy(const QuadraticToySpec& spec) {
  const auto dx = spec.S.rows();
  if (dx < 1 || spec.S.cols() != dx) throw StructuralError("quadratic_toy: S must be square");
  if (spec.B.rows() != dx || spec.B.cols() < 1) throw StructuralError("quadratic_toy: B shape");
  if (spec.theta_ref.size() != spec.B.cols()) throw StructuralError("quadratic_toy: theta_ref shape");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (spec.S + spec.S.transpose()), Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < 1.0 - 1e-12) {
    throw StructuralError("quadratic_toy: S must have smallest eigenvalue >= 1");
  }
  auto game = std::make_shared<QuadraticToyGame>(spec);
  auto objective = std::make_shared<QuadraticToyObjective>(spec.theta_ref);
  return Benchmark{"quadratic_toy", game, objective,
                   IncentiveSpace(spec.incentive_lower, spec.incentive_upper),
                   BregmanGeometry::euclidean(game->space())};
}

Benchmark quadratic_toy(int dim_x, int dim_theta, std::uint64_t seed) {
  return quadratic_toy(random_quadratic_toy_spec(dim_x, dim_theta, seed));
}

Vector quadratic_toy_equilibrium(const QuadraticToySpec& spec, const IncentiveParams& theta) {
  return spec.S.llt().solve(spec.B * theta);
}

}  // namespace incentive
