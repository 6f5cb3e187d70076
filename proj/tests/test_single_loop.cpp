#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <cmath>
#include <memory>
#include <random>
#include <set>

#include "incentive/equilibrium.hpp"
#include "incentive/games.hpp"
#include "incentive/single_loop.hpp"
#include "test_support.hpp"

using namespace incentive;
using incentive::testing::AffineGame;
using incentive::testing::LambdaObjective;
using incentive::testing::vec;

namespace {

// v = theta - x, f = (theta - 1)^2 + x^2: f_*(theta) = (theta - 1)^2 + theta^2, minimized at 1/2.
AffineGame scalar_game() {
  return AffineGame(StrategySpace::full_space({1}), Vector::Zero(1), Matrix::Ones(1, 1),
                    -Matrix::Ones(1, 1), vec({1.0}));
}

LambdaObjective scalar_objective() {
  return LambdaObjective(
      [](const Vector& t, const Vector& x) { return (t[0] - 1) * (t[0] - 1) + x[0] * x[0]; },
      [](const Vector& t, const Vector&) { return vec({2 * (t[0] - 1)}); },
      [](const Vector&, const Vector& x) { return vec({2 * x[0]}); });
}

// Cournot oracle whose d v / d x turns singular on selected calls.
class FlakyJacobian final : public GameOracle {
 public:
  FlakyJacobian(std::shared_ptr<const GameOracle> inner, std::set<int> singular_calls)
      : inner_(std::move(inner)), singular_(std::move(singular_calls)) {}
  const StrategySpace& space() const override { return inner_->space(); }
  int incentive_dim() const override { return inner_->incentive_dim(); }
  Vector payoff_gradient(const IncentiveParams& t, const StrategyProfile& x) const override {
    return inner_->payoff_gradient(t, x);
  }
  Matrix jacobian_x(const IncentiveParams& t, const StrategyProfile& x) const override {
    const int call = calls_++;
    if (singular_.count(call)) return Matrix::Zero(x.size(), x.size());
    return inner_->jacobian_x(t, x);
  }
  Matrix jacobian_theta(const IncentiveParams& t, const StrategyProfile& x) const override {
    return inner_->jacobian_theta(t, x);
  }
  const Vector& stability_weights() const override { return inner_->stability_weights(); }

 private:
  std::shared_ptr<const GameOracle> inner_;
  std::set<int> singular_;
  mutable std::atomic<int> calls_{0};
};

RunConfig quiet_config(long long k, long long gap_every = 100) {
  RunConfig cfg;
  cfg.iterations = k;
  cfg.gap_every = gap_every;
  return cfg;
}

}  // namespace

TEST_CASE("noise model") {
  std::mt19937_64 rng(1);
  const Vector clean = vec({1.0, -2.0, 3.0});
  const std::mt19937_64 before = rng;
  CHECK(make_noisy(0.0, rng, clean) == clean);
  CHECK(rng == before);

  const double sigma = 0.3;
  const int n = 100000;
  Vector sum = Vector::Zero(3), sq = Vector::Zero(3);
  for (int s = 0; s < n; ++s) {
    const Vector e = make_noisy(sigma, rng, clean) - clean;
    sum += e;
    sq += e.cwiseProduct(e);
  }
  const Vector mean = sum / n;
  const Vector var = sq / n - mean.cwiseProduct(mean);
  for (int j = 0; j < 3; ++j) {
    CHECK(std::abs(mean[j]) <= 3 * sigma / std::sqrt(double(n)));
    CHECK(std::abs(var[j] / (sigma * sigma) - 1.0) <= 0.05);
  }

  NoiseModel model{0.1, 0.2, 7};
  CHECK(model.delta_u_sq(3) == doctest::Approx(0.03));
  CHECK(model.delta_f_sq(2) == doctest::Approx(0.08));
  CHECK_THROWS_AS((NoiseModel{-1.0, 0.0, 0}.validate()), ParameterError);
}

TEST_CASE("noiseless fixed point is stationary") {
  SUBCASE("algorithm 1") {
    const Benchmark bench = quadratic_toy(QuadraticToySpec::canonical(1, 1));
    const auto sched = ScheduleParams::unconstrained_profile(0.5, 0.5, vec({1.0}));
    double worst_theta = 0.0, worst_r = 0.0;
    RunConfig cfg = quiet_config(1000);
    cfg.observer = [&](const RunState& s) {
      worst_theta = std::max(worst_theta, std::abs(s.theta[0] - 0.5));
      worst_r = std::max(worst_r, vi_residual(*bench.game, s.theta, s.x));
    };
    const auto trace = run_algorithm1(*bench.game, *bench.objective, bench.geometry, bench.incentives, sched,
                                      NoiseModel{}, vec({0.5}), vec({0.5}), cfg);
    CHECK(trace.completed);
    CHECK(worst_theta <= 1e-9);
    CHECK(worst_r <= 1e-9);
  }
  SUBCASE("algorithm 2") {
    const Benchmark bench = routing_oracle(RoutingSpec::pigou());
    const auto sched = ScheduleParams::simplex_profile(0.5, 0.5, vec({1.0}));
    double worst_theta = 0.0, worst_r = 0.0;
    RunConfig cfg = quiet_config(1000);
    cfg.observer = [&](const RunState& s) {
      worst_theta = std::max(worst_theta, std::abs(s.theta[0] - 0.5));
      worst_r = std::max(worst_r, vi_residual(*bench.game, s.theta, s.x));
    };
    const auto trace = run_algorithm2(*bench.game, *bench.objective, bench.geometry, bench.incentives, sched,
                                      NoiseModel{}, vec({0.5}), vec({0.5, 0.5}), cfg);
    CHECK(trace.completed);
    CHECK(worst_theta <= 1e-9);
    CHECK(worst_r <= 1e-9);
  }
}

TEST_CASE("designer gradient is taken at the updated profile") {
  const auto game = scalar_game();
  const auto f = scalar_objective();
  const IncentiveSpace box(vec({-10.0}), vec({10.0}));
  const auto sched = ScheduleParams::unconstrained_profile(0.25, 0.5, vec({1.0}));
  std::vector<RunState> states;
  RunConfig cfg = quiet_config(1);
  cfg.observer = [&](const RunState& s) { states.push_back(s); };
  run_algorithm1(game, f, BregmanGeometry::euclidean(game.space()), box, sched, NoiseModel{}, vec({1.0}),
                 vec({0.0}), cfg);
  REQUIRE(states.size() == 2);
  // x_1 = 0 + 0.5 (1 - 0) = 0.5; grad at (theta_0, x_1) = 0 - 1 (-1)^{-1} 2 x_1 = 1; theta_1 = 1 - 0.25.
  CHECK(states[1].x[0] == doctest::Approx(0.5));
  CHECK(states[1].theta[0] == doctest::Approx(0.75));
}

TEST_CASE("one-dimensional quadratic reaches the optimum") {
  const auto game = scalar_game();
  const auto f = scalar_objective();
  const IncentiveSpace box(vec({-10.0}), vec({10.0}));
  const auto sched = ScheduleParams::unconstrained_profile(0.5, 0.5, vec({1.0}));
  const auto trace = run_algorithm1(game, f, BregmanGeometry::euclidean(game.space()), box, sched,
                                    NoiseModel{}, vec({3.0}), vec({0.0}), quiet_config(10000));
  CHECK(trace.completed);
  CHECK(std::abs(trace.final_theta[0] - 0.5) <= 1e-3);
  CHECK(std::abs(trace.final_x[0] - 0.5) <= 1e-3);
}

TEST_CASE("Cournot single loop agrees with the double loop") {
  CournotSpec spec = CournotSpec::symmetric(2, 10.0, 2.0, 1.0);
  spec.kappa = 0.1;
  const Benchmark bench = cournot_oracle(spec);
  const auto dl = solve_double_loop(*bench.game, *bench.objective, bench.geometry, bench.incentives,
                                    vec({0.0, 0.0}), DoubleLoopOptions{});
  REQUIRE(dl.completed);
  const auto sched = ScheduleParams::unconstrained_profile(4.0, 0.25, vec({1.0, 1.0}));
  const auto trace = run_algorithm1(*bench.game, *bench.objective, bench.geometry, bench.incentives, sched,
                                    NoiseModel{}, vec({0.0, 0.0}), vec({0.0, 0.0}), quiet_config(10000));
  CHECK(trace.completed);
  CHECK((trace.final_theta - dl.theta_star).norm() <= 1e-3);
}

TEST_CASE("Pigou algorithm 2 approaches the marginal-cost toll") {
  const Benchmark bench = routing_oracle(RoutingSpec::pigou());
  const auto sched = ScheduleParams::simplex_profile(0.5, 0.5, vec({1.0}));
  const auto trace = run_algorithm2(*bench.game, *bench.objective, bench.geometry, bench.incentives, sched,
                                    NoiseModel{}, vec({0.0}), vec({0.5, 0.5}), quiet_config(100000, 1000));
  CHECK(trace.completed);
  CHECK(std::abs(trace.final_theta[0] - 0.5) <= 2e-2);
  CHECK(trace.mixing_floor_violations == 0);
}

TEST_CASE("uniform profile is a fixed point of a symmetric game") {
  const auto space = StrategySpace::simplex({3});
  const AffineGame game(space, Vector::Constant(3, 0.4), Matrix::Ones(3, 1), -Matrix::Identity(3, 3), vec({1.0}));
  const LambdaObjective f([](const Vector& t, const Vector& x) { return 0.5 * t.squaredNorm() + 0.5 * x.squaredNorm(); },
                          [](const Vector& t, const Vector&) { return Vector(t); },
                          [](const Vector&, const Vector& x) { return Vector(x); });
  const IncentiveSpace box(vec({-1.0}), vec({1.0}));
  const auto sched = ScheduleParams::simplex_profile(0.5, 0.5, vec({1.0}));
  double worst = 0.0;
  RunConfig cfg = quiet_config(2000);
  cfg.observer = [&](const RunState& s) { worst = std::max(worst, (s.x - space.uniform()).cwiseAbs().maxCoeff()); };
  const auto trace = run_algorithm2(game, f, BregmanGeometry::entropy(), box, sched, NoiseModel{}, vec({0.7}),
                                    space.uniform(), cfg);
  CHECK(trace.completed);
  CHECK(worst <= 1e-15);
}

TEST_CASE("mixing floor at every iterate") {
  RoutingSpec spec;
  spec.num_nodes = 2;
  spec.edges = {{0, 1, 1.0, 0.0}, {0, 1, 0.5, 0.2}, {0, 1, 0.0, 1.5}};
  spec.od_pairs = {{0, 1, 1.0, {{0}, {1}, {2}}}};
  spec.kappa = 0.01;
  spec.incentive_lower = Vector::Zero(3);
  spec.incentive_upper = Vector::Ones(3);
  const Benchmark bench = routing_oracle(spec);
  const auto sched = ScheduleParams::simplex_profile(0.5, 2.0, vec({1.0}));
  long long bad = 0;
  RunConfig cfg = quiet_config(5000);
  cfg.observer = [&](const RunState& s) {
    if (!s.nu) return;
    if (s.x.minCoeff() < *s.nu / 3 - 1e-15) ++bad;
  };
  const auto trace = run_algorithm2(*bench.game, *bench.objective, bench.geometry, bench.incentives, sched,
                                    NoiseModel{0.5, 0.5, 3}, Vector::Zero(3), vec({0.98, 0.01, 0.01}), cfg);
  CHECK(trace.completed);
  CHECK(bad == 0);
  CHECK(trace.mixing_floor_violations == 0);
  CHECK(trace.min_coordinate > 0.0);
}

TEST_CASE("identical seeds give identical traces") {
  const Benchmark bench = cournot_oracle(CournotSpec::symmetric(2, 10.0, 2.0, 1.0));
  const auto sched = ScheduleParams::unconstrained_profile(0.5, 0.25, vec({1.0, 1.0}));
  const GapReference ref{vec({-1.5, -1.5}), EquilibriumOptions{}};
  auto go = [&](std::uint64_t seed) {
    return run_algorithm1(*bench.game, *bench.objective, bench.geometry, bench.incentives, sched,
                          NoiseModel{0.1, 0.1, seed}, vec({0.0, 0.0}), vec({0.0, 0.0}), quiet_config(2000), ref);
  };
  const auto a = go(5), b = go(5), c = go(6);
  REQUIRE(a.rows.size() == b.rows.size());
  for (size_t r = 0; r < a.rows.size(); ++r) {
    CHECK(a.rows[r].theta == b.rows[r].theta);
    CHECK(a.rows[r].eps_theta == b.rows[r].eps_theta);
    CHECK(a.rows[r].eps_x == b.rows[r].eps_x);
    CHECK(a.rows[r].vi_residual == b.rows[r].vi_residual);
  }
  CHECK(a.final_theta == b.final_theta);
  CHECK(a.final_theta != c.final_theta);
}

TEST_CASE("trace rows") {
  const Benchmark bench = quadratic_toy(QuadraticToySpec::canonical(1, 1));
  const auto sched = ScheduleParams::unconstrained_profile(0.5, 0.5, vec({1.0}));
  const GapReference ref{vec({0.5}), EquilibriumOptions{}};
  const auto with = run_algorithm1(*bench.game, *bench.objective, bench.geometry, bench.incentives, sched,
                                   NoiseModel{}, vec({0.0}), vec({0.0}), quiet_config(250), ref);
  std::vector<long long> ks;
  for (const auto& r : with.rows) ks.push_back(r.k);
  CHECK(ks == std::vector<long long>{0, 100, 200, 250});
  CHECK(with.rows[0].eps_theta.has_value());
  CHECK_FALSE(with.rows[0].eps_x.has_value());
  CHECK(with.rows[1].eps_x.has_value());
  CHECK(*with.rows[1].eps_theta == doctest::Approx((with.rows[1].theta[0] - 0.5) * (with.rows[1].theta[0] - 0.5)));
  CHECK(with.rows[1].wall_time_ns == 0);
  CHECK(std::isnan(with.min_coordinate));

  const auto without = run_algorithm1(*bench.game, *bench.objective, bench.geometry, bench.incentives, sched,
                                      NoiseModel{}, vec({0.0}), vec({0.0}), quiet_config(250));
  for (const auto& r : without.rows) {
    CHECK_FALSE(r.eps_theta.has_value());
    CHECK_FALSE(r.eps_x.has_value());
  }
}

TEST_CASE("singular Jacobians: one retry, then abort") {
  CournotSpec spec = CournotSpec::symmetric(2, 10.0, 2.0, 1.0);
  const Benchmark bench = cournot_oracle(spec);
  const auto sched = ScheduleParams::unconstrained_profile(0.5, 0.25, vec({1.0, 1.0}));
  auto go = [&](std::set<int> calls) {
    const FlakyJacobian game(bench.game, std::move(calls));
    return run_algorithm1(game, *bench.objective, bench.geometry, bench.incentives, sched, NoiseModel{},
                          vec({0.0, 0.0}), vec({0.3, 0.7}), quiet_config(50));
  };
  const auto once = go({5});
  CHECK(once.completed);
  CHECK(once.singularity_events == 1);
  CHECK(once.iterations == 50);

  const auto twice = go({5, 6});
  CHECK_FALSE(twice.completed);
  CHECK(twice.singularity_events == 2);
  CHECK(twice.iterations == 6);
  CHECK(twice.failure.find("singular") != std::string::npos);

  const auto first = go({0});
  CHECK_FALSE(first.completed);
  CHECK(first.iterations == 0);
}

TEST_CASE("driver validation") {
  const Benchmark cournot = cournot_oracle(CournotSpec::symmetric(2, 10.0, 2.0, 1.0));
  const Benchmark pigou = routing_oracle(RoutingSpec::pigou());
  const auto t1 = ScheduleParams::unconstrained_profile(0.5, 0.5, vec({1.0, 1.0}));
  const auto t2 = ScheduleParams::simplex_profile(0.5, 0.5, vec({1.0}));
  const RunConfig cfg = quiet_config(10);

  CHECK_THROWS_AS(run_algorithm2(*cournot.game, *cournot.objective, cournot.geometry, cournot.incentives, t1,
                                 NoiseModel{}, vec({0.0, 0.0}), vec({0.0, 0.0}), cfg),
                  StructuralError);
  CHECK_THROWS_AS(run_algorithm2(*pigou.game, *pigou.objective, pigou.geometry, pigou.incentives,
                                 ScheduleParams::unconstrained_profile(0.5, 0.5, vec({1.0})), NoiseModel{},
                                 vec({0.0}), vec({0.5, 0.5}), cfg),
                  ParameterError);
  CHECK_THROWS_AS(run_algorithm2(*pigou.game, *pigou.objective, pigou.geometry, pigou.incentives, t2,
                                 NoiseModel{}, vec({0.0}), vec({1.0, 0.0}), cfg),
                  StructuralError);
  CHECK_THROWS_AS(run_algorithm2(*pigou.game, *pigou.objective, pigou.geometry, pigou.incentives, t2,
                                 NoiseModel{}, vec({0.0}), vec({0.6, 0.6}), cfg),
                  StructuralError);
  CHECK_THROWS_AS(run_algorithm1(*cournot.game, *cournot.objective, cournot.geometry, cournot.incentives, t1,
                                 NoiseModel{}, vec({0.0, 0.0}), vec({0.0, 0.0}), quiet_config(0)),
                  ParameterError);
  CHECK_THROWS_AS(run_algorithm1(*cournot.game, *cournot.objective, cournot.geometry, cournot.incentives,
                                 ScheduleParams::unconstrained_profile(0.5, 0.5, vec({1.0})), NoiseModel{},
                                 vec({0.0, 0.0}), vec({0.0, 0.0}), cfg),
                  StructuralError);
}

TEST_CASE("exploratory run without mixing reaches the boundary") {
  // Link 0 costs at least 2, link 1 at most 1: link 0 is strictly dominated.
  RoutingSpec spec;
  spec.num_nodes = 2;
  spec.edges = {{0, 1, 0.0, 2.0}, {0, 1, 1.0, 0.0}};
  spec.od_pairs = {{0, 1, 1.0, {{0}, {1}}}};
  spec.tolled_edges = {0};
  spec.incentive_lower = vec({0.0});
  spec.incentive_upper = vec({1.0});
  const Benchmark bench = routing_oracle(spec);
  ScheduleParams sched = ScheduleParams::simplex_profile(0.5, 1.0, vec({1.0}));
  sched.nu_exp.reset();
  sched.exploratory = true;
  const auto bare = run_algorithm2(*bench.game, *bench.objective, bench.geometry, bench.incentives, sched,
                                   NoiseModel{}, vec({0.0}), vec({1e-6, 1.0 - 1e-6}), quiet_config(50));
  CHECK(bare.completed);
  CHECK(bare.min_coordinate < 1e-12);

  const auto mixed = run_algorithm2(*bench.game, *bench.objective, bench.geometry, bench.incentives,
                                    ScheduleParams::simplex_profile(0.5, 1.0, vec({1.0})), NoiseModel{},
                                    vec({0.0}), vec({1e-6, 1.0 - 1e-6}), quiet_config(50));
  CHECK(mixed.min_coordinate >= std::pow(50.0, -4.0 / 7) / 2 - 1e-15);
  CHECK(mixed.mixing_floor_violations == 0);
}
