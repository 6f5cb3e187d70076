#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "incentive/games.hpp"
#include "incentive/stability.hpp"
#include "test_support.hpp"

using namespace incentive;
using incentive::testing::AffineGame;
using incentive::testing::vec;

namespace {

Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

// Pigou-like two-link game on one simplex: v = -(1, x_2 + theta).
AffineGame pigou_like(double lambda) {
  const Matrix b = -Matrix::Identity(2, 2).rightCols(1);
  return AffineGame(StrategySpace::simplex({2}), vec({-1.0, 0.0}), b, mat2(0, 0, 0, -1), vec({lambda}));
}

}  // namespace

TEST_CASE("weighted Jacobian scales player rows") {
  const AffineGame g(StrategySpace::full_space({1, 1}), vec({0, 0}), Matrix::Zero(2, 1), mat2(1, 2, 3, 4),
                     vec({2.0, 0.5}));
  const Matrix h = weighted_jacobian(g, vec({0.0}), vec({0.0, 0.0}));
  CHECK(h == mat2(2, 4, 1.5, 2));
}

TEST_CASE("unconstrained condition on Cournot") {
  const auto samples = draw_samples(box_sampler(vec({-5, -5}), vec({5, 5})), 50, 3);
  const Benchmark strong = cournot_oracle(CournotSpec::symmetric(2, 10.0, 2.0, 1.0));
  // d v / d x = -[[4, 2], [2, 4]]; the symmetric part doubled has eigenvalues -4 and -12.
  const auto r = check_stability_unconstrained(*strong.game, vec({0.0, 0.0}), samples,
                                               strong.geometry.smoothness_h_psi());
  CHECK(r.holds);
  CHECK(r.samples == 50);
  CHECK(r.violations == 0);
  CHECK(r.threshold == -2.0);
  CHECK(r.max_eigenvalue == doctest::Approx(-4.0).epsilon(1e-12));
  CHECK(r.worst_margin == doctest::Approx(2.0).epsilon(1e-12));

  const Benchmark weak = cournot_oracle(CournotSpec::symmetric(2, 10.0, 0.4, 1.0));
  const auto w = check_stability_unconstrained(*weak.game, vec({0.0, 0.0}), samples, 1.0);
  CHECK_FALSE(w.holds);
  CHECK(w.violations == 50);
  CHECK(w.max_eigenvalue == doctest::Approx(-0.8).epsilon(1e-12));

  const AffineGame zero(StrategySpace::full_space({1, 1}), vec({0, 0}), Matrix::Zero(2, 1),
                        Matrix::Zero(2, 2), vec({1.0, 1.0}));
  CHECK_FALSE(check_stability_unconstrained(zero, vec({0.0}), samples, 1.0).holds);
  CHECK_FALSE(check_stability_unconstrained(zero, vec({0.0}), {}, 1.0).holds);
}

TEST_CASE("simplex condition") {
  const StrategySpace s2 = StrategySpace::simplex({2});
  const auto inner = draw_samples(dirichlet_sampler(s2, 0.05), 200, 5);

  // The entropy term alone is positive definite on the tangent space.
  const AffineGame idle(s2, vec({0, 0}), Matrix::Zero(2, 1), Matrix::Zero(2, 2), vec({1.0}));
  const auto r0 = check_stability_simplex(idle, vec({0.0}), inner);
  CHECK_FALSE(r0.holds);
  CHECK(r0.violations == 200);

  // Tangent form: -lambda + 1/x_1 + 1/x_2 <= -lambda + 40 on these samples.
  CHECK(check_stability_simplex(pigou_like(100.0), vec({0.0}), inner).holds);
  const auto unit = check_stability_simplex(pigou_like(1.0), vec({0.0}), inner);
  CHECK_FALSE(unit.holds);
  CHECK(unit.max_eigenvalue >= 3.0);

  CHECK_THROWS_AS(check_stability_simplex(pigou_like(1.0), vec({0.0}), {vec({1.0, 0.0})}), DomainError);
  const Benchmark cournot = cournot_oracle(CournotSpec::symmetric(2, 10.0, 2.0, 1.0));
  CHECK_THROWS_AS(check_stability_simplex(*cournot.game, vec({0.0, 0.0}), inner), StructuralError);
}

TEST_CASE("simplex condition matches the tangent quadratic form") {
  std::mt19937_64 rng(11);
  const StrategySpace space = StrategySpace::simplex({2});
  for (int t = 0; t < 200; ++t) {
    const double lambda = std::uniform_real_distribution<double>(0.5, 50.0)(rng);
    const StrategyProfile x = testing::random_simplex_profile(rng, space, 0.01);
    // Only tangent direction is (1, -1) / sqrt 2.
    const double form = -lambda + 1.0 / x[0] + 1.0 / x[1];
    const auto r = check_stability_simplex(pigou_like(lambda), vec({0.0}), {x});
    CHECK(r.max_eigenvalue == doctest::Approx(form).epsilon(1e-10));
    CHECK(r.holds == (form < 0.0));
  }
}

TEST_CASE("tangent basis is orthonormal and feasible") {
  const StrategySpace space = StrategySpace::simplex({3, 1, 4});
  const Matrix z = simplex_tangent_basis(space);
  REQUIRE(z.rows() == 8);
  REQUIRE(z.cols() == 5);
  CHECK((z.transpose() * z - Matrix::Identity(5, 5)).norm() <= 1e-12);
  for (int i = 0; i < space.num_blocks(); ++i) {
    CHECK(z.middleRows(space.offset(i), space.block_dim(i)).colwise().sum().norm() <= 1e-12);
  }
}

TEST_CASE("condition implies variational stability on affine games") {
  std::mt19937_64 rng(13);
  const StrategySpace space = StrategySpace::full_space({2, 1});
  const BregmanGeometry geom = BregmanGeometry::euclidean(space);
  int held = 0;
  for (int t = 0; t < 40; ++t) {
    Matrix m(3, 3);
    for (int j = 0; j < 3; ++j) m.col(j) = testing::random_normal(rng, 3);
    m -= 2.0 * Matrix::Identity(3, 3);
    const Vector b = testing::random_normal(rng, 3);
    const AffineGame g(space, b, Matrix::Zero(3, 1), m, vec({1.0, 1.0}));
    const auto r = check_stability_unconstrained(g, vec({0.0}), {Vector::Zero(3)}, 1.0);
    if (!r.holds) continue;
    ++held;
    const Vector x_star = -m.lu().solve(b);
    int violations = 0;
    for (int s = 0; s < 1000; ++s) {
      const Vector x = x_star + testing::random_normal(rng, 3, 5.0);
      if (variational_stability_margin(g, geom, vec({0.0}), x_star, x) < 0.0) ++violations;
    }
    CHECK(violations == 0);
  }
  CHECK(held >= 5);
}

TEST_CASE("Cournot equilibria are variationally stable") {
  std::mt19937_64 rng(17);
  const Benchmark bench = cournot_oracle(CournotSpec::symmetric(2, 10.0, 2.0, 1.0));
  const Vector theta = vec({0.5, -0.3});
  const Vector x_star = cournot_equilibrium(CournotSpec::symmetric(2, 10.0, 2.0, 1.0), theta);
  int violations = 0;
  for (int s = 0; s < 1000; ++s) {
    const Vector x = testing::random_uniform(rng, 2, -5.0, 5.0);
    if (variational_stability_margin(*bench.game, bench.geometry, theta, x_star, x) < -1e-12) ++violations;
  }
  CHECK(violations == 0);
}

TEST_CASE("samplers") {
  const StrategySpace space = StrategySpace::simplex({3, 2});
  const auto pts = draw_samples(dirichlet_sampler(space, 0.1), 500, 1);
  for (const auto& x : pts) {
    CHECK(x.minCoeff() >= 0.1 - 1e-15);
    CHECK(std::abs(x.head(3).sum() - 1.0) <= 1e-12);
    CHECK(std::abs(x.tail(2).sum() - 1.0) <= 1e-12);
  }
  CHECK(draw_samples(dirichlet_sampler(space), 5, 9) == draw_samples(dirichlet_sampler(space), 5, 9));
  CHECK_THROWS_AS(dirichlet_sampler(space, 0.5), ParameterError);
  CHECK_THROWS_AS(dirichlet_sampler(StrategySpace::full_space({2})), StructuralError);
  CHECK_THROWS_AS(box_sampler(vec({1.0}), vec({0.0})), StructuralError);
  for (const auto& x : draw_samples(box_sampler(vec({-1, 2}), vec({1, 3})), 200, 2)) {
    CHECK(x[0] >= -1.0);
    CHECK(x[0] <= 1.0);
    CHECK(x[1] >= 2.0);
    CHECK(x[1] <= 3.0);
  }
}

TEST_CASE("incentive grid") {
  const IncentiveSpace box(vec({0.0, -1.0}), vec({1.0, 1.0}));
  const auto g = incentive_grid(box, 3);
  REQUIRE(g.size() == 9);
  CHECK(g.front() == vec({0.0, -1.0}));
  CHECK(g[1] == vec({0.5, -1.0}));
  CHECK(g.back() == vec({1.0, 1.0}));
  CHECK(incentive_grid(box, 1).front() == vec({0.5, 0.0}));
  CHECK(incentive_grid(box, 64).size() == 4096);
  CHECK_THROWS_AS(incentive_grid(box, 65), ParameterError);
  CHECK_THROWS_AS(incentive_grid(box, 0), ParameterError);
}

TEST_CASE("constants of the one-dimensional quadratic") {
  const Benchmark bench = quadratic_toy(QuadraticToySpec::canonical(1, 1));
  ConstantsOptions opts;
  opts.n_samples = 200;
  const auto grid = incentive_grid(bench.incentives, 5);
  const auto r = estimate_constants(*bench.game, *bench.objective, bench.geometry, grid,
                                    box_sampler(vec({-3.0}), vec({3.0})), opts);
  // v = theta - x, D = 1/2 dx^2: every pair gives |dv|^2 / D = 2.
  CHECK(r.H_u == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK(r.rho_theta == doctest::Approx(1.0));
  CHECK(r.rho_x == doctest::Approx(1.0));
  CHECK(r.H_star == doctest::Approx(1.0));
  CHECK(r.H_tilde_star == doctest::Approx(2.0));
  // Extended gradient = theta - 1 + x.
  CHECK(r.H_tilde == doctest::Approx(std::sqrt(2.0)).epsilon(1e-9));
  CHECK(r.H_psi == 1.0);
  // f_*(theta) = 1/2 (theta - 1)^2 + 1/2 theta^2.
  CHECK(r.mu_hat == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(r.M_hat == doctest::Approx(21.0).epsilon(1e-6));
  CHECK(r.V_star_hat <= 1e-9);
  CHECK(r.samples == 200);
  CHECK(r.theta_points == 5);
  CHECK(r.skipped_singular == 0);
}

TEST_CASE("constants: payoffs independent of the incentive") {
  const StrategySpace space = StrategySpace::full_space({2});
  const AffineGame g(space, vec({1.0, 2.0}), Matrix::Zero(2, 1), -Matrix::Identity(2, 2), vec({1.0}));
  const testing::LambdaObjective f([](const Vector& t, const Vector&) { return t.squaredNorm(); },
                                   [](const Vector& t, const Vector&) -> Vector { return 2.0 * t; },
                                   [](const Vector&, const Vector& x) -> Vector { return Vector::Zero(x.size()); });
  ConstantsOptions opts;
  opts.n_samples = 50;
  const auto r = estimate_constants(g, f, BregmanGeometry::euclidean(space), {vec({0.0}), vec({1.0})},
                                    box_sampler(vec({-1, -1}), vec({1, 1})), opts);
  CHECK(r.rho_theta == 0.0);
  CHECK(r.H_star == 0.0);
  CHECK(r.H_tilde == 0.0);
  CHECK(r.num_players == 1);
  CHECK(r.strategy_dim == 2);
}

TEST_CASE("constants are monotone in the sample size") {
  const Benchmark bench = routing_oracle(RoutingSpec::pigou());
  const auto grid = incentive_grid(bench.incentives, 4);
  const auto sampler = dirichlet_sampler(bench.game->space(), 0.05);
  ConstantsReport prev;
  for (int n : {10, 40, 160, 640}) {
    ConstantsOptions opts;
    opts.n_samples = n;
    opts.seed = 21;
    const auto r = estimate_constants(*bench.game, *bench.objective, bench.geometry, grid, sampler, opts);
    if (n > 10) {
      CHECK(r.H_u >= prev.H_u);
      CHECK(r.H_tilde >= prev.H_tilde);
      CHECK(r.rho_theta >= prev.rho_theta);
      CHECK(r.rho_x <= prev.rho_x);
      CHECK(r.M_hat == prev.M_hat);
    }
    CHECK(r.samples == n);
    prev = r;
  }
  CHECK(prev.H_u > 0.0);
  ConstantsOptions bad;
  bad.n_samples = 1;
  CHECK_THROWS_AS(estimate_constants(*bench.game, *bench.objective, bench.geometry, grid, sampler, bad),
                  ParameterError);
  CHECK_THROWS_AS(estimate_constants(*bench.game, *bench.objective, bench.geometry, {}, sampler, {}),
                  ParameterError);
}
