#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "quench/solver.hpp"

using namespace quench;

namespace {

double c_star(double gamma) { return std::pow((2.0 - gamma) * (2.0 - gamma) / 2.0, 1.0 / (2.0 - gamma)); }

ProblemSpec planar_1d(int nodes, int stages = 0, double gamma = 0.5) {
  const auto g = make_grid(Grid::interval(nodes, 0.0, 1.0));
  const double c = c_star(gamma), a = alpha_of_gamma(gamma);
  ProblemSpec s{SingularityParams(gamma, resolution_floor(*g, gamma)),
                Mollifier::polynomial_bump(),
                EllipticOperator::trace(),
                g,
                [=](const Point& p) { return c * std::pow(std::max(p[0], 0.0), a); },
                SolverTolerances{},
                stages};
  return s;
}

ProblemSpec square_2d(int nodes, EllipticOperator op, BoundaryRule datum, double eps) {
  return {SingularityParams(0.5, eps), Mollifier::polynomial_bump(), op,
          make_grid(Grid::square(nodes, 0.0, 0.0, 1.0)), std::move(datum), SolverTolerances{}, 0};
}

double max_violation(const ScalarField& lo, const ScalarField& hi) {
  double v = 0.0;
  for (std::size_t k = 0; k < lo.size(); ++k) v = std::max(v, lo[k] - hi[k]);
  return v;
}

}  // namespace

TEST(Solver, DiscreteHessianIsExactOnQuadratics) {
  const auto g = make_grid(Grid::square(33, -1.0, -1.0, 2.0));
  const auto u = ScalarField::from_function(g, [](const Point& p) {
    return 1.5 * p[0] * p[0] - 0.7 * p[0] * p[1] + 0.25 * p[1] * p[1] + p[0] - 3.0;
  });
  for (std::size_t k : g->interior_nodes()) {
    const auto m = discrete_hessian(u, k);
    EXPECT_NEAR(m(0, 0), 3.0, 1e-10);
    EXPECT_NEAR(m(1, 1), 0.5, 1e-10);
    EXPECT_NEAR(m(0, 1), -0.7, 1e-10);
  }
}

TEST(Solver, ResolutionFloor) {
  const Grid g = Grid::interval(1025, 0.0, 1.0);
  EXPECT_DOUBLE_EQ(resolution_floor(g, 0.5), 4.0 * std::pow(g.h(), 0.75));
}

TEST(Solver, RejectsHessianIotaAndBadData) {
  auto s = planar_1d(65);
  s.op = EllipticOperator::hessian_iota(3);
  EXPECT_THROW(solve_minimal(s), std::invalid_argument);
  auto t = planar_1d(65);
  t.datum = [](const Point&) { return -1.0; };
  EXPECT_THROW(solve_minimal(t), std::invalid_argument);
}

TEST(Solver, ZeroDatumGivesZero) {
  auto s = square_2d(33, EllipticOperator::trace(), [](const Point&) { return 0.0; }, 0.5);
  const auto r = solve_minimal(s);
  ASSERT_TRUE(r.converged);
  EXPECT_EQ(sup_norm(r.u), 0.0);
}

TEST(Solver, SolutionIsSandwichedAndConverged) {
  for (const auto& op : {EllipticOperator::trace(), EllipticOperator::pucci_plus(1.0, 2.0),
                         EllipticOperator::pucci_minus(1.0, 2.0)}) {
    auto s = square_2d(33, op, [](const Point& p) { return 0.2 * std::pow(std::max(p[0] - 0.3, 0.0), 4.0 / 3.0); },
                       resolution_floor(Grid::square(33, 0.0, 0.0, 1.0), 0.5));
    const auto r = solve_minimal(s);
    ASSERT_TRUE(r.converged) << to_string(op.kind());
    EXPECT_LE(r.residual, r.effective_tolerance);
    EXPECT_LE(max_violation(r.u_star, r.u), 1e-10);
    EXPECT_LE(max_violation(r.u, r.u_upper), 1e-10);
    EXPECT_LE(sup_norm(residual(s, r.u)), r.effective_tolerance * (1 + 1e-9));
    for (double v : r.u.values()) EXPECT_GE(v, 0.0);
  }
}

TEST(Solver, ComparisonInTheBoundaryData) {
  for (const auto& op : {EllipticOperator::trace(), EllipticOperator::pucci_plus(1.0, 2.0)}) {
    const double eps = resolution_floor(Grid::square(33, 0.0, 0.0, 1.0), 0.5);
    auto lo = square_2d(33, op, [](const Point& p) { return 0.3 * p[0] * p[0]; }, eps);
    auto hi = square_2d(33, op, [](const Point& p) { return 0.3 * p[0] * p[0] + 0.1 * p[1]; }, eps);
    const auto a = solve_minimal(lo), b = solve_minimal(hi);
    ASSERT_TRUE(a.converged && b.converged);
    EXPECT_LE(max_violation(a.u, b.u), 1e-9) << to_string(op.kind());
  }
}

TEST(Solver, DiscreteMaximumPrinciple) {
  // F(D^2 z) = 1 with z = 0 on the boundary forces z <= 0 inside.
  for (const auto& op : {EllipticOperator::trace(), EllipticOperator::pucci_plus(1.0, 2.0),
                         EllipticOperator::pucci_minus(1.0, 2.0)}) {
    const auto g = make_grid(Grid::square(33, 0.0, 0.0, 1.0));
    const detail::Discretization disc(g, op);
    const auto z = detail::solve_constant_rhs(disc, g, [](const Point&) { return 0.0; }, 1.0, 1e-10, 60, "unit");
    double top = -1.0;
    for (std::size_t k : g->interior_nodes()) top = std::max(top, z[k]);
    EXPECT_LT(top, 0.0) << to_string(op.kind());
  }
}

TEST(Solver, SingleStageSweepMatchesSolveMinimal) {
  const auto s = planar_1d(129);
  const auto direct = solve_minimal(s);
  const auto sw = continuation_sweep(s);
  ASSERT_TRUE(sw.complete);
  ASSERT_EQ(sw.stages.size(), 1u);
  EXPECT_EQ(sup_norm_diff(direct.u, sw.stages.front().u), 0.0);
}

TEST(Solver, SweepScheduleHalvesEpsilon) {
  const auto s = planar_1d(257, 4);
  const auto eps = s.schedule();
  ASSERT_EQ(eps.size(), 5u);
  for (std::size_t k = 0; k < eps.size(); ++k) EXPECT_DOUBLE_EQ(eps[k], s.params.epsilon() * std::ldexp(1.0, 4 - static_cast<int>(k)));
  const auto sw = continuation_sweep(s);
  ASSERT_TRUE(sw.complete);
  EXPECT_EQ(sw.sup_differences.size(), 4u);
}

TEST(Solver, OneDimensionalErrorDecreasesUnderRefinement) {
  double prev = 1e300;
  for (int n : {129, 257, 513, 1025}) {
    const auto s = planar_1d(n, 4);
    const auto sw = continuation_sweep(s);
    ASSERT_TRUE(sw.complete);
    const auto exact = ScalarField::from_function(s.grid, s.datum);
    const double err = sup_norm_diff(sw.stages.back().u, exact) / sup_norm(exact);
    EXPECT_LT(err, prev) << n;
    prev = err;
  }
  EXPECT_LT(prev, 0.02);
}

TEST(Solver, EnvelopesForZeroAndConstantData) {
  const auto g = make_grid(Grid::interval(65, 0.0, 1.0));
  ProblemSpec s{SingularityParams(0.5, 0.1), Mollifier::polynomial_bump(), EllipticOperator::trace(), g,
                [](const Point&) { return 0.0; }, SolverTolerances{}, 0};
  const auto env = solve_envelopes(s);
  EXPECT_NEAR(env.zeta, zeta(s.params, s.mollifier), 1e-12 * env.zeta);
  for (std::size_t k = 0; k < g->size(); ++k) {
    const double x = g->position(k)[0];
    EXPECT_EQ(env.upper[k], 0.0);
    EXPECT_NEAR(env.lower[k], env.zeta * x * (x - 1.0) / 2.0, 1e-10 * env.zeta);
  }
  for (const auto& op : {EllipticOperator::trace(), EllipticOperator::pucci_plus(1.0, 2.0)}) {
    auto c = square_2d(33, op, [](const Point&) { return 2.5; }, 0.1);
    const auto e = solve_envelopes(c);
    for (std::size_t k = 0; k < e.upper.size(); ++k) EXPECT_NEAR(e.upper[k], 2.5, 1e-12);
  }
}

TEST(Solver, LargeConstantDatumLeavesNoFreeBoundary) {
  const double eps = 0.1;
  const SingularityParams p(0.5, eps);
  const double z = zeta(p, Mollifier::polynomial_bump());
  // M - zeta diam^2 / 2 > eps^alpha with diam^2 = 2
  const double m = z + 2.0 * p.layer() + 1.0;
  auto s = square_2d(33, EllipticOperator::trace(), [=](const Point&) { return m; }, eps);
  const auto r = solve_minimal(s);
  ASSERT_TRUE(r.converged);
  double lo = 1e300;
  for (double v : r.u.values()) lo = std::min(lo, v);
  EXPECT_GT(lo, p.layer());
  EXPECT_GE(lo, m - z - 1e-9);
}

TEST(Solver, ZeroDatumSweepStaysZero) {
  auto s = square_2d(33, EllipticOperator::trace(), [](const Point&) { return 0.0; }, 0.2);
  s.stages = 3;
  const auto sw = continuation_sweep(s);
  ASSERT_TRUE(sw.complete);
  for (const auto& st : sw.stages) EXPECT_EQ(sup_norm(st.u), 0.0);
}

TEST(Solver, DiscreteComparisonOnRandomPairs) {
  // v = w + z with z a random convex-plus-linear perturbation shifted to be
  // <= 0 on the boundary; whenever F(D^2_h v) >= F(D^2_h w) holds at every
  // interior node the scheme must give v <= w.
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.0, 1.0);
  const auto g = make_grid(Grid::square(33, 0.0, 0.0, 1.0));
  for (const auto& op : {EllipticOperator::trace(), EllipticOperator::pucci_plus(1.0, 2.0),
                         EllipticOperator::pucci_minus(1.0, 2.0)}) {
    const detail::Discretization disc(g, op);
    int tested = 0;
    for (int trial = 0; trial < 100; ++trial) {
      const double w1 = u(rng), w2 = u(rng), w3 = u(rng), w4 = u(rng);
      const auto w = ScalarField::from_function(g, [&](const Point& x) {
        return w1 * std::sin(3 * x[0] + w2) + w3 * x[0] * x[1] + w4 * std::cos(2 * x[1]);
      });
      const double a = pos(rng), k1 = 2 * u(rng), k2 = 2 * u(rng), b1 = u(rng), b2 = u(rng);
      auto z = ScalarField::from_function(g, [&](const Point& x) {
        return a * std::exp(k1 * x[0] + k2 * x[1]) + b1 * x[0] + b2 * x[1];
      });
      double top = -1e300;
      for (std::size_t k = 0; k < g->size(); ++k)
        if (g->node_class(k) == NodeClass::Boundary) top = std::max(top, z[k]);
      const double drop = top + 0.1 * pos(rng);
      ScalarField v = w;
      for (std::size_t k = 0; k < g->size(); ++k) v[k] += z[k] - drop;
      bool hyp = true;
      for (std::size_t k : g->interior_nodes()) hyp = hyp && disc.apply_at(v, k) >= disc.apply_at(w, k) - 1e-12;
      if (!hyp) continue;
      ++tested;
      double worst = -1e300;
      for (std::size_t k = 0; k < g->size(); ++k) worst = std::max(worst, v[k] - w[k]);
      EXPECT_LE(worst, 1e-12) << to_string(op.kind()) << " trial " << trial;
    }
    EXPECT_GE(tested, 50) << to_string(op.kind());
  }
}
