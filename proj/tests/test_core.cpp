#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "quench/barrier.hpp"
#include "quench/grid.hpp"
#include "quench/radial.hpp"

using namespace quench;

namespace {

const Mollifier kRho = Mollifier::polynomial_bump();

SymMat random_sym(std::mt19937_64& rng, int n, double scale = 3.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<double> e(n * n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) e[i * n + j] = e[j * n + i] = u(rng);
  return SymMat::from_rows(n, e);
}

}  // namespace

TEST(Model, AlphaMatchesClosedForm) {
  for (double g : {0.1, 0.25, 0.5, 0.75, 0.9}) {
    const SingularityParams p(g, 0.3);
    EXPECT_DOUBLE_EQ(p.alpha(), 1.0 + g / (2.0 - g));
    EXPECT_NEAR(p.alpha() * (g - 1.0), p.alpha() - 2.0, 4e-16);
    EXPECT_DOUBLE_EQ(p.layer(), std::pow(0.3, p.alpha()));
  }
}

TEST(Model, RejectsBadParameters) {
  EXPECT_THROW(SingularityParams(0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(SingularityParams(1.0, 1.0), std::invalid_argument);
  EXPECT_THROW(SingularityParams(0.5, 0.0), std::invalid_argument);
  EXPECT_THROW(SingularityParams(0.5, 1.0, 0.5), std::invalid_argument);
}

TEST(Model, MollifierHasUnitMassAndMatchingPrimitives) {
  double mass = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) mass += kRho.density((i + 0.5) / n) / n;
  EXPECT_NEAR(mass, 1.0, 1e-8);
  for (double s : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    const double d = 1e-6;
    EXPECT_NEAR((kRho.cumulative(s + d) - kRho.cumulative(s - d)) / (2 * d), kRho.density(s), 1e-6);
    EXPECT_NEAR((kRho.density(s + d) - kRho.density(s - d)) / (2 * d), kRho.slope(s), 1e-5);
  }
  EXPECT_EQ(kRho.cumulative(-0.5), 0.0);
  EXPECT_EQ(kRho.cumulative(1.5), 1.0);
}

TEST(Model, BetaSupportBoundAndFullStrength) {
  const SingularityParams p(0.5, 0.1);
  const double lay = p.layer();
  EXPECT_EQ(beta_eps(p, kRho, -1.0), 0.0);
  EXPECT_EQ(beta_eps(p, kRho, 0.25 * lay), 0.0);
  EXPECT_GT(beta_eps(p, kRho, 0.3 * lay), 0.0);
  for (double s : {0.3, 0.7, 1.0, 1.25, 2.0, 5.0}) {
    const double t = s * lay;
    EXPECT_LE(beta_eps(p, kRho, t), 0.5 * std::pow(t, -0.5) * (1 + 1e-15));
  }
  // above (1 + sigma0) eps^alpha the regularization is inactive
  const double t = 2.0 * lay;
  EXPECT_DOUBLE_EQ(beta_eps(p, kRho, t), 0.5 * std::pow(t, -0.5));
}

TEST(Model, BetaDerivativeMatchesDifferenceQuotient) {
  const SingularityParams p(0.75, 0.2);
  for (double s : {0.3, 0.5, 0.8, 1.1, 3.0}) {
    const double t = s * p.layer(), d = 1e-7 * p.layer();
    const double fd = (beta_eps(p, kRho, t + d) - beta_eps(p, kRho, t - d)) / (2 * d);
    EXPECT_NEAR(beta_eps_derivative(p, kRho, t), fd, 1e-5 * std::max(1.0, std::abs(fd)));
  }
}

TEST(Model, ZetaIsTheSupremumOfBeta) {
  for (double g : {0.25, 0.5, 0.75}) {
    const SingularityParams p(g, 0.05);
    const double z = zeta(p, kRho);
    double scan = 0.0;
    for (int i = 0; i <= 100000; ++i) scan = std::max(scan, beta_eps(p, kRho, 3.0 * p.layer() * i / 100000));
    EXPECT_GE(z, scan * (1 - 1e-12));
    EXPECT_LE(z, scan * (1 + 1e-6));
  }
}

TEST(Operators, EigenvaluesOfKnownMatrix) {
  const std::array<double, 4> e{2.0, 1.0, 1.0, 2.0};
  const auto ev = SymMat::from_rows(2, e).eigenvalues();
  EXPECT_NEAR(std::min(ev[0], ev[1]), 1.0, 1e-14);
  EXPECT_NEAR(std::max(ev[0], ev[1]), 3.0, 1e-14);
  const std::array<double, 4> bad{1.0, 2.0, 0.0, 1.0};
  EXPECT_THROW(SymMat::from_rows(2, bad), std::invalid_argument);
}

TEST(Operators, PucciExtremalDefinition) {
  const auto m = SymMat::diag({3.0, -2.0});
  EXPECT_DOUBLE_EQ(pucci_plus(1.0, 2.0, m), 2.0 * 3.0 - 1.0 * 2.0);
  EXPECT_DOUBLE_EQ(pucci_minus(1.0, 2.0, m), 1.0 * 3.0 - 2.0 * 2.0);
  EXPECT_DOUBLE_EQ(eval_operator(EllipticOperator::trace(), m), 1.0);
}

TEST(Operators, UniformEllipticityOnRandomPairs) {
  std::mt19937_64 rng(11);
  const double lam = 1.0, Lam = 2.0;
  for (const auto& op : {EllipticOperator::trace(), EllipticOperator::pucci_plus(lam, Lam),
                         EllipticOperator::pucci_minus(lam, Lam)}) {
    for (int i = 0; i < 2000; ++i) {
      const auto m = random_sym(rng, 2), n = random_sym(rng, 2);
      const double d = eval_operator(op, m + n) - eval_operator(op, m);
      EXPECT_LE(d, pucci_plus(op.lambda(), op.Lambda(), n) + 1e-12);
      EXPECT_GE(d, pucci_minus(op.lambda(), op.Lambda(), n) - 1e-12);
    }
  }
}

TEST(Operators, GradientMatchesDifferenceQuotient) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const auto op = EllipticOperator::pucci_plus(1.0, 3.0);
  for (int i = 0; i < 200; ++i) {
    const double a = u(rng), c = u(rng), b = u(rng), d = 1e-7;
    auto f = [&](double x, double z, double y) {
      const std::array<double, 4> e{x, y, y, z};
      return eval_operator(op, SymMat::from_rows(2, e));
    };
    const auto g = operator_gradient_2x2(op, a, c, b);
    const auto ev = SymMat::from_rows(2, std::array<double, 4>{a, b, b, c}).eigenvalues();
    if (std::abs(ev[0]) < 1e-3 || std::abs(ev[1]) < 1e-3) continue;
    EXPECT_NEAR(g.dxx, (f(a + d, c, b) - f(a - d, c, b)) / (2 * d), 1e-5);
    EXPECT_NEAR(g.dyy, (f(a, c + d, b) - f(a, c - d, b)) / (2 * d), 1e-5);
    EXPECT_NEAR(g.dxy, (f(a, c, b + d) - f(a, c, b - d)) / (2 * d), 1e-5);
  }
}

TEST(Operators, RecessionOfHessianIotaIsTheTracePart) {
  // mu F_iota(M/mu) -> sum_j lambda_j as mu -> 0
  const auto op = EllipticOperator::hessian_iota(3);
  const auto m = SymMat::diag({1.5, -0.5});
  const std::vector<double> mus{1e-1, 5e-2, 2.5e-2, 1.25e-2, 6.25e-3};
  const auto r = recession(op, m, mus, 1e-6);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.value, 1.0, 1e-6);
  EXPECT_THROW(recession(op, m, std::vector<double>{1e-2, 1e-1}), std::invalid_argument);
}

TEST(Operators, ConcavityCertificateForPucci) {
  // M+ is convex, so no certificate with defect 0 can hold for every M;
  // M- is concave and dominated by any Lambda-trace, which certifies it.
  std::mt19937_64 rng(3);
  std::vector<SymMat> samples;
  for (int i = 0; i < 500; ++i) samples.push_back(random_sym(rng, 2));
  const auto minus = EllipticOperator::pucci_minus(1.0, 2.0).with_concavity(SymMat::identity(2) * 2.0, 0.0);
  EXPECT_TRUE(concavity_certificate_check(minus, samples).pass);
  const auto plus = EllipticOperator::pucci_plus(1.0, 2.0).with_concavity(SymMat::identity(2), 0.0);
  EXPECT_FALSE(concavity_certificate_check(plus, samples).pass);
  EXPECT_TRUE(concavity_certificate_check(EllipticOperator::trace(), samples).certificate_missing);
}

TEST(Grid, ClassificationAndRoundTrip) {
  const auto g = make_grid(Grid::square(33, 0.0, 0.0, 1.0));
  std::size_t interior = 0;
  for (std::size_t k = 0; k < g->size(); ++k) interior += g->interior(k);
  EXPECT_EQ(interior, 31u * 31u);
  const auto f = ScalarField::from_function(g, [](const Point& p) { return p[0] + 2 * p[1]; });
  std::stringstream ss;
  write_field(ss, f);
  const auto back = read_field(ss);
  EXPECT_EQ(sup_norm_diff(f, back), 0.0);
  EXPECT_NEAR(f.interpolate({0.3, 0.4}), 1.1, 1e-14);
}

TEST(Radial, TraceShootingReproducesClosedForm) {
  const auto exact = exact_power_profile(0.5);
  const auto shot = radial_shoot(0.5, EllipticOperator::trace(), 1, 1.0);
  ASSERT_EQ(exact.u.size(), shot.u.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < exact.u.size(); ++i) worst = std::max(worst, std::abs(shot.u[i] - exact.u[i]) / exact.u[i]);
  EXPECT_LE(worst, 1e-8);
  EXPECT_NEAR(shot.c_star, std::pow(1.125, 1.0 / 1.5), 1e-14);
}

TEST(Radial, PucciProfilesSolveTheOde) {
  const auto op = EllipticOperator::pucci_plus(1.0, 2.0);
  for (int dim = 1; dim <= 3; ++dim)
    for (double g : {0.25, 0.5, 0.75}) {
      const auto p = radial_shoot(g, op, dim, 1.0);
      EXPECT_LE(ode_residual(p, op).max_relative, 1e-8) << "dim " << dim << " gamma " << g;
      EXPECT_NEAR(profile_exponent(p), alpha_of_gamma(g), 1e-6);
    }
}

TEST(Radial, FornbergWeightsDifferentiatePolynomials) {
  const std::vector<double> x{0.0, 0.3, 0.5, 1.1, 1.6};
  const auto w = fornberg_weights(0.7, x, 1);
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) d += w[i] * std::pow(x[i], 4);
  EXPECT_NEAR(d, 4 * std::pow(0.7, 3), 1e-12);
}

TEST(Barrier, TunedBarrierIsCertified) {
  BarrierSpec s{0.5, 0.25, 1.0, 0.0, 4.0, 2, EllipticOperator::trace()};
  const auto t = tune_amplitude(s);
  s.A = t.A;
  EXPECT_GT(s.A, 0.0);
  EXPECT_LT(s.A, s.amplitude_bound());
  const auto rep = certify_supersolution(s);
  EXPECT_TRUE(rep.pass);
  EXPECT_TRUE(rep.violations.empty());
  EXPECT_LE(rep.value_jump, 1e-12);
  // C^1 across r = eta and flat on B_{c1 eta}
  EXPECT_NEAR(s.value(0.1), 0.5, 1e-15);
  EXPECT_NEAR(s.derivative(s.eta * (1 - 1e-9)), s.derivative(s.eta * (1 + 1e-9)), 1e-6);
}

TEST(Barrier, OversizedAmplitudeFails) {
  BarrierSpec s{0.5, 0.25, 1.0, 0.0, 4.0, 2, EllipticOperator::trace()};
  s.A = tune_amplitude(s).boundary * 4.0;
  EXPECT_FALSE(certify_supersolution(s).pass);
}

TEST(Barrier, RescaledBarrierStaysASupersolution) {
  const auto s = build_barrier(0.5, 0.25, 1.0, EllipticOperator::pucci_plus(1.0, 2.0), 4.0);
  for (double eps : {1.0, 0.1, 0.01}) EXPECT_TRUE(certify_rescaled(rescale_barrier(s, eps)).pass) << eps;
}
