#pragma once

// Closed-form cases for the geometry estimators on u = c (x1 - a)_+^alpha.

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "quench/geometry.hpp"

namespace synthetic {

using namespace quench;

struct Case {
  std::string name;
  double value;
  double expected;
  double tolerance;  // absolute
  bool pass;
};

struct Setup {
  double gamma = 0.5;
  double alpha = alpha_of_gamma(0.5);
  double c = 1.0;
  GridPtr grid;
  ScalarField u;
};

/// [-1,1]^2 with 257 nodes per side, plane at x1 = 0.
inline Setup half_space(double gamma = 0.5, int n = 257) {
  Setup s;
  s.gamma = gamma;
  s.alpha = alpha_of_gamma(gamma);
  s.c = std::pow((2.0 - gamma) * (2.0 - gamma) / 2.0, 1.0 / (2.0 - gamma));
  s.grid = make_grid(Grid::square(n, -1.0, -1.0, 2.0));
  const double a = s.alpha, c = s.c;
  s.u = ScalarField::from_function(s.grid, [=](const Point& p) { return c * std::pow(std::max(p[0], 0.0), a); });
  return s;
}

inline FreeBoundarySet manual_cloud(const GridPtr& g, std::vector<Point> pts) {
  FreeBoundarySet fb;
  fb.threshold = 1.0;
  fb.grid = g;
  fb.positive.assign(g->size(), 0);
  fb.boundary_cell.assign(g->size(), 0);
  fb.points = std::move(pts);
  return fb;
}

inline Point nearest_to(const FreeBoundarySet& fb, const Point& x) {
  Point best = fb.points.front();
  for (const auto& p : fb.points)
    if (distance(p, x) < distance(best, x)) best = p;
  return best;
}

/// (1/|B_1|) integral over the unit disk of (t_1)_+^alpha.
inline double disk_mean_oracle(double a) {
  using boost::math::quadrature::gauss_kronrod;
  const double v = gauss_kronrod<double, 61>::integrate(
      [a](double t) { return std::pow(t, a) * 2.0 * std::sqrt(1.0 - t * t); }, 0.0, 1.0, 10, 1e-14);
  return v / std::numbers::pi;
}

/// Mean over the unit circle of (cos t)_+^alpha.
inline double circle_mean_oracle(double a) {
  return std::tgamma(0.5 * (a + 1.0)) / (2.0 * std::sqrt(std::numbers::pi) * std::tgamma(0.5 * a + 1.0));
}

inline std::vector<Case> run_suite() {
  std::vector<Case> out;
  auto add = [&](const std::string& name, double v, double e, double tol) {
    out.push_back({name, v, e, tol, std::isfinite(v) && std::abs(v - e) <= tol});
  };
  auto throws = [](auto&& fn) {
    try {
      fn();
    } catch (const std::exception&) {
      return 1.0;
    }
    return 0.0;
  };

  const Setup s = half_space();
  const Grid& g = *s.grid;
  const double h = g.h(), a = s.alpha;
  const Point origin{0.0, 0.0};

  // crossing plane at (t/c)^(1/alpha)
  {
    const double t = 0.01;
    const auto fb = extract_free_boundary(s.u, t);
    const double plane = std::pow(t / s.c, 1.0 / a);
    double worst = 0.0;
    for (const auto& p : fb.points) worst = std::max(worst, std::abs(p[0] - plane));
    add("extract.crossing_plane", worst, 0.0, h);
    const auto full = extract_free_boundary(ScalarField::from_function(s.grid, [](const Point&) { return 2.0; }), 1.0);
    add("extract.constant_empty_cloud", static_cast<double>(full.points.size()), 0.0, 0.0);
    add("extract.constant_full_indicator", static_cast<double>(full.positive_count()), static_cast<double>(g.size()), 0.0);
    const auto none = extract_free_boundary(ScalarField(s.grid), 1.0);
    add("extract.zero_empty_indicator", static_cast<double>(none.positive_count()), 0.0, 0.0);
  }

  const auto fb = extract_free_boundary(s.u, 1e-12);
  const auto dist = distance_field(fb);
  const Point x0 = nearest_to(fb, origin);

  // distance field
  {
    double worst = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) worst = std::max(worst, std::abs(dist[k] - std::abs(g.position(k)[0])));
    add("distance.plane", worst, 0.0, h);
    const auto single = manual_cloud(s.grid, {{0.1, -0.2}});
    const DistanceField ds(single);
    worst = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) worst = std::max(worst, std::abs(ds[k] - distance(g.position(k), {0.1, -0.2})));
    add("distance.single_point", worst, 0.0, 1e-12);
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<std::size_t> pick(0, g.size() - 1);
    double excess = 0.0;
    for (int i = 0; i < 2000; ++i) {
      const std::size_t p = pick(rng), q = pick(rng);
      excess = std::max(excess, std::abs(dist[p] - dist[q]) - distance(g.position(p), g.position(q)));
    }
    add("distance.lipschitz_excess", std::max(excess, 0.0), 0.0, 1e-12);
    add("distance.empty_rejected", throws([&] { distance_field(extract_free_boundary(ScalarField(s.grid), 1.0)); }), 1.0, 0.0);
  }

  // growth exponent
  {
    const auto f = growth_exponent_fit(s.u, x0, geometric_scales(0.05, 0.5, 8), a);
    add("growth.slope_on_plane", f.slope, a, 0.02);
    add("growth.zero_rejected",
        throws([&] { growth_exponent_fit(ScalarField(s.grid), origin, geometric_scales(0.05, 0.5, 8), a); }), 1.0, 0.0);
  }

  // gradient ratio: constant on the 1D profile, zero on constants
  {
    const auto line = make_grid(Grid::interval(1025, 0.0, 1.0));
    const auto prof = ScalarField::from_function(line, [&](const Point& p) { return s.c * std::pow(p[0], a); });
    double lo = 1e300, hi = 0.0;
    for (std::size_t k : line->interior_nodes()) {
      const double x = line->position(k)[0];
      if (x < 0.05) continue;
      const double d = (prof[k + 1] - prof[k - 1]) / (2.0 * line->h());
      const double r = d * d / std::pow(prof[k], s.gamma);
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
    add("gradient.profile_relative_spread", (hi - lo) / hi, 0.0, 0.01);
    const auto flat = ScalarField::from_function(s.grid, [](const Point&) { return 3.0; });
    add("gradient.constant_zero", gradient_bound_check(flat, s.gamma, 0.0).max_ratio, 0.0, 0.0);
  }

  // density
  for (double d : {0.1, 0.2, 0.4})
    add("density.half_ball_" + std::to_string(d).substr(0, 3), density_ratio(fb, x0, d), 0.5, h / d);
  add("density.interior_one", density_ratio(fb, {0.5, 0.0}, 0.2), 1.0, 0.0);

  // L1 Harnack: mean over B_rho of c (x1)_+^alpha is c rho^alpha times a constant
  {
    const double k = s.c * disk_mean_oracle(a);
    double prev = 0.0;
    for (double r : {0.1, 0.2, 0.4}) {
      const auto rep = l1_harnack_check(s.u, {x0}, {r}, a);
      add("harnack_l1.rho_" + std::to_string(r).substr(0, 3), rep.min_ratio, k, k * h / r);
      if (prev > 0.0) add("harnack_l1.doubling_" + std::to_string(r).substr(0, 3), rep.min_ratio / prev, 1.0, 2.0 * h / r);
      prev = rep.min_ratio;
    }
    add("harnack_l1.zero", ball_mean(ScalarField(s.grid), x0, 0.2), 0.0, 0.0);
  }

  // tangential Harnack: extremes of x^alpha over [d/2, 3d/2]
  for (double d : {0.25, 0.5}) {
    const double q = tangential_harnack_ratio(s.u, dist, {d, 0.0});
    add("tangential.depth_" + std::to_string(d).substr(0, 4), q, std::pow(3.0, a), std::pow(3.0, a) * 3.0 * a * h / d);
  }
  {
    const auto flat = ScalarField::from_function(s.grid, [](const Point&) { return 3.0; });
    add("tangential.constant", tangential_harnack_ratio(flat, dist, {0.5, 0.0}), 1.0, 0.0);
  }

  // neighborhood volume: slab 2 mu wide through B_rho gives ratio 2 omega_1 = 4
  {
    const double rho = 0.5;
    for (double mu = 2.0 * h; mu <= rho / 8.0 + 1e-12; mu *= 2.0)
      add("neighborhood.plane_mu_" + std::to_string(static_cast<int>(std::lround(mu / h))) + "h",
          neighborhood_volume(fb, dist, x0, rho, mu).ratio, 4.0, 4.0 * h / mu);
    const auto point = manual_cloud(s.grid, {x0});
    const DistanceField dp(point);
    const double mu = 2.0 * h;
    const double v = neighborhood_volume(point, dp, x0, rho, mu).ratio;
    add("neighborhood.point_small", v, std::numbers::pi * mu / rho, std::numbers::pi * mu / rho);
  }

  // box counting
  {
    const double rho = 0.5;
    const auto sizes = geometric_scales(2.0 * h, rho / 4.0, 8);
    add("boxcount.segment_slope", surface_measure_boxcount(fb, x0, rho, sizes).slope, 1.0, 0.1);
    const auto point = manual_cloud(s.grid, {x0});
    add("boxcount.point_slope", surface_measure_boxcount(point, x0, rho, sizes).slope, 0.0, 1e-12);
  }

  // Hausdorff distance
  {
    add("hausdorff.identical", hausdorff_distance(fb, fb), 0.0, 0.0);
    std::vector<Point> pa, pb;
    for (int j = 0; j < 65; ++j) {
      pa.push_back({-0.3, -1.0 + j / 32.0});
      pb.push_back({0.15, -1.0 + j / 32.0});
    }
    add("hausdorff.parallel_planes", hausdorff_distance(manual_cloud(s.grid, pa), manual_cloud(s.grid, pb)), 0.45, 1e-12);
    const auto f1 = extract_free_boundary(s.u, 0.01), f2 = extract_free_boundary(s.u, 0.1);
    const double gap = std::pow(0.1 / s.c, 1.0 / a) - std::pow(0.01 / s.c, 1.0 / a);
    add("hausdorff.level_planes", hausdorff_distance(f1, f2), gap, h);
  }

  // spherical mean of c (x1)_+^alpha over circles centred on the plane
  {
    const double k = s.c * circle_mean_oracle(a);
    const auto rep = spherical_mean_check(s.u, x0, {0.05, 0.1, 0.2, 0.4}, a);
    for (const auto& row : rep.table)
      add("spherical.rho_" + std::to_string(row.scale).substr(0, 4), row.normalized, k, 0.01 * k);
    add("spherical.zero", spherical_mean(ScalarField(s.grid), x0, 0.2), 0.0, 0.0);
  }
  return out;
}

}  // namespace synthetic
