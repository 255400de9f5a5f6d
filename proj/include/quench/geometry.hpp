#pragma once

// Level-set extraction and the geometric estimators run on solver output:
// growth exponents, gradient ratios, densities, Harnack ratios,
// neighborhood volumes, box counts and Hausdorff distances.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>

#include "quench/grid.hpp"
#include "quench/model.hpp"

namespace quench {

class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Nearest-point queries on a planar point cloud.
class PointIndex {
  using BPoint = boost::geometry::model::point<double, 2, boost::geometry::cs::cartesian>;
  using Tree = boost::geometry::index::rtree<BPoint, boost::geometry::index::rstar<16>>;

 public:
  explicit PointIndex(const std::vector<Point>& pts) {
    std::vector<BPoint> b;
    b.reserve(pts.size());
    for (const auto& p : pts) b.emplace_back(p[0], p[1]);
    tree_ = Tree(b.begin(), b.end());
  }

  bool empty() const { return tree_.empty(); }

  double nearest(const Point& p) const {
    if (tree_.empty()) return std::numeric_limits<double>::infinity();
    const BPoint q(p[0], p[1]);
    std::vector<BPoint> hit;
    tree_.query(boost::geometry::index::nearest(q, 1), std::back_inserter(hit));
    return boost::geometry::distance(q, hit.front());
  }

 private:
  Tree tree_;
};

/// The level set {u = threshold}: a node indicator of {u > threshold} and
/// crossing points interpolated linearly along grid edges.
struct FreeBoundarySet {
  double threshold = 0.0;
  GridPtr grid;
  std::vector<std::uint8_t> positive;       // per node
  std::vector<std::uint8_t> boundary_cell;  // node touches a crossing edge
  std::vector<Point> points;
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // endpoints of each crossing

  bool empty() const { return points.empty(); }
  std::size_t positive_count() const {
    return static_cast<std::size_t>(std::count(positive.begin(), positive.end(), 1));
  }
};

inline FreeBoundarySet extract_free_boundary(const ScalarField& u, double threshold) {
  if (!(threshold > 0.0)) throw std::invalid_argument("threshold must be positive");
  const Grid& g = u.grid();
  FreeBoundarySet fb;
  fb.threshold = threshold;
  fb.grid = u.grid_ptr();
  fb.positive.assign(g.size(), 0);
  fb.boundary_cell.assign(g.size(), 0);
  for (std::size_t k = 0; k < g.size(); ++k) fb.positive[k] = g.active(k) && u[k] > threshold;
  auto edge = [&](std::size_t a, std::size_t b) {
    if (!g.active(a) || !g.active(b) || fb.positive[a] == fb.positive[b]) return;
    const double s = (threshold - u[a]) / (u[b] - u[a]);
    const Point pa = g.position(a), pb = g.position(b);
    fb.points.push_back({pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])});
    fb.edges.emplace_back(a, b);
    fb.boundary_cell[a] = fb.boundary_cell[b] = 1;
  };
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      if (i + 1 < g.nx()) edge(g.index(i, j), g.index(i + 1, j));
      if (g.dim() == 2 && j + 1 < g.ny()) edge(g.index(i, j), g.index(i, j + 1));
    }
  return fb;
}

/// Euclidean distance from every node to the crossing-point cloud.
class DistanceField {
 public:
  explicit DistanceField(const FreeBoundarySet& fb)
      : grid_(fb.grid), index_(std::make_shared<PointIndex>(fb.points)) {
    if (fb.empty()) throw GeometryError("empty free boundary: no crossing points");
    values_.resize(grid_->size());
    for (std::size_t k = 0; k < grid_->size(); ++k) values_[k] = index_->nearest(grid_->position(k));
  }

  const Grid& grid() const { return *grid_; }
  double operator[](std::size_t k) const { return values_[k]; }
  const std::vector<double>& values() const { return values_; }
  /// Distance at an arbitrary point.
  double at(const Point& p) const { return index_->nearest(p); }

 private:
  GridPtr grid_;
  std::shared_ptr<PointIndex> index_;
  std::vector<double> values_;
};

inline DistanceField distance_field(const FreeBoundarySet& fb) { return DistanceField(fb); }

/// Crossing point nearest to the grid center, then up to `extra` others drawn
/// without replacement with a fixed seed.
inline std::vector<Point> select_fb_points(const FreeBoundarySet& fb, std::uint64_t seed,
                                           std::size_t extra = 8) {
  if (fb.empty()) throw GeometryError("empty free boundary: no crossing points");
  const Point c = fb.grid->center();
  std::size_t best = 0;
  for (std::size_t i = 1; i < fb.points.size(); ++i)
    if (distance(fb.points[i], c) < distance(fb.points[best], c)) best = i;
  std::vector<Point> out{fb.points[best]};
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < fb.points.size(); ++i)
    if (i != best) rest.push_back(i);
  std::mt19937_64 rng(seed);
  for (std::size_t n = 0; n < extra && !rest.empty(); ++n) {
    std::uniform_int_distribution<std::size_t> pick(0, rest.size() - 1);
    const std::size_t at = pick(rng);
    out.push_back(fb.points[rest[at]]);
    rest[at] = rest.back();
    rest.pop_back();
  }
  return out;
}

/// Geometric sequence of `count` radii from lo to hi.
inline std::vector<double> geometric_scales(double lo, double hi, int count) {
  if (!(lo > 0.0 && hi >= lo) || count < 1) throw std::invalid_argument("bad scale range");
  std::vector<double> r(count);
  for (int i = 0; i < count; ++i)
    r[i] = count == 1 ? lo : lo * std::pow(hi / lo, static_cast<double>(i) / (count - 1));
  return r;
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;  // rms deviation from the fitted line
};

inline LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  LineFit f;
  const double den = n * sxx - sx * sx;
  if (!(den > 0.0)) throw GeometryError("degenerate fit: fewer than two distinct scales");
  f.slope = (n * sxy - sx * sy) / den;
  f.intercept = (sy - f.slope * sx) / n;
  double ss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (f.intercept + f.slope * x[i]);
    ss += e * e;
  }
  f.residual = std::sqrt(ss / n);
  return f;
}

/// sup of u over the closed ball: active nodes inside plus interpolated
/// samples on the sphere that fall in the domain.
inline double ball_sup(const ScalarField& u, const Point& c, double r) {
  const Grid& g = u.grid();
  double s = -std::numeric_limits<double>::infinity();
  g.for_each_in_ball(c, r, [&](std::size_t k) { s = std::max(s, u[k]); });
  auto probe = [&](const Point& p) {
    if (g.contains_ball(p, 0.0)) s = std::max(s, u.interpolate(p));
  };
  if (g.dim() == 1) {
    probe({c[0] - r, 0.0});
    probe({c[0] + r, 0.0});
    return s;
  }
  const int m = std::max(64, static_cast<int>(std::ceil(8.0 * std::numbers::pi * r / g.h())));
  for (int i = 0; i < m; ++i) {
    const double t = 2.0 * std::numbers::pi * i / m;
    probe({c[0] + r * std::cos(t), c[1] + r * std::sin(t)});
  }
  return s;
}

struct GrowthFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;
  double c0 = 0.0;  // min over radii of sup_{B_r} u / r^alpha
  std::vector<double> radii;
  std::vector<double> sups;
};

/// Least-squares slope of log sup_{B_r(center)} u against log r. The sup runs
/// over active nodes, so balls reaching past the boundary are cut by it.
inline GrowthFit growth_exponent_fit(const ScalarField& u, const Point& center,
                                     const std::vector<double>& radii, double alpha) {
  const Grid& g = u.grid();
  GrowthFit out;
  std::vector<double> lx, ly;
  for (double r : radii) {
    if (r < 4.0 * g.h() || r > 2.0 * g.length()) continue;
    const double s = ball_sup(u, center, r);
    if (!(s > 0.0)) continue;
    out.radii.push_back(r);
    out.sups.push_back(s);
    lx.push_back(std::log(r));
    ly.push_back(std::log(s));
  }
  if (out.radii.size() < 4) throw GeometryError("growth fit needs at least 4 radii with positive sup");
  const LineFit f = least_squares(lx, ly);
  out.slope = f.slope;
  out.intercept = f.intercept;
  out.residual = f.residual;
  out.c0 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < out.radii.size(); ++i)
    out.c0 = std::min(out.c0, out.sups[i] / std::pow(out.radii[i], alpha));
  return out;
}

struct GradientReport {
  double max_ratio = 0.0;
  Point at{};
  std::size_t nodes = 0;
};

/// max of |grad_h u|^2 / u^gamma over interior nodes with u > floor, using
/// centered differences.
inline GradientReport gradient_bound_check(const ScalarField& u, double gamma, double floor) {
  const Grid& g = u.grid();
  GradientReport rep;
  for (std::size_t k : g.interior_nodes()) {
    if (!(u[k] > floor)) continue;
    const int i = g.col(k), j = g.row(k);
    const double gx = (u.at(i + 1, j) - u.at(i - 1, j)) / (2.0 * g.h());
    double g2 = gx * gx;
    if (g.dim() == 2) {
      const double gy = (u.at(i, j + 1) - u.at(i, j - 1)) / (2.0 * g.h());
      g2 += gy * gy;
    }
    const double r = g2 / std::pow(u[k], gamma);
    ++rep.nodes;
    if (r > rep.max_ratio) {
      rep.max_ratio = r;
      rep.at = g.position(k);
    }
  }
  return rep;
}

struct RefinementComparison {
  double coarse = 0.0;
  double fine = 0.0;
  double relative_change = 0.0;
  bool pass = false;
};

/// Passes when the two maxima differ by at most `band` relative to the coarse one.
inline RefinementComparison compare_refinement(double coarse, double fine, double band = 0.2) {
  RefinementComparison c{coarse, fine, 0.0, false};
  c.relative_change = std::abs(fine - coarse) / coarse;
  c.pass = std::isfinite(c.relative_change) && c.relative_change <= band;
  return c;
}

namespace detail {

inline void require_ball(const Grid& g, const Point& x, double r, double min_cells) {
  if (r < min_cells * g.h())
    throw GeometryError("radius below " + std::to_string(min_cells) + " grid spacings");
  if (!g.contains_ball(x, r)) throw GeometryError("ball leaves the domain");
}

}  // namespace detail

/// Fraction of nodes of B_delta(X) in the positivity set.
inline double density_ratio(const FreeBoundarySet& fb, const Point& x, double delta) {
  const Grid& g = *fb.grid;
  detail::require_ball(g, x, delta, 4.0);
  std::size_t in = 0, all = 0;
  g.for_each_in_ball(x, delta, [&](std::size_t k) {
    ++all;
    in += fb.positive[k];
  });
  if (all == 0) throw GeometryError("ball contains no nodes");
  return static_cast<double>(in) / static_cast<double>(all);
}

struct ScaleRow {
  double scale = 0.0;
  double raw = 0.0;
  double normalized = 0.0;
};

struct HarnackL1Report {
  double min_ratio = std::numeric_limits<double>::infinity();
  double max_ratio = 0.0;
  std::vector<ScaleRow> table;  // one row per (center, radius)
  bool pass = false;
};

inline double ball_mean(const ScalarField& u, const Point& x, double r) {
  double s = 0.0;
  std::size_t n = 0;
  u.grid().for_each_in_ball(x, r, [&](std::size_t k) {
    s += u[k];
    ++n;
  });
  if (n == 0) throw GeometryError("ball contains no nodes");
  return s / static_cast<double>(n);
}

/// min over centers and radii of (mean of u over B_rho) / rho^alpha.
inline HarnackL1Report l1_harnack_check(const ScalarField& u, const std::vector<Point>& centers,
                                        const std::vector<double>& radii, double alpha) {
  HarnackL1Report rep;
  for (const auto& c : centers)
    for (double r : radii) {
      detail::require_ball(u.grid(), c, r, 4.0);
      const double m = ball_mean(u, c, r);
      const double q = m / std::pow(r, alpha);
      rep.table.push_back({r, m, q});
      rep.min_ratio = std::min(rep.min_ratio, q);
      rep.max_ratio = std::max(rep.max_ratio, q);
    }
  if (rep.table.empty()) throw GeometryError("no centers or radii");
  rep.pass = rep.min_ratio > 0.0;
  return rep;
}

/// sup / inf of u over B_{d/2}(X0), d the distance from X0 to the free boundary.
inline double tangential_harnack_ratio(const ScalarField& u, const DistanceField& dist, const Point& x0) {
  const Grid& g = u.grid();
  const double d = dist.at(x0);
  if (d < 8.0 * g.h()) throw GeometryError("distance to the free boundary below 8 grid spacings");
  double hi = -std::numeric_limits<double>::infinity();
  double lo = std::numeric_limits<double>::infinity();
  g.for_each_in_ball(x0, 0.5 * d, [&](std::size_t k) {
    hi = std::max(hi, u[k]);
    lo = std::min(lo, u[k]);
  });
  if (!(lo > 0.0)) throw GeometryError("u vanishes inside the tangential ball");
  return hi / lo;
}

struct NeighborhoodVolume {
  double volume = 0.0;
  double ratio = 0.0;  // volume / (mu rho^(N-1))
};

/// Cell-counted measure of {dist to the crossing cloud < mu} inside B_rho(X0).
inline NeighborhoodVolume neighborhood_volume(const FreeBoundarySet& fb, const DistanceField& dist,
                                              const Point& x0, double rho, double mu) {
  const Grid& g = *fb.grid;
  detail::require_ball(g, x0, rho, 4.0);
  if (mu < 2.0 * g.h() * (1.0 - 1e-12)) throw GeometryError("mu below 2 grid spacings");
  if (mu > rho / 8.0 * (1.0 + 1e-12)) throw GeometryError("mu must not exceed rho/8");
  std::size_t n = 0;
  g.for_each_in_ball(x0, rho, [&](std::size_t k) { n += dist[k] < mu; });
  NeighborhoodVolume v;
  v.volume = static_cast<double>(n) * g.cell_volume();
  v.ratio = v.volume / (mu * std::pow(rho, g.dim() - 1));
  return v;
}

struct BoxCount {
  double slope = 0.0;
  double residual = 0.0;
  double min_constant = 0.0;  // count mu^(N-1) / rho^(N-1)
  double max_constant = 0.0;
  std::vector<ScaleRow> table;  // scale mu, raw count, normalized constant
};

/// Number of size-mu boxes, aligned at X0 - rho, meeting the crossing points
/// inside B_rho(X0); slope of log count against log(1/mu).
inline BoxCount surface_measure_boxcount(const FreeBoundarySet& fb, const Point& x0, double rho,
                                         const std::vector<double>& sizes) {
  if (sizes.size() < 4) throw GeometryError("box counting needs at least 4 scales");
  const int n = fb.grid->dim();
  std::vector<Point> inside;
  for (const auto& p : fb.points)
    if (distance(p, x0) < rho) inside.push_back(p);
  BoxCount out;
  std::vector<double> lx, ly;
  out.min_constant = std::numeric_limits<double>::infinity();
  for (double mu : sizes) {
    if (!(mu > 0.0)) throw std::invalid_argument("box sizes must be positive");
    std::set<std::pair<long, long>> boxes;
    for (const auto& p : inside)
      boxes.emplace(static_cast<long>(std::floor((p[0] - x0[0] + rho) / mu)),
                    static_cast<long>(std::floor((p[1] - x0[1] + rho) / mu)));
    const double count = static_cast<double>(boxes.size());
    const double constant = count * std::pow(mu / rho, n - 1);
    out.table.push_back({mu, count, constant});
    out.min_constant = std::min(out.min_constant, constant);
    out.max_constant = std::max(out.max_constant, constant);
    if (count > 0) {
      lx.push_back(std::log(1.0 / mu));
      ly.push_back(std::log(count));
    }
  }
  if (lx.size() < 4) throw GeometryError("degenerate box count: empty boxes at some scales");
  const LineFit f = least_squares(lx, ly);
  out.slope = f.slope;
  out.residual = f.residual;
  return out;
}

/// Symmetric Hausdorff distance between two crossing clouds.
inline double hausdorff_distance(const FreeBoundarySet& a, const FreeBoundarySet& b) {
  if (a.empty() || b.empty()) throw GeometryError("hausdorff distance of an empty cloud");
  const PointIndex ia(a.points), ib(b.points);
  double d = 0.0;
  for (const auto& p : a.points) d = std::max(d, ib.nearest(p));
  for (const auto& p : b.points) d = std::max(d, ia.nearest(p));
  return d;
}

struct SphericalMeanReport {
  double min_ratio = std::numeric_limits<double>::infinity();
  double max_ratio = 0.0;
  std::vector<ScaleRow> table;
  bool pass = false;
};

/// Mean of u over the sphere of radius rho around x0: the two points x0 -+ rho
/// in 1D, a trapezoid rule on the circle with interpolated values in 2D.
inline double spherical_mean(const ScalarField& u, const Point& x0, double rho) {
  const Grid& g = u.grid();
  if (g.dim() == 1) return 0.5 * (u.interpolate({x0[0] - rho, 0.0}) + u.interpolate({x0[0] + rho, 0.0}));
  const int m = std::max(64, static_cast<int>(std::ceil(8.0 * std::numbers::pi * rho / g.h())));
  double s = 0.0;
  for (int i = 0; i < m; ++i) {
    const double t = 2.0 * std::numbers::pi * i / m;
    s += u.interpolate({x0[0] + rho * std::cos(t), x0[1] + rho * std::sin(t)});
  }
  return s / m;
}

inline SphericalMeanReport spherical_mean_check(const ScalarField& u, const Point& x0,
                                                const std::vector<double>& radii, double alpha) {
  const Grid& g = u.grid();
  SphericalMeanReport rep;
  for (double r : radii) {
    detail::require_ball(g, x0, r, 4.0);
    const double m = spherical_mean(u, x0, r);
    const double q = m / std::pow(r, alpha);
    rep.table.push_back({r, m, q});
    rep.min_ratio = std::min(rep.min_ratio, q);
    rep.max_ratio = std::max(rep.max_ratio, q);
  }
  if (rep.table.size() < 4) throw GeometryError("spherical means need at least 4 radii");
  rep.pass = rep.min_ratio > 0.0 && std::isfinite(rep.max_ratio);
  return rep;
}

}  // namespace quench
