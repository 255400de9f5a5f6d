#pragma once

// Uniform grids on an interval, a square, or a disk masked out of a square,
// and node-valued scalar fields with the plain-text field file format.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "quench/model.hpp"

namespace quench {

enum class DomainShape { Interval, Square, Disk };

inline std::string to_string(DomainShape s) {
  switch (s) {
    case DomainShape::Interval: return "interval";
    case DomainShape::Square: return "square";
    case DomainShape::Disk: return "disk";
  }
  return "?";
}

inline DomainShape domain_shape_from_string(const std::string& s) {
  if (s == "interval") return DomainShape::Interval;
  if (s == "square") return DomainShape::Square;
  if (s == "disk") return DomainShape::Disk;
  throw std::invalid_argument("unknown domain shape '" + s + "'");
}

enum class NodeClass : std::uint8_t { Interior, Boundary, Exterior };

using Point = std::array<double, 2>;

inline double distance(const Point& a, const Point& b) {
  return std::hypot(a[0] - b[0], a[1] - b[1]);
}

class Grid {
 public:
  /// n odd nodes on [x0, x0 + length].
  static Grid interval(int n, double x0, double length) {
    check_nodes(n);
    Grid g(1, n, 1, length / (n - 1), x0, 0.0, DomainShape::Interval);
    g.classify();
    return g;
  }

  /// n x n nodes on [x0, x0+length] x [y0, y0+length].
  static Grid square(int n, double x0, double y0, double length) {
    check_nodes(n);
    Grid g(2, n, n, length / (n - 1), x0, y0, DomainShape::Square);
    g.classify();
    return g;
  }

  /// Disk inscribed in the square [x0, x0+length]^2, realized as a node mask.
  static Grid disk(int n, double x0, double y0, double length) {
    check_nodes(n);
    Grid g(2, n, n, length / (n - 1), x0, y0, DomainShape::Disk);
    g.classify();
    return g;
  }

  /// Grid described by a field-file header; no node-count restriction
  /// beyond having an interior.
  static Grid from_header(int dim, int nx, int ny, double h, double x0, double y0) {
    if (dim != 1 && dim != 2) throw std::invalid_argument("field dimension must be 1 or 2");
    if (nx < 3 || (dim == 2 && ny < 3) || (dim == 1 && ny != 1))
      throw std::invalid_argument("field header has too few nodes");
    if (!(h > 0.0)) throw std::invalid_argument("field spacing must be positive");
    Grid g(dim, nx, ny, h, x0, y0, dim == 1 ? DomainShape::Interval : DomainShape::Square);
    g.classify();
    return g;
  }

  int dim() const { return dim_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  double h() const { return h_; }
  double x0() const { return x0_; }
  double y0() const { return y0_; }
  DomainShape shape() const { return shape_; }
  std::size_t size() const { return static_cast<std::size_t>(nx_) * ny_; }

  std::size_t index(int i, int j = 0) const { return static_cast<std::size_t>(j) * nx_ + i; }
  int col(std::size_t k) const { return static_cast<int>(k % nx_); }
  int row(std::size_t k) const { return static_cast<int>(k / nx_); }

  Point position(std::size_t k) const {
    return {x0_ + h_ * col(k), dim_ == 2 ? y0_ + h_ * row(k) : 0.0};
  }

  Point center() const {
    return {x0_ + 0.5 * h_ * (nx_ - 1), dim_ == 2 ? y0_ + 0.5 * h_ * (ny_ - 1) : 0.0};
  }

  /// Extent of the bounding box along x.
  double length() const { return h_ * (nx_ - 1); }

  NodeClass node_class(std::size_t k) const { return classes_[k]; }
  bool active(std::size_t k) const { return classes_[k] != NodeClass::Exterior; }
  bool interior(std::size_t k) const { return classes_[k] == NodeClass::Interior; }

  const std::vector<std::size_t>& interior_nodes() const { return interior_; }

  /// Cell measure h^N.
  double cell_volume() const { return dim_ == 1 ? h_ : h_ * h_; }

  /// Does the closed ball B_r(p) stay inside the bounding box?
  bool contains_ball(const Point& p, double r) const {
    const double slack = 1e-9 * h_;
    if (p[0] - r < x0_ - slack || p[0] + r > x0_ + length() + slack) return false;
    if (dim_ == 2 && (p[1] - r < y0_ - slack || p[1] + r > y0_ + h_ * (ny_ - 1) + slack))
      return false;
    if (shape_ == DomainShape::Disk) {
      const auto c = center();
      if (distance(p, c) + r > 0.5 * length() + slack) return false;
    }
    return true;
  }

  /// Visit active node indices inside the open ball B_r(p).
  template <typename Fn>
  void for_each_in_ball(const Point& p, double r, Fn&& fn) const {
    const int i_lo = std::max(0, static_cast<int>(std::floor((p[0] - r - x0_) / h_)));
    const int i_hi = std::min(nx_ - 1, static_cast<int>(std::ceil((p[0] + r - x0_) / h_)));
    int j_lo = 0, j_hi = 0;
    if (dim_ == 2) {
      j_lo = std::max(0, static_cast<int>(std::floor((p[1] - r - y0_) / h_)));
      j_hi = std::min(ny_ - 1, static_cast<int>(std::ceil((p[1] + r - y0_) / h_)));
    }
    for (int j = j_lo; j <= j_hi; ++j)
      for (int i = i_lo; i <= i_hi; ++i) {
        const std::size_t k = index(i, j);
        if (!active(k)) continue;
        if (distance(position(k), p) < r) fn(k);
      }
  }

  bool operator==(const Grid& o) const {
    return dim_ == o.dim_ && nx_ == o.nx_ && ny_ == o.ny_ && h_ == o.h_ && x0_ == o.x0_ &&
           y0_ == o.y0_ && shape_ == o.shape_;
  }

 private:
  Grid(int dim, int nx, int ny, double h, double x0, double y0, DomainShape shape)
      : dim_(dim), nx_(nx), ny_(ny), h_(h), x0_(x0), y0_(y0), shape_(shape) {}

  static void check_nodes(int n) {
    if (n < 33 || n % 2 == 0) throw std::invalid_argument("points per axis must be odd and >= 33");
  }

  void classify() {
    classes_.assign(size(), NodeClass::Exterior);
    std::vector<char> in(size(), 1);
    if (shape_ == DomainShape::Disk) {
      const auto c = center();
      const double radius = 0.5 * length() * (1.0 + 1e-12);
      for (std::size_t k = 0; k < size(); ++k) in[k] = distance(position(k), c) <= radius;
    }
    for (std::size_t k = 0; k < size(); ++k) {
      if (!in[k]) continue;
      const int i = col(k), j = row(k);
      bool inner = i > 0 && i < nx_ - 1;
      if (dim_ == 2) {
        inner = inner && j > 0 && j < ny_ - 1;
        for (int dj = -1; inner && dj <= 1; ++dj)
          for (int di = -1; inner && di <= 1; ++di) inner = in[index(i + di, j + dj)];
      }
      classes_[k] = inner ? NodeClass::Interior : NodeClass::Boundary;
      if (inner) interior_.push_back(k);
    }
  }

  int dim_;
  int nx_;
  int ny_;
  double h_;
  double x0_;
  double y0_;
  DomainShape shape_;
  std::vector<NodeClass> classes_;
  std::vector<std::size_t> interior_;
};

using GridPtr = std::shared_ptr<const Grid>;

inline GridPtr make_grid(Grid g) { return std::make_shared<const Grid>(std::move(g)); }

class ScalarField {
 public:
  ScalarField() = default;
  explicit ScalarField(GridPtr grid, double fill = 0.0)
      : grid_(std::move(grid)), values_(grid_->size(), fill) {}
  ScalarField(GridPtr grid, std::vector<double> values)
      : grid_(std::move(grid)), values_(std::move(values)) {
    if (values_.size() != grid_->size()) throw std::invalid_argument("field size mismatch");
  }

  template <typename Fn>
  static ScalarField from_function(GridPtr grid, Fn&& fn) {
    ScalarField f(grid);
    for (std::size_t k = 0; k < grid->size(); ++k)
      if (grid->active(k)) f.values_[k] = fn(grid->position(k));
    return f;
  }

  const Grid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t k) const { return values_[k]; }
  double& operator[](std::size_t k) { return values_[k]; }
  double at(int i, int j = 0) const { return values_[grid_->index(i, j)]; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  /// Bilinear (linear in 1D) interpolation; the point must lie in the box.
  double interpolate(const Point& p) const {
    const Grid& g = *grid_;
    const double fx = (p[0] - g.x0()) / g.h();
    int i = std::clamp(static_cast<int>(std::floor(fx)), 0, g.nx() - 2);
    const double tx = fx - i;
    if (g.dim() == 1) return (1.0 - tx) * at(i) + tx * at(i + 1);
    const double fy = (p[1] - g.y0()) / g.h();
    int j = std::clamp(static_cast<int>(std::floor(fy)), 0, g.ny() - 2);
    const double ty = fy - j;
    return (1.0 - tx) * (1.0 - ty) * at(i, j) + tx * (1.0 - ty) * at(i + 1, j) +
           (1.0 - tx) * ty * at(i, j + 1) + tx * ty * at(i + 1, j + 1);
  }

 private:
  GridPtr grid_;
  std::vector<double> values_;
};

/// max |a - b| over active nodes.
inline double sup_norm_diff(const ScalarField& a, const ScalarField& b) {
  if (!(a.grid() == b.grid())) throw std::invalid_argument("fields live on different grids");
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    if (a.grid().active(k)) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

inline double sup_norm(const ScalarField& a) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    if (a.grid().active(k)) m = std::max(m, std::abs(a[k]));
  return m;
}

// Field file: header "N nx ny h x0 y0", then ny lines of nx values.

inline void write_field(std::ostream& os, const ScalarField& f) {
  const Grid& g = f.grid();
  os << std::setprecision(17);
  os << g.dim() << ' ' << g.nx() << ' ' << g.ny() << ' ' << g.h() << ' ' << g.x0() << ' '
     << g.y0() << '\n';
  for (int j = 0; j < g.ny(); ++j) {
    for (int i = 0; i < g.nx(); ++i) {
      if (i) os << ' ';
      os << f.at(i, j);
    }
    os << '\n';
  }
}

inline void write_field(const std::string& path, const ScalarField& f) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write_field(os, f);
}

inline ScalarField read_field(std::istream& is) {
  int dim = 0, nx = 0, ny = 0;
  double h = 0.0, x0 = 0.0, y0 = 0.0;
  std::string header;
  if (!std::getline(is, header)) throw Error("field file is empty");
  std::istringstream hs(header);
  if (!(hs >> dim >> nx >> ny >> h >> x0 >> y0)) throw Error("malformed field header");
  auto grid = make_grid(Grid::from_header(dim, nx, ny, h, x0, y0));
  std::vector<double> values;
  values.reserve(grid->size());
  std::string line;
  for (int j = 0; j < ny; ++j) {
    if (!std::getline(is, line)) throw Error("field file ended early");
    std::istringstream ls(line);
    for (int i = 0; i < nx; ++i) {
      double v;
      if (!(ls >> v)) throw Error("field row " + std::to_string(j) + " is short");
      if (!std::isfinite(v)) throw Error("field contains non-finite values");
      values.push_back(v);
    }
  }
  return ScalarField(grid, std::move(values));
}

inline ScalarField read_field(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open field file '" + path + "'");
  return read_field(is);
}

}  // namespace quench
