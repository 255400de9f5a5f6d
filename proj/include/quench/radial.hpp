#pragma once

// Self-similar radial profiles u = c r^alpha of F(D^2 u) = gamma u^(gamma-1)
// and a shooting integrator for the radial ODE of rotation-invariant F.

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "quench/model.hpp"
#include "quench/operators.hpp"

namespace quench {

struct RadialProfile {
  double gamma = 0.5;
  OperatorKind kind = OperatorKind::Trace;
  int dim = 1;
  double alpha = 0.0;
  double c_star = 0.0;
  double r0 = 0.0;
  int restarts = 0;
  std::vector<double> r;
  std::vector<double> u;
  std::vector<double> du;
};

/// Radial Hessian of c r^alpha at r = 1: diag(alpha(alpha-1), alpha, ...).
inline double power_coefficient(double gamma, const EllipticOperator& op, int dim) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0,1)");
  if (dim < 1 || dim > 3) throw std::invalid_argument("dimension must be 1, 2 or 3");
  if (!op.is_positively_homogeneous())
    throw std::invalid_argument("power profiles need a positively homogeneous operator");
  const double a = alpha_of_gamma(gamma);
  std::array<double, 3> ev{a * (a - 1.0), a, a};
  const double f = op.eval_spectrum(std::span<const double>(ev.data(), dim));
  if (!(f > 0.0)) throw std::invalid_argument("operator is not positive on the power profile");
  return std::pow(gamma / f, 1.0 / (2.0 - gamma));
}

inline std::vector<double> geometric_radii(double r0, double r_max, int count) {
  if (!(r0 > 0.0 && r_max > r0) || count < 2) throw std::invalid_argument("bad radius range");
  std::vector<double> r(count);
  const double q = std::log(r_max / r0) / (count - 1);
  for (int i = 0; i < count; ++i) r[i] = r0 * std::exp(q * i);
  r.back() = r_max;
  return r;
}

/// u(x) = c x^alpha with c^(2-gamma) = (2-gamma)^2 / 2.
inline RadialProfile exact_power_profile(double gamma, double r_max = 1.0, int samples = 1401) {
  RadialProfile p;
  p.gamma = gamma;
  p.kind = OperatorKind::Trace;
  p.dim = 1;
  p.alpha = alpha_of_gamma(gamma);
  p.c_star = std::pow((2.0 - gamma) * (2.0 - gamma) / 2.0, 1.0 / (2.0 - gamma));
  p.r0 = 1e-6 * r_max;
  p.r = geometric_radii(p.r0, r_max, samples);
  for (double x : p.r) {
    p.u.push_back(p.c_star * std::pow(x, p.alpha));
    p.du.push_back(p.c_star * p.alpha * std::pow(x, p.alpha - 1.0));
  }
  return p;
}

namespace detail {

/// Solves eval_eigen(x) = target for the piecewise linear eigenvalue map.
inline double invert_eigen(const EllipticOperator& op, double target) {
  const double slope = target >= 0.0 ? op.eval_eigen(1.0) : -op.eval_eigen(-1.0);
  return target / slope;
}

}  // namespace detail

/// Integrates F(diag(u'', u'/r, ...)) = gamma u^(gamma-1) outward from
/// r0 = 1e-6 r_max. In the variables v = u r^-alpha, w = u' r^(1-alpha),
/// s = log r the system is autonomous:
///   v' = w - alpha v,   w' = G(v, w) + (1 - alpha) w,
/// with G = r^(2-alpha) u'' read off the equation.
inline RadialProfile radial_shoot(double gamma, const EllipticOperator& op, int dim, double r_max,
                                  int samples = 1401, double rel_tol = 1e-10) {
  if (op.kind() == OperatorKind::HessianIota)
    throw std::invalid_argument("radial shooting needs a Trace or Pucci operator");
  if (!(r_max > 0.0)) throw std::invalid_argument("r_max must be positive");
  namespace ode = boost::numeric::odeint;
  using State = std::array<double, 2>;

  const double a = alpha_of_gamma(gamma);
  const double c = power_coefficient(gamma, op, dim);
  auto rhs = [&](const State& x, State& dx, double) {
    const double v = x[0], w = x[1];
    const double tangential = (dim - 1) * op.eval_eigen(w);
    const double g = detail::invert_eigen(op, gamma * std::pow(v, gamma - 1.0) - tangential);
    dx[0] = w - a * v;
    dx[1] = g + (1.0 - a) * w;
  };

  RadialProfile p;
  p.gamma = gamma;
  p.kind = op.kind();
  p.dim = dim;
  p.alpha = a;
  p.c_star = c;
  double r0 = 1e-6 * r_max;
  for (int attempt = 0; attempt < 4; ++attempt, r0 *= 1e-2) {
    const auto radii = geometric_radii(r0, r_max, samples);
    std::vector<double> times(radii.size());
    std::transform(radii.begin(), radii.end(), times.begin(), [](double x) { return std::log(x); });
    std::vector<State> states;
    bool ok = true;
    try {
      State x{c, a * c};
      auto stepper = ode::make_dense_output(1e-2 * rel_tol * c, rel_tol, ode::runge_kutta_dopri5<State>());
      ode::integrate_times(stepper, rhs, x, times.begin(), times.end(), 1e-3,
                           [&](const State& s, double) {
                             if (!(s[0] > 0.0) || !std::isfinite(s[1])) ok = false;
                             states.push_back(s);
                           });
    } catch (const std::exception&) {
      ok = false;
    }
    if (!ok || states.size() != radii.size()) {
      ++p.restarts;
      continue;
    }
    p.r0 = r0;
    p.r = radii;
    p.u.clear();
    p.du.clear();
    for (std::size_t i = 0; i < radii.size(); ++i) {
      p.u.push_back(states[i][0] * std::pow(radii[i], a));
      p.du.push_back(states[i][1] * std::pow(radii[i], a - 1.0));
    }
    return p;
  }
  throw Error("radial shooting failed after shrinking r0 " + std::to_string(p.restarts) + " times");
}

/// Finite-difference weights for the m-th derivative at z on arbitrary nodes.
inline std::vector<double> fornberg_weights(double z, std::span<const double> x, int m) {
  const int n = static_cast<int>(x.size()) - 1;
  std::vector<std::vector<double>> c(n + 1, std::vector<double>(m + 1, 0.0));
  double c1 = 1.0, c4 = x[0] - z;
  c[0][0] = 1.0;
  for (int i = 1; i <= n; ++i) {
    const int mn = std::min(i, m);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = x[i] - z;
    for (int j = 0; j < i; ++j) {
      const double c3 = x[i] - x[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k) c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
        c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
      }
      for (int k = mn; k >= 1; --k) c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
      c[j][0] = c4 * c[j][0] / c3;
    }
    c1 = c2;
  }
  std::vector<double> w(n + 1);
  for (int i = 0; i <= n; ++i) w[i] = c[i][m];
  return w;
}

struct OdeResidual {
  double max_relative = 0.0;
  double at_radius = 0.0;
};

/// max over samples of |F(diag(u'', u'/r, ...)) - gamma u^(gamma-1)| / gamma u^(gamma-1),
/// with u'' from a 7-point stencil applied to the tabulated u'.
inline OdeResidual ode_residual(const RadialProfile& p, const EllipticOperator& op) {
  const std::size_t n = p.r.size();
  if (n < 7) throw std::invalid_argument("profile too short for the residual stencil");
  OdeResidual out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = std::min(i >= 3 ? i - 3 : 0, n - 7);
    const auto w = fornberg_weights(p.r[i], std::span<const double>(p.r.data() + lo, 7), 1);
    double upp = 0.0;
    for (int k = 0; k < 7; ++k) upp += w[k] * p.du[lo + k];
    std::array<double, 3> ev{upp, p.du[i] / p.r[i], p.du[i] / p.r[i]};
    const double lhs = op.eval_spectrum(std::span<const double>(ev.data(), p.dim));
    const double rhs = p.gamma * std::pow(p.u[i], p.gamma - 1.0);
    const double rel = std::abs(lhs - rhs) / rhs;
    if (rel > out.max_relative) {
      out.max_relative = rel;
      out.at_radius = p.r[i];
    }
  }
  return out;
}

/// Least-squares slope of log u against log r.
inline double profile_exponent(const RadialProfile& p) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(p.r.size());
  for (std::size_t i = 0; i < p.r.size(); ++i) {
    const double x = std::log(p.r[i]), y = std::log(p.u[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// Linear interpolation of u at radius x inside the sampled range.
inline double profile_value(const RadialProfile& p, double x) {
  if (x < p.r.front() || x > p.r.back()) throw std::out_of_range("radius outside the profile");
  const auto it = std::upper_bound(p.r.begin(), p.r.end(), x);
  if (it == p.r.end()) return p.u.back();
  const std::size_t j = static_cast<std::size_t>(it - p.r.begin());
  const double t = (x - p.r[j - 1]) / (p.r[j] - p.r[j - 1]);
  return (1.0 - t) * p.u[j - 1] + t * p.u[j];
}

inline void write_profile_csv(std::ostream& os, const RadialProfile& p) {
  os.precision(17);
  os << "# gamma=" << p.gamma << " operator=" << to_string(p.kind) << " dim=" << p.dim
     << " alpha=" << p.alpha << " c_star=" << p.c_star << "\n";
  os << "r,u,du\n";
  for (std::size_t i = 0; i < p.r.size(); ++i) os << p.r[i] << ',' << p.u[i] << ',' << p.du[i] << '\n';
}

inline void write_profile_csv(const std::string& path, const RadialProfile& p) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path);
  write_profile_csv(os, p);
}

}  // namespace quench
