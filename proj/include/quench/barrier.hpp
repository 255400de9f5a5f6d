#pragma once

// Piecewise radial supersolution theta:
//   2 sigma0                                       for r <= c1 eta
//   (A alpha^2/2) eta^(alpha-2) (r - c1 eta)^2 + 2 sigma0   for c1 eta < r <= eta
//   A r^alpha + 2 sigma0 - (A/2) eta^alpha          for r > eta
// with c1 = gamma/2, so that alpha (1 - c1) = 1.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "quench/model.hpp"
#include "quench/operators.hpp"

namespace quench {

struct BarrierSpec {
  double gamma = 0.5;
  double sigma0 = 0.25;
  double eta = 1.0;
  double A = 0.0;
  double M = 4.0;
  int dim = 2;
  EllipticOperator op = EllipticOperator::trace();

  double alpha() const { return alpha_of_gamma(gamma); }
  double c1() const { return gamma / 2.0; }
  double a0() const { return A * alpha() * alpha() * std::pow(eta, alpha() - 2.0) / 2.0; }
  double B() const { return 2.0 * sigma0 - 0.5 * A * std::pow(eta, alpha()); }
  double amplitude_bound() const { return 2.0 * sigma0 / std::pow(M, alpha()); }

  double value(double r) const {
    r = std::abs(r);
    if (r <= c1() * eta) return 2.0 * sigma0;
    if (r <= eta) {
      const double d = r - c1() * eta;
      return a0() * d * d + 2.0 * sigma0;
    }
    return A * std::pow(r, alpha()) + B();
  }

  double derivative(double r) const {
    r = std::abs(r);
    if (r <= c1() * eta) return 0.0;
    if (r <= eta) return 2.0 * a0() * (r - c1() * eta);
    return A * alpha() * std::pow(r, alpha() - 1.0);
  }

  /// Radial and tangential Hessian eigenvalues at |X| = r.
  std::array<double, 2> hessian_eigenvalues(double r) const {
    r = std::abs(r);
    const double a = alpha();
    if (r <= c1() * eta) return {0.0, 0.0};
    if (r <= eta) {
      const double k = A * a * a * std::pow(eta, a - 2.0);
      return {k, k * (1.0 - c1() * eta / r)};
    }
    return {A * a * (a - 1.0) * std::pow(r, a - 2.0), A * a * std::pow(r, a - 2.0)};
  }

  double operator_value(double r) const {
    const auto e = hessian_eigenvalues(r);
    std::array<double, 3> ev{e[0], e[1], e[1]};
    return op.eval_spectrum(std::span<const double>(ev.data(), dim));
  }
};

struct BarrierViolation {
  double radius;
  double lhs;
  double rhs;
};

struct CertificationReport {
  bool pass = false;
  double margin = 1e-8;
  std::size_t samples = 0;
  std::size_t refined_samples = 0;
  double worst_inner = 0.0;
  double worst_annulus = 0.0;
  double worst_outer = 0.0;
  bool annulus_envelope = true;
  bool outer_envelope = true;
  bool monotone = true;
  double value_jump = 0.0;
  double slope_jump = 0.0;
  double c2 = 0.0;
  std::vector<BarrierViolation> violations;
};

namespace detail {

inline void certify_mesh(const BarrierSpec& s, const Mollifier& rho, std::size_t n,
                         CertificationReport& rep) {
  const SingularityParams unit(s.gamma, 1.0, s.sigma0);
  const double a = s.alpha();
  const double Lam = s.op.Lambda();
  const double ann_cap = Lam * s.dim * s.A * a * a * std::pow(s.eta, a - 2.0);
  const double out_cap = Lam * s.dim * s.A * a * std::pow(s.eta, a - 2.0);
  std::vector<double> radii;
  radii.reserve(n + 3);
  for (std::size_t i = 0; i <= n; ++i) radii.push_back(s.M * static_cast<double>(i) / n);
  radii.push_back(s.c1() * s.eta);
  radii.push_back(s.eta);
  std::sort(radii.begin(), radii.end());
  double prev = -1.0;
  for (double r : radii) {
    const double th = s.value(r);
    if (th < prev) rep.monotone = false;
    prev = th;
    const double lhs = s.operator_value(r);
    const double rhs = beta_eps(unit, rho, th);
    const double gap = rhs - lhs;
    const double tol = 1e-12 * std::max(1.0, std::abs(lhs));
    if (r <= s.c1() * s.eta) {
      rep.worst_inner = std::min(rep.worst_inner, gap);
    } else if (r <= s.eta) {
      rep.worst_annulus = std::min(rep.worst_annulus, gap);
      if (lhs > ann_cap + tol) rep.annulus_envelope = false;
    } else {
      rep.worst_outer = std::min(rep.worst_outer, gap);
      if (lhs > out_cap + tol) rep.outer_envelope = false;
    }
    if (gap < rep.margin) rep.violations.push_back({r, lhs, rhs});
  }
}

}  // namespace detail

/// Checks F(D^2 theta) <= beta_1(theta) + margin on a uniform radial mesh of
/// [0, M] and again on a mesh ten times finer.
inline CertificationReport certify_supersolution(const BarrierSpec& s,
                                                 const Mollifier& rho = Mollifier::polynomial_bump(),
                                                 std::size_t samples = 10000, double margin = 1e-8) {
  CertificationReport rep;
  rep.margin = margin;
  rep.samples = samples;
  rep.refined_samples = 10 * samples;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  rep.worst_inner = rep.worst_annulus = rep.worst_outer = kInf;
  detail::certify_mesh(s, rho, samples, rep);
  detail::certify_mesh(s, rho, rep.refined_samples, rep);
  const double a = s.alpha();
  const auto outer = [&](double r) { return s.A * std::pow(r, a) + s.B(); };
  const auto outer_slope = [&](double r) { return s.A * a * std::pow(r, a - 1.0); };
  rep.value_jump = std::abs(s.value(s.eta) - outer(s.eta));
  rep.slope_jump = std::abs(s.derivative(s.eta) - outer_slope(s.eta));
  rep.c2 = s.value(s.eta) / std::pow(s.eta, a);
  rep.pass = rep.violations.empty() && rep.monotone && s.A > 0.0 && s.A < s.amplitude_bound();
  return rep;
}

struct TuningStep {
  double A;
  bool pass;
};

struct TuningResult {
  double A = 0.0;
  double boundary = 0.0;
  std::vector<TuningStep> trace;
};

/// Bisection on (0, 2 sigma0 / M^alpha] for the largest certified amplitude;
/// returns half of it.
inline TuningResult tune_amplitude(BarrierSpec s, const Mollifier& rho = Mollifier::polynomial_bump(),
                                   std::size_t samples = 10000) {
  if (!(s.gamma > 0.0 && s.gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0,1)");
  if (!(s.sigma0 > 0.0 && s.sigma0 < 0.5)) throw std::invalid_argument("sigma0 must lie in (0,1/2)");
  if (!(s.eta > 0.0)) throw std::invalid_argument("eta must be positive");
  if (!(s.M >= s.eta)) throw std::invalid_argument("domain bound M must be >= eta");
  TuningResult out;
  auto passes = [&](double A) {
    s.A = A;
    // the upper end of the bracket is excluded by the strict amplitude bound
    const bool ok = A < s.amplitude_bound() && certify_supersolution(s, rho, samples / 10).pass;
    out.trace.push_back({A, ok});
    return ok;
  };
  const double top = s.amplitude_bound();
  double hi = top;
  double lo = 0.0;
  for (int k = 1; k <= 60; ++k) {
    const double A = top * std::pow(0.5, k);
    if (passes(A)) {
      lo = A;
      break;
    }
    hi = A;
  }
  if (lo == 0.0) throw Error("no admissible amplitude in (0, 2 sigma0 / M^alpha]");
  for (int it = 0; it < 40 && hi - lo > 1e-12 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (passes(mid) ? lo : hi) = mid;
  }
  out.boundary = lo;
  out.A = 0.5 * lo;
  return out;
}

/// Tunes A and returns the finished barrier.
inline BarrierSpec build_barrier(double gamma, double sigma0, double eta, const EllipticOperator& op,
                                 double M, int dim = 2,
                                 const Mollifier& rho = Mollifier::polynomial_bump()) {
  BarrierSpec s{gamma, sigma0, eta, 0.0, M, dim, op};
  s.A = tune_amplitude(s, rho).A;
  return s;
}

/// theta_eps(X) = eps^alpha theta(X / eps).
struct RescaledBarrier {
  BarrierSpec base;
  double epsilon = 1.0;

  double value(double r) const { return std::pow(epsilon, base.alpha()) * base.value(r / epsilon); }

  std::array<double, 2> hessian_eigenvalues(double r) const {
    auto e = base.hessian_eigenvalues(r / epsilon);
    const double k = std::pow(epsilon, base.alpha() - 2.0);
    return {k * e[0], k * e[1]};
  }

  /// F_eps(M) = eps^(2-alpha) F(eps^(alpha-2) M).
  double rescaled_operator(const SymMat& m) const {
    const double k = std::pow(epsilon, base.alpha() - 2.0);
    return eval_operator(base.op, m * k) / k;
  }
};

inline RescaledBarrier rescale_barrier(const BarrierSpec& s, double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  return {s, epsilon};
}

struct RescaledReport {
  bool pass = false;
  double worst_margin = 0.0;
  double inner_value_error = 0.0;
  double min_outer_ratio = 0.0;
  std::size_t violations = 0;
};

/// Checks F(D^2 theta_eps) <= beta_eps(theta_eps) on [0, eps M] together with
/// theta_eps = 2 sigma0 eps^alpha on B_{c1 eps eta} and
/// theta_eps >= c2 (eps eta)^alpha outside B_{eps eta}.
inline RescaledReport certify_rescaled(const RescaledBarrier& b,
                                       const Mollifier& rho = Mollifier::polynomial_bump(),
                                       std::size_t samples = 10000, double margin = 1e-8) {
  const BarrierSpec& s = b.base;
  const SingularityParams p(s.gamma, b.epsilon, s.sigma0);
  const double a = s.alpha();
  const double scale = std::pow(b.epsilon, a - 2.0);
  const double c2 = s.value(s.eta) / std::pow(s.eta, a);
  RescaledReport rep;
  rep.worst_margin = std::numeric_limits<double>::infinity();
  rep.min_outer_ratio = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i <= samples; ++i) {
    const double r = b.epsilon * s.M * static_cast<double>(i) / samples;
    const auto e = b.hessian_eigenvalues(r);
    std::array<double, 3> ev{e[0], e[1], e[1]};
    const double lhs = s.op.eval_spectrum(std::span<const double>(ev.data(), s.dim));
    const double th = b.value(r);
    const double gap = (beta_eps(p, rho, th) - lhs) / scale;
    rep.worst_margin = std::min(rep.worst_margin, gap);
    if (gap < margin) ++rep.violations;
    if (r <= s.c1() * s.eta * b.epsilon)
      rep.inner_value_error = std::max(rep.inner_value_error, std::abs(th - 2.0 * s.sigma0 * p.layer()));
    if (r >= b.epsilon * s.eta)
      rep.min_outer_ratio = std::min(rep.min_outer_ratio, th / (c2 * std::pow(b.epsilon * s.eta, a)));
  }
  rep.pass = rep.violations == 0 && rep.inner_value_error <= 1e-12 * p.layer() &&
             rep.min_outer_ratio >= 1.0 - 1e-12;
  return rep;
}

inline nlohmann::json to_json(const BarrierSpec& s, const CertificationReport& r,
                              const TuningResult* tuning = nullptr) {
  nlohmann::json j;
  j["inputs"] = {{"gamma", s.gamma}, {"sigma0", s.sigma0}, {"eta", s.eta}, {"M", s.M},
                 {"dim", s.dim},     {"operator", to_string(s.op.kind())},
                 {"lambda", s.op.lambda()}, {"Lambda", s.op.Lambda()}};
  j["A"] = s.A;
  j["derived"] = {{"alpha", s.alpha()}, {"c1", s.c1()}, {"a0", s.a0()}, {"B", s.B()},
                  {"amplitude_bound", s.amplitude_bound()}, {"c2", r.c2}};
  j["certification"] = {{"pass", r.pass},
                        {"margin", r.margin},
                        {"samples", r.samples},
                        {"refined_samples", r.refined_samples},
                        {"worst_margin", {{"inner", r.worst_inner}, {"annulus", r.worst_annulus}, {"outer", r.worst_outer}}},
                        {"annulus_envelope", r.annulus_envelope},
                        {"outer_envelope", r.outer_envelope},
                        {"monotone", r.monotone},
                        {"value_jump", r.value_jump},
                        {"slope_jump", r.slope_jump},
                        {"violations", r.violations.size()}};
  auto& v = j["certification"]["violating"] = nlohmann::json::array();
  for (std::size_t i = 0; i < std::min<std::size_t>(r.violations.size(), 20); ++i)
    v.push_back({{"radius", r.violations[i].radius}, {"lhs", r.violations[i].lhs}, {"rhs", r.violations[i].rhs}});
  if (tuning) {
    j["tuning"]["boundary"] = tuning->boundary;
    auto& t = j["tuning"]["trace"] = nlohmann::json::array();
    for (const auto& step : tuning->trace) t.push_back({{"A", step.A}, {"pass", step.pass}});
  }
  return j;
}

}  // namespace quench
