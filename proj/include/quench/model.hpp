#pragma once

// Scalar ingredients of the regularized singular-absorption problem:
// the growth exponent, the mollified step B_eps and the reaction beta_eps.

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>

#include <boost/math/tools/minima.hpp>

namespace quench {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// gamma in (0,1), sigma0 in (0,1/2), epsilon > 0.
class SingularityParams {
 public:
  SingularityParams(double gamma, double epsilon, double sigma0 = 0.25)
      : gamma_(gamma), sigma0_(sigma0), epsilon_(epsilon) {
    if (!(gamma > 0.0 && gamma < 1.0))
      throw std::invalid_argument("gamma must lie in (0,1)");
    if (!(sigma0 > 0.0 && sigma0 < 0.5))
      throw std::invalid_argument("sigma0 must lie in (0,1/2)");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon))
      throw std::invalid_argument("epsilon must be positive");
  }

  double gamma() const { return gamma_; }
  double sigma0() const { return sigma0_; }
  double epsilon() const { return epsilon_; }

  /// 1 + gamma/(2-gamma), which equals 2/(2-gamma).
  double alpha() const { return 2.0 / (2.0 - gamma_); }

  /// epsilon^alpha, the height scale of the transition layer.
  double layer() const { return std::pow(epsilon_, alpha()); }

  SingularityParams with_epsilon(double eps) const {
    return SingularityParams(gamma_, eps, sigma0_);
  }

 private:
  double gamma_;
  double sigma0_;
  double epsilon_;
};

inline double alpha(const SingularityParams& p) { return p.alpha(); }

inline double alpha_of_gamma(double gamma) { return 2.0 / (2.0 - gamma); }

/// Compactly supported density on [0,1] with unit mass, plus its
/// cumulative integral and first derivative.
class Mollifier {
 public:
  using Rule = std::function<double(double)>;

  Mollifier(Rule density, Rule cumulative, Rule slope)
      : density_(std::move(density)),
        cumulative_(std::move(cumulative)),
        slope_(std::move(slope)) {}

  /// rho(s) = 30 s^2 (1-s)^2; its integral is the quintic smoothstep.
  static Mollifier polynomial_bump() {
    return Mollifier(
        [](double s) {
          if (s <= 0.0 || s >= 1.0) return 0.0;
          const double q = s * (1.0 - s);
          return 30.0 * q * q;
        },
        [](double s) {
          if (s <= 0.0) return 0.0;
          if (s >= 1.0) return 1.0;
          return s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
        },
        [](double s) {
          if (s <= 0.0 || s >= 1.0) return 0.0;
          return 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s);
        });
  }

  double density(double s) const { return density_(s); }
  /// Integral of the density over [0, s], clipped to [0,1].
  double cumulative(double s) const { return cumulative_(s); }
  double slope(double s) const { return slope_(s); }

 private:
  Rule density_;
  Rule cumulative_;
  Rule slope_;
};

/// B_eps(t) = integral of rho over [0, (t - sigma0 eps^a)/eps^a].
inline double big_b_eps(const SingularityParams& p, const Mollifier& rho, double t) {
  const double layer = p.layer();
  return rho.cumulative((t - p.sigma0() * layer) / layer);
}

/// beta_eps(t) = gamma t^(gamma-1) B_eps(t), extended by zero for
/// t <= sigma0 eps^alpha (negative t included).
inline double beta_eps(const SingularityParams& p, const Mollifier& rho, double t) {
  const double layer = p.layer();
  if (t <= p.sigma0() * layer) return 0.0;
  const double b = rho.cumulative((t - p.sigma0() * layer) / layer);
  if (b == 0.0) return 0.0;
  return p.gamma() * std::pow(t, p.gamma() - 1.0) * b;
}

/// d beta_eps / dt.
inline double beta_eps_derivative(const SingularityParams& p, const Mollifier& rho,
                                  double t) {
  const double layer = p.layer();
  if (t <= p.sigma0() * layer) return 0.0;
  const double s = (t - p.sigma0() * layer) / layer;
  const double g = p.gamma();
  const double tp = std::pow(t, g - 1.0);
  return g * (g - 1.0) * tp / t * rho.cumulative(s) + g * tp * rho.density(s) / layer;
}

/// sup of beta_eps. Beyond (1+sigma0) eps^alpha beta_eps is decreasing, so
/// the maximum sits inside the transition layer.
inline double zeta(const SingularityParams& p, const Mollifier& rho) {
  const double layer = p.layer();
  const double lo = p.sigma0() * layer;
  const double hi = (1.0 + p.sigma0()) * layer;
  auto neg = [&](double t) { return -beta_eps(p, rho, t); };
  // coarse scan to bracket, then Brent on the bracketing cell pair
  constexpr int kScan = 256;
  int best = 0;
  double best_v = 0.0;
  for (int i = 0; i <= kScan; ++i) {
    const double v = -neg(lo + (hi - lo) * i / kScan);
    if (v > best_v) {
      best_v = v;
      best = i;
    }
  }
  const double a = lo + (hi - lo) * std::max(best - 1, 0) / kScan;
  const double b = lo + (hi - lo) * std::min(best + 1, kScan) / kScan;
  const auto found = boost::math::tools::brent_find_minima(neg, a, b, 50);
  return std::max(best_v, -found.second);
}

}  // namespace quench
