#pragma once

// Small symmetric matrices (N <= 3) and the catalogue of elliptic operators
// F(D^2 u) evaluated through the spectrum of the Hessian.

#include <algorithm>
#include <array>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "quench/model.hpp"

namespace quench {

class SymMat {
 public:
  SymMat() = default;
  explicit SymMat(int n) : n_(n) {
    if (n < 1 || n > 3) throw std::invalid_argument("matrix size must be 1, 2 or 3");
  }

  /// Row-major n*n entries; rejects entries that are not symmetric.
  static SymMat from_rows(int n, std::span<const double> entries, double tol = 1e-12) {
    SymMat m(n);
    if (entries.size() != static_cast<std::size_t>(n * n))
      throw std::invalid_argument("expected n*n matrix entries");
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double a = entries[i * n + j];
        const double b = entries[j * n + i];
        if (std::abs(a - b) > tol * std::max({1.0, std::abs(a), std::abs(b)}))
          throw std::invalid_argument("matrix is not symmetric");
        m.a_[i * 3 + j] = 0.5 * (a + b);
      }
    return m;
  }

  static SymMat diag(std::initializer_list<double> d) {
    SymMat m(static_cast<int>(d.size()));
    int i = 0;
    for (double v : d) {
      m.a_[i * 3 + i] = v;
      ++i;
    }
    return m;
  }

  static SymMat identity(int n) {
    SymMat m(n);
    for (int i = 0; i < n; ++i) m.a_[i * 3 + i] = 1.0;
    return m;
  }

  int size() const { return n_; }
  double operator()(int i, int j) const { return a_[i * 3 + j]; }
  void set(int i, int j, double v) {
    a_[i * 3 + j] = v;
    a_[j * 3 + i] = v;
  }

  double trace() const {
    double t = 0.0;
    for (int i = 0; i < n_; ++i) t += a_[i * 3 + i];
    return t;
  }

  SymMat operator+(const SymMat& o) const {
    SymMat r(n_);
    for (int k = 0; k < 9; ++k) r.a_[k] = a_[k] + o.a_[k];
    return r;
  }
  SymMat operator*(double s) const {
    SymMat r(n_);
    for (int k = 0; k < 9; ++k) r.a_[k] = a_[k] * s;
    return r;
  }

  /// Frobenius inner product.
  double dot(const SymMat& o) const {
    double s = 0.0;
    for (int k = 0; k < 9; ++k) s += a_[k] * o.a_[k];
    return s;
  }

  /// Eigenvalues in ascending order; only the first size() entries are used.
  std::array<double, 3> eigenvalues() const {
    std::array<double, 3> ev{0.0, 0.0, 0.0};
    if (n_ == 1) {
      ev[0] = a_[0];
    } else if (n_ == 2) {
      const double a = a_[0], b = a_[1], c = a_[4];
      const double mid = 0.5 * (a + c);
      const double r = std::hypot(0.5 * (a - c), b);
      ev[0] = mid - r;
      ev[1] = mid + r;
    } else {
      ev = jacobi_eigenvalues();
      std::sort(ev.begin(), ev.end());
    }
    return ev;
  }

 private:
  // Cyclic Jacobi rotations on a copy.
  std::array<double, 3> jacobi_eigenvalues() const {
    std::array<double, 9> m = a_;
    for (int sweep = 0; sweep < 50; ++sweep) {
      const double off = m[1] * m[1] + m[2] * m[2] + m[5] * m[5];
      const double scale = m[0] * m[0] + m[4] * m[4] + m[8] * m[8] + 2.0 * off;
      if (off <= 1e-32 * scale || off == 0.0) break;
      for (int p = 0; p < 2; ++p)
        for (int q = p + 1; q < 3; ++q) {
          const double apq = m[p * 3 + q];
          if (apq == 0.0) continue;
          const double theta = (m[q * 3 + q] - m[p * 3 + p]) / (2.0 * apq);
          const double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
          const double c = 1.0 / std::sqrt(t * t + 1.0);
          const double s = t * c;
          for (int k = 0; k < 3; ++k) {
            const double mkp = m[k * 3 + p], mkq = m[k * 3 + q];
            m[k * 3 + p] = c * mkp - s * mkq;
            m[k * 3 + q] = s * mkp + c * mkq;
          }
          for (int k = 0; k < 3; ++k) {
            const double mpk = m[p * 3 + k], mqk = m[q * 3 + k];
            m[p * 3 + k] = c * mpk - s * mqk;
            m[q * 3 + k] = s * mpk + c * mqk;
          }
        }
    }
    return {m[0], m[4], m[8]};
  }

  int n_ = 1;
  std::array<double, 9> a_{};
};

enum class OperatorKind { Trace, PucciPlus, PucciMinus, HessianIota };

inline std::string to_string(OperatorKind k) {
  switch (k) {
    case OperatorKind::Trace: return "trace";
    case OperatorKind::PucciPlus: return "pucci+";
    case OperatorKind::PucciMinus: return "pucci-";
    case OperatorKind::HessianIota: return "hessian-iota";
  }
  return "?";
}

inline OperatorKind operator_kind_from_string(const std::string& s) {
  if (s == "trace") return OperatorKind::Trace;
  if (s == "pucci+") return OperatorKind::PucciPlus;
  if (s == "pucci-") return OperatorKind::PucciMinus;
  if (s == "hessian-iota") return OperatorKind::HessianIota;
  throw std::invalid_argument("unknown operator '" + s + "'");
}

/// Dominating linear operator f_ij with additive defect C_F.
struct ConcavityCertificate {
  SymMat coefficients;
  double defect = 0.0;
};

/// F(M) as a symmetric function of the eigenvalues of M, with ellipticity
/// bounds lambda <= Lambda. The F_iota family is degenerate at zero
/// eigenvalues, so it carries lambda = 0.
class EllipticOperator {
 public:
  static EllipticOperator trace() { return {OperatorKind::Trace, 1.0, 1.0, 1}; }

  static EllipticOperator pucci_plus(double lambda, double Lambda) {
    return {OperatorKind::PucciPlus, lambda, Lambda, 1};
  }
  static EllipticOperator pucci_minus(double lambda, double Lambda) {
    return {OperatorKind::PucciMinus, lambda, Lambda, 1};
  }

  /// sum_j (1 + lambda_j^iota)^(1/iota) for odd iota. The difference
  /// quotients of t -> (1+t^iota)^(1/iota) lie in [0, 2^(1-1/iota)].
  static EllipticOperator hessian_iota(int iota) {
    if (iota < 1 || iota % 2 == 0) throw std::invalid_argument("iota must be an odd natural number");
    return {OperatorKind::HessianIota, 0.0, std::pow(2.0, 1.0 - 1.0 / iota), iota};
  }

  EllipticOperator with_concavity(SymMat coefficients, double defect) const {
    if (defect < 0.0) throw std::invalid_argument("concavity defect must be >= 0");
    EllipticOperator r = *this;
    r.concavity_ = ConcavityCertificate{coefficients, defect};
    return r;
  }

  OperatorKind kind() const { return kind_; }
  double lambda() const { return lambda_; }
  double Lambda() const { return Lambda_; }
  int iota() const { return iota_; }
  const std::optional<ConcavityCertificate>& concavity() const { return concavity_; }

  /// F depends on the Hessian only through its trace.
  bool is_linear_trace() const { return kind_ == OperatorKind::Trace; }
  /// F(sM) = s F(M) for s > 0.
  bool is_positively_homogeneous() const { return kind_ != OperatorKind::HessianIota; }

  double eval_spectrum(std::span<const double> ev) const {
    double s = 0.0;
    for (double l : ev) s += eval_eigen(l);
    return s;
  }

  /// dF/d lambda_j at one eigenvalue; at kinks the larger one-sided value
  /// for PucciPlus and the smaller for PucciMinus.
  double eigen_derivative(double l) const {
    switch (kind_) {
      case OperatorKind::Trace: return 1.0;
      case OperatorKind::PucciPlus: return l >= 0.0 ? Lambda_ : lambda_;
      case OperatorKind::PucciMinus: return l >= 0.0 ? lambda_ : Lambda_;
      case OperatorKind::HessianIota: {
        const double p = 1.0 + std::pow(l, iota_);
        if (p == 0.0) return std::numeric_limits<double>::infinity();
        return std::pow(l, iota_ - 1) * std::pow(std::abs(p), 1.0 / iota_ - 1.0);
      }
    }
    return 0.0;
  }

  double eval_eigen(double l) const {
    switch (kind_) {
      case OperatorKind::Trace: return l;
      case OperatorKind::PucciPlus: return l > 0.0 ? Lambda_ * l : lambda_ * l;
      case OperatorKind::PucciMinus: return l > 0.0 ? lambda_ * l : Lambda_ * l;
      case OperatorKind::HessianIota: {
        const double p = 1.0 + std::pow(l, iota_);
        return std::copysign(std::pow(std::abs(p), 1.0 / iota_), p);
      }
    }
    return 0.0;
  }

 private:
  EllipticOperator(OperatorKind k, double lambda, double Lambda, int iota)
      : kind_(k), lambda_(lambda), Lambda_(Lambda), iota_(iota) {
    if (k != OperatorKind::HessianIota && !(lambda > 0.0))
      throw std::invalid_argument("lambda must be positive");
    if (!(Lambda >= lambda)) throw std::invalid_argument("Lambda must be >= lambda");
  }

  OperatorKind kind_;
  double lambda_;
  double Lambda_;
  int iota_;
  std::optional<ConcavityCertificate> concavity_;
};

inline double eval_operator(const EllipticOperator& op, const SymMat& m) {
  const auto ev = m.eigenvalues();
  return op.eval_spectrum(std::span<const double>(ev.data(), m.size()));
}

/// Pucci extremal operators, used as the ellipticity envelope.
inline double pucci_plus(double lambda, double Lambda, const SymMat& m) {
  return eval_operator(EllipticOperator::pucci_plus(lambda, Lambda), m);
}
inline double pucci_minus(double lambda, double Lambda, const SymMat& m) {
  return eval_operator(EllipticOperator::pucci_minus(lambda, Lambda), m);
}

/// Gradient dF/dM for a 2x2 matrix [[a,b],[b,c]], returned as
/// (dF/da, dF/dc, dF/db) where b perturbs both off-diagonal entries.
struct Gradient2 {
  double dxx = 0.0;
  double dyy = 0.0;
  double dxy = 0.0;
};

inline Gradient2 operator_gradient_2x2(const EllipticOperator& op, double a, double c, double b) {
  const double mid = 0.5 * (a + c);
  const double half = 0.5 * (a - c);
  const double r = std::hypot(half, b);
  const double lmin = mid - r, lmax = mid + r;
  const double fmin = op.eigen_derivative(lmin);
  const double fmax = op.eigen_derivative(lmax);
  if (r <= 1e-14 * std::max(1.0, std::abs(mid))) {
    const double f = 0.5 * (fmin + fmax);
    return {f, f, 0.0};
  }
  // d lmax/da = 1/2 + half/(2r), d lmax/dc = 1/2 - half/(2r), d lmax/db = 2 b / r / 2
  const double ca = half / (2.0 * r);
  const double cb = b / r;
  return {fmax * (0.5 + ca) + fmin * (0.5 - ca), fmax * (0.5 - ca) + fmin * (0.5 + ca),
          (fmax - fmin) * cb};
}

struct RecessionResult {
  double value = 0.0;
  bool converged = false;
  double last_change = 0.0;
  std::vector<double> samples;  // mu F(M/mu) per mu
};

/// Limit of mu F(M/mu) as mu -> 0, by polynomial (Neville) extrapolation
/// in mu over the supplied decreasing sequence.
inline RecessionResult recession(const EllipticOperator& op, const SymMat& m,
                                 std::span<const double> mus, double tol = 1e-6) {
  if (mus.size() < 2) throw std::invalid_argument("need at least two mu values");
  for (std::size_t i = 0; i < mus.size(); ++i) {
    if (!(mus[i] > 0.0)) throw std::invalid_argument("mu values must be positive");
    if (i > 0 && !(mus[i] < mus[i - 1])) throw std::invalid_argument("mu values must decrease");
  }
  RecessionResult out;
  for (double mu : mus) out.samples.push_back(mu * eval_operator(op, m * (1.0 / mu)));

  // Neville table: diag[k] extrapolates through samples k-j..k to mu = 0.
  const std::size_t n = mus.size();
  std::vector<double> col(out.samples);
  double best = col.back();
  double best_change = std::abs(col[n - 1] - col[n - 2]);
  for (std::size_t j = 1; j < n; ++j) {
    std::vector<double> next(n - j);
    for (std::size_t k = 0; k + j < n; ++k) {
      const double x0 = mus[k], x1 = mus[k + j];
      next[k] = (x0 * col[k + 1] - x1 * col[k]) / (x0 - x1);
    }
    // change between the two most refined estimates of this order
    if (next.size() >= 2) {
      const double change = std::abs(next[next.size() - 1] - next[next.size() - 2]);
      if (change < best_change) {
        best_change = change;
        best = next.back();
      }
    }
    col = std::move(next);
  }
  out.value = best;
  out.last_change = best_change;
  out.converged = best_change <= tol * std::max(1.0, std::abs(best));
  return out;
}

struct ConcavityReport {
  bool certificate_missing = false;
  double min_defect = 0.0;  // min over samples of f_ij M_ij - F(M)
  std::size_t argmin = 0;
  double bound = 0.0;  // -C_F
  bool pass = false;
};

/// min over samples of f_ij M_ij - F(M); passes iff >= -C_F - tol.
inline ConcavityReport concavity_certificate_check(const EllipticOperator& op,
                                                   std::span<const SymMat> samples,
                                                   double tol = 1e-10) {
  ConcavityReport r;
  if (!op.concavity()) {
    r.certificate_missing = true;
    return r;
  }
  const auto& cert = *op.concavity();
  r.bound = -cert.defect;
  r.min_defect = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].size() != cert.coefficients.size())
      throw std::invalid_argument("sample size does not match certificate");
    const double d = cert.coefficients.dot(samples[i]) - eval_operator(op, samples[i]);
    if (d < r.min_defect) {
      r.min_defect = d;
      r.argmin = i;
    }
  }
  r.pass = r.min_defect >= -cert.defect - tol;
  return r;
}

}  // namespace quench
