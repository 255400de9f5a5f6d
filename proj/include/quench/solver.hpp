#pragma once

// Finite-difference solver for F(D^2 u) = beta_eps(u) with Dirichlet data:
// envelope solves, minimal-solution selection by monotone descent from the
// supersolution envelope, Newton polish, and epsilon continuation.

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/UmfPackSupport>

#include "quench/grid.hpp"
#include "quench/model.hpp"
#include "quench/operators.hpp"

namespace quench {

class SolverError : public Error {
 public:
  using Error::Error;
};

using BoundaryRule = std::function<double(const Point&)>;

struct SolverTolerances {
  double residual = 1e-8;    // sup-norm of F(D^2 u) - beta(u)
  int max_iterations = 4000;  // pseudo-time steps, all phases
  int descent_steps = 20;     // pseudo-time steps before the Newton polish
  int max_newton = 60;
};

/// The full input of the regularized problem. params.epsilon() is the final
/// (smallest) epsilon; the continuation schedule is eps * 2^(stages - k).
struct ProblemSpec {
  SingularityParams params;
  Mollifier mollifier = Mollifier::polynomial_bump();
  EllipticOperator op = EllipticOperator::trace();
  GridPtr grid;
  BoundaryRule datum;
  SolverTolerances tol{};
  int stages = 0;

  std::vector<double> schedule() const {
    std::vector<double> eps;
    for (int k = 0; k <= stages; ++k) eps.push_back(params.epsilon() * std::ldexp(1.0, stages - k));
    return eps;
  }

  void validate() const {
    if (!grid) throw std::invalid_argument("problem has no grid");
    if (!datum) throw std::invalid_argument("problem has no boundary datum");
    if (!(tol.residual > 0.0)) throw std::invalid_argument("residual tolerance must be positive");
    if (stages < 0) throw std::invalid_argument("stage count must be >= 0");
    if (op.kind() == OperatorKind::HessianIota)
      throw std::invalid_argument(
          "hessian-iota is not uniformly elliptic and F(0) != 0; solve with its recession operator");
    for (std::size_t k = 0; k < grid->size(); ++k)
      if (grid->node_class(k) == NodeClass::Boundary) {
        const double f = datum(grid->position(k));
        if (!(f >= 0.0) || !std::isfinite(f))
          throw std::invalid_argument("boundary datum must be finite and nonnegative");
      }
  }
};

/// Smallest epsilon whose transition layer spans a few cells: 4 h^(1/alpha).
inline double resolution_floor(const Grid& g, double gamma) {
  return 4.0 * std::pow(g.h(), 1.0 / alpha_of_gamma(gamma));
}

/// Second differences; the mixed term is half the difference of the two
/// diagonal second differences. Exact on quadratics.
inline SymMat discrete_hessian(const ScalarField& u, std::size_t k) {
  const Grid& g = u.grid();
  if (!g.interior(k)) throw std::invalid_argument("discrete_hessian needs an interior node");
  const double ih2 = 1.0 / (g.h() * g.h());
  const int i = g.col(k), j = g.row(k);
  const double c = u[k];
  if (g.dim() == 1) {
    SymMat m(1);
    m.set(0, 0, (u.at(i - 1) - 2.0 * c + u.at(i + 1)) * ih2);
    return m;
  }
  SymMat m(2);
  m.set(0, 0, (u.at(i - 1, j) - 2.0 * c + u.at(i + 1, j)) * ih2);
  m.set(1, 1, (u.at(i, j - 1) - 2.0 * c + u.at(i, j + 1)) * ih2);
  const double diag_pp = (u.at(i + 1, j + 1) - 2.0 * c + u.at(i - 1, j - 1)) * ih2;
  const double diag_pm = (u.at(i - 1, j + 1) - 2.0 * c + u.at(i + 1, j - 1)) * ih2;
  m.set(0, 1, 0.25 * (diag_pp - diag_pm));
  return m;
}

namespace detail {

/// F(D^2_h u) over interior unknowns plus its Jacobian.
class Discretization {
 public:
  Discretization(GridPtr grid, EllipticOperator op) : grid_(std::move(grid)), op_(std::move(op)) {
    const auto& nodes = grid_->interior_nodes();
    row_of_.assign(grid_->size(), -1);
    for (std::size_t r = 0; r < nodes.size(); ++r) row_of_[nodes[r]] = static_cast<int>(r);
  }

  const Grid& grid() const { return *grid_; }
  const EllipticOperator& op() const { return op_; }
  std::size_t unknowns() const { return grid_->interior_nodes().size(); }
  const std::vector<std::size_t>& nodes() const { return grid_->interior_nodes(); }

  bool needs_mixed() const { return grid_->dim() == 2 && !op_.is_linear_trace(); }

  double apply_at(const ScalarField& u, std::size_t k) const {
    const SymMat hess = discrete_hessian(u, k);
    if (op_.is_linear_trace()) return hess.trace();
    return eval_operator(op_, hess);
  }

  void apply(const ScalarField& u, Eigen::VectorXd& out) const {
    out.resize(static_cast<Eigen::Index>(unknowns()));
    const auto& nd = nodes();
    for (std::size_t r = 0; r < nd.size(); ++r) out[static_cast<Eigen::Index>(r)] = apply_at(u, nd[r]);
  }

  /// dF(D^2_h u)/du restricted to interior unknowns, minus diag(shift).
  Eigen::SparseMatrix<double> jacobian(const ScalarField& u, const Eigen::VectorXd& shift) const {
    const Grid& g = *grid_;
    const double ih2 = 1.0 / (g.h() * g.h());
    const auto& nd = nodes();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(nd.size() * (needs_mixed() ? 9 : (g.dim() == 1 ? 3 : 5)));
    auto add = [&](int r, int i, int j, double v) {
      const int c = row_of_[g.index(i, j)];
      if (c >= 0) trip.emplace_back(r, c, v);
    };
    for (std::size_t rr = 0; rr < nd.size(); ++rr) {
      const int r = static_cast<int>(rr);
      const std::size_t k = nd[rr];
      const int i = g.col(k), j = g.row(k);
      if (g.dim() == 1) {
        const double d = op_.eigen_derivative(discrete_hessian(u, k)(0, 0)) * ih2;
        trip.emplace_back(r, r, -2.0 * d - shift[r]);
        add(r, i - 1, 0, d);
        add(r, i + 1, 0, d);
        continue;
      }
      Gradient2 gr{1.0, 1.0, 0.0};
      if (!op_.is_linear_trace()) {
        const SymMat hs = discrete_hessian(u, k);
        gr = operator_gradient_2x2(op_, hs(0, 0), hs(1, 1), hs(0, 1));
      }
      trip.emplace_back(r, r, -2.0 * (gr.dxx + gr.dyy) * ih2 - shift[r]);
      add(r, i - 1, j, gr.dxx * ih2);
      add(r, i + 1, j, gr.dxx * ih2);
      add(r, i, j - 1, gr.dyy * ih2);
      add(r, i, j + 1, gr.dyy * ih2);
      if (needs_mixed()) {
        const double m = 0.25 * gr.dxy * ih2;
        add(r, i + 1, j + 1, m);
        add(r, i - 1, j - 1, m);
        add(r, i - 1, j + 1, -m);
        add(r, i + 1, j - 1, -m);
      }
    }
    const auto n = static_cast<Eigen::Index>(nd.size());
    Eigen::SparseMatrix<double> a(n, n);
    a.setFromTriplets(trip.begin(), trip.end());
    a.makeCompressed();
    return a;
  }

 private:
  GridPtr grid_;
  EllipticOperator op_;
  std::vector<int> row_of_;
};

/// Sparse LU with the symbolic analysis reused across factorizations.
class LinearSolver {
 public:
  // UMFPACK solves read the factored matrix, so the solver owns a copy.
  void factorize(Eigen::SparseMatrix<double> a) {
    matrix_ = std::move(a);
    if (!analyzed_ || matrix_.rows() != rows_) {
      lu_.analyzePattern(matrix_);
      analyzed_ = true;
      rows_ = matrix_.rows();
    }
    lu_.factorize(matrix_);
    if (lu_.info() != Eigen::Success) throw SolverError("sparse factorization failed");
  }
  Eigen::VectorXd solve(const Eigen::VectorXd& b) {
    Eigen::VectorXd x = lu_.solve(b);
    if (lu_.info() != Eigen::Success || !x.allFinite()) throw SolverError("sparse solve failed");
    return x;
  }

 private:
  Eigen::SparseMatrix<double> matrix_;
  Eigen::UmfPackLU<Eigen::SparseMatrix<double>> lu_;
  bool analyzed_ = false;
  Eigen::Index rows_ = -1;
};

inline void add_increment(ScalarField& u, const std::vector<std::size_t>& nodes,
                          const Eigen::VectorXd& delta, double scale = 1.0) {
  for (std::size_t r = 0; r < nodes.size(); ++r) u[nodes[r]] += scale * delta[static_cast<Eigen::Index>(r)];
}

inline ScalarField with_datum(const GridPtr& grid, const BoundaryRule& datum, double interior_value) {
  ScalarField u(grid, 0.0);
  for (std::size_t k = 0; k < grid->size(); ++k) {
    if (grid->node_class(k) == NodeClass::Boundary) u[k] = datum(grid->position(k));
    else if (grid->interior(k)) u[k] = interior_value;
  }
  return u;
}

/// Rounding floor of the sup-norm residual: second differences lose about
/// 8 N ulp(|u|)/h^2.
inline double roundoff_floor(const ScalarField& u) {
  const Grid& g = u.grid();
  return 8.0 * g.dim() * DBL_EPSILON * std::max(1.0, sup_norm(u)) / (g.h() * g.h());
}

}  // namespace detail

/// F(D^2_h u) - beta_eps(u) at interior nodes, zero elsewhere.
inline ScalarField residual(const ProblemSpec& spec, const SingularityParams& params,
                            const ScalarField& u) {
  detail::Discretization disc(spec.grid, spec.op);
  ScalarField r(u.grid_ptr(), 0.0);
  for (std::size_t k : disc.nodes()) r[k] = disc.apply_at(u, k) - beta_eps(params, spec.mollifier, u[k]);
  return r;
}

inline ScalarField residual(const ProblemSpec& spec, const ScalarField& u) {
  return residual(spec, spec.params, u);
}

struct Envelopes {
  ScalarField lower;  // F(D^2 u) = zeta, u = f on the boundary
  ScalarField upper;  // F(D^2 u) = 0,    u = f on the boundary
  double zeta = 0.0;
};

namespace detail {

/// Newton on F(D^2_h u) = rhs with Dirichlet datum.
inline ScalarField solve_constant_rhs(const Discretization& disc, const GridPtr& grid,
                                      const BoundaryRule& datum, double rhs, double tol,
                                      int max_newton, const char* what,
                                      const ScalarField* start = nullptr) {
  ScalarField u = with_datum(grid, datum, 0.0);
  if (start) {
    for (std::size_t k : disc.nodes()) u[k] = (*start)[k];
  } else {
    // start from the mean boundary value for a better Newton start
    double mean = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < grid->size(); ++k)
      if (grid->node_class(k) == NodeClass::Boundary) {
        mean += u[k];
        ++count;
      }
    if (count) mean /= static_cast<double>(count);
    for (std::size_t k : disc.nodes()) u[k] = mean;
  }

  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(disc.unknowns()));
  LinearSolver lin;
  Eigen::VectorXd fu;
  std::ostringstream trace;
  for (int it = 0; it <= max_newton; ++it) {
    disc.apply(u, fu);
    Eigen::VectorXd res = fu.array() - rhs;
    const double norm = res.size() ? res.lpNorm<Eigen::Infinity>() : 0.0;
    const double floor = roundoff_floor(u);
    trace << " it" << it << ":" << norm;
    if (norm <= std::max(tol, floor)) return u;
    lin.factorize(disc.jacobian(u, zero));
    Eigen::VectorXd delta = lin.solve(-res);
    // damped step on the residual sup-norm
    double theta = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 30; ++ls) {
      ScalarField trial = u;
      add_increment(trial, disc.nodes(), delta, theta);
      disc.apply(trial, fu);
      const double n2 = (fu.array() - rhs).matrix().lpNorm<Eigen::Infinity>();
      if (n2 < norm || disc.op().is_linear_trace()) {
        u = std::move(trial);
        accepted = true;
        break;
      }
      theta *= 0.5;
    }
    // the sup-norm is not a merit function for the nonsmooth Pucci systems;
    // a full step is then the policy-iteration update
    if (!accepted) add_increment(u, disc.nodes(), delta, 1.0);
  }
  throw SolverError(std::string(what) + " envelope solve did not converge; residual trace:" + trace.str());
}

}  // namespace detail

inline Envelopes solve_envelopes(const ProblemSpec& spec, const SingularityParams& params) {
  detail::Discretization disc(spec.grid, spec.op);
  Envelopes env;
  env.zeta = zeta(params, spec.mollifier);
  env.upper = detail::solve_constant_rhs(disc, spec.grid, spec.datum, 0.0, spec.tol.residual,
                                         spec.tol.max_newton, "upper");
  // F(D^2 u) = zeta scales like zeta * diam^2; tolerance follows relatively.
  env.lower = detail::solve_constant_rhs(disc, spec.grid, spec.datum, env.zeta,
                                         spec.tol.residual * std::max(1.0, env.zeta),
                                         spec.tol.max_newton, "lower");
  return env;
}

inline Envelopes solve_envelopes(const ProblemSpec& spec) { return solve_envelopes(spec, spec.params); }

namespace detail {

/// Envelope pieces shared by every stage of a sweep: the upper envelope does
/// not depend on epsilon, and for the Laplacian the lower one is
/// upper + zeta w with w the solution of F(D^2 w) = 1, w = 0 on the boundary.
class EnvelopeCache {
 public:
  explicit EnvelopeCache(const ProblemSpec& spec) : spec_(spec), disc_(spec.grid, spec.op) {
    upper_ = solve_constant_rhs(disc_, spec.grid, spec.datum, 0.0, spec.tol.residual,
                                spec.tol.max_newton, "upper");
    if (spec.op.is_linear_trace())
      unit_ = solve_constant_rhs(disc_, spec.grid, [](const Point&) { return 0.0; }, 1.0,
                                 spec.tol.residual, spec.tol.max_newton, "unit");
  }

  Envelopes at(const SingularityParams& params) {
    Envelopes env;
    env.zeta = zeta(params, spec_.mollifier);
    env.upper = *upper_;
    if (unit_) {
      env.lower = *upper_;
      for (std::size_t k : disc_.nodes()) env.lower[k] += env.zeta * (*unit_)[k];
    } else {
      env.lower = solve_constant_rhs(disc_, spec_.grid, spec_.datum, env.zeta,
                                     spec_.tol.residual * std::max(1.0, env.zeta),
                                     spec_.tol.max_newton, "lower", last_lower_ ? &*last_lower_ : nullptr);
      last_lower_ = env.lower;
    }
    return env;
  }

 private:
  const ProblemSpec& spec_;
  Discretization disc_;
  std::optional<ScalarField> upper_;
  std::optional<ScalarField> unit_;
  std::optional<ScalarField> last_lower_;
};

}  // namespace detail

struct SolveResult {
  ScalarField u;
  ScalarField u_star;   // subsolution envelope
  ScalarField u_upper;  // supersolution envelope
  double epsilon = 0.0;
  double residual = 0.0;            // final sup-norm residual
  double effective_tolerance = 0.0;  // max(tol, rounding floor)
  int descent_iterations = 0;
  int newton_iterations = 0;
  int chord_iterations = 0;  // Newton steps reusing the last factorization
  int step_halvings = 0;  // pseudo-time step reductions after a non-monotone step
  int monotone_violations = 0;
  double max_monotone_violation = 0.0;
  double max_sandwich_violation = 0.0;
  bool newton_fallback = false;
  bool converged = false;
  std::vector<std::string> log;
};

namespace detail {

/// Largest positive slope of beta_eps, attained inside the transition layer.
inline double beta_lipschitz(const SingularityParams& p, const Mollifier& rho) {
  const double layer = p.layer();
  double m = 0.0;
  constexpr int kScan = 512;
  for (int i = 0; i <= kScan; ++i) {
    const double t = layer * (p.sigma0() + static_cast<double>(i) / kScan);
    m = std::max(m, beta_eps_derivative(p, rho, t));
  }
  return 1.25 * m;
}

}  // namespace detail

/// Minimal-solution selection. Starting from the supersolution envelope (or
/// a supersolution warm start), the linearly implicit pseudo-time step
///   (K - dF) delta = F(D^2_h u) - beta(u),  K = 1/tau >= sup beta',
/// maps supersolutions to smaller supersolutions; each step is checked to be
/// nonincreasing and tau is halved when it is not. A damped Newton polish on
/// the smooth regularized system finishes the solve.
inline SolveResult solve_minimal(const ProblemSpec& spec, const SingularityParams& params,
                                 const ScalarField* warm = nullptr,
                                 const Envelopes* envelopes = nullptr) {
  spec.validate();
  detail::Discretization disc(spec.grid, spec.op);
  const auto& nodes = disc.nodes();
  const auto n = static_cast<Eigen::Index>(nodes.size());
  const Mollifier& rho = spec.mollifier;

  SolveResult out;
  out.epsilon = params.epsilon();
  Envelopes env = envelopes ? *envelopes : solve_envelopes(spec, params);
  out.u_star = env.lower;
  out.u_upper = env.upper;

  ScalarField u = env.upper;
  if (warm) {
    if (!(warm->grid() == *spec.grid)) throw std::invalid_argument("warm start lives on another grid");
    u = *warm;
    for (std::size_t k = 0; k < u.size(); ++k)
      if (spec.grid->node_class(k) == NodeClass::Boundary) u[k] = env.upper[k];
  }

  auto residual_vec = [&](const ScalarField& v, Eigen::VectorXd& r) {
    disc.apply(v, r);
    for (Eigen::Index q = 0; q < n; ++q) r[q] -= beta_eps(params, rho, v[nodes[static_cast<std::size_t>(q)]]);
  };
  auto tolerance_for = [&](const ScalarField& v) {
    return std::max(spec.tol.residual, detail::roundoff_floor(v));
  };

  Eigen::VectorXd res;
  residual_vec(u, res);
  double norm = n ? res.lpNorm<Eigen::Infinity>() : 0.0;

  double K = std::max(detail::beta_lipschitz(params, rho), 1e-12);
  detail::LinearSolver shifted;
  bool shifted_ready = false;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(n);
  int total_steps = 0;

  // Pseudo-time descent; returns true when the residual tolerance is met.
  auto descend = [&](int budget) {
    int consecutive = 0;
    for (int step = 0; step < budget && total_steps < spec.tol.max_iterations; ++step) {
      if (norm <= tolerance_for(u)) return true;
      // the shifted operator is frozen at the first iterate of each phase
      if (!shifted_ready) {
        shifted.factorize(disc.jacobian(u, Eigen::VectorXd::Constant(n, K)) * -1.0);
        shifted_ready = true;
      }
      Eigen::VectorXd delta = shifted.solve(res);
      const double allowed = 2.0 * tolerance_for(u) / K + 64.0 * DBL_EPSILON * std::max(1.0, sup_norm(u));
      const double up = n ? delta.maxCoeff() : 0.0;
      if (up > allowed) {
        ++out.monotone_violations;
        out.max_monotone_violation = std::max(out.max_monotone_violation, up);
        ++out.step_halvings;
        K *= 2.0;
        shifted_ready = false;
        out.log.push_back("non-monotone pseudo-time step (increase " + std::to_string(up) +
                          "); tau halved");
        // persistent increases come from the stencil, not the step size
        if (++consecutive > 8) {
          out.log.push_back("pseudo-time descent stopped after repeated non-monotone steps");
          return false;
        }
        continue;
      }
      consecutive = 0;
      detail::add_increment(u, nodes, delta);
      residual_vec(u, res);
      norm = res.lpNorm<Eigen::Infinity>();
      ++out.descent_iterations;
      ++total_steps;
    }
    return norm <= tolerance_for(u);
  };

  bool done = descend(spec.tol.descent_steps);

  // Newton polish, globalized by pseudo-transient continuation: the shift
  // starts at zero, grows when a step is rejected and decays with the
  // residual ratio once steps are accepted again.
  bool stalled = false;
  if (!done) {
    detail::LinearSolver lin;
    double shift = 0.0;
    const double shift_cap = 1e4 * K;
    Eigen::VectorXd trial_res;
    for (int it = 0; it < spec.tol.max_newton; ++it) {
      if (norm <= tolerance_for(u)) {
        done = true;
        break;
      }
      Eigen::VectorXd dbeta(n);
      for (Eigen::Index q = 0; q < n; ++q)
        dbeta[q] = beta_eps_derivative(params, rho, u[nodes[static_cast<std::size_t>(q)]]) + shift;
      Eigen::VectorXd delta;
      try {
        lin.factorize(disc.jacobian(u, dbeta));
        delta = lin.solve(-res);
      } catch (const SolverError& e) {
        out.log.push_back(std::string("newton linear solve failed: ") + e.what());
        break;
      }
      ++out.newton_iterations;
      const double merit = res.norm();
      bool accepted = false;
      double theta = 1.0;
      for (int ls = 0; ls < 4; ++ls, theta *= 0.5) {
        ScalarField trial = u;
        detail::add_increment(trial, nodes, delta, theta);
        residual_vec(trial, trial_res);
        if (trial_res.norm() <= (1.0 - 1e-4 * theta) * merit) {
          u = std::move(trial);
          res = trial_res;
          norm = res.lpNorm<Eigen::Infinity>();
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        if (norm <= 4.0 * tolerance_for(u)) {
          // stalled at the rounding floor
          stalled = true;
          break;
        }
        shift = std::max(4.0 * shift, 1e-3 * K);
        if (shift > shift_cap) {
          out.log.push_back("newton line search failed at residual " + std::to_string(norm));
          break;
        }
        continue;
      }
      shift *= std::min(1.0, res.norm() / merit);
      if (shift < 1e-8 * K) shift = 0.0;
      // chord steps with the current factorization while they contract well
      while (shift == 0.0 && norm > tolerance_for(u)) {
        Eigen::VectorXd chord = lin.solve(-res);
        ScalarField trial = u;
        detail::add_increment(trial, nodes, chord);
        residual_vec(trial, trial_res);
        if (!(trial_res.norm() <= 0.25 * res.norm())) break;
        u = std::move(trial);
        res = trial_res;
        norm = res.lpNorm<Eigen::Infinity>();
        ++out.chord_iterations;
      }
    }
    if (!done && norm <= tolerance_for(u)) done = true;
    if (!done && !stalled) {
      out.newton_fallback = true;
      out.log.push_back("newton polish failed; continuing with pseudo-time descent only");
      shifted_ready = false;
      done = descend(spec.tol.max_iterations);
    }
  }

  out.effective_tolerance = tolerance_for(u);
  out.residual = norm;
  out.converged = norm <= out.effective_tolerance ||
                  (stalled && norm <= 4.0 * out.effective_tolerance);
  for (std::size_t k = 0; k < u.size(); ++k) {
    if (!spec.grid->active(k)) continue;
    out.max_sandwich_violation = std::max(
        {out.max_sandwich_violation, out.u_star[k] - u[k], u[k] - out.u_upper[k]});
  }
  out.u = std::move(u);
  return out;
}

inline SolveResult solve_minimal(const ProblemSpec& spec) { return solve_minimal(spec, spec.params); }

struct SweepResult {
  std::vector<SolveResult> stages;
  std::vector<double> epsilons;
  std::vector<double> sup_differences;  // |u_k - u_{k+1}|_inf
  bool complete = false;
  std::string failure;
};

/// Solves along eps_k = eps_0 2^-k with warm starts; a solution for a
/// larger epsilon is a supersolution for a smaller one.
inline SweepResult continuation_sweep(const ProblemSpec& spec) {
  spec.validate();
  SweepResult out;
  const auto schedule = spec.schedule();
  std::optional<detail::EnvelopeCache> cache;
  for (std::size_t k = 0; k < schedule.size(); ++k) {
    const SingularityParams p = spec.params.with_epsilon(schedule[k]);
    try {
      if (!cache) cache.emplace(spec);
      const Envelopes env = cache->at(p);
      SolveResult r = solve_minimal(spec, p, out.stages.empty() ? nullptr : &out.stages.back().u, &env);
      if (!r.converged) {
        out.failure = "stage " + std::to_string(k) + " (eps=" + std::to_string(schedule[k]) +
                      ") did not converge";
        out.stages.push_back(std::move(r));
        out.epsilons.push_back(schedule[k]);
        return out;
      }
      out.stages.push_back(std::move(r));
      out.epsilons.push_back(schedule[k]);
    } catch (const SolverError& e) {
      out.failure = "stage " + std::to_string(k) + ": " + e.what();
      return out;
    }
    if (out.stages.size() >= 2)
      out.sup_differences.push_back(
          sup_norm_diff(out.stages[out.stages.size() - 2].u, out.stages.back().u));
  }
  out.complete = true;
  return out;
}

}  // namespace quench
