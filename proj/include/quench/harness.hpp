#pragma once

// Experiment configuration, orchestration (solve -> estimate -> report) and
// run persistence.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "json.hpp"

#include "quench/geometry.hpp"
#include "quench/model.hpp"
#include "quench/operators.hpp"
#include "quench/report.hpp"
#include "quench/solver.hpp"

namespace quench {

inline constexpr const char* kVersion = "0.1.0";

class ConfigError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------- hashing

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw Error("cannot open " + p.string());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

inline std::string sha256_file(const std::filesystem::path& p) { return sha256_hex(read_file(p)); }

// ----------------------------------------------------------------- schema

enum class ValueType { Real, Int, Choice, List, Text };

struct ConfigKey {
  std::string key;
  ValueType type;
  std::string fallback;
  std::vector<std::string> choices;  // Choice/List: allowed words; Real: accepted word
  std::string doc;
};

inline const std::vector<std::string>& estimator_names() {
  static const std::vector<std::string> names{"growth",     "gradient",     "density",  "harnack_l1",
                                              "tangential", "neighborhood", "boxcount", "spherical"};
  return names;
}

/// Every key, its type and default. Real keys with a word accept that word.
inline const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema{
      {"gamma", ValueType::Real, "0.5", {}, "singularity exponent in (0,1)"},
      {"sigma0", ValueType::Real, "0.25", {}, "transition offset in (0,1/2)"},
      {"epsilon", ValueType::Real, "floor", {"floor"}, "final epsilon; floor = 4 h^(1/alpha)"},
      {"mollifier", ValueType::Choice, "polynomial-bump", {"polynomial-bump"}, "density rho"},
      {"operator", ValueType::Choice, "trace", {"trace", "pucci+", "pucci-", "hessian-iota"}, "F"},
      {"lambda", ValueType::Real, "1", {}, "Pucci lower ellipticity"},
      {"Lambda", ValueType::Real, "1", {}, "Pucci upper ellipticity"},
      {"iota", ValueType::Int, "3", {}, "odd exponent of hessian-iota"},
      {"shape", ValueType::Choice, "interval", {"interval", "square", "disk"}, "domain"},
      {"nodes", ValueType::Int, "1025", {}, "nodes per side"},
      {"x0", ValueType::Real, "0", {}, "lower-left corner x"},
      {"y0", ValueType::Real, "0", {}, "lower-left corner y"},
      {"length", ValueType::Real, "1", {}, "side length"},
      {"datum", ValueType::Choice, "planar", {"planar", "radial", "constant", "zero"}, "boundary data"},
      {"datum_shift", ValueType::Real, "0", {}, "plane position or dead-core radius"},
      {"datum_coefficient", ValueType::Real, "auto", {"auto"}, "c in c (.)_+^alpha; auto = planar power coefficient"},
      {"datum_value", ValueType::Real, "1", {}, "value of the constant datum"},
      {"residual_tol", ValueType::Real, "1e-08", {}, "sup-norm residual tolerance"},
      {"max_iterations", ValueType::Int, "4000", {}, "pseudo-time step budget"},
      {"descent_steps", ValueType::Int, "20", {}, "pseudo-time steps before Newton"},
      {"max_newton", ValueType::Int, "60", {}, "Newton iteration budget"},
      {"stages", ValueType::Int, "0", {}, "continuation stages K; schedule eps 2^(K-k)"},
      {"reference", ValueType::Choice, "none", {"none", "datum"}, "compare u with the datum formula"},
      {"reference_tol", ValueType::Real, "0.02", {}, "relative sup-norm tolerance of the reference check"},
      {"estimators", ValueType::List, "all", {}, "comma list of estimators, all or none"},
      {"threshold_factor", ValueType::Real, "2", {}, "C1 in the level C1 eps^alpha"},
      {"seed", ValueType::Int, "1", {}, "seed for free-boundary point sampling"},
      {"fb_points", ValueType::Int, "8", {}, "sampled free-boundary points besides the central one"},
      {"growth_rmin", ValueType::Real, "0.125", {}, "smallest growth radius / length"},
      {"growth_rmax", ValueType::Real, "0.5", {}, "largest growth radius / length"},
      {"growth_radii", ValueType::Int, "8", {}, "number of growth radii"},
      {"output", ValueType::Text, "run", {}, "output directory"},
  };
  return schema;
}

inline const ConfigKey& schema_entry(const std::string& key) {
  for (const auto& k : config_schema())
    if (k.key == key) return k;
  throw ConfigError("unknown config key '" + key + "'");
}

inline std::string format_real(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  std::string s = os.str();
  // shortest representation that parses back to v
  for (int p = 1; p <= 17; ++p) {
    std::ostringstream t;
    t << std::setprecision(p) << v;
    if (std::stod(t.str()) == v) return t.str();
  }
  return s;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

/// Flat key = value configuration over config_schema(). Values are stored in
/// canonical text form, so serialization round-trips exactly.
class ExperimentConfig {
 public:
  ExperimentConfig() {
    for (const auto& k : config_schema()) values_[k.key] = k.fallback;
  }

  static ExperimentConfig parse(const std::string& text) {
    ExperimentConfig c;
    std::set<std::string> seen;
    std::istringstream is(text);
    std::string line;
    int n = 0;
    while (std::getline(is, line)) {
      ++n;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("line " + std::to_string(n) + ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      if (!seen.insert(key).second) throw ConfigError("line " + std::to_string(n) + ": duplicate key '" + key + "'");
      c.set(key, trim(line.substr(eq + 1)));
    }
    return c;
  }

  static ExperimentConfig load(const std::filesystem::path& p) {
    if (!std::filesystem::exists(p)) throw ConfigError("config file not found: " + p.string());
    return parse(read_file(p));
  }

  /// Type-checks and canonicalizes one value.
  void set(const std::string& key, const std::string& raw) {
    const ConfigKey& k = schema_entry(key);
    const std::string v = trim(raw);
    if (v.empty()) throw ConfigError("empty value for '" + key + "'");
    switch (k.type) {
      case ValueType::Real: {
        if (std::find(k.choices.begin(), k.choices.end(), v) != k.choices.end()) {
          values_[key] = v;
          return;
        }
        values_[key] = format_real(parse_real(key, v));
        return;
      }
      case ValueType::Int: {
        std::size_t pos = 0;
        long long x = 0;
        try {
          x = std::stoll(v, &pos);
        } catch (const std::exception&) {
          pos = 0;
        }
        if (pos != v.size()) throw ConfigError("'" + key + "' expects an integer, got '" + v + "'");
        values_[key] = std::to_string(x);
        return;
      }
      case ValueType::Choice:
        if (std::find(k.choices.begin(), k.choices.end(), v) == k.choices.end())
          throw ConfigError("'" + key + "' must be one of " + join(k.choices) + ", got '" + v + "'");
        values_[key] = v;
        return;
      case ValueType::List: {
        if (v == "all" || v == "none") {
          values_[key] = v;
          return;
        }
        const auto items = split_list(v);
        std::set<std::string> chosen(items.begin(), items.end());
        std::vector<std::string> ordered;
        for (const auto& name : estimator_names())
          if (chosen.erase(name)) ordered.push_back(name);
        if (!chosen.empty()) throw ConfigError("unknown estimator '" + *chosen.begin() + "'");
        if (ordered.empty()) throw ConfigError("empty estimator list");
        values_[key] = join(ordered, ",");
        return;
      }
      case ValueType::Text:
        values_[key] = v;
        return;
    }
  }

  const std::string& text(const std::string& key) const {
    schema_entry(key);
    return values_.at(key);
  }
  double real(const std::string& key) const { return parse_real(key, text(key)); }
  long long integer(const std::string& key) const { return std::stoll(text(key)); }
  bool is_word(const std::string& key, const std::string& word) const { return text(key) == word; }

  std::vector<std::string> estimators() const {
    const auto& v = text("estimators");
    if (v == "all") return estimator_names();
    if (v == "none") return {};
    return split_list(v);
  }

  std::string serialize() const {
    std::string out;
    for (const auto& k : config_schema()) out += k.key + " = " + values_.at(k.key) + "\n";
    return out;
  }

  /// Hash of the canonical text; the output directory does not enter it.
  std::string hash() const {
    ExperimentConfig c = *this;
    c.values_["output"] = "run";
    return sha256_hex(c.serialize());
  }

  bool operator==(const ExperimentConfig& o) const { return values_ == o.values_; }

  GridPtr grid() const {
    const int n = static_cast<int>(integer("nodes"));
    const double x0 = real("x0"), y0 = real("y0"), len = real("length");
    const auto shape = text("shape");
    if (shape == "interval") return make_grid(Grid::interval(n, x0, len));
    if (shape == "square") return make_grid(Grid::square(n, x0, y0, len));
    return make_grid(Grid::disk(n, x0, y0, len));
  }

  EllipticOperator op() const {
    const auto kind = operator_kind_from_string(text("operator"));
    switch (kind) {
      case OperatorKind::Trace: return EllipticOperator::trace();
      case OperatorKind::PucciPlus: return EllipticOperator::pucci_plus(real("lambda"), real("Lambda"));
      case OperatorKind::PucciMinus: return EllipticOperator::pucci_minus(real("lambda"), real("Lambda"));
      case OperatorKind::HessianIota: return EllipticOperator::hessian_iota(static_cast<int>(integer("iota")));
    }
    throw ConfigError("bad operator");
  }

  double epsilon(const Grid& g) const {
    return is_word("epsilon", "floor") ? resolution_floor(g, real("gamma")) : real("epsilon");
  }

  double datum_coefficient() const {
    if (is_word("datum_coefficient", "auto")) {
      const auto f = op();
      if (!f.is_positively_homogeneous()) return 1.0;
      const double a = alpha_of_gamma(real("gamma"));
      const double lead = f.eval_eigen(a * (a - 1.0));
      return std::pow(real("gamma") / lead, 1.0 / (2.0 - real("gamma")));
    }
    return real("datum_coefficient");
  }

  /// u on the boundary, also the reference profile for `reference = datum`.
  BoundaryRule datum(const Grid& g) const {
    const auto kind = text("datum");
    const double a = alpha_of_gamma(real("gamma"));
    const double shift = real("datum_shift");
    if (kind == "zero") return [](const Point&) { return 0.0; };
    if (kind == "constant") {
      const double v = real("datum_value");
      return [v](const Point&) { return v; };
    }
    const double c = datum_coefficient();
    if (kind == "planar")
      return [c, a, shift](const Point& p) { return c * std::pow(std::max(p[0] - shift, 0.0), a); };
    const Point ctr = g.center();
    return [c, a, shift, ctr](const Point& p) { return c * std::pow(std::max(distance(p, ctr) - shift, 0.0), a); };
  }

  /// Schema-level validation plus the resolution-floor rule.
  void validate() const {
    const double gamma = real("gamma");
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0,1)");
    const double s0 = real("sigma0");
    if (!(s0 > 0.0 && s0 < 0.5)) throw ConfigError("sigma0 must lie in (0,1/2)");
    if (!(real("length") > 0.0)) throw ConfigError("length must be positive");
    const long long n = integer("nodes");
    if (n < 33 || n > 65537 || n % 2 == 0) throw ConfigError("nodes must be odd and in [33, 65537]");
    const auto g = grid();
    const std::string k = text("operator");
    if (k == "pucci+" || k == "pucci-") {
      if (!(real("lambda") > 0.0 && real("lambda") <= real("Lambda")))
        throw ConfigError("Pucci bounds need 0 < lambda <= Lambda");
    }
    if (k == "hessian-iota") op();
    const double eps = epsilon(*g);
    const double floor = resolution_floor(*g, gamma);
    if (!(eps > 0.0)) throw ConfigError("epsilon must be positive");
    if (eps < floor * (1.0 - 1e-12))
      throw ConfigError("epsilon " + format_real(eps) + " is below the resolution floor 4 h^(1/alpha) = " +
                        format_real(floor));
    if (!is_word("datum_coefficient", "auto") && !(real("datum_coefficient") > 0.0))
      throw ConfigError("datum_coefficient must be positive");
    if (text("datum") == "constant" && !(real("datum_value") >= 0.0))
      throw ConfigError("datum_value must be nonnegative");
    if (!(real("residual_tol") > 0.0)) throw ConfigError("residual_tol must be positive");
    if (integer("max_iterations") < 1 || integer("descent_steps") < 0 || integer("max_newton") < 0)
      throw ConfigError("iteration budgets must be nonnegative");
    if (integer("stages") < 0 || integer("stages") > 30) throw ConfigError("stages must lie in [0, 30]");
    if (!(real("reference_tol") > 0.0)) throw ConfigError("reference_tol must be positive");
    if (!(real("threshold_factor") >= 1.0)) throw ConfigError("threshold_factor must be >= 1");
    if (integer("seed") < 0) throw ConfigError("seed must be nonnegative");
    if (integer("fb_points") < 0) throw ConfigError("fb_points must be nonnegative");
    const double r0 = real("growth_rmin"), r1 = real("growth_rmax");
    if (!(r0 > 0.0 && r1 > r0)) throw ConfigError("need 0 < growth_rmin < growth_rmax");
    if (integer("growth_radii") < 4) throw ConfigError("growth_radii must be >= 4");
  }

  ProblemSpec problem() const {
    validate();
    const GridPtr g = grid();
    SolverTolerances tol;
    tol.residual = real("residual_tol");
    tol.max_iterations = static_cast<int>(integer("max_iterations"));
    tol.descent_steps = static_cast<int>(integer("descent_steps"));
    tol.max_newton = static_cast<int>(integer("max_newton"));
    ProblemSpec spec{SingularityParams(real("gamma"), epsilon(*g), real("sigma0")),
                     Mollifier::polynomial_bump(),
                     op(),
                     g,
                     datum(*g),
                     tol,
                     static_cast<int>(integer("stages"))};
    return spec;
  }

 private:
  static double parse_real(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double x = 0.0;
    try {
      x = std::stod(v, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != v.size() || !std::isfinite(x)) throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
    return x;
  }

  static std::string join(const std::vector<std::string>& v, const std::string& sep = ", ") {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
    return out;
  }

  std::map<std::string, std::string> values_;
};

// ------------------------------------------------------------- estimators

struct EstimatorSettings {
  double gamma = 0.5;
  double sigma0 = 0.25;
  double epsilon = 0.0;
  double threshold_factor = 2.0;
  std::uint64_t seed = 1;
  std::size_t fb_points = 8;
  double growth_rmin = 0.125;
  double growth_rmax = 0.5;
  int growth_radii = 8;
  std::vector<std::string> estimators = estimator_names();
  std::string config_hash;

  static EstimatorSettings from(const ExperimentConfig& c, const Grid& g) {
    EstimatorSettings s;
    s.gamma = c.real("gamma");
    s.sigma0 = c.real("sigma0");
    s.epsilon = c.epsilon(g);
    s.threshold_factor = c.real("threshold_factor");
    s.seed = static_cast<std::uint64_t>(c.integer("seed"));
    s.fb_points = static_cast<std::size_t>(c.integer("fb_points"));
    s.growth_rmin = c.real("growth_rmin");
    s.growth_rmax = c.real("growth_rmax");
    s.growth_radii = static_cast<int>(c.integer("growth_radii"));
    s.estimators = c.estimators();
    s.config_hash = c.hash();
    return s;
  }
};

namespace detail {

inline std::string grid_label(const Grid& g) {
  std::ostringstream os;
  os << to_string(g.shape()) << ' ' << g.nx() << 'x' << g.ny() << " h=" << format_real(g.h()) << " origin=("
     << format_real(g.x0()) << ',' << format_real(g.y0()) << ')';
  return os.str();
}

/// Unit direction of increasing u at p, from interpolated differences.
inline Point ascent_direction(const ScalarField& u, const Point& p) {
  const Grid& g = u.grid();
  const double h = g.h();
  auto value = [&](Point q) {
    return g.contains_ball(q, 0.0) ? u.interpolate(q) : u.interpolate(p);
  };
  Point d{(value({p[0] + h, p[1]}) - value({p[0] - h, p[1]})), 0.0};
  if (g.dim() == 2) d[1] = value({p[0], p[1] + h}) - value({p[0], p[1] - h});
  const double n = std::hypot(d[0], d[1]);
  if (!(n > 0.0)) throw GeometryError("u is flat at the free-boundary point");
  return {d[0] / n, d[1] / n};
}

/// Radius of the largest closed ball around p inside the domain.
inline double inradius(const Grid& g, const Point& p) {
  double r = std::min(p[0] - g.x0(), g.x0() + g.length() - p[0]);
  if (g.dim() == 2) r = std::min({r, p[1] - g.y0(), g.y0() + g.h() * (g.ny() - 1) - p[1]});
  if (g.shape() == DomainShape::Disk) r = std::min(r, 0.5 * g.length() - distance(p, g.center()));
  return std::max(r, 0.0);
}

/// lo, 2 lo, 4 lo, ... while keep(x) holds.
template <class Pred>
std::vector<double> dyadic(double lo, Pred keep, int cap = 40) {
  std::vector<double> out;
  for (double x = lo; out.size() < static_cast<std::size_t>(cap) && keep(x); x *= 2.0) out.push_back(x);
  return out;
}

inline double spread(const std::vector<ScaleRow>& rows) {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& r : rows) {
    lo = std::min(lo, r.normalized);
    hi = std::max(hi, r.normalized);
  }
  return hi / lo;
}

}  // namespace detail

/// Runs the selected geometry estimators on u and records every check with
/// its tolerance. Throws GeometryError when {u > eps^alpha} has no boundary.
inline EstimateReport run_estimators(const ScalarField& u, const EstimatorSettings& s) {
  const Grid& g = u.grid();
  const double h = g.h();
  const double a = alpha_of_gamma(s.gamma);
  const double level = std::pow(s.epsilon, a);
  const auto fb = extract_free_boundary(u, level);
  if (fb.empty()) throw GeometryError("empty free boundary: no crossing of u = eps^alpha");

  EstimateReport rep;
  rep.set_provenance("config_hash", s.config_hash);
  rep.set_provenance("grid", detail::grid_label(g));
  rep.set_provenance("epsilon", format_real(s.epsilon));
  rep.set_provenance("gamma", format_real(s.gamma));
  rep.set_provenance("seed", std::to_string(s.seed));
  rep.set_provenance("version", kVersion);
  rep.set_scalar("alpha", a);
  rep.set_scalar("level", level);
  rep.set_scalar("level_c1", s.threshold_factor * level);
  rep.set_scalar("fb_points", static_cast<double>(fb.points.size()));

  const auto points = select_fb_points(fb, s.seed, s.fb_points);
  const Point p0 = points.front();
  rep.set_scalar("center_x", p0[0]);
  rep.set_scalar("center_y", p0[1]);
  const auto dist = distance_field(fb);
  std::optional<FreeBoundarySet> fb_c;
  std::optional<DistanceField> dist_c;
  auto level_c1 = [&]() -> const FreeBoundarySet& {
    if (!fb_c) {
      fb_c = extract_free_boundary(u, s.threshold_factor * level);
      if (fb_c->empty()) throw GeometryError("empty free boundary at the C1 eps^alpha level");
    }
    return *fb_c;
  };
  // Sample point of the C1 level set with the largest inscribed ball, the
  // radius rounded down to whole cells.
  auto measure_ball = [&]() {
    const auto cands = select_fb_points(level_c1(), s.seed, s.fb_points);
    Point best = cands.front();
    double rho = -1.0;
    for (const auto& q : cands) {
      const double r = h * std::floor(detail::inradius(g, q) / h + 1e-9);
      if (r > rho) {
        rho = r;
        best = q;
      }
    }
    if (rho < 16.0 * h) throw GeometryError("no ball of radius >= 16h around a free-boundary point fits the domain");
    return std::pair<Point, double>{best, rho};
  };

  for (const auto& name : s.estimators) {
    try {
      if (name == "growth") {
        const auto radii = geometric_scales(s.growth_rmin * g.length(), s.growth_rmax * g.length(), s.growth_radii);
        const GrowthFit f = growth_exponent_fit(u, p0, radii, a);
        std::vector<ScaleRow> rows;
        for (std::size_t i = 0; i < f.radii.size(); ++i)
          rows.push_back({f.radii[i], f.sups[i], f.sups[i] / std::pow(f.radii[i], a)});
        rep.set_table("growth", rows);
        rep.set_scalar("growth.slope", f.slope);
        rep.set_scalar("growth.intercept", f.intercept);
        rep.set_scalar("growth.residual", f.residual);
        rep.set_scalar("growth.c0", f.c0);
        double lo = f.slope, hi = f.slope;
        for (std::size_t i = 1; i < points.size(); ++i) {
          try {
            const double sl = growth_exponent_fit(u, points[i], radii, a).slope;
            lo = std::min(lo, sl);
            hi = std::max(hi, sl);
          } catch (const GeometryError&) {
          }
        }
        rep.set_scalar("growth.slope_min", lo);
        rep.set_scalar("growth.slope_max", hi);
        rep.check("growth.slope", f.slope, a - 0.05, a + 0.05, "|slope - alpha| <= 0.05");
      } else if (name == "gradient") {
        const auto gr = gradient_bound_check(u, s.gamma, s.sigma0 * level);
        rep.set_scalar("gradient.max_ratio", gr.max_ratio);
        rep.set_scalar("gradient.at_x", gr.at[0]);
        rep.set_scalar("gradient.at_y", gr.at[1]);
        rep.set_scalar("gradient.nodes", static_cast<double>(gr.nodes));
        rep.check("gradient.max_ratio", gr.max_ratio, 0.0, std::numeric_limits<double>::max(), "finite");
      } else if (name == "density" || name == "harnack_l1") {
        std::vector<ScaleRow> rows;
        for (const auto& p : points)
          for (double d : detail::dyadic(4.0 * h, [&](double r) { return g.contains_ball(p, r); })) {
            if (name == "density") {
              const double q = density_ratio(fb, p, d);
              rows.push_back({d, q, q});
            } else {
              const auto r = l1_harnack_check(u, {p}, {d}, a);
              rows.push_back(r.table.front());
            }
          }
        if (rows.empty()) throw GeometryError("no ball of radius >= 4h around a free-boundary point fits the domain");
        rep.set_table(name, rows);
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        for (const auto& r : rows) {
          lo = std::min(lo, r.normalized);
          hi = std::max(hi, r.normalized);
        }
        rep.set_scalar(name + ".min", lo);
        rep.set_scalar(name + ".max", hi);
        if (name == "density")
          rep.check("density.min", lo, 0.05, 1.0, "min ratio >= 0.05");
        else
          rep.check("harnack_l1.min", lo, std::numeric_limits<double>::min(), std::numeric_limits<double>::max(),
                    "min mean/rho^alpha > 0");
      } else if (name == "tangential") {
        // walk into the positivity set from each sample point; keep the walk
        // with the most depths outside the transition layer (d >= 4 eps)
        std::vector<ScaleRow> rows, deep;
        for (const auto& p : points) {
          const Point n = detail::ascent_direction(u, p);
          std::vector<ScaleRow> walk, walk_deep;
          for (double d = 8.0 * h;; d *= 2.0) {
            const Point x{p[0] + d * n[0], p[1] + d * n[1]};
            const double dx = dist.at(x);
            if (!g.contains_ball(x, 0.5 * dx) || dx < 8.0 * h) break;
            const double q = tangential_harnack_ratio(u, dist, x);
            walk.push_back({dx, q, q});
            if (dx >= 4.0 * s.epsilon) walk_deep.push_back(walk.back());
          }
          if (walk_deep.size() > deep.size()) {
            rows = walk;
            deep = walk_deep;
          }
        }
        rep.set_table("tangential", rows);
        rep.set_scalar("tangential.min_depth", 4.0 * s.epsilon);
        if (deep.size() < 2) throw GeometryError("fewer than 2 admissible depths d >= max(8h, 4 eps)");
        const double sp = detail::spread(deep);
        rep.set_scalar("tangential.spread", sp);
        rep.check("tangential.spread", sp, 1.0, 2.0, "max/min over depths d >= 4 eps <= 2");
      } else if (name == "neighborhood" || name == "boxcount") {
        const auto& fc = level_c1();
        const auto [q, rho] = measure_ball();
        rep.set_scalar(name + ".rho", rho);
        rep.set_scalar(name + ".x", q[0]);
        rep.set_scalar(name + ".y", q[1]);
        if (name == "neighborhood") {
          const auto mus = detail::dyadic(2.0 * h, [&](double m) { return m <= rho / 8.0 * (1.0 + 1e-12); });
          if (!dist_c) dist_c.emplace(fc);
          std::vector<ScaleRow> rows;
          for (double m : mus) {
            const auto v = neighborhood_volume(fc, *dist_c, q, rho, m);
            rows.push_back({m, v.volume, v.ratio});
          }
          rep.set_table("neighborhood", rows);
          const double sp = detail::spread(rows);
          rep.set_scalar("neighborhood.spread", sp);
          rep.check("neighborhood.spread", sp, 1.0, 2.0, "max/min ratio over mu in [2h, rho/8] <= 2");
        } else {
          const auto b = surface_measure_boxcount(fc, q, rho, geometric_scales(2.0 * h, rho / 4.0, 8));
          rep.set_table("boxcount", b.table);
          rep.set_scalar("boxcount.slope", b.slope);
          rep.set_scalar("boxcount.residual", b.residual);
          rep.set_scalar("boxcount.min_constant", b.min_constant);
          rep.set_scalar("boxcount.max_constant", b.max_constant);
          const double target = g.dim() - 1.0;
          rep.check("boxcount.slope", b.slope, target - 0.15, target + 0.15, "|slope - (N-1)| <= 0.15");
        }
      } else if (name == "spherical") {
        const auto radii = detail::dyadic(4.0 * h, [&](double r) { return g.contains_ball(p0, r); });
        if (radii.empty()) throw GeometryError("no sphere of radius >= 4h around the free-boundary point fits the domain");
        const auto r = spherical_mean_check(u, p0, radii, a);
        rep.set_table("spherical", r.table);
        rep.set_scalar("spherical.min", r.min_ratio);
        rep.set_scalar("spherical.max", r.max_ratio);
        rep.check("spherical.min", r.min_ratio, std::numeric_limits<double>::min(),
                  std::numeric_limits<double>::max(), "min mean/rho^alpha > 0");
      }
    } catch (const std::exception& e) {
      rep.fail(name, e.what());
    }
  }
  return rep;
}

// ------------------------------------------------------------- manifests

struct FileEntry {
  std::string name;
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct StageTiming {
  std::string name;
  double seconds = 0.0;
  bool ok = true;
  std::string flag;
};

struct RunManifest {
  std::string config_hash;
  std::string mode;
  std::map<std::string, std::string> versions;
  std::vector<StageTiming> stages;
  std::vector<FileEntry> files;
  nlohmann::json solver = nlohmann::json::array();
  bool degraded = false;
  bool cached = false;
  bool checks_pass = false;
  std::string failure;

  bool ok() const { return !degraded && checks_pass; }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["config_hash"] = config_hash;
    j["mode"] = mode;
    j["versions"] = versions;
    j["status"] = degraded ? "degraded" : "ok";
    j["checks_pass"] = checks_pass;
    j["failure"] = failure;
    j["stages"] = nlohmann::json::array();
    for (const auto& s : stages)
      j["stages"].push_back({{"name", s.name}, {"seconds", s.seconds}, {"ok", s.ok}, {"flag", s.flag}});
    j["files"] = nlohmann::json::array();
    for (const auto& f : files) j["files"].push_back({{"name", f.name}, {"sha256", f.sha256}, {"bytes", f.bytes}});
    j["solver"] = solver;
    return j;
  }

  static RunManifest from_json(const nlohmann::json& j) {
    RunManifest m;
    m.config_hash = j.at("config_hash");
    m.mode = j.at("mode");
    m.versions = j.at("versions").get<std::map<std::string, std::string>>();
    m.degraded = j.at("status") != "ok";
    m.checks_pass = j.at("checks_pass");
    m.failure = j.at("failure");
    for (const auto& s : j.at("stages")) m.stages.push_back({s.at("name"), s.at("seconds"), s.at("ok"), s.at("flag")});
    for (const auto& f : j.at("files")) m.files.push_back({f.at("name"), f.at("sha256"), f.at("bytes")});
    m.solver = j.at("solver");
    return m;
  }
};

inline std::map<std::string, std::string> module_versions() {
  return {{"quench", kVersion}, {"model", "1"},    {"solver", "1"},  {"radial", "1"},
          {"barrier", "1"},     {"geometry", "1"}, {"harness", "1"}};
}

enum class RunMode { Solve, Sweep };

namespace detail {

inline nlohmann::json solve_summary(const SolveResult& r) {
  return {{"epsilon", r.epsilon},
          {"residual", r.residual},
          {"tolerance", r.effective_tolerance},
          {"converged", r.converged},
          {"descent_iterations", r.descent_iterations},
          {"newton_iterations", r.newton_iterations},
          {"chord_iterations", r.chord_iterations},
          {"step_halvings", r.step_halvings},
          {"monotone_violations", r.monotone_violations},
          {"newton_fallback", r.newton_fallback},
          {"max_sandwich_violation", r.max_sandwich_violation}};
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error("cannot write " + p.string());
  os << s;
}

/// Inventory entry for a file just written; the manifest itself is excluded.
inline void record(RunManifest& m, const std::filesystem::path& dir, const std::string& name) {
  const auto p = dir / name;
  m.files.push_back({name, sha256_file(p), std::filesystem::file_size(p)});
}

/// A previous run in `dir` with the same config hash and intact files.
inline std::optional<RunManifest> cached_run(const std::filesystem::path& dir, const std::string& hash,
                                             const std::string& mode) {
  const auto mp = dir / "manifest.json";
  if (!std::filesystem::exists(mp)) return std::nullopt;
  try {
    RunManifest m = RunManifest::from_json(nlohmann::json::parse(read_file(mp)));
    if (m.config_hash != hash || m.mode != mode || m.degraded) return std::nullopt;
    for (const auto& f : m.files)
      if (!std::filesystem::exists(dir / f.name) || sha256_file(dir / f.name) != f.sha256) return std::nullopt;
    m.cached = true;
    return m;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline std::string stage_name(std::size_t k) { return "u_" + std::to_string(k) + ".fld"; }

}  // namespace detail

inline void write_report(const std::filesystem::path& dir, const EstimateReport& rep, RunManifest* m,
                         const std::string& stem = "estimates") {
  detail::write_text(dir / (stem + ".json"), rep.to_json().dump(2) + "\n");
  if (m) detail::record(*m, dir, stem + ".json");
  for (const auto& [name, rows] : rep.tables()) {
    const std::string file = stem + "_" + name + ".csv";
    write_table_csv((dir / file).string(), rows);
    if (m) detail::record(*m, dir, file);
  }
}

/// solve: final field only; sweep: one field per stage plus the Cauchy table.
/// Outputs go to `dir` (default: the config's output key). A matching cached
/// run in `dir` is returned untouched unless `force`.
inline RunManifest run_experiment(const ExperimentConfig& cfg, RunMode mode,
                                  std::optional<std::filesystem::path> dir = std::nullopt, bool force = false) {
  cfg.validate();
  namespace fs = std::filesystem;
  const fs::path out = dir ? *dir : fs::path(cfg.text("output"));
  const std::string mode_name = mode == RunMode::Solve ? "solve" : "sweep";
  const std::string hash = cfg.hash();
  if (!force)
    if (auto hit = detail::cached_run(out, hash, mode_name)) return *hit;

  fs::create_directories(out);
  RunManifest m;
  m.config_hash = hash;
  m.mode = mode_name;
  m.versions = module_versions();
  using Clock = std::chrono::steady_clock;
  auto seconds = [](Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); };
  auto finish = [&]() {
    detail::write_text(out / "manifest.json", m.to_json().dump(2) + "\n");
    return m;
  };

  detail::write_text(out / "config.cfg", cfg.serialize());
  detail::record(m, out, "config.cfg");

  const ProblemSpec spec = cfg.problem();
  auto t0 = Clock::now();
  SweepResult sw;
  try {
    sw = continuation_sweep(spec);
  } catch (const std::exception& e) {
    sw.failure = e.what();
  }
  m.stages.push_back({"solve", seconds(t0), sw.complete, sw.complete ? "" : sw.failure});
  for (const auto& r : sw.stages) m.solver.push_back(detail::solve_summary(r));

  // fields of converged stages survive a failure
  t0 = Clock::now();
  std::size_t converged = 0;
  while (converged < sw.stages.size() && sw.stages[converged].converged) ++converged;
  if (mode == RunMode::Sweep) {
    for (std::size_t k = 0; k < converged; ++k) {
      write_field((out / detail::stage_name(k)).string(), sw.stages[k].u);
      detail::record(m, out, detail::stage_name(k));
    }
  } else if (sw.complete) {
    write_field((out / "u.fld").string(), sw.stages.back().u);
    detail::record(m, out, "u.fld");
  }
  m.stages.push_back({"write", seconds(t0), true, ""});

  if (!sw.complete) {
    m.degraded = true;
    m.failure = sw.failure.empty() ? "solve failed" : sw.failure;
    return finish();
  }

  t0 = Clock::now();
  const ScalarField& u = sw.stages.back().u;
  const Grid& g = u.grid();
  const double a = alpha_of_gamma(cfg.real("gamma"));
  EstimateReport rep;
  bool est_ok = true;
  std::string est_flag;
  try {
    if (cfg.estimators().empty()) {
      rep.set_provenance("config_hash", hash);
      rep.set_provenance("grid", detail::grid_label(g));
      rep.set_provenance("epsilon", format_real(spec.params.epsilon()));
    } else {
      rep = run_estimators(u, EstimatorSettings::from(cfg, g));
    }
  } catch (const std::exception& e) {
    est_ok = false;
    est_flag = e.what();
    rep.set_provenance("config_hash", hash);
    rep.fail("estimators", e.what());
  }
  rep.set_scalar("solver.residual", sw.stages.back().residual);
  rep.check("solver.converged", sw.stages.back().converged ? 1.0 : 0.0, 1.0, 1.0, "final stage converged");

  if (cfg.is_word("reference", "datum")) {
    const auto exact = ScalarField::from_function(u.grid_ptr(), spec.datum);
    const double err = sup_norm_diff(u, exact) / sup_norm(exact);
    rep.set_scalar("reference.relative_sup_error", err);
    rep.check("reference.relative_sup_error", err, 0.0, cfg.real("reference_tol"),
              "<= " + format_real(cfg.real("reference_tol")));
  }

  if (mode == RunMode::Sweep && sw.stages.size() >= 2) {
    // Cauchy monitor: sup differences and Hausdorff distances of the
    // C1 eps_k^alpha level sets between consecutive stages.
    std::ostringstream csv;
    csv.precision(17);
    csv << "k,epsilon,sup_difference,hausdorff\n";
    std::vector<double> haus;
    const double c1 = cfg.real("threshold_factor");
    std::optional<FreeBoundarySet> prev;
    for (std::size_t k = 0; k < sw.stages.size(); ++k) {
      auto fb = extract_free_boundary(sw.stages[k].u, c1 * std::pow(sw.epsilons[k], a));
      if (k > 0) {
        double hd = std::numeric_limits<double>::quiet_NaN();
        if (!fb.empty() && !prev->empty()) hd = hausdorff_distance(*prev, fb);
        haus.push_back(hd);
        csv << k << ',' << sw.epsilons[k] << ',' << sw.sup_differences[k - 1] << ',' << hd << '\n';
      }
      prev = std::move(fb);
    }
    detail::write_text(out / "hausdorff.csv", csv.str());
    detail::record(m, out, "hausdorff.csv");
    // stages without a C1 level set are skipped and counted
    auto increases = [](const std::vector<double>& v) {
      double n = 0;
      std::optional<double> last;
      for (double x : v) {
        if (std::isnan(x)) continue;
        if (last && !(x < *last)) ++n;
        last = x;
      }
      return n;
    };
    rep.set_scalar("sweep.hausdorff_missing",
                   static_cast<double>(std::count_if(haus.begin(), haus.end(), [](double x) { return std::isnan(x); })));
    rep.check("sweep.sup_difference_increases", increases(sw.sup_differences), 0.0, 0.0,
              "strictly decreasing over k");
    rep.check("sweep.hausdorff_increases", increases(haus), 0.0, 0.0, "strictly decreasing over k");
  }
  write_report(out, rep, &m);
  m.stages.push_back({"estimate", seconds(t0), est_ok, est_flag});
  m.checks_pass = rep.pass();
  return finish();
}

}  // namespace quench
