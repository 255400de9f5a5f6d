#pragma once

// Named quantitative results with explicit pass/fail bounds.

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "quench/geometry.hpp"

namespace quench {

struct Check {
  std::string name;
  double value = 0.0;
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  std::string tolerance;  // human-readable form of [lower, upper]
  bool pass = false;
};

class EstimateReport {
 public:
  void set_scalar(const std::string& name, double v) { scalars_[name] = v; }
  void set_note(const std::string& name, const std::string& v) { notes_[name] = v; }
  void set_provenance(const std::string& key, const std::string& v) { provenance_[key] = v; }
  void set_table(const std::string& name, std::vector<ScaleRow> rows) { tables_[name] = std::move(rows); }

  /// Records value against [lower, upper]; non-finite values fail.
  const Check& check(const std::string& name, double value, double lower, double upper,
                     const std::string& tolerance) {
    Check c{name, value, lower, upper, tolerance, std::isfinite(value) && value >= lower && value <= upper};
    checks_.push_back(c);
    return checks_.back();
  }

  /// A check that could not be evaluated counts as a failure.
  void fail(const std::string& name, const std::string& reason) {
    checks_.push_back({name, std::numeric_limits<double>::quiet_NaN(), 0.0, 0.0, "not evaluated", false});
    notes_[name] = reason;
  }

  bool pass() const {
    for (const auto& c : checks_)
      if (!c.pass) return false;
    return true;
  }

  const std::vector<Check>& checks() const { return checks_; }
  const std::map<std::string, double>& scalars() const { return scalars_; }
  const std::map<std::string, std::vector<ScaleRow>>& tables() const { return tables_; }
  const std::map<std::string, std::string>& notes() const { return notes_; }
  const std::map<std::string, std::string>& provenance() const { return provenance_; }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["pass"] = pass();
    j["provenance"] = provenance_;
    j["scalars"] = nlohmann::json::object();
    for (const auto& [k, v] : scalars_) j["scalars"][k] = finite_or_null(v);
    j["notes"] = notes_;
    j["checks"] = nlohmann::json::array();
    for (const auto& c : checks_)
      j["checks"].push_back({{"name", c.name},
                             {"value", finite_or_null(c.value)},
                             {"lower", finite_or_null(c.lower)},
                             {"upper", finite_or_null(c.upper)},
                             {"tolerance", c.tolerance},
                             {"pass", c.pass}});
    j["tables"] = nlohmann::json::object();
    for (const auto& [k, rows] : tables_) {
      auto& t = j["tables"][k] = nlohmann::json::array();
      for (const auto& r : rows) t.push_back({finite_or_null(r.scale), finite_or_null(r.raw), finite_or_null(r.normalized)});
    }
    return j;
  }

  static nlohmann::json finite_or_null(double v) {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
  }

 private:
  std::map<std::string, double> scalars_;
  std::map<std::string, std::string> notes_;
  std::map<std::string, std::string> provenance_;
  std::map<std::string, std::vector<ScaleRow>> tables_;
  std::vector<Check> checks_;
};

inline void write_table_csv(std::ostream& os, const std::vector<ScaleRow>& rows) {
  os.precision(17);
  os << "scale,raw,normalized\n";
  for (const auto& r : rows) os << r.scale << ',' << r.raw << ',' << r.normalized << '\n';
}

inline void write_table_csv(const std::string& path, const std::vector<ScaleRow>& rows) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path);
  write_table_csv(os, rows);
}

}  // namespace quench
