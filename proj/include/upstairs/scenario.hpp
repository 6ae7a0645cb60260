#pragma once

// Declarative experiments: a JSON document names a kind, charts or a testbed,
// initial data and a horizon. Running one produces a trajectory table and a
// summary with every monitored invariant against its limit.

#include "upstairs/shooting.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

namespace upstairs {

enum class ScenarioKind { verify_lift, develop, geodesic, pendulum_2d, rn_roll, bvp };
std::string to_string(ScenarioKind k);

inline constexpr int kExitOk = 0;
inline constexpr int kExitParse = 2;
inline constexpr int kExitValidation = 3;
inline constexpr int kExitNumerical = 4;

class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(int exit_code, const std::string& what) : std::runtime_error(what), exit_code_(exit_code) {}
  [[nodiscard]] int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

struct Scenario {
  std::string name;
  ScenarioKind kind = ScenarioKind::geodesic;
  double T = 1.0;
  double tol = 1e-9;
  std::uint64_t seed = 0;
  std::map<std::string, double> limits;  // overrides of the default invariant limits
  nlohmann::json doc;                    // effective document, including overrides
};

struct ScenarioOverrides {
  std::optional<double> tol;
  std::optional<double> T;
  std::optional<std::uint64_t> seed;
};

/// Parses JSON text. Syntax errors raise ScenarioError with exit code 2 and a
/// line/column diagnostic; schema violations raise exit code 3.
Scenario parse_scenario(const std::string& text, const ScenarioOverrides& overrides = {});
Scenario scenario_from_json(nlohmann::json doc, const ScenarioOverrides& overrides = {});

/// FNV-1a over the canonical serialization of the effective document.
std::uint64_t scenario_hash(const nlohmann::json& doc);

std::vector<std::string> scenario_catalog();
/// Throws ScenarioError (exit 3) for unknown names.
nlohmann::json catalog_scenario(const std::string& name);

struct InvariantCheck {
  double value = 0.0;
  double limit = 0.0;
  [[nodiscard]] bool pass() const { return value <= limit; }
};

struct ScenarioOutcome {
  int exit_code = kExitOk;
  nlohmann::json summary;
  std::string table_csv;  // trajectory table, 17 significant digits
  std::map<std::string, InvariantCheck> invariants;
  bool truncated = false;
};

/// Runs the experiment. Numerical trouble is reported in the outcome (exit 4),
/// not thrown; validation problems found while running throw ScenarioError (exit 3).
ScenarioOutcome run_scenario(const Scenario& sc);

/// CSV text to {"columns": [...], "rows": [[...], ...]}.
nlohmann::json csv_to_json(const std::string& csv);

/// Writes <dir>/<stem>.csv (or .trajectory.json) and <dir>/<stem>.summary.json; the
/// summary is written to a temporary file and renamed. Returns the written paths.
std::vector<std::string> write_outcome(const ScenarioOutcome& out, const std::string& dir, const std::string& stem,
                                       const std::string& format);

}  // namespace upstairs
