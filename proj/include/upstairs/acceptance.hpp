#pragma once

// Acceptance criteria with pinned limits, grouped into named suites. Shared by
// `upstairs verify` and the acceptance test binary.

#include "upstairs/scenario.hpp"

#include <string>
#include <vector>

namespace upstairs {

struct Measurement {
  std::string label;
  double value = 0.0;
  double limit = 0.0;
  bool at_least = false;  // pass means value >= limit instead of value <= limit
  [[nodiscard]] bool pass() const { return at_least ? value >= limit : value <= limit; }
};

struct CriterionResult {
  int id = 0;
  std::string name;
  std::vector<Measurement> measurements;
  std::string error;  // set when the check could not run
  double seconds = 0.0;
  [[nodiscard]] bool pass() const;
};

int criterion_count();
std::string criterion_name(int id);
CriterionResult run_criterion(int id);

std::vector<std::string> suite_names();
/// Throws InputError listing the available suites when the name is unknown.
std::vector<int> suite_criteria(const std::string& suite);
/// Criteria of a suite, run concurrently; results ordered by id.
std::vector<CriterionResult> run_suite(const std::string& suite);

nlohmann::json to_json(const CriterionResult& r);
/// One line: "[PASS] 3 reduction-2d: label=value (<= limit); ..."
std::string summary_line(const CriterionResult& r);

}  // namespace upstairs
