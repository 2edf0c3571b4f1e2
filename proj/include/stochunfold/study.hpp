// Study outputs: result.json under a fixed schema, one CSV per table, and
// timing data quarantined in timings.json so result files are byte-stable
// across reruns and worker counts.
#pragma once

#include <string>
#include <vector>

#include "stochunfold/io.hpp"

namespace stochunfold {

inline constexpr const char* kStudySchema = "stoch-unfold/study-v1";

struct Assertion {
  std::string name;
  double value = 0.0;
  double bound = 0.0;
  std::string relation = "<=";
  bool passed = false;
};

Assertion assert_le(const std::string& name, double value, double bound);
Assertion assert_ge(const std::string& name, double value, double bound);

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

struct StudyResult {
  std::string subcommand;
  json params = json::object();
  json scalars = json::object();
  std::vector<Table> tables;
  std::vector<Assertion> assertions;
  json timings = json::object();

  bool all_passed() const;
};

// 17 significant digits, enough to round-trip doubles.
std::string format_double(double v);

// Writes <out>/result.json (timing-free; `seconds` columns dropped),
// <out>/<table>.csv per table (all columns), and <out>/timings.json.
void write_study(const StudyResult& result, const std::string& out_dir);

}  // namespace stochunfold
