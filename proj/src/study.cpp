#include "stochunfold/study.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace stochunfold {

Assertion assert_le(const std::string& name, double value, double bound) {
  return {name, value, bound, "<=", value <= bound};
}

Assertion assert_ge(const std::string& name, double value, double bound) {
  return {name, value, bound, ">=", value >= bound};
}

bool StudyResult::all_passed() const {
  for (const Assertion& a : assertions)
    if (!a.passed) return false;
  return true;
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

void write_study(const StudyResult& result, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);

  json doc;
  doc["schema"] = kStudySchema;
  doc["subcommand"] = result.subcommand;
  doc["params"] = result.params;
  doc["scalars"] = result.scalars;
  json asserts = json::array();
  for (const Assertion& a : result.assertions)
    asserts.push_back({{"name", a.name},
                       {"value", a.value},
                       {"bound", a.bound},
                       {"relation", a.relation},
                       {"passed", a.passed}});
  doc["assertions"] = asserts;
  json tables = json::object();
  for (const Table& t : result.tables) {
    json cols = json::array();
    std::vector<std::size_t> keep;
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
      if (t.columns[c] == "seconds") continue;
      cols.push_back(t.columns[c]);
      keep.push_back(c);
    }
    json rows = json::array();
    for (const auto& r : t.rows) {
      json row = json::array();
      for (std::size_t c : keep) row.push_back(r[c]);
      rows.push_back(row);
    }
    tables[t.name] = {{"columns", cols}, {"rows", rows}};
  }
  doc["tables"] = tables;
  doc["passed"] = result.all_passed();
  write_json_file(out_dir + "/result.json", doc);

  for (const Table& t : result.tables) {
    std::ofstream csv(out_dir + "/" + t.name + ".csv");
    require(csv.good(), "cannot write table " + t.name);
    for (std::size_t c = 0; c < t.columns.size(); ++c)
      csv << (c ? "," : "") << t.columns[c];
    csv << "\n";
    for (const auto& r : t.rows) {
      require(r.size() == t.columns.size(), "table " + t.name + ": ragged row");
      for (std::size_t c = 0; c < r.size(); ++c)
        csv << (c ? "," : "") << format_double(r[c]);
      csv << "\n";
    }
  }

  json tdoc;
  tdoc["schema"] = kStudySchema;
  tdoc["subcommand"] = result.subcommand;
  tdoc["timings"] = result.timings;
  write_json_file(out_dir + "/timings.json", tdoc);
}

}  // namespace stochunfold
