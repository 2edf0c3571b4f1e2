#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stochunfold/harness.hpp"

using namespace stochunfold;
namespace fs = std::filesystem;

namespace {

const std::string kCli = STOCH_UNFOLD_CLI;
const std::string kConfigs = STOCH_UNFOLD_CONFIGS;

fs::path sandbox() {
  static const fs::path base =
      fs::temp_directory_path() / ("stochunfold_harness_" + std::to_string(::getpid()));
  fs::create_directories(base);
  return base;
}

int run_cmd(const std::string& cmd) {
  const int status = std::system((cmd + " > /dev/null 2>&1").c_str());
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path write_config(const std::string& name, const std::string& body) {
  const fs::path p = sandbox() / name;
  std::ofstream out(p);
  out << body;
  REQUIRE(out.good());
  return p;
}

json load_json(const fs::path& p) { return json::parse(slurp(p)); }

// Drops the `seconds` column so reruns can be compared byte for byte.
std::string strip_seconds(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  REQUIRE(std::getline(in, line));
  std::vector<std::string> cols;
  std::istringstream hdr(line);
  std::string tok;
  while (std::getline(hdr, tok, ',')) cols.push_back(tok);
  std::size_t drop = cols.size();
  for (std::size_t i = 0; i < cols.size(); ++i)
    if (cols[i] == "seconds") drop = i;
  std::ostringstream out;
  auto emit = [&](const std::string& row) {
    std::istringstream fields(row);
    std::string f;
    std::size_t i = 0;
    bool first = true;
    while (std::getline(fields, f, ',')) {
      if (i++ != drop) {
        if (!first) out << ',';
        out << f;
        first = false;
      }
    }
    out << '\n';
  };
  emit(line);
  while (std::getline(in, line)) emit(line);
  return out.str();
}

const char* kInlineTorus =
    R"("env": {"kind": "shift-torus", "d": 1, "L": 2, "config": [0, 1],
               "phases": [{"a": 1.0}, {"a": 4.0}]})";

}  // namespace

TEST_CASE("config validation errors name the offender") {
  const fs::path anon = write_config("anon.json", R"({"d": 2})");
  CHECK_THROWS_WITH_AS(run_subcommand("orbit", anon.string(), 1),
                       doctest::Contains("unknown subcommand"), ConfigError);
  CHECK_THROWS_AS(run_subcommand("korn", kConfigs + "/korn_d2.json", 0), ConfigError);
  CHECK_THROWS_WITH_AS(run_subcommand("cell", kConfigs + "/korn_d2.json", 1),
                       doctest::Contains("declares subcommand 'korn'"), ConfigError);
  CHECK_THROWS_WITH_AS(run_subcommand("korn", (sandbox() / "absent.json").string(), 1),
                       doctest::Contains("cannot open"), ConfigError);

  const fs::path bogus =
      write_config("bogus_key.json", R"({"subcommand": "korn", "d": 2, "bogus": 1})");
  CHECK_THROWS_WITH_AS(run_subcommand("korn", bogus.string(), 1),
                       doctest::Contains("bogus"), ConfigError);

  const fs::path malformed = write_config("malformed.json", "{\"subcommand\":");
  CHECK_THROWS_AS(run_subcommand("korn", malformed.string(), 1), ConfigError);

  const fs::path both = write_config(
      "both_env.json", std::string(R"({"subcommand": "cell", "env_file": "x.json", )") +
                           kInlineTorus + "}");
  CHECK_THROWS_WITH_AS(run_subcommand("cell", both.string(), 1),
                       doctest::Contains("exactly one"), ConfigError);
  const fs::path neither = write_config("no_env.json", R"({"subcommand": "cell"})");
  CHECK_THROWS_AS(run_subcommand("cell", neither.string(), 1), ConfigError);
}

TEST_CASE("mode exclusivity is enforced per subcommand") {
  const fs::path flow_both = write_config(
      "flow_both.json", std::string(R"({"subcommand": "flow", "eps_list": [0.25, 0.125],
        "homogenized": true, )") + kInlineTorus + "}");
  CHECK_THROWS_WITH_AS(run_subcommand("flow", flow_both.string(), 1),
                       doctest::Contains("eps_list"), ConfigError);

  const fs::path flow_none =
      write_config("flow_none.json", std::string(R"({"subcommand": "flow", )") +
                                         kInlineTorus + "}");
  CHECK_THROWS_WITH_AS(run_subcommand("flow", flow_none.string(), 1),
                       doctest::Contains("exactly one"), ConfigError);

  const fs::path min_grid = write_config(
      "min_grid.json", std::string(R"({"subcommand": "minimize", "eps": 0.25, "n": 16, )") +
                           kInlineTorus + "}");
  CHECK_THROWS_WITH_AS(run_subcommand("minimize", min_grid.string(), 1),
                       doctest::Contains("homogenized"), ConfigError);

  const fs::path min_none =
      write_config("min_none.json", std::string(R"({"subcommand": "minimize", )") +
                                        kInlineTorus + "}");
  CHECK_THROWS_AS(run_subcommand("minimize", min_none.string(), 1), ConfigError);
}

TEST_CASE("in-process runs carry params, scalars, and assertions") {
  const StudyResult res = run_subcommand("korn", kConfigs + "/korn_d2.json", 1);
  CHECK(res.subcommand == "korn");
  CHECK(res.params.at("d").get<int>() == 2);
  CHECK(res.scalars.at("fourier_bound").get<double>() == doctest::Approx(2.0).epsilon(1e-12));
  REQUIRE(res.tables.size() == 1);
  CHECK(res.tables[0].name == "ratios");
  CHECK(res.tables[0].rows.size() == 100);
  CHECK(res.assertions.size() == 3);
  CHECK(res.all_passed());
}

TEST_CASE("cli runs the identity battery and writes the output set") {
  const fs::path out = sandbox() / "battery";
  const int code = run_cmd(kCli + " unfold-test --config \"" + kConfigs +
                           "/unfold_checkerboard.json\" --out \"" + out.string() + "\"");
  CHECK(code == 0);

  const json doc = load_json(out / "result.json");
  CHECK(doc.at("schema").get<std::string>() == kStudySchema);
  CHECK(doc.at("subcommand").get<std::string>() == "unfold-test");
  CHECK(doc.at("passed").get<bool>());
  CHECK(doc.at("params").at("fields").get<int>() == 20);
  for (const json& a : doc.at("assertions")) {
    CHECK(a.contains("name"));
    CHECK(a.contains("value"));
    CHECK(a.contains("bound"));
    CHECK(a.contains("relation"));
    CHECK(a.at("passed").get<bool>());
  }

  const std::string csv = slurp(out / "residuals.csv");
  CHECK(csv.rfind("field,isometry,adjoint,inverse,transform,", 0) == 0);

  const json timings = load_json(out / "timings.json");
  CHECK(timings.at("schema").get<std::string>() == kStudySchema);
  CHECK(timings.at("subcommand").get<std::string>() == "unfold-test");
}

TEST_CASE("cli rejects a non-commensurable scale before writing anything") {
  const fs::path out = sandbox() / "bad_eps";
  const int code = run_cmd(kCli + " unfold-test --config \"" + kConfigs +
                           "/unfold_bad_eps.json\" --out \"" + out.string() + "\"");
  CHECK(code == 1);
  CHECK(!fs::exists(out / "result.json"));
}

TEST_CASE("cli reports failed checks with exit 2 and still writes results") {
  // At eps = 1/4 with 4 seeds the quenched mean misses the homogenized energy
  // by ~2% of |E| against a 0.1% gate, deterministically.
  const fs::path cfg = write_config("quenched_fail.json", std::string(R"({
    "subcommand": "quenched-study",
    "eps": 0.25, "cells_per_eps": 4, "num_seeds": 4, "seed": 7,
    "load": {"constant": 1.0}, "v": {"kind": "quadratic", "half": true},
    "env": {"kind": "iid-lattice", "d": 1, "probabilities": [0.5, 0.5],
            "seed": 2026, "phases": [{"a": 1.0}, {"a": 4.0}]}})"));
  const fs::path out = sandbox() / "quenched_fail";
  const int code =
      run_cmd(kCli + " quenched-study --config \"" + cfg.string() + "\" --out \"" +
              out.string() + "\"");
  CHECK(code == 2);

  const json doc = load_json(out / "result.json");
  CHECK(!doc.at("passed").get<bool>());
  const std::string csv = slurp(out / "scatter.csv");
  CHECK(csv.rfind("seed,l2_distance,energy_eps,energy_hom,gap,seconds", 0) == 0);
}

TEST_CASE("results are byte-stable across reruns and worker counts") {
  const std::string min_cfg = kConfigs + "/minimize_d1.json";
  const fs::path a = sandbox() / "min_w1";
  const fs::path b = sandbox() / "min_w3";
  const fs::path c = sandbox() / "min_again";
  CHECK(run_cmd(kCli + " minimize --config \"" + min_cfg + "\" --workers 1 --out \"" +
                a.string() + "\"") == 0);
  CHECK(run_cmd(kCli + " minimize --config \"" + min_cfg + "\" --workers 3 --out \"" +
                b.string() + "\"") == 0);
  CHECK(run_cmd(kCli + " minimize --config \"" + min_cfg + "\" --workers 1 --out \"" +
                c.string() + "\"") == 0);
  CHECK(slurp(a / "result.json") == slurp(b / "result.json"));
  CHECK(slurp(a / "result.json") == slurp(c / "result.json"));
  CHECK(slurp(a / "energies.csv") == slurp(b / "energies.csv"));
  CHECK(slurp(a / "energies.csv") == slurp(c / "energies.csv"));

  const fs::path cfg = sandbox() / "quenched_fail.json";
  const fs::path q1 = sandbox() / "q_w1";
  const fs::path q2 = sandbox() / "q_w2";
  CHECK(run_cmd(kCli + " quenched-study --config \"" + cfg.string() + "\" --workers 1 --out \"" +
                q1.string() + "\"") == 2);
  CHECK(run_cmd(kCli + " quenched-study --config \"" + cfg.string() + "\" --workers 2 --out \"" +
                q2.string() + "\"") == 2);
  CHECK(slurp(q1 / "result.json") == slurp(q2 / "result.json"));
  CHECK(strip_seconds(slurp(q1 / "scatter.csv")) == strip_seconds(slurp(q2 / "scatter.csv")));
}

TEST_CASE("csv tables carry the timing column while result.json does not") {
  const fs::path cfg = write_config("conv_small.json", std::string(R"({
    "subcommand": "convergence-study",
    "eps_list": [0.25, 0.125], "cells_per_eps": 8,
    "load": {"constant": 1.0}, "v": {"kind": "quadratic", "half": true}, )") +
                                                           kInlineTorus + "}");
  const fs::path out = sandbox() / "conv_small";
  CHECK(run_cmd(kCli + " convergence-study --config \"" + cfg.string() + "\" --out \"" +
                out.string() + "\"") == 0);

  const std::string csv = slurp(out / "gap_vs_eps.csv");
  CHECK(csv.rfind("eps,energy_eps,energy_hom,gap,l2_error,ts_residual,seconds", 0) == 0);

  const json doc = load_json(out / "result.json");
  const json cols = doc.at("tables").at("gap_vs_eps").at("columns");
  for (const json& c : cols) CHECK(c.get<std::string>() != "seconds");
  CHECK(slurp(out / "result.json").find("seconds") == std::string::npos);

  bool saw_ratio = false;
  for (const json& a : doc.at("assertions"))
    if (a.at("name").get<std::string>() == "gap_ratio_step_0") {
      saw_ratio = true;
      CHECK(a.at("passed").get<bool>());
    }
  CHECK(saw_ratio);
}

TEST_CASE("environment variable selects the output directory") {
  const fs::path out = sandbox() / "env_out";
  const int code = run_cmd("STOCH_UNFOLD_OUT=\"" + out.string() + "\" " + kCli +
                           " korn --config \"" + kConfigs + "/korn_d2.json\"");
  CHECK(code == 0);
  CHECK(fs::exists(out / "result.json"));
  CHECK(fs::exists(out / "ratios.csv"));
  CHECK(fs::exists(out / "timings.json"));
}

TEST_CASE("usage errors exit with code one") {
  CHECK(run_cmd(kCli) == 1);
  CHECK(run_cmd(kCli + " korn") == 1);
  CHECK(run_cmd(kCli + " orbit --config \"" + kConfigs + "/korn_d2.json\"") == 1);
}
