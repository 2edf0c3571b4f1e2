#include "stochunfold/io.hpp"

#include <algorithm>
#include <fstream>

namespace stochunfold {

void check_keys(const json& obj, const std::vector<std::string>& allowed,
                const std::string& context) {
  require_config(obj.is_object(), context + ": expected a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw ConfigError(context + ": unknown key '" + it.key() + "'");
  }
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  require_config(in.good(), "cannot open " + path);
  json value;
  try {
    value = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return value;
}

void write_json_file(const std::string& path, const json& value) {
  std::ofstream out(path);
  require(out.good(), "cannot write " + path);
  out << value.dump(2) << "\n";
}

namespace {

PhaseTable parse_phase(const json& p, int d, const std::string& ctx) {
  check_keys(p, {"a", "A", "r", "f"}, ctx);
  PhaseTable ph;
  if (p.contains("a")) {
    require_config(p["a"].is_number(), ctx + ": 'a' must be a number");
    ph.a = p["a"].get<double>();
  }
  require_config(std::isfinite(ph.a), ctx + ": 'a' must be finite");
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) ph.A[3 * i + j] = (i == j) ? ph.a : 0.0;
  if (p.contains("A")) {
    const json& m = p["A"];
    require_config(m.is_array() && static_cast<int>(m.size()) == d,
                   ctx + ": 'A' must be a " + std::to_string(d) + "x" + std::to_string(d) +
                       " nested array");
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) ph.A[3 * i + j] = (i == j) ? 1.0 : 0.0;
    for (int i = 0; i < d; ++i) {
      const json& row = m[i];
      require_config(row.is_array() && static_cast<int>(row.size()) == d,
                     ctx + ": 'A' row " + std::to_string(i) + " has wrong length");
      for (int j = 0; j < d; ++j) {
        require_config(row[j].is_number(), ctx + ": 'A' entries must be numbers");
        ph.A[3 * i + j] = row[j].get<double>();
      }
    }
    ph.explicit_A = true;
  }
  if (p.contains("r")) {
    require_config(p["r"].is_number(), ctx + ": 'r' must be a number");
    ph.r = p["r"].get<double>();
  }
  if (p.contains("f")) {
    const json& f = p["f"];
    check_keys(f, {"scale", "well"}, ctx + ".f");
    if (f.contains("scale")) ph.f.scale = f["scale"].get<double>();
    if (f.contains("well")) ph.f.well = f["well"].get<double>();
  }
  return ph;
}

}  // namespace

EnvironmentSpec parse_env(const json& spec) {
  check_keys(spec,
             {"kind", "d", "L", "config", "probabilities", "seed", "C", "phases"},
             "environment");
  EnvironmentSpec env;

  require_config(spec.contains("kind") && spec["kind"].is_string(),
                 "environment: 'kind' (string) is required");
  const std::string kind = spec["kind"].get<std::string>();
  if (kind == "deterministic")
    env.kind = EnvKind::deterministic;
  else if (kind == "shift-torus")
    env.kind = EnvKind::shift_torus;
  else if (kind == "iid-lattice")
    env.kind = EnvKind::iid_lattice;
  else
    throw ConfigError("environment: unknown kind '" + kind +
                      "' (expected deterministic, shift-torus, or iid-lattice)");

  require_config(spec.contains("d") && spec["d"].is_number_integer(),
                 "environment: 'd' (integer) is required");
  env.d = spec["d"].get<int>();
  require_config(env.d >= 1 && env.d <= 3, "environment: d must be 1, 2, or 3");

  env.L = {1, 1, 1};
  if (spec.contains("L")) {
    require_config(env.kind == EnvKind::shift_torus,
                   "environment: 'L' only applies to shift-torus");
    const json& L = spec["L"];
    if (L.is_number_integer()) {
      for (int i = 0; i < env.d; ++i) env.L[i] = L.get<std::int64_t>();
    } else {
      require_config(L.is_array() && static_cast<int>(L.size()) == env.d,
                     "environment: 'L' must be an integer or an array of length d");
      for (int i = 0; i < env.d; ++i) {
        require_config(L[i].is_number_integer(), "environment: 'L' entries must be integers");
        env.L[i] = L[i].get<std::int64_t>();
      }
    }
  }

  if (spec.contains("C")) {
    require_config(spec["C"].is_number(), "environment: 'C' must be a number");
    env.C = spec["C"].get<double>();
    require_config(env.C >= 1.0, "environment: C must be >= 1");
  }

  require_config(spec.contains("phases") && spec["phases"].is_array() &&
                     !spec["phases"].empty(),
                 "environment: 'phases' (non-empty array) is required");
  int idx = 0;
  for (const json& p : spec["phases"])
    env.phases.push_back(parse_phase(p, env.d, "phase " + std::to_string(idx++)));

  if (spec.contains("config")) {
    require_config(env.kind == EnvKind::shift_torus,
                   "environment: 'config' only applies to shift-torus");
    for (const json& c : spec["config"]) {
      require_config(c.is_number_integer(), "environment: 'config' entries must be integers");
      env.config.push_back(c.get<int>());
    }
  }
  if (spec.contains("probabilities")) {
    require_config(env.kind == EnvKind::iid_lattice,
                   "environment: 'probabilities' only applies to iid-lattice");
    for (const json& p : spec["probabilities"]) {
      require_config(p.is_number(), "environment: 'probabilities' entries must be numbers");
      env.probabilities.push_back(p.get<double>());
    }
  }
  if (spec.contains("seed")) {
    require_config(env.kind == EnvKind::iid_lattice,
                   "environment: 'seed' only applies to iid-lattice");
    require_config(spec["seed"].is_number_unsigned(),
                   "environment: 'seed' must be a non-negative integer");
    env.seed = spec["seed"].get<std::uint64_t>();
  }

  env.validate();
  return env;
}

EnvironmentSpec load_env(const std::string& path) { return parse_env(read_json_file(path)); }

json env_to_json(const EnvironmentSpec& env) {
  json spec;
  switch (env.kind) {
    case EnvKind::deterministic: spec["kind"] = "deterministic"; break;
    case EnvKind::shift_torus: spec["kind"] = "shift-torus"; break;
    case EnvKind::iid_lattice: spec["kind"] = "iid-lattice"; break;
  }
  spec["d"] = env.d;
  if (env.kind == EnvKind::shift_torus) {
    json L = json::array();
    for (int i = 0; i < env.d; ++i) L.push_back(env.L[i]);
    spec["L"] = L;
    spec["config"] = env.config;
  }
  if (env.kind == EnvKind::iid_lattice) {
    spec["probabilities"] = env.probabilities;
    spec["seed"] = env.seed;
  }
  spec["C"] = env.C;
  json phases = json::array();
  for (const PhaseTable& ph : env.phases) {
    json p;
    p["a"] = ph.a;
    if (ph.explicit_A) {
      json m = json::array();
      for (int i = 0; i < env.d; ++i) {
        json row = json::array();
        for (int j = 0; j < env.d; ++j) row.push_back(ph.A[3 * i + j]);
        m.push_back(row);
      }
      p["A"] = m;
    }
    p["r"] = ph.r;
    p["f"] = {{"scale", ph.f.scale}, {"well", ph.f.well}};
    phases.push_back(p);
  }
  spec["phases"] = phases;
  return spec;
}

}  // namespace stochunfold
