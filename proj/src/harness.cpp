#include "stochunfold/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Dense>

#include "stochunfold/cell.hpp"
#include "stochunfold/flow.hpp"
#include "stochunfold/io.hpp"
#include "stochunfold/parallel.hpp"
#include "stochunfold/rng.hpp"
#include "stochunfold/unfold.hpp"
#include "stochunfold/varmin.hpp"

namespace stochunfold {
namespace {

std::shared_ptr<const EnvironmentSpec> env_from(const json& cfg, const std::string& base_dir) {
  const bool has_inline = cfg.contains("env");
  const bool has_file = cfg.contains("env_file");
  require_config(has_inline != has_file, "config: give exactly one of 'env' or 'env_file'");
  if (has_inline) return std::make_shared<EnvironmentSpec>(parse_env(cfg.at("env")));
  std::filesystem::path p = cfg.at("env_file").get<std::string>();
  if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
  return std::make_shared<EnvironmentSpec>(load_env(p.string()));
}

VSpec parse_vspec(const json& cfg) {
  if (!cfg.contains("v")) return VSpec::quadratic(true);
  const json& j = cfg.at("v");
  check_keys(j, {"kind", "p", "half"}, "v");
  VSpec v;
  const std::string kind = j.value("kind", "quadratic");
  if (kind == "quadratic")
    v.kind = VSpec::Kind::quadratic;
  else if (kind == "power")
    v.kind = VSpec::Kind::power;
  else if (kind == "power_quad")
    v.kind = VSpec::Kind::power_quad;
  else
    throw ConfigError("v: unknown kind '" + kind + "'");
  v.p = j.value("p", 2.0);
  v.half = j.value("half", kind == "quadratic");
  v.validate();
  return v;
}

LoadSpec parse_load(const json& cfg, int d) {
  LoadSpec l;
  if (!cfg.contains("load")) return l;
  const json& j = cfg.at("load");
  check_keys(j, {"constant", "linear"}, "load");
  l.constant = j.value("constant", 1.0);
  if (j.contains("linear")) {
    const json& lin = j.at("linear");
    require_config(lin.is_array() && lin.size() == static_cast<std::size_t>(d),
                   "load: 'linear' needs one entry per dimension");
    for (int a = 0; a < d; ++a) l.linear[a] = lin[a].get<double>();
  }
  return l;
}

FlowSpec parse_flow(const json& cfg) {
  FlowSpec f;
  if (!cfg.contains("flow")) return f;
  const json& j = cfg.at("flow");
  check_keys(j, {"tau", "T", "init", "dirichlet"}, "flow");
  f.tau = j.value("tau", 1e-3);
  f.T = j.value("T", 1e-2);
  f.dirichlet = j.value("dirichlet", true);
  if (j.contains("init")) {
    const json& i = j.at("init");
    check_keys(i, {"kind", "amplitude"}, "flow.init");
    const std::string kind = i.value("kind", "sine");
    if (kind == "sine")
      f.init.kind = InitialCondition::Kind::sine;
    else if (kind == "constant")
      f.init.kind = InitialCondition::Kind::constant;
    else
      throw ConfigError("flow.init: unknown kind '" + kind + "'");
    f.init.amplitude = i.value("amplitude", 1.0);
  }
  require_config(f.tau > 0 && f.T > 0, "flow: tau and T must be positive");
  return f;
}

Int3 parse_grid(const json& cfg, const char* key, int d, int fallback) {
  Int3 n{1, 1, 1};
  if (!cfg.contains(key)) {
    for (int a = 0; a < d; ++a) n[a] = fallback;
    return n;
  }
  const json& j = cfg.at(key);
  if (j.is_number_integer()) {
    const int v = j.get<int>();
    require_config(v >= 1, std::string(key) + ": must be positive");
    for (int a = 0; a < d; ++a) n[a] = v;
    return n;
  }
  require_config(j.is_array() && j.size() == static_cast<std::size_t>(d),
                 std::string(key) + ": integer or one entry per dimension");
  for (int a = 0; a < d; ++a) {
    n[a] = j[a].get<int>();
    require_config(n[a] >= 1, std::string(key) + ": must be positive");
  }
  return n;
}

std::vector<double> parse_eps_list(const json& j) {
  require_config(j.is_array() && j.size() >= 2, "eps_list: need at least two scales");
  std::vector<double> eps;
  for (const json& e : j) {
    eps.push_back(e.get<double>());
    require_config(eps.back() > 0, "eps_list: scales must be positive");
    if (eps.size() > 1)
      require_config(eps.back() < eps[eps.size() - 2], "eps_list: must decrease");
  }
  return eps;
}

double max_abs_diff(const RandomField& a, const RandomField& b) {
  double m = 0.0;
  for (std::size_t r = 0; r < a.data.size(); ++r)
    for (std::size_t i = 0; i < a.data[r].size(); ++i)
      m = std::max(m, std::abs(a.data[r][i] - b.data[r][i]));
  return m;
}

StudyResult run_unfold_test(const json& cfg, const std::string& base) {
  check_keys(cfg, {"subcommand", "env", "env_file", "eps", "n", "fields", "seed", "p"},
             "unfold-test");
  auto env = env_from(cfg, base);
  require_config(env->kind != EnvKind::iid_lattice,
                 "unfold-test: needs an enumerable orbit; pair sampled plans through "
                 "two-scale residuals instead");
  const double eps = cfg.value("eps", 0.25);
  const Int3 n = parse_grid(cfg, "n", env->d, 16);
  const int fields = cfg.value("fields", 20);
  const std::uint64_t seed = cfg.value("seed", 0ull);
  const double p = cfg.value("p", 2.0);
  require_config(fields >= 1 && p >= 1.0, "unfold-test: fields >= 1 and p >= 1");

  auto domain = make_domain(env->d, n);
  auto plan = std::make_shared<SamplePlan>(enumerate_or_sample(*env, env->orbit_size(), 0));
  const UnfoldPlan up = make_unfold_plan(domain, plan, eps);

  StudyResult study;
  Table table;
  table.name = "residuals";
  table.columns = {"field",      "isometry",     "adjoint",      "inverse",
                   "transform",  "pinv_idem",    "pinv_commute", "pinv_ergodic",
                   "pinv_contraction"};

  double mx[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  for (int f = 0; f < fields; ++f) {
    RandomField u = make_field(domain, plan, Stage::cell, 1);
    RandomField v = make_field(domain, plan, Stage::cell, 1);
    HashStream su(hash_combine(seed, 2 * f));
    HashStream sv(hash_combine(seed, 2 * f + 1));
    for (auto& row : u.data)
      for (double& x : row) x = su.next_symmetric();
    for (auto& row : v.data)
      for (double& x : row) x = sv.next_symmetric();

    const RandomField Tu = unfold(up, u);
    const RandomField Tv = unfold(up, v);

    const double iso = std::abs(norm_p(Tu, p) - norm_p(u, p));
    const double adj = std::abs(inner(Tu, v) - inner(u, fold_adjoint(up, v)));
    RandomField back = fold_adjoint(up, Tu);
    const double inv = max_abs_diff(back, u);

    // (T c u)(o, x) = c(o, 0) (T u)(o, x) for the scale-oscillating
    // coefficient c(o, x) = a(shift of o by the coefficient cell of x).
    RandomField cu = u;
    RandomField scaled = Tu;
    for (std::size_t r = 0; r < plan->size(); ++r) {
      const Realization& real = plan->realizations[r];
      const double c0 = env->phases[eval_env(real, {0, 0, 0})].a;
      for_sites(domain->n, [&](const Idx3& c, std::int64_t site) {
        cu.data[r][site] *= env->phases[eval_env(real, lattice_cell(up, c))].a;
        scaled.data[r][site] *= c0;
      });
    }
    const RandomField Tcu = unfold(up, cu);
    const double tr = max_abs_diff(Tcu, scaled);

    const RandomField Pu = project_inv(u);
    const RandomField PuRep = replicate(Pu, plan);
    const double idem = max_abs_diff(project_inv(PuRep), Pu);
    const double comm = std::max(max_abs_diff(project_inv(Tu), Pu),
                                 max_abs_diff(unfold(up, PuRep), PuRep));

    // Independent arithmetic path: plain sums in reverse plan order.
    double erg = 0.0;
    for (std::int64_t site = 0; site < u.sites(); ++site) {
      double s = 0.0;
      for (std::size_t r = plan->size(); r-- > 0;)
        s += plan->weights[r] * u.data[r][site];
      erg = std::max(erg, std::abs(s - Pu.data[0][site]));
    }
    const double contr = norm_p(Pu, 2.0) - norm_p(u, 2.0);

    const double row[8] = {iso, adj, inv, tr, idem, comm, erg, contr};
    for (int k = 0; k < 8; ++k) mx[k] = std::max(mx[k], row[k]);
    table.rows.push_back({static_cast<double>(f), iso, adj, inv, tr, idem, comm, erg, contr});
  }
  study.tables.push_back(table);

  study.scalars["max_isometry_residual"] = mx[0];
  study.scalars["max_adjoint_residual"] = mx[1];
  study.scalars["max_inverse_residual"] = mx[2];
  study.scalars["max_transform_residual"] = mx[3];
  study.scalars["max_projection_residual"] = std::max({mx[4], mx[5], mx[6], mx[7]});

  study.assertions.push_back(assert_le("isometry_residual", mx[0], 1e-12));
  study.assertions.push_back(assert_le("adjoint_residual", mx[1], 1e-12));
  study.assertions.push_back(assert_le("inverse_residual", mx[2], 1e-12));
  study.assertions.push_back(assert_le("transform_residual", mx[3], 1e-12));
  study.assertions.push_back(assert_le("projection_idempotent", mx[4], 1e-13));
  study.assertions.push_back(assert_le("projection_commutes", mx[5], 1e-13));
  study.assertions.push_back(assert_le("projection_ergodic", mx[6], 1e-13));
  study.assertions.push_back(assert_le("projection_contracts", mx[7], 1e-13));
  return study;
}

Eigen::MatrixXd phase_matrix(const PhaseTable& ph, int d) {
  Eigen::MatrixXd A(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      A(i, j) = ph.explicit_A ? ph.A[static_cast<std::size_t>(3 * i + j)]
                              : (i == j ? ph.a : 0.0);
  return 0.5 * (A + A.transpose());
}

StudyResult run_cell(const json& cfg, const std::string& base) {
  check_keys(cfg,
             {"subcommand", "env", "env_file", "v", "refine", "fmax", "points", "window",
              "seed"},
             "cell");
  auto env = env_from(cfg, base);
  const VSpec vspec = parse_vspec(cfg);
  const int refine = cfg.value("refine", 8);
  require_config(refine >= 1, "cell: refine >= 1");

  RefinedConfig rc;
  if (env->kind == EnvKind::iid_lattice) {
    const int window = cfg.value("window", 8);
    require_config(window >= 1, "cell: window >= 1");
    Int3 w{1, 1, 1};
    for (int a = 0; a < env->d; ++a) w[a] = window;
    const SamplePlan plan = enumerate_or_sample(*env, 1, cfg.value("seed", 0ull));
    rc = RefinedConfig::from_seed(env, refine, w, plan.realizations[0]);
  } else {
    rc = RefinedConfig::from_torus(env, refine);
  }

  StudyResult study;
  const int d = env->d;
  if (vspec.is_quadratic()) {
    const CellSolution sol = solve_cell_quadratic(rc);
    Table table;
    table.name = "a_hom";
    table.columns = {"i", "j", "value"};
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        const double v = sol.A_hom[static_cast<std::size_t>(3 * i + j)];
        table.rows.push_back({static_cast<double>(i), static_cast<double>(j), v});
        study.scalars["a_hom_" + std::to_string(i) + std::to_string(j)] = v;
      }
    study.tables.push_back(table);

    // Arithmetic and harmonic means of the coefficient sandwich the corrected
    // matrix in quadratic-form order.
    Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(d, d);
    Eigen::MatrixXd havg = Eigen::MatrixXd::Zero(d, d);
    const double ns = static_cast<double>(rc.sites());
    for (std::int64_t s = 0; s < rc.sites(); ++s) {
      const Eigen::MatrixXd A = phase_matrix(rc.phase_at(s), d);
      avg += A / ns;
      havg += A.inverse() / ns;
    }
    Eigen::MatrixXd H(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) H(i, j) = sol.A_hom[static_cast<std::size_t>(3 * i + j)];
    const Eigen::MatrixXd reuss = havg.inverse();
    const double scale = avg.norm();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> upper(avg - H);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> lower(H - reuss);
    study.scalars["voigt_margin"] = upper.eigenvalues().minCoeff();
    study.scalars["reuss_margin"] = lower.eigenvalues().minCoeff();
    study.assertions.push_back(
        assert_ge("voigt_bound", upper.eigenvalues().minCoeff(), -1e-10 * scale));
    study.assertions.push_back(
        assert_ge("reuss_bound", lower.eigenvalues().minCoeff(), -1e-10 * scale));
    const double asym = (H - H.transpose()).norm();
    study.assertions.push_back(assert_le("a_hom_symmetric", asym, 1e-10 * scale));
    return study;
  }

  require_config(d == 1, "cell: tabulated integrands are one-dimensional");
  const double fmax = cfg.value("fmax", 2.0);
  const int points = cfg.value("points", 17);
  require_config(points >= 3 && fmax > 0, "cell: need points >= 3 and fmax > 0");
  Table table;
  table.name = "vhom";
  table.columns = {"F", "value"};
  std::vector<double> Fs(points), vals(points);
  for (int i = 0; i < points; ++i) {
    Fs[i] = -fmax + 2.0 * fmax * i / (points - 1);
    vals[i] = rve_vhom(rc, {Fs[i], 0.0, 0.0}, vspec);
    table.rows.push_back({Fs[i], vals[i]});
  }
  study.tables.push_back(table);

  double margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i + 2 < points; ++i) {
    const double s0 = (vals[i + 1] - vals[i]) / (Fs[i + 1] - Fs[i]);
    const double s1 = (vals[i + 2] - vals[i + 1]) / (Fs[i + 2] - Fs[i + 1]);
    margin = std::min(margin, s1 - s0);
  }
  study.scalars["min_chord_slope_gap"] = margin;
  study.assertions.push_back(assert_ge("vhom_convex", margin, -1e-10));
  return study;
}

StudyResult run_minimize(const json& cfg, const std::string& base, int workers) {
  check_keys(cfg,
             {"subcommand", "env", "env_file", "eps", "cells_per_eps", "samples", "seed",
              "load", "v", "homogenized", "n", "refine", "fmax", "points"},
             "minimize");
  auto env = env_from(cfg, base);
  const VSpec vspec = parse_vspec(cfg);
  const LoadSpec load = parse_load(cfg, env->d);
  const bool homogenized = cfg.value("homogenized", false);

  StudyResult study;
  if (homogenized) {
    const Int3 n = parse_grid(cfg, "n", env->d, 64);
    auto domain = make_domain(env->d, n);
    const HomIntegrand hom =
        make_hom_integrand(env, vspec, cfg.value("refine", 8), cfg.value("fmax", 3.0),
                           cfg.value("points", 33));
    const MinimizeResult r = minimize_hom(domain, hom, load);
    require(std::isfinite(r.energy), "minimize: homogenized energy is not finite");
    study.scalars["energy"] = r.energy;
    return study;
  }

  require_config(cfg.contains("eps"), "minimize: give 'eps' or set homogenized");
  require_config(!cfg.contains("n"), "minimize: 'n' only applies to homogenized mode");
  const double eps = cfg.at("eps").get<double>();
  const int cells_per_eps = cfg.value("cells_per_eps", 8);
  require_config(cells_per_eps >= 1, "minimize: cells_per_eps >= 1");
  const double m = eps > 0 ? 1.0 / eps : 0.0;
  require_config(eps > 0 && std::abs(m - std::round(m)) < 1e-9, "minimize: eps must equal 1/m");
  Int3 n{1, 1, 1};
  for (int a = 0; a < env->d; ++a)
    n[a] = static_cast<int>(cells_per_eps * std::llround(m));
  auto domain = make_domain(env->d, n);
  const std::int64_t count =
      env->kind == EnvKind::iid_lattice ? cfg.value("samples", 16) : env->orbit_size();
  auto plan = std::make_shared<SamplePlan>(
      enumerate_or_sample(*env, count, cfg.value("seed", 0ull)));
  const UnfoldPlan up = make_unfold_plan(domain, plan, eps);
  const MinimizeResult r = minimize_eps(up, vspec, load, workers);
  require(std::isfinite(r.energy), "minimize: energy is not finite");

  Table table;
  table.name = "energies";
  table.columns = {"realization", "weight", "energy"};
  for (std::size_t i = 0; i < r.energies.size(); ++i)
    table.rows.push_back({static_cast<double>(i), plan->weights[i], r.energies[i]});
  study.tables.push_back(table);
  study.scalars["energy"] = r.energy;
  return study;
}

StudyResult run_convergence(const json& cfg, const std::string& base, int workers) {
  check_keys(cfg,
             {"subcommand", "env", "env_file", "eps_list", "cells_per_eps", "load", "v"},
             "convergence-study");
  auto env = env_from(cfg, base);
  const VSpec vspec = parse_vspec(cfg);
  const LoadSpec load = parse_load(cfg, env->d);
  require_config(cfg.contains("eps_list"), "convergence-study: 'eps_list' is required");
  const std::vector<double> eps_list = parse_eps_list(cfg.at("eps_list"));
  const int cells_per_eps = cfg.value("cells_per_eps", 8);
  require_config(cells_per_eps >= 1, "convergence-study: cells_per_eps >= 1");
  return convergence_study(env, vspec, load, eps_list, cells_per_eps, workers);
}

StudyResult run_quenched(const json& cfg, const std::string& base, int workers) {
  check_keys(cfg,
             {"subcommand", "env", "env_file", "eps", "cells_per_eps", "load", "v",
              "num_seeds", "seed"},
             "quenched-study");
  auto env = env_from(cfg, base);
  const VSpec vspec = parse_vspec(cfg);
  const LoadSpec load = parse_load(cfg, env->d);
  require_config(cfg.contains("eps"), "quenched-study: 'eps' is required");
  const double eps = cfg.at("eps").get<double>();
  const int cells_per_eps = cfg.value("cells_per_eps", 8);
  const int num_seeds = cfg.value("num_seeds", 32);
  require_config(num_seeds >= 2, "quenched-study: num_seeds >= 2");
  return quenched_study(env, vspec, load, eps, cells_per_eps, num_seeds,
                        cfg.value("seed", 0ull), workers);
}

StudyResult run_flow(const json& cfg, const std::string& base, int workers) {
  check_keys(cfg,
             {"subcommand", "env", "env_file", "flow", "eps", "eps_list", "cells_per_eps",
              "homogenized"},
             "flow");
  auto env = env_from(cfg, base);
  const FlowSpec fspec = parse_flow(cfg);
  if (cfg.contains("eps_list")) {
    require_config(!cfg.contains("eps") && !cfg.value("homogenized", false),
                   "flow: 'eps_list' excludes 'eps' and 'homogenized'");
    const std::vector<double> eps_list = parse_eps_list(cfg.at("eps_list"));
    return evolutionary_convergence(env, fspec, eps_list, cfg.value("cells_per_eps", 4),
                                    workers);
  }
  const bool homogenized = cfg.value("homogenized", false);
  const double eps = cfg.value("eps", 0.0);
  require_config(homogenized != (eps > 0), "flow: give exactly one of 'eps' or homogenized");
  return flow_study(env, fspec, eps, cfg.value("cells_per_eps", 8), homogenized, workers);
}

StudyResult run_korn(const json& cfg) {
  check_keys(cfg, {"subcommand", "d", "n", "count", "seed"}, "korn");
  const int d = cfg.value("d", 2);
  const int n = cfg.value("n", 16);
  const int count = cfg.value("count", 100);
  require_config(d >= 1 && d <= 3, "korn: d must be 1, 2, or 3");
  require_config(n >= 2 && count >= 1, "korn: need n >= 2 and count >= 1");
  Int3 N{1, 1, 1};
  for (int a = 0; a < d; ++a) N[a] = n;
  const double spacing = 1.0 / n;

  const double fourier = korn_fourier_bound(d, N, spacing);
  const double power = d == 1 ? 1.0 : korn_ratio(d, N, spacing);
  const std::vector<double> ratios =
      korn_random_ratios(d, N, spacing, count, cfg.value("seed", 0ull));

  StudyResult study;
  Table table;
  table.name = "ratios";
  table.columns = {"field", "ratio"};
  double max_ratio = 0.0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    max_ratio = std::max(max_ratio, ratios[i]);
    table.rows.push_back({static_cast<double>(i), ratios[i]});
  }
  study.tables.push_back(table);

  study.scalars["fourier_bound"] = fourier;
  study.scalars["power_iteration"] = power;
  study.scalars["max_random_ratio"] = max_ratio;
  study.assertions.push_back(assert_le("korn_constant_bound", fourier, 2.0 + 1e-12));
  study.assertions.push_back(assert_le("random_fields_bounded", max_ratio, 2.0 + 1e-8));
  study.assertions.push_back(assert_le("power_matches_fourier", std::abs(power - fourier),
                                       1e-6 * std::max(1.0, fourier)));
  return study;
}

}  // namespace

StudyResult run_subcommand(const std::string& name, const std::string& config_path,
                           int workers) {
  const json cfg = read_json_file(config_path);
  require_config(cfg.is_object(), "config: top level must be an object");
  const std::string base = std::filesystem::path(config_path).parent_path().string();
  if (cfg.contains("subcommand")) {
    const std::string declared = cfg.at("subcommand").get<std::string>();
    require_config(declared == name,
                   "config: file declares subcommand '" + declared + "', not '" + name + "'");
  }
  require_config(workers >= 1, "workers must be >= 1");

  StudyResult res;
  if (name == "unfold-test")
    res = run_unfold_test(cfg, base);
  else if (name == "cell")
    res = run_cell(cfg, base);
  else if (name == "minimize")
    res = run_minimize(cfg, base, workers);
  else if (name == "convergence-study")
    res = run_convergence(cfg, base, workers);
  else if (name == "quenched-study")
    res = run_quenched(cfg, base, workers);
  else if (name == "flow")
    res = run_flow(cfg, base, workers);
  else if (name == "korn")
    res = run_korn(cfg);
  else
    throw ConfigError("unknown subcommand: " + name);

  res.subcommand = name;
  res.params = cfg;
  return res;
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"stochastic unfolding toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  int workers = default_workers();
  const char* env_out = std::getenv("STOCH_UNFOLD_OUT");
  std::string out_dir = env_out ? env_out : ".";

  static const std::vector<std::pair<const char*, const char*>> kSubcommands = {
      {"unfold-test", "operator and projection identity battery"},
      {"cell", "periodic cell problem: corrected matrix or integrand table"},
      {"minimize", "single convex minimization at one scale"},
      {"convergence-study", "energy sweep over decreasing scales"},
      {"quenched-study", "per-seed minimizers at a fixed scale"},
      {"flow", "minimizing-movement evolution, single or sweep"},
      {"korn", "discrete Korn constants and random-field ratios"}};
  for (const auto& [name, desc] : kSubcommands) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", config_path, "JSON config file")->required();
    sub->add_option("--workers", workers, "worker threads");
    sub->add_option("--out", out_dir, "output directory");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  StudyResult result;
  try {
    result = run_subcommand(name, config_path, workers);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    std::cerr << "check failed: " << e.what() << '\n';
    return 2;
  }

  try {
    std::filesystem::create_directories(out_dir);
    write_study(result, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "output error: " << e.what() << '\n';
    return 1;
  }

  for (const Assertion& a : result.assertions)
    std::cout << (a.passed ? "pass " : "FAIL ") << a.name << ": " << format_double(a.value)
              << ' ' << a.relation << ' ' << format_double(a.bound) << '\n';
  std::cout << (result.all_passed() ? "ok: " : "failed: ") << name << " -> " << out_dir
            << '\n';
  return result.all_passed() ? 0 : 2;
}

}  // namespace stochunfold
