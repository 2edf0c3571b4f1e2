#include "stochunfold/varmin.hpp"

#include <chrono>
#include <cmath>

#include "stochunfold/cell.hpp"
#include "stochunfold/parallel.hpp"
#include "stochunfold/solvers.hpp"

namespace stochunfold {
namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// Nodal scalar Dirichlet problem for one realization: cell-quadrature
// integrand plus a fixed nodal load functional.
struct GridEnergyModel final : EnergyModel {
  const Domain& dom;
  VSpec spec;
  std::vector<const PhaseTable*> cell_phase;  // empty in table mode
  const VHomTable* table = nullptr;
  std::vector<double> load_nodal;
  std::vector<std::uint8_t> fixed;
  double levenberg = 0.0;
  Int3 nn;

  GridEnergyModel(const Domain& d, const VSpec& s) : dom(d), spec(s), nn(d.nodes_per_axis()) {
    fixed.resize(static_cast<std::size_t>(dom.num_nodes()), 0);
    for_sites(nn, [&](const Idx3& j, std::int64_t node) {
      if (dom.boundary_node(j)) fixed[node] = 1;
    });
    if (!(spec.is_quadratic())) levenberg = 1e-10;
  }

  std::int64_t dofs() const override { return dom.num_nodes(); }
  const std::vector<std::uint8_t>& fixed_mask() const override { return fixed; }

  // Gradient of the multilinear interpolant at the cell center; the corner
  // stencil matches grid.cpp's gradient() so quadratures agree everywhere.
  void cell_gradient(const std::vector<double>& u, const Idx3& c, double* g) const {
    const Vec3 h = dom.h();
    const double scale = 1.0 / static_cast<double>(1 << (dom.d - 1));
    for (int a = 0; a < dom.d; ++a) g[a] = 0;
    for (int mask = 0; mask < (1 << dom.d); ++mask) {
      Idx3 j = c;
      for (int ax = 0; ax < dom.d; ++ax) j[ax] += (mask >> ax) & 1;
      const double uj = u[linear_index(j, nn)];
      for (int a = 0; a < dom.d; ++a) {
        const double sign = ((mask >> a) & 1) ? 1.0 : -1.0;
        g[a] += sign * scale * uj / h[a];
      }
    }
  }

  double v_at(std::int64_t cell, const double* g) const {
    if (table) return table->value(g[0]);
    return v_value(spec, *cell_phase[cell], g, dom.d);
  }
  void dv_at(std::int64_t cell, const double* g, double* out) const {
    if (table) {
      out[0] = table->deriv(g[0]);
      return;
    }
    v_deriv(spec, *cell_phase[cell], g, dom.d, out);
  }
  void hv_at(std::int64_t cell, const double* g, const double* gv, double* out) const {
    for (int a = 0; a < dom.d; ++a) out[a] = 0;
    if (table) {
      out[0] = table->second(g[0]) * gv[0];
      return;
    }
    v_hess_apply(spec, *cell_phase[cell], g, gv, dom.d, out);
  }

  double energy(const std::vector<double>& u) const override {
    const double vol = dom.cell_volume();
    Kahan e;
    double g[3];
    for_sites(dom.n, [&](const Idx3& c, std::int64_t cell) {
      cell_gradient(u, c, g);
      e.add(vol * v_at(cell, g));
    });
    for (std::size_t j = 0; j < load_nodal.size(); ++j) e.add(-load_nodal[j] * u[j]);
    return e.value();
  }

  void scatter(const std::vector<double>& per_cell_flux, std::vector<double>& out) const {
    const Vec3 h = dom.h();
    const double vol = dom.cell_volume();
    const double scale = 1.0 / static_cast<double>(1 << (dom.d - 1));
    for_sites(dom.n, [&](const Idx3& c, std::int64_t cell) {
      for (int mask = 0; mask < (1 << dom.d); ++mask) {
        Idx3 j = c;
        for (int ax = 0; ax < dom.d; ++ax) j[ax] += (mask >> ax) & 1;
        const std::int64_t node = linear_index(j, nn);
        for (int a = 0; a < dom.d; ++a) {
          const double sign = ((mask >> a) & 1) ? 1.0 : -1.0;
          out[node] += vol * per_cell_flux[cell * dom.d + a] * sign * scale / h[a];
        }
      }
    });
  }

  void gradient(const std::vector<double>& u, std::vector<double>& out) const override {
    std::fill(out.begin(), out.end(), 0.0);
    std::vector<double> flux(static_cast<std::size_t>(dom.num_cells()) * dom.d);
    double g[3], dv[3];
    for_sites(dom.n, [&](const Idx3& c, std::int64_t cell) {
      cell_gradient(u, c, g);
      dv_at(cell, g, dv);
      for (int a = 0; a < dom.d; ++a) flux[cell * dom.d + a] = dv[a];
    });
    scatter(flux, out);
    for (std::size_t j = 0; j < load_nodal.size(); ++j) out[j] -= load_nodal[j];
  }

  void hessian_apply(const std::vector<double>& u, const std::vector<double>& v,
                     std::vector<double>& out) const override {
    std::fill(out.begin(), out.end(), 0.0);
    std::vector<double> flux(static_cast<std::size_t>(dom.num_cells()) * dom.d);
    double g[3], gv[3], hv[3];
    for_sites(dom.n, [&](const Idx3& c, std::int64_t cell) {
      cell_gradient(u, c, g);
      cell_gradient(v, c, gv);
      hv_at(cell, g, gv, hv);
      for (int a = 0; a < dom.d; ++a) flux[cell * dom.d + a] = hv[a];
    });
    scatter(flux, out);
    if (levenberg > 0)
      for (std::size_t j = 0; j < v.size(); ++j) out[j] += levenberg * v[j];
  }
};

std::vector<double> nodal_load(const Domain& dom, const LoadSpec& load) {
  const std::vector<double> w = dom.trapezoid_weights();
  std::vector<double> out(w.size());
  for_sites(dom.nodes_per_axis(), [&](const Idx3& j, std::int64_t node) {
    out[node] = w[node] * load(dom.node_pos(j), dom.d);
  });
  return out;
}

std::vector<double> solve_model(GridEnergyModel& model, double& energy_out) {
  std::vector<double> u(static_cast<std::size_t>(model.dofs()), 0.0);
  NewtonOptions opts;
  opts.tol = 1e-10;
  opts.cg_tol = 1e-12;
  opts.cg_max_iter = 200000;
  newton_minimize(model, u, opts);
  energy_out = model.energy(u);
  return u;
}

}  // namespace

void VHomTable::validate() const {
  require_config(F.size() == V.size() && F.size() >= 3,
                 "hom table: need matching F/V arrays with at least 3 samples");
  const double df = F[1] - F[0];
  require_config(df > 0, "hom table: F grid must ascend");
  for (std::size_t i = 0; i + 1 < F.size(); ++i)
    require_config(std::abs((F[i + 1] - F[i]) - df) <= 1e-9 * std::abs(df),
                   "hom table: F grid must be uniform");
  double prev = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < F.size(); ++i) {
    const double slope = (V[i + 1] - V[i]) / (F[i + 1] - F[i]);
    require_config(slope >= prev - 1e-10 * (1.0 + std::abs(slope)),
                   "hom table: samples are not convex");
    prev = slope;
  }
}

// Chord slopes s_i at midpoints m_i; deriv() joins them piecewise linearly
// (end pieces extended), which keeps the reconstruction convex and C^1.
double VHomTable::deriv(double f) const {
  const std::size_t nseg = F.size() - 1;
  std::vector<double> m(nseg), s(nseg);
  for (std::size_t i = 0; i < nseg; ++i) {
    m[i] = 0.5 * (F[i] + F[i + 1]);
    s[i] = (V[i + 1] - V[i]) / (F[i + 1] - F[i]);
  }
  if (nseg == 1) return s[0];
  std::size_t i = 0;
  while (i + 2 < nseg && f > m[i + 1]) ++i;
  if (f <= m[0]) i = 0;
  const double t = (f - m[i]) / (m[i + 1] - m[i]);
  return s[i] + t * (s[i + 1] - s[i]);
}

double VHomTable::second(double f) const {
  const std::size_t nseg = F.size() - 1;
  if (nseg == 1) return 0.0;
  std::vector<double> m(nseg), s(nseg);
  for (std::size_t i = 0; i < nseg; ++i) {
    m[i] = 0.5 * (F[i] + F[i + 1]);
    s[i] = (V[i + 1] - V[i]) / (F[i + 1] - F[i]);
  }
  std::size_t i = 0;
  while (i + 2 < nseg && f > m[i + 1]) ++i;
  return (s[i + 1] - s[i]) / (m[i + 1] - m[i]);
}

double VHomTable::value(double f) const {
  // Antiderivative of deriv(), anchored at the central knot so reconstruction
  // drift integrates outward from where the curvature is mildest; quadratic
  // samples stay exact because the derivative is then reproduced exactly.
  const std::size_t nseg = F.size() - 1;
  std::vector<double> m(nseg), s(nseg);
  for (std::size_t i = 0; i < nseg; ++i) {
    m[i] = 0.5 * (F[i] + F[i + 1]);
    s[i] = (V[i + 1] - V[i]) / (F[i + 1] - F[i]);
  }
  if (nseg == 1) return V[0] + s[0] * (f - F[0]);

  // Integral of the piecewise-linear derivative from m[0] to x.
  auto raw = [&](double x) {
    std::size_t i = 0;
    double acc = 0.0;
    if (x > m[0]) {
      while (i + 2 < nseg && x > m[i + 1]) {
        acc += 0.5 * (s[i] + s[i + 1]) * (m[i + 1] - m[i]);
        ++i;
      }
    }
    const double slope2 = (s[i + 1] - s[i]) / (m[i + 1] - m[i]);
    const double dx = x - m[i];
    return acc + s[i] * dx + 0.5 * slope2 * dx * dx;
  };

  const std::size_t k = nseg / 2;
  return V[k] + raw(f) - raw(F[k]);
}

MinimizeResult minimize_eps(const UnfoldPlan& up, const VSpec& vspec, const LoadSpec& load,
                            int workers) {
  vspec.validate();
  const Domain& dom = *up.domain;
  const SamplePlan& plan = *up.plan;
  const std::vector<double> load_nodal = nodal_load(dom, load);

  MinimizeResult res;
  res.u = make_field(up.domain, up.plan, Stage::node, 1);
  res.u.eps = up.eps;
  res.energies.resize(plan.size());

  parallel_for(static_cast<std::int64_t>(plan.size()), workers, [&](std::int64_t r) {
    GridEnergyModel model(dom, vspec);
    model.load_nodal = load_nodal;
    model.cell_phase.resize(static_cast<std::size_t>(dom.num_cells()));
    const Realization& real = plan.realizations[r];
    for_sites(dom.n, [&](const Idx3& c, std::int64_t cell) {
      model.cell_phase[cell] = &plan.env->phases[eval_env(real, lattice_cell(up, c))];
    });
    res.u.data[r] = solve_model(model, res.energies[r]);
  });

  Kahan e;
  for (std::size_t r = 0; r < plan.size(); ++r) e.add(plan.weights[r] * res.energies[r]);
  res.energy = e.value();
  return res;
}

double eps_energy(const UnfoldPlan& up, const VSpec& vspec, const LoadSpec& load,
                  const RandomField& u, int workers) {
  vspec.validate();
  const Domain& dom = *up.domain;
  const SamplePlan& plan = *up.plan;
  require(u.stage == Stage::node && u.m == 1, "eps_energy: scalar node field expected");
  require(u.realizations() == plan.size(), "eps_energy: field does not match the plan");
  const std::vector<double> load_nodal = nodal_load(dom, load);

  std::vector<double> energies(plan.size());
  parallel_for(static_cast<std::int64_t>(plan.size()), workers, [&](std::int64_t r) {
    GridEnergyModel model(dom, vspec);
    model.load_nodal = load_nodal;
    model.cell_phase.resize(static_cast<std::size_t>(dom.num_cells()));
    const Realization& real = plan.realizations[r];
    for_sites(dom.n, [&](const Idx3& c, std::int64_t cell) {
      model.cell_phase[cell] = &plan.env->phases[eval_env(real, lattice_cell(up, c))];
    });
    energies[r] = model.energy(u.data[r]);
  });

  Kahan e;
  for (std::size_t r = 0; r < plan.size(); ++r) e.add(plan.weights[r] * energies[r]);
  return e.value();
}

MinimizeResult minimize_hom(std::shared_ptr<const Domain> domain, const HomIntegrand& vhom,
                            const LoadSpec& load) {
  const Domain& dom = *domain;
  MinimizeResult res;
  res.u = make_plain_field(domain, Stage::node, 1);

  PhaseTable synthetic;
  GridEnergyModel model(dom, vhom.use_table ? VSpec::power_quad(2.0)
                                            : VSpec::quadratic(vhom.half));
  if (vhom.use_table) {
    require(dom.d == 1, "minimize_hom: tables are one-dimensional");
    vhom.table.validate();
    model.table = &vhom.table;
    model.levenberg = 1e-10;
  } else {
    synthetic.A = vhom.A;
    synthetic.explicit_A = true;
    model.cell_phase.assign(static_cast<std::size_t>(dom.num_cells()), &synthetic);
    model.levenberg = 0.0;
  }
  model.load_nodal = nodal_load(dom, load);
  res.u.data[0] = solve_model(model, res.energy);
  res.energies = {res.energy};
  return res;
}

HomIntegrand make_hom_integrand(std::shared_ptr<const EnvironmentSpec> env, const VSpec& vspec,
                                int refine_k, double table_fmax, int table_points) {
  vspec.validate();
  HomIntegrand hom;
  hom.half = vspec.half;
  if (vspec.is_quadratic()) {
    if (env->kind == EnvKind::iid_lattice) {
      // 1D and scalar coefficients: the corrected matrix is the harmonic mean
      // of the law, so no representative volume is needed.
      require(env->d == 1, "make_hom_integrand: iid quadratic supported in 1d only");
      const std::vector<double> w = env->phase_weights();
      Kahan inv;
      for (int k = 0; k < env->num_phases(); ++k) {
        require(!env->phases[k].explicit_A,
                "make_hom_integrand: iid path expects scalar coefficients");
        inv.add(w[k] / env->phases[k].a);
      }
      hom.A = {0, 0, 0, 0, 0, 0, 0, 0, 0};
      hom.A[0] = 1.0 / inv.value();
      return hom;
    }
    const CellSolution sol = solve_cell_quadratic(RefinedConfig::from_torus(env, refine_k));
    hom.A = sol.A_hom;
    return hom;
  }
  require(env->d == 1, "make_hom_integrand: tabulated integrands are one-dimensional");
  require(env->kind != EnvKind::iid_lattice,
          "make_hom_integrand: tabulated integrands need an enumerable orbit");
  require_config(table_points >= 3 && table_fmax > 0, "make_hom_integrand: bad table grid");
  const RefinedConfig config = RefinedConfig::from_torus(env, refine_k);
  hom.use_table = true;
  hom.table.F.resize(table_points);
  hom.table.V.resize(table_points);
  for (int i = 0; i < table_points; ++i) {
    const double f = -table_fmax + 2.0 * table_fmax * i / (table_points - 1);
    hom.table.F[i] = f;
    hom.table.V[i] = rve_vhom(config, {f, 0, 0}, vspec);
  }
  hom.table.validate();
  return hom;
}

StudyResult convergence_study(std::shared_ptr<const EnvironmentSpec> env, const VSpec& vspec,
                              const LoadSpec& load, const std::vector<double>& eps_list,
                              int cells_per_eps, int workers) {
  require_config(!eps_list.empty(), "convergence_study: empty eps list");
  require_config(cells_per_eps >= 1, "convergence_study: cells_per_eps must be >= 1");

  StudyResult study;
  study.subcommand = "convergence-study";
  const HomIntegrand hom = make_hom_integrand(env, vspec, cells_per_eps);

  Table table;
  table.name = "gap_vs_eps";
  table.columns = {"eps", "energy_eps", "energy_hom", "gap",
                   "l2_error", "ts_residual", "seconds"};
  std::vector<double> gaps;

  for (double eps : eps_list) {
    const double t0 = now_seconds();
    const double m = 1.0 / eps;
    require_config(std::abs(m - std::round(m)) < 1e-9, "convergence_study: eps must be 1/m");
    Int3 n{1, 1, 1};
    for (int a = 0; a < env->d; ++a)
      n[a] = static_cast<int>(cells_per_eps * std::llround(m));
    auto domain = make_domain(env->d, n);
    auto plan = std::make_shared<SamplePlan>(
        enumerate_or_sample(*env, env->kind == EnvKind::iid_lattice ? 32 : env->orbit_size(),
                            0));
    const UnfoldPlan up = make_unfold_plan(domain, plan, eps);

    const MinimizeResult r_eps = minimize_eps(up, vspec, load, workers);
    const MinimizeResult r_hom = minimize_hom(domain, hom, load);

    RandomField mean_u = project_inv(r_eps.u);
    axpy(-1.0, r_hom.u, mean_u);
    const double l2 = norm_p(mean_u, 2.0);
    const TwoScaleReport ts = two_scale_residual(*plan, eps, r_eps.u, r_hom.u,
                                                 default_battery(*env, env->d));
    const double gap = r_eps.energy - r_hom.energy;
    gaps.push_back(gap);
    table.rows.push_back({eps, r_eps.energy, r_hom.energy, gap, l2, ts.max_abs_residual,
                          now_seconds() - t0});
  }
  study.tables.push_back(table);

  for (std::size_t i = 0; i + 1 < gaps.size(); ++i) {
    const double ratio = std::abs(gaps[i + 1]) / std::abs(gaps[i]);
    study.assertions.push_back(
        assert_le("gap_ratio_step_" + std::to_string(i), ratio, 0.30));
  }
  if (gaps.size() >= 2) {
    const double shrink = std::abs(gaps.front()) / std::abs(gaps.back());
    study.assertions.push_back(assert_ge("gap_total_shrink", shrink, 4.0));
  }
  study.scalars["energy_hom_finest"] = table.rows.back()[2];
  return study;
}

StudyResult quenched_study(std::shared_ptr<const EnvironmentSpec> env, const VSpec& vspec,
                           const LoadSpec& load, double eps, int cells_per_eps, int num_seeds,
                           std::uint64_t seed, int workers) {
  require(env->kind == EnvKind::iid_lattice, "quenched_study: iid environments only");
  require_config(num_seeds >= 2, "quenched_study: need at least 2 seeds");
  const double m = 1.0 / eps;
  require_config(std::abs(m - std::round(m)) < 1e-9, "quenched_study: eps must be 1/m");

  StudyResult study;
  study.subcommand = "quenched-study";

  Int3 n{1, 1, 1};
  for (int a = 0; a < env->d; ++a)
    n[a] = static_cast<int>(cells_per_eps * std::llround(m));
  auto domain = make_domain(env->d, n);
  auto plan = std::make_shared<SamplePlan>(enumerate_or_sample(*env, num_seeds, seed));
  const UnfoldPlan up = make_unfold_plan(domain, plan, eps);

  const double t0 = now_seconds();
  const MinimizeResult r_eps = minimize_eps(up, vspec, load, workers);
  const HomIntegrand hom = make_hom_integrand(env, vspec, cells_per_eps);
  const MinimizeResult r_hom = minimize_hom(domain, hom, load);
  const double elapsed = now_seconds() - t0;

  // Per-seed distance of the quenched minimizer to the homogenized one.
  std::vector<double> dist(num_seeds);
  for (int i = 0; i < num_seeds; ++i) {
    RandomField diff = make_plain_field(domain, Stage::node, 1);
    diff.data[0] = r_eps.u.data[i];
    axpy(-1.0, r_hom.u, diff);
    dist[i] = norm_p(diff, 2.0);
  }

  Table table;
  table.name = "scatter";
  table.columns = {"seed", "l2_distance", "energy_eps", "energy_hom", "gap", "seconds"};
  Kahan mean_acc, dist_acc;
  for (int i = 0; i < num_seeds; ++i) {
    mean_acc.add(r_eps.energies[i] / num_seeds);
    dist_acc.add(dist[i] / num_seeds);
    table.rows.push_back({static_cast<double>(i), dist[i], r_eps.energies[i], r_hom.energy,
                          r_eps.energies[i] - r_hom.energy, elapsed / num_seeds});
  }
  study.tables.push_back(table);

  const double mean = mean_acc.value();
  const double mean_dist = dist_acc.value();
  Kahan var_acc, dvar_acc;
  double max_dev = 0.0;
  for (int i = 0; i < num_seeds; ++i) {
    const double dev = r_eps.energies[i] - mean;
    var_acc.add(dev * dev / num_seeds);
    const double ddev = dist[i] - mean_dist;
    dvar_acc.add(ddev * ddev / num_seeds);
    max_dev = std::max(max_dev, std::abs(dev));
  }
  const double rms = std::sqrt(var_acc.value());
  double max_pair = 0.0;
  for (int i = 0; i < num_seeds; ++i)
    for (int j = i + 1; j < num_seeds; ++j)
      max_pair = std::max(max_pair, std::abs(r_eps.energies[i] - r_eps.energies[j]));

  study.scalars["mean_energy_eps"] = mean;
  study.scalars["energy_hom"] = r_hom.energy;
  study.scalars["stderr"] = rms / std::sqrt(static_cast<double>(num_seeds - 1));
  study.scalars["rms_deviation"] = rms;
  study.scalars["max_deviation"] = max_dev;
  study.scalars["max_pairwise_spread"] = max_pair;
  study.scalars["mean_distance"] = mean_dist;
  study.scalars["std_distance"] = std::sqrt(dvar_acc.value());

  study.assertions.push_back(assert_le(
      "quenched_mean_matches_hom",
      std::abs(mean - r_hom.energy), 0.02 * std::abs(r_hom.energy)));
  return study;
}

}  // namespace stochunfold
