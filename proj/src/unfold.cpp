#include "stochunfold/unfold.hpp"

#include <cmath>
#include <string>
#include <unordered_map>

namespace stochunfold {
namespace {

// Offset -> realization index, so permutations stay O(1) per site.
std::unordered_map<std::int64_t, std::size_t> offset_index(const SamplePlan& plan) {
  std::unordered_map<std::int64_t, std::size_t> map;
  const Int3& L = plan.env->L;
  for (std::size_t i = 0; i < plan.realizations.size(); ++i) {
    const Idx3& o = plan.realizations[i].offset;
    map[linear_index({wrap(o[0], L[0]), wrap(o[1], L[1]), wrap(o[2], L[2])}, L)] = i;
  }
  return map;
}

void require_exact_orbit(const UnfoldPlan& up, const char* op) {
  require(up.plan->exact,
          std::string(op) + ": requires an exhaustive orbit plan; Monte Carlo plans "
                            "pair through two_scale_residual instead");
  require(up.plan->size() == static_cast<std::size_t>(up.env().orbit_size()),
          std::string(op) + ": plan does not cover the full orbit");
}

void require_cell_field(const UnfoldPlan& up, const RandomField& u, const char* op) {
  require(u.stage == Stage::cell, std::string(op) + ": expected a cell-stage field");
  require(u.realizations() == up.plan->size(), std::string(op) + ": realization count mismatch");
  require(u.domain->d == up.domain->d && u.domain->n == up.domain->n,
          std::string(op) + ": field does not live on the plan's grid");
}

RandomField permute(const UnfoldPlan& up, const RandomField& u, int sign, const char* op) {
  require_exact_orbit(up, op);
  require_cell_field(up, u, op);
  const SamplePlan& plan = *up.plan;
  const Int3& L = plan.env->L;
  auto index_of = offset_index(plan);

  RandomField out = make_field(u.domain, up.plan, Stage::cell, u.m);
  out.eps = up.eps;
  const Int3 ext = u.extents();
  for (std::size_t r = 0; r < plan.size(); ++r) {
    const Idx3& o = plan.realizations[r].offset;
    std::vector<double>& dst = out.data[r];
    for_sites(ext, [&](const Idx3& c, std::int64_t site) {
      const Idx3 z = lattice_cell(up, c);
      Idx3 src;
      for (int a = 0; a < 3; ++a) src[a] = wrap(o[a] + sign * z[a], L[a]);
      const std::size_t rs = index_of.at(linear_index(src, L));
      const double* row = &u.data[rs][site * u.m];
      for (int comp = 0; comp < u.m; ++comp) dst[site * u.m + comp] = row[comp];
    });
  }
  return out;
}

double eval_monomial(const Vec3& x, const Idx3& degree, int d) {
  double v = 1.0;
  for (int a = 0; a < d; ++a)
    for (int k = 0; k < degree[a]; ++k) v *= x[a];
  return v;
}

}  // namespace

UnfoldPlan make_unfold_plan(std::shared_ptr<const Domain> domain,
                            std::shared_ptr<const SamplePlan> plan, double eps) {
  require(domain != nullptr && plan != nullptr && plan->env != nullptr,
          "unfold plan: missing domain or sample plan");
  require_config(eps > 0, "unfold plan: eps must be positive");
  const double m = 1.0 / eps;
  require_config(std::abs(m - std::round(m)) < 1e-9,
                 "unfold plan: eps = " + std::to_string(eps) + " is not 1/m for integer m");
  UnfoldPlan up;
  up.domain = std::move(domain);
  up.plan = std::move(plan);
  up.eps = eps;
  for (int a = 0; a < up.domain->d; ++a) {
    const double qa = eps * up.domain->n[a] / up.domain->size[a];
    require_config(qa > 0.5 && std::abs(qa - std::round(qa)) < 1e-9,
                   "unfold plan: coefficient cells of scale eps = " + std::to_string(eps) +
                       " do not align with n = " + std::to_string(up.domain->n[a]) +
                       " grid cells on axis " + std::to_string(a));
    up.q[a] = static_cast<int>(std::llround(qa));
  }
  return up;
}

Idx3 lattice_cell(const UnfoldPlan& up, const Idx3& cell) {
  Idx3 z{0, 0, 0};
  for (int a = 0; a < up.domain->d; ++a) z[a] = cell[a] / up.q[a];
  return z;
}

RandomField unfold(const UnfoldPlan& up, const RandomField& u) {
  return permute(up, u, -1, "unfold");
}

RandomField fold_adjoint(const UnfoldPlan& up, const RandomField& v) {
  return permute(up, v, +1, "fold_adjoint");
}

RandomField project_inv(const RandomField& v) {
  require(!v.data.empty(), "project_inv: empty field");
  RandomField out = make_plain_field(v.domain, v.stage, v.m);
  out.eps = v.eps;
  const std::int64_t len = v.sites() * v.m;
  for (std::int64_t i = 0; i < len; ++i) {
    Kahan s;
    for (std::size_t r = 0; r < v.realizations(); ++r) s.add(v.weights[r] * v.data[r][i]);
    out.data[0][i] = s.value();
  }
  return out;
}

std::vector<BatteryEntry> default_battery(const EnvironmentSpec& env, int d) {
  std::vector<BatteryEntry> battery;
  Idx3 deg{0, 0, 0};
  const std::int64_t count = static_cast<std::int64_t>(std::pow(3.0, d));
  for (std::int64_t k = 0; k < count; ++k) {
    std::int64_t rem = k;
    for (int a = 0; a < d; ++a) {
      deg[a] = rem % 3;
      rem /= 3;
    }
    for (int p = 0; p < env.num_phases(); ++p) battery.push_back({p, deg});
  }
  return battery;
}

TwoScaleReport two_scale_residual(const SamplePlan& plan, double eps,
                                  const RandomField& u_eps, const RandomField& u0,
                                  const std::vector<BatteryEntry>& battery) {
  require(u_eps.m == 1 && u0.m == 1, "two_scale_residual: scalar fields only");
  require(u0.realizations() == 1, "two_scale_residual: the limit must be deterministic");
  require(u_eps.realizations() == plan.size(), "two_scale_residual: plan/field mismatch");

  const RandomField ue = u_eps.stage == Stage::cell ? u_eps : cell_average(u_eps);
  const RandomField u0c = u0.stage == Stage::cell ? u0 : cell_average(u0);
  require(ue.domain->d == u0c.domain->d && ue.domain->n == u0c.domain->n,
          "two_scale_residual: fields live on different grids");

  const Domain& dom = *ue.domain;
  const double vol = dom.cell_volume();
  const std::vector<double> weights_by_phase = plan.env->phase_weights();

  // Integer-exact lattice cell of a grid cell, as in make_unfold_plan.
  Int3 q{1, 1, 1};
  for (int a = 0; a < dom.d; ++a) {
    const double qa = eps * dom.n[a] / dom.size[a];
    require_config(qa > 0.5 && std::abs(qa - std::round(qa)) < 1e-9,
                   "two_scale_residual: eps does not align with the grid");
    q[a] = static_cast<int>(std::llround(qa));
  }

  TwoScaleReport rep;
  rep.battery = battery;
  const std::size_t B = battery.size();
  std::vector<Kahan> paired(B);

  const Int3 ext = ue.extents();
  for (std::size_t r = 0; r < plan.size(); ++r) {
    const Realization& real = plan.realizations[r];
    const double w = plan.weights[r];
    for_sites(ext, [&](const Idx3& c, std::int64_t site) {
      Idx3 z{0, 0, 0};
      for (int a = 0; a < dom.d; ++a) z[a] = c[a] / q[a];
      const int phase_here = eval_env(real, z);
      const Vec3 x = dom.cell_center(c);
      const double uval = ue.data[r][site];
      for (std::size_t b = 0; b < B; ++b) {
        if (battery[b].phase != phase_here) continue;
        paired[b].add(w * vol * uval * eval_monomial(x, battery[b].degree, dom.d));
      }
    });
  }

  rep.paired.resize(B);
  rep.limit.resize(B);
  rep.residual.resize(B);
  for (std::size_t b = 0; b < B; ++b) {
    Kahan lim;
    for_sites(ext, [&](const Idx3& c, std::int64_t site) {
      lim.add(vol * u0c.data[0][site] * eval_monomial(dom.cell_center(c), battery[b].degree, dom.d));
    });
    rep.paired[b] = paired[b].value();
    rep.limit[b] = weights_by_phase[battery[b].phase] * lim.value();
    rep.residual[b] = rep.paired[b] - rep.limit[b];
    rep.max_abs_residual = std::max(rep.max_abs_residual, std::abs(rep.residual[b]));
  }
  return rep;
}

RandomField recovery_sequence(const UnfoldPlan& up, const CorrectorPattern& pattern,
                              const RandomField& u_hom, double kappa) {
  require_exact_orbit(up, "recovery_sequence");
  require(u_hom.stage == Stage::node && u_hom.m == 1 && u_hom.realizations() == 1,
          "recovery_sequence: expected a scalar one-realization node field");
  const Domain& dom = *up.domain;
  require(u_hom.domain->d == dom.d && u_hom.domain->n == dom.n,
          "recovery_sequence: field does not live on the plan's grid");
  require(pattern.d == dom.d, "recovery_sequence: corrector dimension mismatch");
  require(pattern.L == up.env().L, "recovery_sequence: corrector period mismatch");
  require(static_cast<int>(pattern.phi.size()) == dom.d,
          "recovery_sequence: one corrector per direction required");
  require(kappa > 0, "recovery_sequence: kappa must be positive");

  // Nodal derivative: average the cell-centered gradient over incident cells.
  const RandomField grad = gradient(u_hom);
  const Int3 nn = dom.nodes_per_axis();
  std::vector<double> dnode(static_cast<std::size_t>(dom.num_nodes()) * dom.d, 0.0);
  for_sites(nn, [&](const Idx3& j, std::int64_t node) {
    for (int a = 0; a < dom.d; ++a) {
      Kahan s;
      int count = 0;
      // Incident cells: indices j - c, c in {0,1}^d, clipped to the grid.
      for (int mask = 0; mask < (1 << dom.d); ++mask) {
        Idx3 cell = j;
        bool ok = true;
        for (int ax = 0; ax < dom.d; ++ax) {
          cell[ax] -= (mask >> ax) & 1;
          if (cell[ax] < 0 || cell[ax] >= dom.n[ax]) ok = false;
        }
        if (!ok) continue;
        s.add(grad.data[0][linear_index(cell, dom.n) * dom.d + a]);
        ++count;
      }
      dnode[node * dom.d + a] = s.value() / count;
    }
  });

  // Boundary collar ramp, 0 on the boundary and 1 at distance >= kappa*eps.
  std::vector<double> ramp(static_cast<std::size_t>(dom.num_nodes()), 1.0);
  for_sites(nn, [&](const Idx3& j, std::int64_t node) {
    const Vec3 x = dom.node_pos(j);
    double rv = 1.0;
    for (int a = 0; a < dom.d; ++a) {
      const double dist = std::min(x[a], dom.size[a] - x[a]);
      rv = std::min(rv, std::min(1.0, dist / (kappa * up.eps)));
    }
    ramp[node] = rv;
  });
  for_sites(nn, [&](const Idx3& j, std::int64_t node) {
    if (dom.boundary_node(j)) require(ramp[node] == 0.0, "recovery_sequence: ramp not admissible");
  });

  const SamplePlan& plan = *up.plan;
  const Int3& L = up.env().L;
  RandomField out = make_field(u_hom.domain, up.plan, Stage::node, 1);
  out.eps = up.eps;
  for (std::size_t r = 0; r < plan.size(); ++r) {
    const Idx3& o = plan.realizations[r].offset;
    std::vector<double>& dst = out.data[r];
    for_sites(nn, [&](const Idx3& j, std::int64_t node) {
      // Coefficient-lattice coordinates of the node: z + t/q per axis.
      Idx3 z{0, 0, 0};
      Vec3 t{0, 0, 0};
      for (int a = 0; a < dom.d; ++a) {
        z[a] = j[a] / up.q[a];
        t[a] = static_cast<double>(j[a] % up.q[a]) / static_cast<double>(up.q[a]);
      }
      double corr = 0.0;
      for (int dir = 0; dir < dom.d; ++dir) {
        // Multilinear interpolation of the corrector between lattice corners.
        double phi_here = 0.0;
        for (int mask = 0; mask < (1 << dom.d); ++mask) {
          double wgt = 1.0;
          Idx3 corner{0, 0, 0};
          for (int ax = 0; ax < dom.d; ++ax) {
            const int bit = (mask >> ax) & 1;
            wgt *= bit ? t[ax] : 1.0 - t[ax];
            corner[ax] = wrap(z[ax] + bit + o[ax], L[ax]);
          }
          if (wgt == 0.0) continue;
          phi_here += wgt * pattern.phi[dir][linear_index(corner, L)];
        }
        corr += phi_here * dnode[node * dom.d + dir];
      }
      dst[node] = u_hom.data[0][node] + up.eps * corr * ramp[node];
    });
  }
  return out;
}

}  // namespace stochunfold
