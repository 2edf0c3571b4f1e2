#include "stochunfold/flow.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <string>

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

double quartic(const ReactionParams& f, double y) {
  const double q = y * y - f.well * f.well;
  return 0.25 * f.scale * q * q;
}
double quartic_d(const ReactionParams& f, double y) {
  return f.scale * y * (y * y - f.well * f.well);
}
double quartic_dd(const ReactionParams& f, double y) {
  return f.scale * (3.0 * y * y - f.well * f.well);
}

// Per-node reaction and dissipation: a concrete phase at the oscillating
// scale, the law average at the homogenized scale.
struct Reaction {
  const EnvironmentSpec* env = nullptr;
  std::vector<double> mix;  // law weights; empty means single phase
  int phase = 0;

  double value(double y) const {
    if (mix.empty()) return quartic(env->phases[phase].f, y);
    double s = 0;
    for (std::size_t k = 0; k < mix.size(); ++k) s += mix[k] * quartic(env->phases[k].f, y);
    return s;
  }
  double deriv(double y) const {
    if (mix.empty()) return quartic_d(env->phases[phase].f, y);
    double s = 0;
    for (std::size_t k = 0; k < mix.size(); ++k) s += mix[k] * quartic_d(env->phases[k].f, y);
    return s;
  }
  double second(double y) const {
    if (mix.empty()) return quartic_dd(env->phases[phase].f, y);
    double s = 0;
    for (std::size_t k = 0; k < mix.size(); ++k)
      s += mix[k] * quartic_dd(env->phases[k].f, y);
    return s;
  }
  double rcoef() const {
    if (mix.empty()) return env->phases[phase].r;
    double s = 0;
    for (std::size_t k = 0; k < mix.size(); ++k) s += mix[k] * env->phases[k].r;
    return s;
  }
};

// Incremental functional J(w) = E(w) + (1/tau) R(w - u_prev) for one
// realization; E carries no 1/2 on the gradient term, R carries one.
struct FlowModel final : EnergyModel {
  const Domain& dom;
  Int3 nn;
  std::vector<const PhaseTable*> cell_A;
  std::vector<Reaction> node_reaction;
  std::vector<double> tw;  // trapezoid weights
  std::vector<std::uint8_t> fixed;
  const std::vector<double>* u_prev = nullptr;
  double tau = 1.0;

  FlowModel(const Domain& d, bool dirichlet) : dom(d), nn(d.nodes_per_axis()) {
    tw = dom.trapezoid_weights();
    fixed.resize(static_cast<std::size_t>(dom.num_nodes()), 0);
    if (dirichlet)
      for_sites(nn, [&](const Idx3& j, std::int64_t node) {
        if (dom.boundary_node(j)) fixed[node] = 1;
      });
  }

  std::int64_t dofs() const override { return dom.num_nodes(); }
  const std::vector<std::uint8_t>& fixed_mask() const override { return fixed; }

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

  void scatter(const std::vector<double>& flux, std::vector<double>& out) const {
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
          out[node] += vol * flux[cell * dom.d + a] * sign * scale / h[a];
        }
      }
    });
  }

  double energy_E(const std::vector<double>& u) const {
    const double vol = dom.cell_volume();
    Kahan e;
    double g[3];
    for_sites(dom.n, [&](const Idx3& c, std::int64_t cell) {
      cell_gradient(u, c, g);
      const PhaseTable& ph = *cell_A[cell];
      double s = 0;
      for (int a = 0; a < dom.d; ++a)
        for (int b = 0; b < dom.d; ++b) s += g[a] * ph.A[3 * a + b] * g[b];
      e.add(vol * s);
    });
    for (std::size_t j = 0; j < tw.size(); ++j)
      e.add(tw[j] * node_reaction[j].value(u[j]));
    return e.value();
  }

  double dissipation_R(const std::vector<double>& delta) const {
    Kahan r;
    for (std::size_t j = 0; j < tw.size(); ++j)
      r.add(0.5 * tw[j] * node_reaction[j].rcoef() * delta[j] * delta[j]);
    return r.value();
  }

  double energy(const std::vector<double>& w) const override {
    Kahan j;
    j.add(energy_E(w));
    Kahan r;
    for (std::size_t k = 0; k < tw.size(); ++k) {
      const double dk = w[k] - (*u_prev)[k];
      r.add(0.5 * tw[k] * node_reaction[k].rcoef() * dk * dk);
    }
    j.add(r.value() / tau);
    return j.value();
  }

  void gradient(const std::vector<double>& w, std::vector<double>& out) const override {
    std::fill(out.begin(), out.end(), 0.0);
    std::vector<double> flux(static_cast<std::size_t>(dom.num_cells()) * dom.d);
    double g[3];
    for_sites(dom.n, [&](const Idx3& c, std::int64_t cell) {
      cell_gradient(w, c, g);
      const PhaseTable& ph = *cell_A[cell];
      for (int a = 0; a < dom.d; ++a) {
        double s = 0;
        for (int b = 0; b < dom.d; ++b) s += ph.A[3 * a + b] * g[b];
        flux[cell * dom.d + a] = 2.0 * s;
      }
    });
    scatter(flux, out);
    for (std::size_t j = 0; j < tw.size(); ++j) {
      out[j] += tw[j] * node_reaction[j].deriv(w[j]);
      out[j] += tw[j] * node_reaction[j].rcoef() * (w[j] - (*u_prev)[j]) / tau;
    }
  }

  void hessian_apply(const std::vector<double>& w, const std::vector<double>& v,
                     std::vector<double>& out) const override {
    std::fill(out.begin(), out.end(), 0.0);
    std::vector<double> flux(static_cast<std::size_t>(dom.num_cells()) * dom.d);
    double gv[3];
    for_sites(dom.n, [&](const Idx3& c, std::int64_t cell) {
      cell_gradient(v, c, gv);
      const PhaseTable& ph = *cell_A[cell];
      for (int a = 0; a < dom.d; ++a) {
        double s = 0;
        for (int b = 0; b < dom.d; ++b) s += ph.A[3 * a + b] * gv[b];
        flux[cell * dom.d + a] = 2.0 * s;
      }
    });
    scatter(flux, out);
    for (std::size_t j = 0; j < tw.size(); ++j) {
      out[j] += tw[j] * node_reaction[j].second(w[j]) * v[j];
      out[j] += tw[j] * node_reaction[j].rcoef() * v[j] / tau;
    }
  }
};

std::vector<double> initial_state(const Domain& dom, const InitialCondition& init) {
  std::vector<double> u(static_cast<std::size_t>(dom.num_nodes()), 0.0);
  for_sites(dom.nodes_per_axis(), [&](const Idx3& j, std::int64_t node) {
    if (init.kind == InitialCondition::Kind::constant) {
      u[node] = init.amplitude;
      return;
    }
    const Vec3 x = dom.node_pos(j);
    double v = init.amplitude;
    for (int a = 0; a < dom.d; ++a) v *= std::sin(M_PI * x[a] / dom.size[a]);
    u[node] = v;
  });
  return u;
}

void newton_once(FlowModel& model, std::vector<double>& w) {
  NewtonOptions opts;
  opts.tol = 1e-10;
  opts.cg_tol = 1e-12;
  opts.cg_max_iter = 200000;
  newton_minimize(model, w, opts);
}

// One minimizing movement step, with a single tau/2-substep retry.
bool mm_step(FlowModel& model, std::vector<double>& u, double tau) {
  model.tau = tau;
  model.u_prev = &u;
  std::vector<double> w = u;
  try {
    newton_once(model, w);
    u = std::move(w);
    return false;
  } catch (const Error&) {
    std::vector<double> half = u;
    model.tau = 0.5 * tau;
    for (int sub = 0; sub < 2; ++sub) {
      model.u_prev = &half;
      std::vector<double> w2 = half;
      try {
        newton_once(model, w2);
      } catch (const Error&) {
        throw Error("flow: incremental step failed even after splitting tau");
      }
      half = std::move(w2);
    }
    u = std::move(half);
    return true;
  }
}

struct ChainResult {
  std::vector<double> u;
  std::vector<double> energies;      // E after each step
  std::vector<double> dissipations;  // (1/tau) R per step
  std::vector<std::uint8_t> substepped;
  double energy0 = 0.0;
};

ChainResult run_chain(FlowModel& model, const FlowSpec& spec) {
  ChainResult out;
  out.u = initial_state(model.dom, spec.init);
  const int steps = static_cast<int>(std::llround(spec.T / spec.tau));
  require_config(steps >= 1 && std::abs(steps * spec.tau - spec.T) < 1e-9 * spec.T,
                 "flow: T must be an integer multiple of tau");
  out.energy0 = model.energy_E(out.u);
  double e_prev = out.energy0;
  for (int n = 0; n < steps; ++n) {
    const std::vector<double> before = out.u;
    const bool halved = mm_step(model, out.u, spec.tau);
    std::vector<double> delta(out.u.size());
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = out.u[i] - before[i];
    const double e_now = model.energy_E(out.u);
    const double diss = model.dissipation_R(delta) / spec.tau;
    require(e_now + diss <= e_prev + 1e-10,
            "flow: dissipation inequality violated at step " + std::to_string(n));
    out.energies.push_back(e_now);
    out.dissipations.push_back(diss);
    out.substepped.push_back(halved ? 1 : 0);
    e_prev = e_now;
  }
  return out;
}

Trajectory aggregate(const std::vector<ChainResult>& chains, const std::vector<double>& weights,
                     const FlowSpec& spec, RandomField final_u) {
  Trajectory traj;
  traj.u = std::move(final_u);
  Kahan e0;
  for (std::size_t r = 0; r < chains.size(); ++r) e0.add(weights[r] * chains[r].energy0);
  traj.energy0 = e0.value();
  const std::size_t steps = chains.front().energies.size();
  for (std::size_t n = 0; n < steps; ++n) {
    StepRecord rec;
    rec.t = (static_cast<double>(n) + 1.0) * spec.tau;
    Kahan e, d;
    for (std::size_t r = 0; r < chains.size(); ++r) {
      e.add(weights[r] * chains[r].energies[n]);
      d.add(weights[r] * chains[r].dissipations[n]);
      rec.substepped = rec.substepped || chains[r].substepped[n];
    }
    rec.energy = e.value();
    rec.dissipation = d.value();
    traj.steps.push_back(rec);
  }
  return traj;
}

}  // namespace

double lambda_bound(const EnvironmentSpec& env) {
  double lambda = 0.0;
  double wmax = 0.0;
  for (const PhaseTable& ph : env.phases) {
    lambda = std::min(lambda, -ph.f.scale * ph.f.well * ph.f.well);
    wmax = std::max(wmax, ph.f.well);
  }
  // Certificate: the claimed bound must minorize f'' on a sampled y-range.
  for (int i = 0; i <= 200; ++i) {
    const double y = -3.0 * wmax + 6.0 * wmax * i / 200.0;
    for (const PhaseTable& ph : env.phases)
      require(quartic_dd(ph.f, y) >= lambda - 1e-9,
              "flow: convexity certificate failed on the sample grid");
  }
  return lambda / env.r_min();
}

void validate_tau(double tau, double lambda) {
  require_config(tau > 0, "flow: tau must be positive");
  if (lambda >= 0) return;
  const double limit = 1.0 / (2.0 * std::abs(lambda));
  require_config(tau < limit,
                 "flow: tau = " + std::to_string(tau) + " violates tau < " +
                     std::to_string(limit) + " required by the convexity bound");
}

Trajectory flow_eps(const UnfoldPlan& up, const FlowSpec& spec, int workers,
                    const StepCallback& cb) {
  validate_tau(spec.tau, lambda_bound(up.env()));
  const Domain& dom = *up.domain;
  const SamplePlan& plan = *up.plan;

  std::vector<ChainResult> chains(plan.size());
  parallel_for(static_cast<std::int64_t>(plan.size()), workers, [&](std::int64_t r) {
    FlowModel model(dom, spec.dirichlet);
    model.cell_A.resize(static_cast<std::size_t>(dom.num_cells()));
    const Realization& real = plan.realizations[r];
    for_sites(dom.n, [&](const Idx3& c, std::int64_t cell) {
      model.cell_A[cell] = &plan.env->phases[eval_env(real, lattice_cell(up, c))];
    });
    model.node_reaction.resize(static_cast<std::size_t>(dom.num_nodes()));
    for_sites(dom.nodes_per_axis(), [&](const Idx3& j, std::int64_t node) {
      Idx3 z{0, 0, 0};
      for (int a = 0; a < dom.d; ++a) z[a] = j[a] / up.q[a];
      model.node_reaction[node] = Reaction{plan.env.get(), {}, eval_env(real, z)};
    });
    chains[r] = run_chain(model, spec);
  });

  RandomField final_u = make_field(up.domain, up.plan, Stage::node, 1);
  final_u.eps = up.eps;
  for (std::size_t r = 0; r < plan.size(); ++r) final_u.data[r] = chains[r].u;

  if (cb) {
    // Re-run serially when per-step states are needed; chains are cheap and
    // the callback sees the same deterministic sequence.
    RandomField snap = make_field(up.domain, up.plan, Stage::node, 1);
    std::vector<FlowModel> models;
    models.reserve(plan.size());
    std::vector<std::vector<double>> states(plan.size());
    for (std::size_t r = 0; r < plan.size(); ++r) {
      FlowModel model(dom, spec.dirichlet);
      model.cell_A.resize(static_cast<std::size_t>(dom.num_cells()));
      const Realization& real = plan.realizations[r];
      for_sites(dom.n, [&](const Idx3& c, std::int64_t cell) {
        model.cell_A[cell] = &plan.env->phases[eval_env(real, lattice_cell(up, c))];
      });
      model.node_reaction.resize(static_cast<std::size_t>(dom.num_nodes()));
      for_sites(dom.nodes_per_axis(), [&](const Idx3& j, std::int64_t node) {
        Idx3 z{0, 0, 0};
        for (int a = 0; a < dom.d; ++a) z[a] = j[a] / up.q[a];
        model.node_reaction[node] = Reaction{plan.env.get(), {}, eval_env(real, z)};
      });
      models.push_back(std::move(model));
      states[r] = initial_state(dom, spec.init);
      snap.data[r] = states[r];
    }
    cb(0, snap);
    const int steps = static_cast<int>(std::llround(spec.T / spec.tau));
    for (int n = 0; n < steps; ++n) {
      for (std::size_t r = 0; r < plan.size(); ++r) {
        mm_step(models[r], states[r], spec.tau);
        snap.data[r] = states[r];
      }
      cb(n + 1, snap);
    }
  }
  return aggregate(chains, plan.weights, spec, std::move(final_u));
}

Trajectory flow_hom(std::shared_ptr<const Domain> domain,
                    std::shared_ptr<const EnvironmentSpec> env, const FlowSpec& spec,
                    int refine_k, const StepCallback& cb) {
  validate_tau(spec.tau, lambda_bound(*env));
  const Domain& dom = *domain;

  PhaseTable hom_phase;
  if (env->kind == EnvKind::iid_lattice) {
    require(env->d == 1, "flow_hom: iid environments supported in 1d only");
    const std::vector<double> w = env->phase_weights();
    Kahan inv;
    for (int k = 0; k < env->num_phases(); ++k) {
      require(!env->phases[k].explicit_A, "flow_hom: iid path expects scalar coefficients");
      inv.add(w[k] / env->phases[k].a);
    }
    hom_phase.A = {0, 0, 0, 0, 0, 0, 0, 0, 0};
    hom_phase.A[0] = 1.0 / inv.value();
  } else {
    hom_phase.A = solve_cell_quadratic(RefinedConfig::from_torus(env, refine_k)).A_hom;
  }
  hom_phase.explicit_A = true;

  FlowModel model(dom, spec.dirichlet);
  model.cell_A.assign(static_cast<std::size_t>(dom.num_cells()), &hom_phase);
  Reaction mix{env.get(), env->phase_weights(), 0};
  model.node_reaction.assign(static_cast<std::size_t>(dom.num_nodes()), mix);

  if (cb) {
    std::vector<double> state = initial_state(dom, spec.init);
    RandomField snap = make_plain_field(domain, Stage::node, 1);
    snap.data[0] = state;
    cb(0, snap);
    const int steps = static_cast<int>(std::llround(spec.T / spec.tau));
    for (int n = 0; n < steps; ++n) {
      mm_step(model, state, spec.tau);
      snap.data[0] = state;
      cb(n + 1, snap);
    }
  }

  ChainResult chain = run_chain(model, spec);
  RandomField final_u = make_plain_field(domain, Stage::node, 1);
  final_u.data[0] = chain.u;
  return aggregate({chain}, {1.0}, spec, std::move(final_u));
}

StudyResult evolutionary_convergence(std::shared_ptr<const EnvironmentSpec> env,
                                     const FlowSpec& spec,
                                     const std::vector<double>& eps_list, int cells_per_eps,
                                     int workers) {
  require_config(eps_list.size() >= 2, "evolutionary_convergence: need at least two scales");
  const std::int64_t steps = std::llround(spec.T / spec.tau);
  require_config(steps >= 4 && steps % 4 == 0,
                 "evolutionary_convergence: T/tau must be a multiple of 4");
  const std::array<std::int64_t, 3> marks{steps / 4, steps / 2, steps};
  const std::array<const char*, 3> tag{"quarter", "half", "final"};

  StudyResult study;
  study.subcommand = "flow";

  Table table;
  table.name = "gap_vs_eps";
  table.columns = {"eps",
                   "err_u_quarter", "err_u_half", "err_u_final",
                   "err_e_quarter", "err_e_half", "err_e_final",
                   "seconds"};
  std::vector<std::array<double, 3>> err_u, err_e;

  for (double eps : eps_list) {
    const double t0 = now_seconds();
    const double m = 1.0 / eps;
    require_config(std::abs(m - std::round(m)) < 1e-9, "evolutionary_convergence: eps = 1/m");
    Int3 n{1, 1, 1};
    for (int a = 0; a < env->d; ++a)
      n[a] = static_cast<int>(cells_per_eps * std::llround(m));
    auto domain = make_domain(env->d, n);
    auto plan = std::make_shared<SamplePlan>(enumerate_or_sample(*env, env->orbit_size(), 0));
    const UnfoldPlan up = make_unfold_plan(domain, plan, eps);

    std::vector<std::vector<double>> eps_means;
    Trajectory te = flow_eps(up, spec, workers, [&](int, const RandomField& u) {
      eps_means.push_back(project_inv(u).data[0]);
    });
    std::vector<std::vector<double>> hom_states;
    Trajectory hom = flow_hom(domain, env, spec, 1, [&](int, const RandomField& u) {
      hom_states.push_back(u.data[0]);
    });
    require(eps_means.size() == hom_states.size(), "evolutionary_convergence: step mismatch");
    require(static_cast<std::int64_t>(te.steps.size()) == steps,
            "evolutionary_convergence: step count mismatch");

    auto energy_at = [](const Trajectory& tr, std::int64_t s) {
      return s == 0 ? tr.energy0 : tr.steps[static_cast<std::size_t>(s - 1)].energy;
    };
    std::array<double, 3> eu{}, ee{};
    RandomField diff = make_plain_field(domain, Stage::node, 1);
    for (int c = 0; c < 3; ++c) {
      const auto s = static_cast<std::size_t>(marks[c]);
      for (std::size_t i = 0; i < diff.data[0].size(); ++i)
        diff.data[0][i] = eps_means[s][i] - hom_states[s][i];
      eu[c] = norm_p(diff, 2.0);
      ee[c] = std::abs(energy_at(te, marks[c]) - energy_at(hom, marks[c]));
    }
    err_u.push_back(eu);
    err_e.push_back(ee);
    table.rows.push_back({eps, eu[0], eu[1], eu[2], ee[0], ee[1], ee[2],
                          now_seconds() - t0});
  }
  study.tables.push_back(table);

  for (std::size_t i = 0; i + 1 < err_u.size(); ++i)
    for (int c = 0; c < 3; ++c) {
      const std::string suffix = std::string(tag[c]) + "_" + std::to_string(i);
      study.assertions.push_back(
          assert_le("state_error_decreases_" + suffix, err_u[i + 1][c], 0.80 * err_u[i][c]));
      study.assertions.push_back(
          assert_le("energy_error_decreases_" + suffix, err_e[i + 1][c], 0.80 * err_e[i][c]));
    }
  return study;
}

StudyResult flow_study(std::shared_ptr<const EnvironmentSpec> env, const FlowSpec& spec,
                       double eps, int cells_per_eps, bool homogenized, int workers) {
  StudyResult study;
  study.subcommand = "flow";

  const double m = eps > 0 ? 1.0 / eps : 1.0;
  require_config(eps <= 0 || std::abs(m - std::round(m)) < 1e-9, "flow: eps must be 1/m");
  Int3 n{1, 1, 1};
  for (int a = 0; a < env->d; ++a)
    n[a] = static_cast<int>(cells_per_eps * std::llround(std::max(1.0, m)));
  auto domain = make_domain(env->d, n);

  const double t0 = now_seconds();
  Trajectory traj;
  if (homogenized) {
    traj = flow_hom(domain, env, spec, 1);
  } else {
    require_config(eps > 0, "flow: oscillating mode needs eps > 0");
    auto plan = std::make_shared<SamplePlan>(enumerate_or_sample(
        *env, env->kind == EnvKind::iid_lattice ? 8 : env->orbit_size(), 0));
    const UnfoldPlan up = make_unfold_plan(domain, plan, eps);
    traj = flow_eps(up, spec, workers);
  }
  const double elapsed = now_seconds() - t0;

  Table table;
  table.name = "energy_vs_time";
  table.columns = {"t", "energy", "dissipation", "seconds"};
  table.rows.push_back({0.0, traj.energy0, 0.0, 0.0});
  for (const StepRecord& s : traj.steps)
    table.rows.push_back({s.t, s.energy, s.dissipation, elapsed / traj.steps.size()});
  study.tables.push_back(table);

  // The per-step certificates already threw on violation; record the margin
  // of E(u+) + (1/tau) R(increment) <= E(u) across the whole run.
  double worst = -std::numeric_limits<double>::infinity();
  double prev = traj.energy0;
  for (const StepRecord& s : traj.steps) {
    worst = std::max(worst, (s.energy + s.dissipation) - prev);
    prev = s.energy;
  }
  study.scalars["energy_initial"] = traj.energy0;
  study.scalars["energy_final"] = traj.steps.back().energy;
  study.assertions.push_back(assert_le("dissipation_inequality_margin", worst, 1e-10));
  study.assertions.push_back(
      assert_le("energy_decay", traj.steps.back().energy, traj.energy0 + 1e-10));
  return study;
}

}  // namespace stochunfold
