// Minimizing-movement flows for E(u) = < int grad u . A grad u + f(u) > with
// dissipation R(v) = 1/2 < int r v^2 >. E is Lambda-convex along the
// dissipation metric with Lambda = lambda_min / r_min, and the scheme demands
// tau < 1 / (2 |Lambda|), so every incremental problem stays convex.
#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "stochunfold/grid.hpp"
#include "stochunfold/study.hpp"
#include "stochunfold/unfold.hpp"

namespace stochunfold {

// min over phases of -scale * well^2 over r_min, certified against a sampled
// y-grid of f'' values before use.
double lambda_bound(const EnvironmentSpec& env);

void validate_tau(double tau, double lambda);

struct InitialCondition {
  enum class Kind { sine, constant };
  Kind kind = Kind::sine;
  double amplitude = 1.0;
};

struct FlowSpec {
  double tau = 1e-3;
  double T = 1e-2;
  InitialCondition init;
  bool dirichlet = true;
};

struct StepRecord {
  double t = 0.0;
  double energy = 0.0;       // weighted mean of E after the step
  double dissipation = 0.0;  // weighted mean of (1/tau) R(increment)
  bool substepped = false;   // tau/2 fallback used at this step
};

struct Trajectory {
  double energy0 = 0.0;
  std::vector<StepRecord> steps;
  RandomField u;  // final state
};

using StepCallback = std::function<void(int step, const RandomField& u)>;

// One minimizing-movement chain per realization; each step certifies
// E(u+) + (1/tau) R(u+ - u) <= E(u) + 1e-10. A failed incremental solve is
// retried once as two tau/2 substeps, then aborts.
Trajectory flow_eps(const UnfoldPlan& up, const FlowSpec& spec, int workers,
                    const StepCallback& cb = nullptr);

// Corrected matrix plus law-averaged reaction and dissipation coefficients.
Trajectory flow_hom(std::shared_ptr<const Domain> domain,
                    std::shared_ptr<const EnvironmentSpec> env, const FlowSpec& spec,
                    int refine_k = 1, const StepCallback& cb = nullptr);

// State and energy errors against the homogenized flow at T/4, T/2, T, per
// scale; both flows run on the scale's grid so the gap isolates the
// coefficient oscillation.
StudyResult evolutionary_convergence(std::shared_ptr<const EnvironmentSpec> env,
                                     const FlowSpec& spec,
                                     const std::vector<double>& eps_list, int cells_per_eps,
                                     int workers);

// Single flow run: energy_vs_time table plus dissipation-inequality
// assertions.
StudyResult flow_study(std::shared_ptr<const EnvironmentSpec> env, const FlowSpec& spec,
                       double eps, int cells_per_eps, bool homogenized, int workers);

}  // namespace stochunfold
