// The unfolding operator and its exact discrete calculus. On exhaustive orbit
// plans unfolding is a per-site permutation of realizations, so isometry,
// adjointness, and composition identities hold to rounding error and are
// asserted as such in the tests.
#pragma once

#include <memory>
#include <vector>

#include "stochunfold/env.hpp"
#include "stochunfold/grid.hpp"

namespace stochunfold {

// Geometry binding a grid to the coefficient lattice of scale eps: eps = 1/m
// and every coefficient cell contains a whole number of grid cells per axis.
struct UnfoldPlan {
  std::shared_ptr<const Domain> domain;
  std::shared_ptr<const SamplePlan> plan;
  double eps = 1.0;
  Int3 q{1, 1, 1};  // grid cells per coefficient cell, per axis

  const EnvironmentSpec& env() const { return *plan->env; }
};

UnfoldPlan make_unfold_plan(std::shared_ptr<const Domain> domain,
                            std::shared_ptr<const SamplePlan> plan, double eps);

// floor(x / eps) for the cell with index `cell`, exact in integer arithmetic.
Idx3 lattice_cell(const UnfoldPlan& up, const Idx3& cell);

// (T u)(omega, x) = u(tau_{-z(x)} omega, x): per-site permutation pulling the
// coefficient field back to a fixed random variable. Requires a cell-stage
// field over an exhaustive orbit plan; Monte Carlo plans must pair through
// two_scale_residual instead.
RandomField unfold(const UnfoldPlan& up, const RandomField& u);

// Adjoint of unfold w.r.t. the weighted inner product; also its inverse.
RandomField fold_adjoint(const UnfoldPlan& up, const RandomField& v);

// Expectation over realizations, per site: returns a one-realization field.
RandomField project_inv(const RandomField& v);

// Test battery entry: chi = indicator of `phase` at lattice cell 0, eta =
// prod_a x_a^{degree_a}. The pairing <T u, chi (x) eta> is evaluated in the
// shift-equivariant form E[sum_x w_x u(omega,x) chi(tau_{z(x)} omega) eta(x)],
// which never materializes the unfolded field and works on sampled plans.
struct BatteryEntry {
  int phase = 0;
  Idx3 degree{0, 0, 0};
};

// All phases crossed with tensor monomials of per-axis degree <= 2.
std::vector<BatteryEntry> default_battery(const EnvironmentSpec& env, int d);

struct TwoScaleReport {
  std::vector<BatteryEntry> battery;
  std::vector<double> paired;    // <T u_eps, chi (x) eta>
  std::vector<double> limit;     // E[chi] int u0 eta
  std::vector<double> residual;  // paired - limit
  double max_abs_residual = 0.0;
};

// Residuals of weak two-scale convergence of u_eps toward the deterministic
// limit u0 (one realization, same domain). Node fields are cell-averaged.
TwoScaleReport two_scale_residual(const SamplePlan& plan, double eps,
                                  const RandomField& u_eps, const RandomField& u0,
                                  const std::vector<BatteryEntry>& battery);

// Corrector potentials on the coefficient lattice (unit spacing, mean zero):
// phi[dir][site] for the base realization; offsets index by translation.
struct CorrectorPattern {
  int d = 1;
  Int3 L{1, 1, 1};
  std::vector<std::vector<double>> phi;
};

// Two-scale ansatz u + eps * sum_i Phi_i * (D_i u) * ramp, where Phi_i
// interpolates the corrector multilinearly between coefficient-lattice
// corners and the ramp vanishes on the boundary over a collar of width
// kappa*eps, keeping the recovered fields admissible for Dirichlet data.
RandomField recovery_sequence(const UnfoldPlan& up, const CorrectorPattern& pattern,
                              const RandomField& u_hom, double kappa = 2.0);

}  // namespace stochunfold
