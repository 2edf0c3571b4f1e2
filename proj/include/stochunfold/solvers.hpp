// Matrix-free CG and a damped Newton driver over an abstract energy model.
// The model owns constraints: Dirichlet dofs via fixed_mask, affine constraints
// (mean-zero potentials) via project.
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "stochunfold/common.hpp"

namespace stochunfold {

struct CgResult {
  int iterations = 0;
  double rel_residual = 0.0;
  bool converged = false;
};

// Solves A x = b for SPD apply; x holds the initial guess. `project` is applied
// to b, to residuals, and to the solution to keep iterates in the constraint
// subspace (pass nullptr when unconstrained).
CgResult conjugate_gradient(
    const std::function<void(const std::vector<double>&, std::vector<double>&)>& apply,
    const std::vector<double>& b, std::vector<double>& x, double tol, int max_iter,
    const std::function<void(std::vector<double>&)>& project = nullptr);

struct EnergyModel {
  virtual ~EnergyModel() = default;
  virtual std::int64_t dofs() const = 0;
  virtual double energy(const std::vector<double>& u) const = 0;
  virtual void gradient(const std::vector<double>& u, std::vector<double>& g) const = 0;
  // Hv at the current state u; must be SPD on the admissible subspace.
  virtual void hessian_apply(const std::vector<double>& u, const std::vector<double>& v,
                             std::vector<double>& Hv) const = 0;
  // 1 for pinned dofs (gradient and directions forced to zero there).
  virtual const std::vector<std::uint8_t>& fixed_mask() const = 0;
  // Constraint projection (default none).
  virtual void project(std::vector<double>&) const {}
};

struct NewtonOptions {
  double tol = 1e-10;      // first-order optimality, l2 norm of the free gradient
  int max_iterations = 100;
  int max_halvings = 60;
  double armijo = 1e-4;
  double cg_tol = 1e-8;    // relative, per Newton step
  int cg_max_iter = 20000;
};

struct NewtonReport {
  int iterations = 0;
  double grad_norm = 0.0;
  bool converged = false;
};

// Minimizes a convex model. Throws on line-search failure (max_halvings) and
// on hitting max_iterations, so callers never see silent non-convergence.
NewtonReport newton_minimize(const EnergyModel& model, std::vector<double>& u,
                             const NewtonOptions& opts = {});

}  // namespace stochunfold
