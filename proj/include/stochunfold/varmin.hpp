// Convex minimization at the oscillating scale and for the homogenized
// integrand: zero Dirichlet data, nodal trial space, cell-center gradient
// quadrature, trapezoidal load quadrature.
#pragma once

#include <array>
#include <memory>
#include <vector>

#include "stochunfold/grid.hpp"
#include "stochunfold/integrand.hpp"
#include "stochunfold/study.hpp"
#include "stochunfold/unfold.hpp"

namespace stochunfold {

// Affine volume load l(x) = constant + linear . x, entering as -int l u.
struct LoadSpec {
  double constant = 1.0;
  Vec3 linear{0.0, 0.0, 0.0};
  double operator()(const Vec3& x, int d) const {
    double v = constant;
    for (int a = 0; a < d; ++a) v += linear[a] * x[a];
    return v;
  }
};

// Sampled one-dimensional homogenized integrand with a convexity-preserving
// C^1 reconstruction: chord slopes live at interval midpoints and the
// derivative interpolates them linearly. Non-convex samples are rejected.
struct VHomTable {
  std::vector<double> F;
  std::vector<double> V;

  void validate() const;
  double value(double f) const;
  double deriv(double f) const;
  double second(double f) const;
};

// Homogenized integrand: either 1/2 xi'A xi (half follows the eps-level
// convention) or a 1D table.
struct HomIntegrand {
  bool use_table = false;
  bool half = true;
  std::array<double, 9> A{};
  VHomTable table;
};

struct MinimizeResult {
  RandomField u;
  double energy = 0.0;              // weighted mean over realizations
  std::vector<double> energies;     // per realization
};

// Realizations decouple, so the eps-scale problem is one Dirichlet solve per
// realization; energies are averaged with the plan weights in plan order.
MinimizeResult minimize_eps(const UnfoldPlan& up, const VSpec& vspec, const LoadSpec& load,
                            int workers = 1);

MinimizeResult minimize_hom(std::shared_ptr<const Domain> domain, const HomIntegrand& vhom,
                            const LoadSpec& load);

// Plan-weighted energy of an arbitrary admissible field at scale eps; lets
// recovery candidates be scored against the true minimum.
double eps_energy(const UnfoldPlan& up, const VSpec& vspec, const LoadSpec& load,
                  const RandomField& u, int workers = 1);

// Builds the homogenized integrand for `vspec`: quadratic integrands take the
// corrected cell matrix, others a table of representative-volume values on a
// uniform gradient grid (d == 1 only).
HomIntegrand make_hom_integrand(std::shared_ptr<const EnvironmentSpec> env, const VSpec& vspec,
                                int refine_k, double table_fmax = 3.0, int table_points = 33);

// Energy sweep over scales: per eps, grid n = cells_per_eps / eps, both
// problems solved on the same grid, gap / L2 / two-scale residual recorded.
StudyResult convergence_study(std::shared_ptr<const EnvironmentSpec> env, const VSpec& vspec,
                              const LoadSpec& load, const std::vector<double>& eps_list,
                              int cells_per_eps, int workers);

// Monte Carlo seeds at a fixed scale: per-seed energies against the
// homogenized value, with spread diagnostics.
StudyResult quenched_study(std::shared_ptr<const EnvironmentSpec> env, const VSpec& vspec,
                           const LoadSpec& load, double eps, int cells_per_eps, int num_seeds,
                           std::uint64_t seed, int workers);

}  // namespace stochunfold
