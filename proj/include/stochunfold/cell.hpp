// Periodic cell problems on a refined coefficient lattice: correctors,
// homogenized matrices with order bounds, representative-volume values of the
// homogenized integrand, and discrete Korn constants.
#pragma once

#include <array>
#include <memory>
#include <vector>

#include "stochunfold/env.hpp"
#include "stochunfold/integrand.hpp"
#include "stochunfold/unfold.hpp"

namespace stochunfold {

// Scalar function on a periodic refined lattice; forward differences over
// `spacing` define its gradient.
struct TorusFunction {
  int d = 1;
  Int3 N{1, 1, 1};
  double spacing = 1.0;
  std::vector<double> values;
};

// Piecewise-constant phase layout: each unit coefficient cell split into k^d
// refined cells of edge 1/k.
struct RefinedConfig {
  int d = 1;
  Int3 N{1, 1, 1};
  double spacing = 1.0;
  std::vector<int> phase;
  std::shared_ptr<const EnvironmentSpec> env;

  std::int64_t sites() const { return cells_of(N); }
  const PhaseTable& phase_at(std::int64_t site) const { return env->phases[phase[site]]; }

  static RefinedConfig from_torus(std::shared_ptr<const EnvironmentSpec> env, int k);
  // Periodized window of an iid realization: cells [0, W)^d, refined by k.
  static RefinedConfig from_seed(std::shared_ptr<const EnvironmentSpec> env, int k,
                                 Int3 window, const Realization& r);
};

// Mean-zero minimizer of mean_z V(phase(z), F + D phi) over periodic phi.
// Rejects integrands that fail a midpoint convexity probe. Singular Hessians
// of p > 2 powers are handled by a fixed Levenberg shift.
TorusFunction corrector_convex(const RefinedConfig& config, const Vec3& F, const VSpec& spec,
                               double tol = 1e-10);
TorusFunction corrector_quadratic(const RefinedConfig& config, int dir, double tol = 1e-10);

Vec3 torus_gradient_at(const TorusFunction& phi, const Idx3& z);

struct CellSolution {
  std::array<double, 9> A_hom{};  // 3x3 row-major, d x d block meaningful
  std::vector<TorusFunction> correctors;
};

// Homogenized matrix from the d quadratic correctors. Asserts symmetry to
// 1e-10 and the arithmetic/harmonic mean bounds in matrix order.
CellSolution solve_cell_quadratic(const RefinedConfig& config);

// Homogenized integrand value V_hom(F) = mean_z V(F + D phi*) at the minimizer.
double rve_vhom(const RefinedConfig& config, const Vec3& F, const VSpec& spec);

// Unit-spacing correctors of the base realization, one per direction; feeds
// recovery_sequence. Shift-torus environments only.
CorrectorPattern corrector_pattern(std::shared_ptr<const EnvironmentSpec> env);

// Largest ratio ||D u||^2 / ||sym D u||^2 over mean-zero periodic vector
// fields: exact per-mode Fourier reduction, and a matrix-free power iteration
// on the same pencil for cross-validation.
double korn_fourier_bound(int d, Int3 N, double spacing);
double korn_ratio(int d, Int3 N, double spacing, int max_iter = 400);

// Ratios ||D u||^2 / ||sym D u||^2 for `count` hash-seeded random fields;
// every entry must sit below the Fourier bound.
std::vector<double> korn_random_ratios(int d, Int3 N, double spacing, int count,
                                       std::uint64_t seed);

// Second-order Richardson extrapolation from values at k and 2k.
inline double richardson2(double coarse, double fine) { return (4.0 * fine - coarse) / 3.0; }

}  // namespace stochunfold
