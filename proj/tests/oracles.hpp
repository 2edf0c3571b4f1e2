// Independent reference values for the test suites. Everything here is
// computed from closed forms or brute-force enumeration, never by calling the
// code under test.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

namespace oracles {

// Two-phase layered medium in the gradient direction: harmonic mean.
inline double harmonic_mean(double a1, double a2) { return 2.0 * a1 * a2 / (a1 + a2); }

// Two-phase checkerboard conductivity: geometric mean (duality).
inline double checkerboard(double a1, double a2) { return std::sqrt(a1 * a2); }

// Bisection root of a continuous function with a sign change on [lo, hi].
inline double bisect(const std::function<double(double)>& g, double lo, double hi) {
  double flo = g(lo), fhi = g(hi);
  if (flo == 0) return lo;
  if (fhi == 0) return hi;
  if (flo * fhi > 0) throw std::runtime_error("bisect: no sign change");
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = g(mid);
    if (fm == 0) return mid;
    if (flo * fm < 0) {
      hi = mid;
      fhi = fm;
    } else {
      lo = mid;
      flo = fm;
    }
  }
  return 0.5 * (lo + hi);
}

// Homogenized p-power integrand of a 1d half/half two-phase layout: the
// corrector gradient takes one value c per phase, fixed by flux continuity
//   a1 |F+c|^{p-2} (F+c) = a2 |F-c|^{p-2} (F-c),
// and the value is the two-cell average of (a/p) |F + D phi|^p.
inline double power_two_cell(double a1, double a2, double p, double F) {
  auto flux = [&](double x) { return std::pow(std::abs(x), p - 2.0) * x; };
  auto g = [&](double c) { return a1 * flux(F + c) - a2 * flux(F - c); };
  const double span = std::abs(F) + 1.0;
  const double c = bisect(g, -span, span);
  return 0.5 * ((a1 / p) * std::pow(std::abs(F + c), p) +
                (a2 / p) * std::pow(std::abs(F - c), p));
}

// min over u in H^1_0(0,1) of int 1/2 A |u'|^2 - l u for constant load l:
// u = l (x - x^2) / (2A), value -l^2 / (24 A).
inline double dirichlet_min_energy(double A, double l) { return -l * l / (24.0 * A); }
inline double dirichlet_minimizer(double A, double l, double x) {
  return l * (x - x * x) / (2.0 * A);
}

// Same for linear load l(x) = x: u = (x - x^3) / (6A), value -1 / (90 A).
inline double dirichlet_min_energy_linear_load(double A) { return -1.0 / (90.0 * A); }
inline double dirichlet_minimizer_linear_load(double A, double x) {
  return (x - x * x * x) / (6.0 * A);
}

// Lowest Dirichlet eigenvalue of the forward-difference Laplacian on (0,1)
// with n cells: the mode sin(pi x) decays at rate mu_h under du/dt = 2 Lap u.
inline double fd_sine_rate(int n) {
  const double h = 1.0 / n;
  const double s = std::sin(0.5 * M_PI * h);
  return 8.0 * s * s / (h * h);
}

// Implicit Euler contraction factor for a linear mode of rate mu after
// `steps` steps of size tau: exact closed form for the time-discrete flow.
inline double implicit_euler_factor(double mu, double tau, int steps) {
  return std::pow(1.0 + tau * mu, -static_cast<double>(steps));
}

// Trapezoid quadrature of f over [0,1] with n panels.
inline double trapezoid(const std::function<double(double)>& f, int n) {
  double acc = 0.5 * (f(0.0) + f(1.0));
  for (int i = 1; i < n; ++i) acc += f(static_cast<double>(i) / n);
  return acc / n;
}

// Window-average weights of the coefficient lattice cells covering [-R, R]:
// cell z covers [z*eps, (z+1)*eps); weight = overlap length / (2R). Used to
// compute exact standard errors of windowed averages of iid draws.
struct WindowCell {
  std::int64_t z;
  double weight;
};
inline std::vector<WindowCell> window_cells_1d(double R, double eps) {
  std::vector<WindowCell> cells;
  const auto lo = static_cast<std::int64_t>(std::floor(-R / eps));
  const auto hi = static_cast<std::int64_t>(std::ceil(R / eps));
  for (std::int64_t z = lo; z < hi; ++z) {
    const double a = std::max(-R, z * eps);
    const double b = std::min(R, (z + 1) * eps);
    if (b > a) cells.push_back({z, (b - a) / (2.0 * R)});
  }
  return cells;
}

// Richardson extrapolation reference for second-order data.
inline double richardson(double coarse, double fine) { return (4.0 * fine - coarse) / 3.0; }

}  // namespace oracles
