#include "stochunfold/solvers.hpp"

#include <cmath>
#include <string>

namespace stochunfold {
namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  Kahan s;
  for (std::size_t i = 0; i < a.size(); ++i) s.add(a[i] * b[i]);
  return s.value();
}

}  // namespace

CgResult conjugate_gradient(
    const std::function<void(const std::vector<double>&, std::vector<double>&)>& apply,
    const std::vector<double>& b, std::vector<double>& x, double tol, int max_iter,
    const std::function<void(std::vector<double>&)>& project) {
  const std::size_t n = b.size();
  require(x.size() == n, "cg: size mismatch");
  std::vector<double> r(n), p(n), Ap(n);

  apply(x, Ap);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - Ap[i];
  if (project) project(r);
  p = r;

  double rr = dot(r, r);
  const double b_norm = std::sqrt(dot(b, b));
  const double stop = tol * (b_norm > 0 ? b_norm : 1.0);

  CgResult res;
  res.rel_residual = std::sqrt(rr) / (b_norm > 0 ? b_norm : 1.0);
  if (std::sqrt(rr) <= stop) {
    res.converged = true;
    return res;
  }
  for (int it = 0; it < max_iter; ++it) {
    apply(p, Ap);
    if (project) project(Ap);
    const double pAp = dot(p, Ap);
    require(pAp > 0, "cg: operator not positive definite (p'Ap = " + std::to_string(pAp) + ")");
    const double alpha = rr / pAp;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * Ap[i];
    }
    const double rr_new = dot(r, r);
    res.iterations = it + 1;
    res.rel_residual = std::sqrt(rr_new) / (b_norm > 0 ? b_norm : 1.0);
    if (std::sqrt(rr_new) <= stop) {
      res.converged = true;
      break;
    }
    const double beta = rr_new / rr;
    rr = rr_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
  }
  if (project) project(x);
  return res;
}

NewtonReport newton_minimize(const EnergyModel& model, std::vector<double>& u,
                             const NewtonOptions& opts) {
  const std::size_t n = static_cast<std::size_t>(model.dofs());
  require(u.size() == n, "newton: state size mismatch");
  const std::vector<std::uint8_t>& fixed = model.fixed_mask();
  require(fixed.size() == n, "newton: fixed mask size mismatch");

  auto mask = [&](std::vector<double>& v) {
    for (std::size_t i = 0; i < n; ++i)
      if (fixed[i]) v[i] = 0.0;
    model.project(v);
  };

  std::vector<double> g(n), step(n), trial(n);
  NewtonReport rep;
  model.project(u);

  for (int it = 0; it < opts.max_iterations; ++it) {
    model.gradient(u, g);
    mask(g);
    rep.grad_norm = std::sqrt(dot(g, g));
    rep.iterations = it;
    if (rep.grad_norm <= opts.tol) {
      rep.converged = true;
      return rep;
    }

    auto hess = [&](const std::vector<double>& v, std::vector<double>& Hv) {
      model.hessian_apply(u, v, Hv);
      for (std::size_t i = 0; i < n; ++i)
        if (fixed[i]) Hv[i] = 0.0;
    };
    std::fill(step.begin(), step.end(), 0.0);
    std::vector<double> rhs(n);
    for (std::size_t i = 0; i < n; ++i) rhs[i] = -g[i];
    auto proj = [&](std::vector<double>& v) { mask(v); };
    CgResult cg = conjugate_gradient(hess, rhs, step, opts.cg_tol, opts.cg_max_iter, proj);
    require(cg.converged, "newton: inner cg stalled at rel residual " +
                              std::to_string(cg.rel_residual));

    // Armijo backtracking on the energy; the step is a descent direction since
    // the Hessian apply is positive definite on the free subspace.
    const double e0 = model.energy(u);
    const double slope = dot(g, step);
    require(slope < 0, "newton: non-descent direction");
    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h <= opts.max_halvings; ++h) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = u[i] + t * step[i];
      model.project(trial);
      const double e1 = model.energy(trial);
      if (e1 <= e0 + opts.armijo * t * slope) {
        u = trial;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted)
      throw Error("newton: line search failed after " + std::to_string(opts.max_halvings) +
                  " step halvings");
  }
  model.gradient(u, g);
  mask(g);
  rep.grad_norm = std::sqrt(dot(g, g));
  if (rep.grad_norm <= opts.tol) {
    rep.converged = true;
    return rep;
  }
  throw Error("newton: no convergence after " + std::to_string(opts.max_iterations) +
              " iterations (|g| = " + std::to_string(rep.grad_norm) + ")");
}

}  // namespace stochunfold
