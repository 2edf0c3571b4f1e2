#include "stochunfold/cell.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <string>

#include "stochunfold/rng.hpp"
#include "stochunfold/solvers.hpp"

namespace stochunfold {
namespace {

Idx3 step(const Idx3& z, int axis, int delta, const Int3& N) {
  Idx3 y = z;
  y[axis] = wrap(y[axis] + delta, N[axis]);
  return y;
}

// Mean over refined sites of V(phase, F + D phi), with flux-style gradient
// and Hessian applies; the admissible set is mean-zero periodic potentials.
struct TorusCellModel final : EnergyModel {
  const RefinedConfig& config;
  Vec3 F;
  VSpec spec;
  double levenberg;
  std::vector<std::uint8_t> free_mask;

  TorusCellModel(const RefinedConfig& c, const Vec3& F_, const VSpec& s)
      : config(c), F(F_), spec(s), levenberg(s.is_quadratic() ? 0.0 : 1e-10),
        free_mask(static_cast<std::size_t>(c.sites()), 0) {}

  std::int64_t dofs() const override { return config.sites(); }
  const std::vector<std::uint8_t>& fixed_mask() const override { return free_mask; }

  void project(std::vector<double>& v) const override {
    Kahan s;
    for (double x : v) s.add(x);
    const double mean = s.value() / static_cast<double>(v.size());
    for (double& x : v) x -= mean;
  }

  void local_gradient(const std::vector<double>& phi, std::int64_t site, const Idx3& z,
                      double* g) const {
    for (int a = 0; a < config.d; ++a)
      g[a] = F[a] + (phi[linear_index(step(z, a, +1, config.N), config.N)] - phi[site]) /
                        config.spacing;
  }

  double energy(const std::vector<double>& phi) const override {
    Kahan e;
    double g[3];
    for_sites(config.N, [&](const Idx3& z, std::int64_t site) {
      local_gradient(phi, site, z, g);
      e.add(v_value(spec, config.phase_at(site), g, config.d));
    });
    return e.value() / static_cast<double>(config.sites());
  }

  void gradient(const std::vector<double>& phi, std::vector<double>& out) const override {
    const double scale = 1.0 / (static_cast<double>(config.sites()) * config.spacing);
    std::vector<double> flux(phi.size() * config.d);
    double g[3], dv[3];
    for_sites(config.N, [&](const Idx3& z, std::int64_t site) {
      local_gradient(phi, site, z, g);
      v_deriv(spec, config.phase_at(site), g, config.d, dv);
      for (int a = 0; a < config.d; ++a) flux[site * config.d + a] = dv[a];
    });
    for_sites(config.N, [&](const Idx3& z, std::int64_t site) {
      double acc = 0;
      for (int a = 0; a < config.d; ++a) {
        const std::int64_t prev = linear_index(step(z, a, -1, config.N), config.N);
        acc += flux[prev * config.d + a] - flux[site * config.d + a];
      }
      out[site] = scale * acc;
    });
  }

  void hessian_apply(const std::vector<double>& phi, const std::vector<double>& v,
                     std::vector<double>& out) const override {
    const double scale = 1.0 / (static_cast<double>(config.sites()) * config.spacing);
    std::vector<double> flux(phi.size() * config.d, 0.0);
    double g[3], dvdir[3], hv[3];
    for_sites(config.N, [&](const Idx3& z, std::int64_t site) {
      local_gradient(phi, site, z, g);
      for (int a = 0; a < config.d; ++a)
        dvdir[a] = (v[linear_index(step(z, a, +1, config.N), config.N)] - v[site]) /
                   config.spacing;
      for (int a = 0; a < config.d; ++a) hv[a] = 0;
      v_hess_apply(spec, config.phase_at(site), g, dvdir, config.d, hv);
      for (int a = 0; a < config.d; ++a) flux[site * config.d + a] = hv[a];
    });
    for_sites(config.N, [&](const Idx3& z, std::int64_t site) {
      double acc = 0;
      for (int a = 0; a < config.d; ++a) {
        const std::int64_t prev = linear_index(step(z, a, -1, config.N), config.N);
        acc += flux[prev * config.d + a] - flux[site * config.d + a];
      }
      out[site] = scale * acc + levenberg * v[site];
    });
  }
};

void probe_midpoint_convexity(const RefinedConfig& config, const VSpec& spec) {
  HashStream stream(0x5eed0c0417ull);
  std::vector<bool> seen(config.env->num_phases(), false);
  for (std::int64_t s = 0; s < config.sites(); ++s) seen[config.phase[s]] = true;
  for (int p = 0; p < config.env->num_phases(); ++p) {
    if (!seen[p]) continue;
    const PhaseTable& ph = config.env->phases[p];
    for (int probe = 0; probe < 64; ++probe) {
      double xi[3] = {0, 0, 0}, zeta[3] = {0, 0, 0}, mid[3] = {0, 0, 0};
      for (int a = 0; a < config.d; ++a) {
        xi[a] = 3.0 * stream.next_symmetric();
        zeta[a] = 3.0 * stream.next_symmetric();
        mid[a] = 0.5 * (xi[a] + zeta[a]);
      }
      const double lhs = v_value(spec, ph, mid, config.d);
      const double rhs = 0.5 * (v_value(spec, ph, xi, config.d) +
                                v_value(spec, ph, zeta, config.d));
      require(lhs <= rhs + 1e-12 * (1.0 + std::abs(rhs)),
              "cell: integrand failed a midpoint convexity probe on phase " +
                  std::to_string(p));
    }
  }
}

Eigen::MatrixXd phase_matrix(const PhaseTable& ph, int d) {
  Eigen::MatrixXd A(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) A(i, j) = ph.A[3 * i + j];
  return A;
}

}  // namespace

RefinedConfig RefinedConfig::from_torus(std::shared_ptr<const EnvironmentSpec> env, int k) {
  require(env != nullptr, "cell: null environment");
  require(env->kind != EnvKind::iid_lattice,
          "cell: iid environments need a periodized window, use from_seed");
  require_config(k >= 1, "cell: refinement k must be >= 1");
  RefinedConfig c;
  c.d = env->d;
  c.spacing = 1.0 / k;
  c.env = env;
  for (int a = 0; a < 3; ++a) c.N[a] = a < env->d ? k * env->L[a] : 1;
  c.phase.resize(static_cast<std::size_t>(c.sites()));
  for_sites(c.N, [&](const Idx3& z, std::int64_t site) {
    Idx3 coarse{0, 0, 0};
    for (int a = 0; a < env->d; ++a) coarse[a] = z[a] / k;
    c.phase[site] = env->kind == EnvKind::deterministic
                        ? 0
                        : env->config[linear_index(coarse, env->L)];
  });
  return c;
}

RefinedConfig RefinedConfig::from_seed(std::shared_ptr<const EnvironmentSpec> env, int k,
                                       Int3 window, const Realization& r) {
  require(env != nullptr, "cell: null environment");
  require(env->kind == EnvKind::iid_lattice, "cell: from_seed expects an iid environment");
  require_config(k >= 1, "cell: refinement k must be >= 1");
  RefinedConfig c;
  c.d = env->d;
  c.spacing = 1.0 / k;
  c.env = env;
  for (int a = 0; a < 3; ++a) {
    if (a < env->d) {
      require_config(window[a] >= 1, "cell: window must be >= 1 per axis");
      c.N[a] = k * window[a];
    } else {
      c.N[a] = 1;
    }
  }
  c.phase.resize(static_cast<std::size_t>(c.sites()));
  for_sites(c.N, [&](const Idx3& z, std::int64_t site) {
    Idx3 coarse{0, 0, 0};
    for (int a = 0; a < env->d; ++a) coarse[a] = z[a] / k;
    c.phase[site] = eval_env(r, coarse);
  });
  return c;
}

TorusFunction corrector_convex(const RefinedConfig& config, const Vec3& F, const VSpec& spec,
                               double tol) {
  spec.validate();
  probe_midpoint_convexity(config, spec);
  TorusCellModel model(config, F, spec);
  std::vector<double> phi(static_cast<std::size_t>(config.sites()), 0.0);
  NewtonOptions opts;
  opts.tol = tol;
  opts.cg_tol = 1e-12;
  opts.cg_max_iter = 200000;
  newton_minimize(model, phi, opts);
  TorusFunction out;
  out.d = config.d;
  out.N = config.N;
  out.spacing = config.spacing;
  out.values = std::move(phi);
  return out;
}

TorusFunction corrector_quadratic(const RefinedConfig& config, int dir, double tol) {
  require(dir >= 0 && dir < config.d, "cell: corrector direction out of range");
  Vec3 F{0, 0, 0};
  F[dir] = 1.0;
  return corrector_convex(config, F, VSpec::quadratic(false), tol);
}

Vec3 torus_gradient_at(const TorusFunction& phi, const Idx3& z) {
  Vec3 g{0, 0, 0};
  const std::int64_t site = linear_index(z, phi.N);
  for (int a = 0; a < phi.d; ++a)
    g[a] = (phi.values[linear_index(step(z, a, +1, phi.N), phi.N)] - phi.values[site]) /
           phi.spacing;
  return g;
}

CellSolution solve_cell_quadratic(const RefinedConfig& config) {
  const int d = config.d;
  CellSolution sol;
  for (int dir = 0; dir < d; ++dir) sol.correctors.push_back(corrector_quadratic(config, dir));

  // Corrected gradients e_i + D phi_i per site feed all d^2 entries.
  const std::int64_t n = config.sites();
  std::vector<double> grads(static_cast<std::size_t>(n) * d * d);
  for (int i = 0; i < d; ++i) {
    for_sites(config.N, [&](const Idx3& z, std::int64_t site) {
      const Vec3 g = torus_gradient_at(sol.correctors[i], z);
      for (int a = 0; a < d; ++a)
        grads[(site * d + i) * d + a] = (a == i ? 1.0 : 0.0) + g[a];
    });
  }
  Eigen::MatrixXd Ahom = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      Kahan acc;
      for (std::int64_t site = 0; site < n; ++site) {
        const PhaseTable& ph = config.phase_at(site);
        double s = 0;
        for (int a = 0; a < d; ++a)
          for (int b = 0; b < d; ++b)
            s += grads[(site * d + i) * d + a] * ph.A[3 * a + b] *
                 grads[(site * d + j) * d + b];
        acc.add(s);
      }
      Ahom(i, j) = acc.value() / static_cast<double>(n);
    }

  const double scale = std::max(1.0, Ahom.cwiseAbs().maxCoeff());
  require((Ahom - Ahom.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale,
          "cell: homogenized matrix lost symmetry");
  Ahom = 0.5 * (Ahom + Ahom.transpose()).eval();

  // Order bounds: harmonic mean <= A_hom <= arithmetic mean, as matrices.
  Eigen::MatrixXd arith = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd harm_inv = Eigen::MatrixXd::Zero(d, d);
  for (std::int64_t site = 0; site < n; ++site) {
    const Eigen::MatrixXd A = phase_matrix(config.phase_at(site), d);
    arith += A;
    harm_inv += A.inverse();
  }
  arith /= static_cast<double>(n);
  harm_inv /= static_cast<double>(n);
  const Eigen::MatrixXd harm = harm_inv.inverse();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> upper(
      0.5 * ((arith - Ahom) + (arith - Ahom).transpose()));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> lower(
      0.5 * ((Ahom - harm) + (Ahom - harm).transpose()));
  require(upper.eigenvalues().minCoeff() >= -1e-10 * scale,
          "cell: homogenized matrix exceeds the arithmetic mean bound");
  require(lower.eigenvalues().minCoeff() >= -1e-10 * scale,
          "cell: homogenized matrix undercuts the harmonic mean bound");

  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) sol.A_hom[3 * i + j] = Ahom(i, j);
  for (int a = d; a < 3; ++a) sol.A_hom[3 * a + a] = 1.0;
  return sol;
}

double rve_vhom(const RefinedConfig& config, const Vec3& F, const VSpec& spec) {
  const TorusFunction phi = corrector_convex(config, F, spec);
  Kahan e;
  double g[3];
  for_sites(config.N, [&](const Idx3& z, std::int64_t site) {
    const Vec3 dg = torus_gradient_at(phi, z);
    for (int a = 0; a < config.d; ++a) g[a] = F[a] + dg[a];
    e.add(v_value(spec, config.phase_at(site), g, config.d));
  });
  return e.value() / static_cast<double>(config.sites());
}

CorrectorPattern corrector_pattern(std::shared_ptr<const EnvironmentSpec> env) {
  require(env != nullptr, "cell: null environment");
  require(env->kind != EnvKind::iid_lattice,
          "cell: corrector patterns require an enumerable orbit");
  const RefinedConfig config = RefinedConfig::from_torus(env, 1);
  CorrectorPattern pat;
  pat.d = env->d;
  pat.L = env->L;
  for (int dir = 0; dir < env->d; ++dir)
    pat.phi.push_back(corrector_quadratic(config, dir).values);
  return pat;
}

double korn_fourier_bound(int d, Int3 N, double spacing) {
  if (d == 1) return 1.0;
  require(d == 2 || d == 3, "korn: dimension must be 1, 2, or 3");
  const std::int64_t modes = cells_of(N);
  double best = 0.0;
  for (std::int64_t mi = 1; mi < modes; ++mi) {
    const Idx3 n = unravel(mi, N);
    std::complex<double> mu[3];
    double mu2 = 0.0;
    for (int a = 0; a < d; ++a) {
      const double theta = 2.0 * M_PI * static_cast<double>(n[a]) / N[a];
      mu[a] = (std::polar(1.0, theta) - 1.0) / spacing;
      mu2 += std::norm(mu[a]);
    }
    Eigen::VectorXd w1(2 * d), w2(2 * d);
    for (int a = 0; a < d; ++a) {
      w1(a) = mu[a].real();
      w1(d + a) = mu[a].imag();
      w2(a) = -mu[a].imag();
      w2(d + a) = mu[a].real();
    }
    const Eigen::MatrixXd S =
        0.5 * (mu2 * Eigen::MatrixXd::Identity(2 * d, 2 * d) + w1 * w1.transpose() +
               w2 * w2.transpose());
    const Eigen::MatrixXd G = mu2 * Eigen::MatrixXd::Identity(2 * d, 2 * d);
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(G, S);
    best = std::max(best, es.eigenvalues().maxCoeff());
  }
  return best;
}

double korn_ratio(int d, Int3 N, double spacing, int max_iter) {
  if (d == 1) return 1.0;
  require(d == 2 || d == 3, "korn: dimension must be 1, 2, or 3");
  const std::int64_t sites = cells_of(N);
  const std::int64_t dof = sites * d;

  auto mean_zero = [&](std::vector<double>& v) {
    for (int c = 0; c < d; ++c) {
      Kahan s;
      for (std::int64_t i = 0; i < sites; ++i) s.add(v[i * d + c]);
      const double mean = s.value() / static_cast<double>(sites);
      for (std::int64_t i = 0; i < sites; ++i) v[i * d + c] -= mean;
    }
  };

  // Forward-difference gradient tensor per site: Du[a][b] = D_a u_b.
  auto grad_at = [&](const std::vector<double>& u, const Idx3& z, std::int64_t site,
                     double* Du) {
    for (int a = 0; a < d; ++a) {
      const std::int64_t nb = linear_index(step(z, a, +1, N), N);
      for (int b = 0; b < d; ++b)
        Du[a * d + b] = (u[nb * d + b] - u[site * d + b]) / spacing;
    }
  };

  // Divergence-style adjoint shared by both quadratic forms: given per-site
  // flux T[a][b], out_b = sum_a (T[a][b](z - e_a) - T[a][b](z)) / spacing.
  auto assemble = [&](const std::vector<double>& flux, std::vector<double>& out) {
    for_sites(N, [&](const Idx3& z, std::int64_t site) {
      for (int b = 0; b < d; ++b) {
        double acc = 0;
        for (int a = 0; a < d; ++a) {
          const std::int64_t prev = linear_index(step(z, a, -1, N), N);
          acc += flux[(prev * d + a) * d + b] - flux[(site * d + a) * d + b];
        }
        out[site * d + b] = acc / spacing;
      }
    });
  };

  std::vector<double> flux(static_cast<std::size_t>(dof) * d);
  auto apply_G = [&](const std::vector<double>& u, std::vector<double>& out) {
    double Du[9];
    for_sites(N, [&](const Idx3& z, std::int64_t site) {
      grad_at(u, z, site, Du);
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) flux[(site * d + a) * d + b] = Du[a * d + b];
    });
    assemble(flux, out);
  };
  auto apply_S = [&](const std::vector<double>& u, std::vector<double>& out) {
    double Du[9];
    for_sites(N, [&](const Idx3& z, std::int64_t site) {
      grad_at(u, z, site, Du);
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
          flux[(site * d + a) * d + b] = 0.5 * (Du[a * d + b] + Du[b * d + a]);
    });
    assemble(flux, out);
  };

  std::vector<double> v(static_cast<std::size_t>(dof)), Gv(v.size()), w(v.size());
  HashStream stream(0x4b6f726eull);
  for (double& x : v) x = stream.next_symmetric();
  mean_zero(v);

  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    apply_G(v, Gv);
    mean_zero(Gv);
    std::fill(w.begin(), w.end(), 0.0);
    auto proj = [&](std::vector<double>& x) { mean_zero(x); };
    CgResult cg = conjugate_gradient(apply_S, Gv, w, 1e-12, 100000, proj);
    require(cg.converged, "korn: inner solve stalled");
    // Rayleigh quotient of the pencil at the new iterate.
    apply_G(w, Gv);
    double num = 0, den = 0;
    std::vector<double> Sw(w.size());
    apply_S(w, Sw);
    for (std::int64_t i = 0; i < dof; ++i) {
      num += w[i] * Gv[i];
      den += w[i] * Sw[i];
    }
    const double lambda_new = num / den;
    double norm = 0;
    for (double x : w) norm += x * x;
    norm = std::sqrt(norm);
    for (std::int64_t i = 0; i < dof; ++i) v[i] = w[i] / norm;
    if (it > 3 && std::abs(lambda_new - lambda) <= 1e-11 * std::max(1.0, lambda_new)) {
      lambda = lambda_new;
      break;
    }
    lambda = lambda_new;
  }
  return lambda;
}

std::vector<double> korn_random_ratios(int d, Int3 N, double spacing, int count,
                                       std::uint64_t seed) {
  require(d >= 1 && d <= 3, "korn: dimension must be 1, 2, or 3");
  const std::int64_t sites = cells_of(N);
  std::vector<double> ratios;
  ratios.reserve(static_cast<std::size_t>(count));
  std::vector<double> u(static_cast<std::size_t>(sites) * d);
  HashStream stream(seed);
  for (int f = 0; f < count; ++f) {
    for (double& x : u) x = stream.next_symmetric();
    Kahan num, den;
    double Du[9];
    for_sites(N, [&](const Idx3& z, std::int64_t site) {
      for (int a = 0; a < d; ++a) {
        const std::int64_t nb = linear_index(step(z, a, +1, N), N);
        for (int b = 0; b < d; ++b)
          Du[a * d + b] = (u[nb * d + b] - u[site * d + b]) / spacing;
      }
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
          num.add(Du[a * d + b] * Du[a * d + b]);
          const double s = 0.5 * (Du[a * d + b] + Du[b * d + a]);
          den.add(s * s);
        }
    });
    ratios.push_back(num.value() / den.value());
  }
  return ratios;
}

}  // namespace stochunfold
