#include "stochunfold/env.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "stochunfold/rng.hpp"

namespace stochunfold {

namespace {

void validate_phase(const PhaseTable& ph, int idx, int d, double C) {
  std::ostringstream where;
  where << "phase " << idx << ": ";
  require_config(ph.a > 0.0, where.str() + "a must be positive");
  require_config(ph.a >= 1.0 / C - 1e-12 && ph.a <= C + 1e-12,
                 where.str() + "a outside the declared [1/C, C] range");
  require_config(ph.r >= 1.0 / C - 1e-12 && ph.r <= C + 1e-12,
                 where.str() + "r outside the declared [1/C, C] range");
  require_config(ph.f.scale >= 0.0, where.str() + "f scale must be nonnegative");
  require_config(ph.f.well > 0.0, where.str() + "f well must be positive");

  Eigen::MatrixXd A(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) A(i, j) = ph.A[i * 3 + j];
  double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
  require_config((A - A.transpose()).cwiseAbs().maxCoeff() <= 1e-14 * scale,
                 where.str() + "A must be symmetric to 1e-14");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  double lo = es.eigenvalues().minCoeff();
  double hi = es.eigenvalues().maxCoeff();
  require_config(lo >= 1.0 / C - 1e-12,
                 where.str() + "A eigenvalue below the declared 1/C bound");
  require_config(hi <= C + 1e-12,
                 where.str() + "A eigenvalue above the declared C bound");
}

}  // namespace

void EnvironmentSpec::validate() const {
  require_config(d >= 1 && d <= 3, "d must be 1, 2 or 3");
  require_config(!phases.empty(), "at least one phase required");
  require_config(C > 0.0, "C must be positive");
  for (int i = d; i < 3; ++i)
    require_config(L[i] == 1, "unused torus axes must have period 1");

  switch (kind) {
    case EnvKind::deterministic:
      require_config(phases.size() == 1, "deterministic environment has one phase");
      require_config(config.empty() && probabilities.empty(),
                     "deterministic environment takes no config or probabilities");
      break;
    case EnvKind::shift_torus: {
      for (int i = 0; i < d; ++i)
        require_config(L[i] >= 1, "torus period must be positive");
      require_config(static_cast<std::int64_t>(config.size()) == orbit_size(),
                     "config size must equal the torus volume L^d");
      for (int v : config)
        require_config(v >= 0 && v < num_phases(), "config entry out of phase range");
      require_config(probabilities.empty(),
                     "shift-torus environment takes no probabilities");
      break;
    }
    case EnvKind::iid_lattice: {
      require_config(probabilities.size() == phases.size(),
                     "need one probability per phase");
      double sum = 0.0;
      for (double p : probabilities) {
        require_config(p >= 0.0, "probabilities must be nonnegative");
        sum += p;
      }
      require_config(std::abs(sum - 1.0) <= 1e-12, "probabilities must sum to 1");
      require_config(config.empty(), "iid-lattice environment takes no config");
      break;
    }
  }
  for (int i = 0; i < num_phases(); ++i) {
    PhaseTable ph = phases[i];
    if (!ph.explicit_A) {
      ph.A = {};
      for (int j = 0; j < d; ++j) ph.A[j * 3 + j] = ph.a;
    }
    validate_phase(ph, i, d, C);
  }
}

std::vector<double> EnvironmentSpec::phase_weights() const {
  switch (kind) {
    case EnvKind::deterministic:
      return {1.0};
    case EnvKind::iid_lattice:
      return probabilities;
    case EnvKind::shift_torus: {
      std::vector<double> w(phases.size(), 0.0);
      for (int v : config) w[v] += 1.0;
      for (double& x : w) x /= static_cast<double>(config.size());
      return w;
    }
  }
  return {};
}

double EnvironmentSpec::lambda_min() const {
  double lam = 0.0;
  for (const auto& ph : phases)
    lam = std::min(lam, -ph.f.scale * ph.f.well * ph.f.well);
  return lam;
}

double EnvironmentSpec::r_min() const {
  double r = phases[0].r;
  for (const auto& ph : phases) r = std::min(r, ph.r);
  return r;
}

double EnvironmentSpec::mean_r() const {
  auto w = phase_weights();
  double r = 0.0;
  for (std::size_t i = 0; i < phases.size(); ++i) r += w[i] * phases[i].r;
  return r;
}

Realization shift(const Realization& r, const Idx3& z) {
  Realization out = r;
  for (int i = 0; i < 3; ++i) {
    out.offset[i] = r.offset[i] + z[i];
    if (r.env->kind == EnvKind::shift_torus)
      out.offset[i] = wrap(out.offset[i], r.env->L[i]);
  }
  return out;
}

int eval_env(const Realization& r, const Idx3& cell) {
  const EnvironmentSpec& e = *r.env;
  switch (e.kind) {
    case EnvKind::deterministic:
      return 0;
    case EnvKind::shift_torus: {
      Idx3 z;
      for (int i = 0; i < 3; ++i) z[i] = wrap(cell[i] + r.offset[i], e.L[i]);
      return e.config[linear_index(z, e.L)];
    }
    case EnvKind::iid_lattice: {
      Idx3 abs;
      for (int i = 0; i < 3; ++i) abs[i] = cell[i] + r.offset[i];
      double u = to_unit(mix64(lattice_hash(r.rseed, abs)));
      double acc = 0.0;
      int last = static_cast<int>(e.probabilities.size()) - 1;
      for (int p = 0; p < last; ++p) {
        acc += e.probabilities[p];
        if (u < acc) return p;
      }
      return last;
    }
  }
  throw Error("unreachable environment kind");
}

SamplePlan enumerate_or_sample(const EnvironmentSpec& spec, std::int64_t M,
                               std::uint64_t seed) {
  spec.validate();
  SamplePlan plan;
  plan.env = std::make_shared<EnvironmentSpec>(spec);
  const EnvironmentSpec* env = plan.env.get();
  switch (spec.kind) {
    case EnvKind::deterministic: {
      require_config(M == 1, "deterministic environment has exactly one realization");
      plan.realizations.push_back(Realization{env, {0, 0, 0}, 0});
      plan.weights.push_back(1.0);
      plan.exact = true;
      break;
    }
    case EnvKind::shift_torus: {
      require_config(M == spec.orbit_size(),
                     "shift-torus enumeration is exact: M must equal L^d");
      double w = 1.0 / static_cast<double>(M);
      for_sites(spec.L, [&](const Idx3& o) {
        plan.realizations.push_back(Realization{env, o, 0});
        plan.weights.push_back(w);
      });
      plan.exact = true;
      break;
    }
    case EnvKind::iid_lattice: {
      require_config(M >= 1, "need at least one Monte Carlo realization");
      double w = 1.0 / static_cast<double>(M);
      std::uint64_t stream = hash_combine(spec.seed, seed);
      for (std::int64_t i = 0; i < M; ++i) {
        plan.realizations.push_back(
            Realization{env, {0, 0, 0}, hash_combine(stream, static_cast<std::uint64_t>(i))});
        plan.weights.push_back(w);
      }
      plan.exact = false;
      break;
    }
  }
  return plan;
}

Estimate expectation(const SamplePlan& plan,
                     const std::function<double(const Realization&)>& observable) {
  Kahan mean;
  std::vector<double> vals(plan.size());
  for (std::size_t i = 0; i < plan.size(); ++i) {
    vals[i] = observable(plan.realizations[i]);
    mean.add(plan.weights[i] * vals[i]);
  }
  Estimate est;
  est.mean = mean.value();
  est.exact = plan.exact;
  if (!plan.exact && plan.size() > 1) {
    Kahan ss;
    for (double v : vals) ss.add((v - est.mean) * (v - est.mean));
    double n = static_cast<double>(plan.size());
    est.stderr_est = std::sqrt(ss.value() / (n - 1.0)) / std::sqrt(n);
  }
  return est;
}

double birkhoff_average(const Realization& r,
                        const std::function<double(int)>& phase_observable,
                        double R, double eps) {
  require(R > 0.0 && eps > 0.0, "birkhoff average needs R > 0 and eps > 0");
  int d = r.env->d;
  // Per-axis cell ranges and overlap weights of [z*eps, (z+1)*eps] with [-R, R].
  std::array<std::vector<double>, 3> w;
  std::array<std::int64_t, 3> lo{0, 0, 0};
  Int3 counts{1, 1, 1};
  for (int i = 0; i < d; ++i) {
    lo[i] = static_cast<std::int64_t>(std::floor(-R / eps));
    auto hi = static_cast<std::int64_t>(std::ceil(R / eps));  // exclusive
    counts[i] = static_cast<int>(hi - lo[i]);
    w[i].resize(counts[i]);
    for (std::int64_t z = lo[i]; z < hi; ++z) {
      double a = std::max(-R, static_cast<double>(z) * eps);
      double b = std::min(R, static_cast<double>(z + 1) * eps);
      w[i][z - lo[i]] = std::max(0.0, b - a) / (2.0 * R);
    }
  }
  Kahan sum;
  for_sites(counts, [&](const Idx3& c) {
    Idx3 z{0, 0, 0};
    double weight = 1.0;
    for (int i = 0; i < d; ++i) {
      z[i] = lo[i] + c[i];
      weight *= w[i][c[i]];
    }
    sum.add(weight * phase_observable(eval_env(r, z)));
  });
  return sum.value();
}

}  // namespace stochunfold
