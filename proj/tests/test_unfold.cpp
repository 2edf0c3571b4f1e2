#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <memory>

#include "stochunfold/rng.hpp"
#include "stochunfold/unfold.hpp"

#include "oracles.hpp"

using namespace stochunfold;

namespace {

std::shared_ptr<const EnvironmentSpec> torus_env(int d, int L) {
  auto env = std::make_shared<EnvironmentSpec>();
  env->kind = EnvKind::shift_torus;
  env->d = d;
  for (int a = 0; a < d; ++a) env->L[a] = L;
  env->config.resize(static_cast<std::size_t>(env->orbit_size()));
  for (std::size_t i = 0; i < env->config.size(); ++i)
    env->config[i] = static_cast<int>(i % 2);
  env->phases.resize(2);
  env->phases[0].a = 1.0;
  env->phases[1].a = 4.0;
  env->validate();
  return env;
}

RandomField random_cell_field(std::shared_ptr<const Domain> dom,
                              std::shared_ptr<const SamplePlan> plan, std::uint64_t seed) {
  RandomField u = make_field(dom, plan, Stage::cell, 1);
  HashStream stream(seed);
  for (auto& row : u.data)
    for (double& x : row) x = stream.next_symmetric();
  return u;
}

// Reference unfolding by direct offset arithmetic: for every realization
// offset o and cell c, look up the realization at wrap(o - floor(c/q)).
RandomField reference_unfold(const UnfoldPlan& up, const RandomField& u, int sign) {
  const EnvironmentSpec& env = up.env();
  std::map<std::array<std::int64_t, 3>, std::size_t> index;
  for (std::size_t r = 0; r < up.plan->size(); ++r) {
    const Idx3& o = up.plan->realizations[r].offset;
    index[{o[0], o[1], o[2]}] = r;
  }
  RandomField out = u;
  for (std::size_t r = 0; r < up.plan->size(); ++r) {
    const Idx3& o = up.plan->realizations[r].offset;
    for_sites(up.domain->n, [&](const Idx3& c, std::int64_t cell) {
      std::array<std::int64_t, 3> key{0, 0, 0};
      for (int a = 0; a < env.d; ++a) {
        const std::int64_t z = c[a] / up.q[a];
        const std::int64_t L = env.L[a];
        key[a] = ((o[a] + sign * z) % L + L) % L;
      }
      out.data[r][cell] = u.data[index.at(key)][cell];
    });
  }
  return out;
}

double max_abs_diff(const RandomField& a, const RandomField& b) {
  double m = 0;
  for (std::size_t r = 0; r < a.data.size(); ++r)
    for (std::size_t i = 0; i < a.data[r].size(); ++i)
      m = std::max(m, std::abs(a.data[r][i] - b.data[r][i]));
  return m;
}

}  // namespace

TEST_CASE("unfolding equals the brute-force offset permutation") {
  for (int d : {1, 2})
    for (int L : {2, 3}) {
      auto env = torus_env(d, L);
      Int3 n{1, 1, 1};
      for (int a = 0; a < d; ++a) n[a] = 4 * L;
      auto dom = make_domain(d, n);
      auto plan = std::make_shared<SamplePlan>(enumerate_or_sample(*env, env->orbit_size(), 0));
      const UnfoldPlan up = make_unfold_plan(dom, plan, 1.0 / L);

      const RandomField u = random_cell_field(dom, plan, 11 * L + d);
      CHECK(max_abs_diff(unfold(up, u), reference_unfold(up, u, -1)) == 0.0);
      CHECK(max_abs_diff(fold_adjoint(up, u), reference_unfold(up, u, +1)) == 0.0);
    }
}

TEST_CASE("operator identities hold to rounding error on exhaustive orbits") {
  for (int d : {1, 2})
    for (int L : {2, 3}) {
      auto env = torus_env(d, L);
      Int3 n{1, 1, 1};
      for (int a = 0; a < d; ++a) n[a] = 4 * L;
      auto dom = make_domain(d, n);
      auto plan = std::make_shared<SamplePlan>(enumerate_or_sample(*env, env->orbit_size(), 0));
      const UnfoldPlan up = make_unfold_plan(dom, plan, 1.0 / (2 * L));

      for (int f = 0; f < 10; ++f) {
        const RandomField u = random_cell_field(dom, plan, hash_combine(900 + d, 10 * L + f));
        const RandomField v = random_cell_field(dom, plan, hash_combine(901 + d, 10 * L + f));
        const RandomField Tu = unfold(up, u);

        CHECK(std::abs(norm_p(Tu, 2.0) - norm_p(u, 2.0)) < 1e-12);
        CHECK(std::abs(norm_p(Tu, 3.0) - norm_p(u, 3.0)) < 1e-12);
        CHECK(std::abs(inner(Tu, v) - inner(u, fold_adjoint(up, v))) < 1e-12);
        CHECK(max_abs_diff(fold_adjoint(up, Tu), u) == 0.0);
      }
    }
}

TEST_CASE("unfolding turns oscillating coefficients into fixed random variables") {
  auto env = torus_env(2, 2);
  auto dom = make_domain(2, {12, 12, 1});
  auto plan = std::make_shared<SamplePlan>(enumerate_or_sample(*env, env->orbit_size(), 0));
  const UnfoldPlan up = make_unfold_plan(dom, plan, 0.25);

  const RandomField u = random_cell_field(dom, plan, 5);
  RandomField cu = u;
  RandomField expected = unfold(up, u);
  for (std::size_t r = 0; r < plan->size(); ++r) {
    const Realization& real = plan->realizations[r];
    const double c0 = env->phases[eval_env(real, {0, 0, 0})].a;
    for_sites(dom->n, [&](const Idx3& c, std::int64_t cell) {
      cu.data[r][cell] *= env->phases[eval_env(real, lattice_cell(up, c))].a;
      expected.data[r][cell] *= c0;
    });
  }
  CHECK(max_abs_diff(unfold(up, cu), expected) < 1e-12);
}

TEST_CASE("invariant projection: idempotent contraction commuting with unfolding") {
  auto env = torus_env(1, 3);
  auto dom = make_domain(1, {24, 1, 1});
  auto plan = std::make_shared<SamplePlan>(enumerate_or_sample(*env, env->orbit_size(), 0));
  const UnfoldPlan up = make_unfold_plan(dom, plan, 1.0 / 6.0);

  for (int f = 0; f < 10; ++f) {
    const RandomField u = random_cell_field(dom, plan, 300 + f);
    const RandomField Pu = project_inv(u);
    const RandomField PuRep = replicate(Pu, plan);

    CHECK(max_abs_diff(project_inv(PuRep), Pu) < 1e-13);
    CHECK(norm_p(Pu, 2.0) <= norm_p(u, 2.0) + 1e-13);
    CHECK(max_abs_diff(project_inv(unfold(up, u)), Pu) < 1e-13);
    CHECK(max_abs_diff(unfold(up, PuRep), PuRep) == 0.0);

    // Reverse-order plain summation as an independent arithmetic path.
    for (std::int64_t site = 0; site < u.sites(); ++site) {
      double s = 0;
      for (std::size_t r = plan->size(); r-- > 0;) s += plan->weights[r] * u.data[r][site];
      CHECK(std::abs(s - Pu.data[0][site]) < 1e-13);
    }
  }
}

TEST_CASE("sampled plans refuse unfolding and point to the pairing route") {
  EnvironmentSpec env;
  env.kind = EnvKind::iid_lattice;
  env.d = 1;
  env.probabilities = {0.5, 0.5};
  env.phases.resize(2);
  env.phases[1].a = 4.0;
  env.validate();
  auto dom = make_domain(1, {16, 1, 1});
  auto plan = std::make_shared<SamplePlan>(enumerate_or_sample(env, 4, 0));
  const UnfoldPlan up = make_unfold_plan(dom, plan, 0.25);
  const RandomField u = random_cell_field(dom, plan, 1);
  CHECK_THROWS_WITH_AS(unfold(up, u), doctest::Contains("two_scale_residual"), Error);
}

TEST_CASE("grid and coefficient lattice must be commensurate") {
  auto env = torus_env(2, 2);
  auto dom = make_domain(2, {16, 16, 1});
  auto plan = std::make_shared<SamplePlan>(enumerate_or_sample(*env, env->orbit_size(), 0));
  CHECK_THROWS_AS(make_unfold_plan(dom, plan, 1.0 / 3.0), ConfigError);
  CHECK_THROWS_AS(make_unfold_plan(dom, plan, 0.3), ConfigError);
  CHECK_NOTHROW(make_unfold_plan(dom, plan, 0.25));
}

TEST_CASE("pairing residuals match a brute-force double sum") {
  auto env = torus_env(1, 2);
  auto dom = make_domain(1, {32, 1, 1});
  auto plan = std::make_shared<SamplePlan>(enumerate_or_sample(*env, env->orbit_size(), 0));
  const double eps = 0.125;
  const UnfoldPlan up = make_unfold_plan(dom, plan, eps);

  // u_eps(omega, x) = g(x) * a_eps(omega, x) oscillates with the medium.
  RandomField u = make_field(dom, plan, Stage::cell, 1);
  for (std::size_t r = 0; r < plan->size(); ++r) {
    const Realization& real = plan->realizations[r];
    for_sites(dom->n, [&](const Idx3& c, std::int64_t cell) {
      const double x = dom->cell_center(c)[0];
      u.data[r][cell] =
          std::sin(2 * M_PI * x) * env->phases[eval_env(real, lattice_cell(up, c))].a;
    });
  }
  RandomField u0 = make_plain_field(dom, Stage::cell, 1);
  for_sites(dom->n, [&](const Idx3& c, std::int64_t cell) {
    u0.data[0][cell] = std::sin(2 * M_PI * dom->cell_center(c)[0]) * 2.5;
  });

  const std::vector<BatteryEntry> battery = default_battery(*env, 1);
  CHECK(battery.size() == 6);  // 3 monomial degrees x 2 phases
  const TwoScaleReport rep = two_scale_residual(*plan, eps, u, u0, battery);

  const double vol = dom->cell_volume();
  const std::vector<double> wp = env->phase_weights();
  for (std::size_t b = 0; b < battery.size(); ++b) {
    double paired = 0;
    double lim = 0;
    for (std::size_t r = 0; r < plan->size(); ++r) {
      const Realization& real = plan->realizations[r];
      double inner_sum = 0;
      for_sites(dom->n, [&](const Idx3& c, std::int64_t cell) {
        const Idx3 z = lattice_cell(up, c);
        if (eval_env(real, z) != battery[b].phase) return;
        const double x = dom->cell_center(c)[0];
        inner_sum += vol * u.data[r][cell] * std::pow(x, battery[b].degree[0]);
      });
      paired += plan->weights[r] * inner_sum;
    }
    for_sites(dom->n, [&](const Idx3& c, std::int64_t cell) {
      const double x = dom->cell_center(c)[0];
      lim += vol * u0.data[0][cell] * std::pow(x, battery[b].degree[0]);
    });
    lim *= wp[static_cast<std::size_t>(battery[b].phase)];
    CHECK(std::abs(paired - rep.paired[b]) < 1e-13);
    CHECK(std::abs(lim - rep.limit[b]) < 1e-13);
    CHECK(rep.residual[b] == rep.paired[b] - rep.limit[b]);
  }
}

TEST_CASE("pairing residuals scale like eps for an order-eps perturbation") {
  // u_eps = g (1 + eps a_eps) converges to u0 = g; shift invariance of the
  // exhaustive orbit makes the residual exactly eps a_p w_p sum(vol g eta).
  auto env = torus_env(1, 2);
  const std::vector<BatteryEntry> battery = default_battery(*env, 1);
  const std::vector<double> wp = env->phase_weights();
  double prev = -1;
  for (double eps : {0.25, 0.125, 0.0625, 0.03125}) {
    const int n = static_cast<int>(std::llround(8.0 / eps));
    auto dom = make_domain(1, {n, 1, 1});
    auto plan = std::make_shared<SamplePlan>(enumerate_or_sample(*env, env->orbit_size(), 0));
    const UnfoldPlan up = make_unfold_plan(dom, plan, eps);

    RandomField u = make_field(dom, plan, Stage::cell, 1);
    for (std::size_t r = 0; r < plan->size(); ++r) {
      const Realization& real = plan->realizations[r];
      for_sites(dom->n, [&](const Idx3& c, std::int64_t cell) {
        const double x = dom->cell_center(c)[0];
        const double a = env->phases[eval_env(real, lattice_cell(up, c))].a;
        u.data[r][cell] = std::sin(2 * M_PI * x) * (1.0 + eps * a);
      });
    }
    RandomField u0 = make_plain_field(dom, Stage::cell, 1);
    for_sites(dom->n, [&](const Idx3& c, std::int64_t cell) {
      u0.data[0][cell] = std::sin(2 * M_PI * dom->cell_center(c)[0]);
    });

    const TwoScaleReport rep = two_scale_residual(*plan, eps, u, u0, battery);
    const double vol = dom->cell_volume();
    for (std::size_t b = 0; b < battery.size(); ++b) {
      double s = 0;
      for_sites(dom->n, [&](const Idx3& c, std::int64_t cell) {
        const double x = dom->cell_center(c)[0];
        s += vol * u0.data[0][cell] * std::pow(x, battery[b].degree[0]);
      });
      const double ap = env->phases[static_cast<std::size_t>(battery[b].phase)].a;
      const double predicted = eps * ap * wp[static_cast<std::size_t>(battery[b].phase)] * s;
      CHECK(std::abs(rep.residual[b] - predicted) < 1e-13);
    }
    if (prev >= 0) {
      CHECK(rep.max_abs_residual < prev);
      CHECK(rep.max_abs_residual / prev == doctest::Approx(0.5).epsilon(0.05));
    }
    prev = rep.max_abs_residual;
  }
}

TEST_CASE("recovery fields vanish on the boundary and perturb at order eps") {
  auto env = torus_env(1, 2);
  const double eps = 0.0625;
  const int n = 64;
  auto dom = make_domain(1, {n, 1, 1});
  auto plan = std::make_shared<SamplePlan>(enumerate_or_sample(*env, env->orbit_size(), 0));
  const UnfoldPlan up = make_unfold_plan(dom, plan, eps);

  // Hand-built corrector pattern with mean-zero potential.
  CorrectorPattern pat;
  pat.d = 1;
  pat.L = {2, 1, 1};
  pat.phi = {{-0.3, 0.3}};

  RandomField u_hom = make_plain_field(dom, Stage::node, 1);
  for_sites(dom->nodes_per_axis(), [&](const Idx3& j, std::int64_t node) {
    const double x = dom->node_pos(j)[0];
    u_hom.data[0][node] = x * (1.0 - x);
  });

  const RandomField rec = recovery_sequence(up, pat, u_hom, 2.0);
  REQUIRE(rec.realizations() == plan->size());
  double max_corr = 0;
  for (std::size_t r = 0; r < plan->size(); ++r) {
    CHECK(rec.data[r][0] == 0.0);
    CHECK(rec.data[r][n] == 0.0);
    for (std::int64_t j = 0; j <= n; ++j)
      max_corr = std::max(max_corr, std::abs(rec.data[r][j] - u_hom.data[0][j]));
  }
  CHECK(max_corr > 0.0);
  // |eps * phi * Du * ramp| <= eps * 0.3 * max|Du|
  CHECK(max_corr <= eps * 0.3 * 1.0 + 1e-12);
}
