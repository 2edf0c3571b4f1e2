#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>
#include <set>

#include "stochunfold/env.hpp"
#include "stochunfold/rng.hpp"

#include "oracles.hpp"

using namespace stochunfold;

namespace {

EnvironmentSpec two_phase_torus_1d() {
  EnvironmentSpec env;
  env.kind = EnvKind::shift_torus;
  env.d = 1;
  env.L = {2, 1, 1};
  env.config = {0, 1};
  env.phases.resize(2);
  env.phases[0].a = 1.0;
  env.phases[1].a = 4.0;
  env.validate();
  return env;
}

EnvironmentSpec checkerboard_2d() {
  EnvironmentSpec env;
  env.kind = EnvKind::shift_torus;
  env.d = 2;
  env.L = {2, 2, 1};
  env.config = {0, 1, 1, 0};
  env.phases.resize(2);
  env.phases[0].a = 1.0;
  env.phases[1].a = 4.0;
  env.validate();
  return env;
}

EnvironmentSpec iid_half_half() {
  EnvironmentSpec env;
  env.kind = EnvKind::iid_lattice;
  env.d = 1;
  env.probabilities = {0.5, 0.5};
  env.seed = 2026;
  env.phases.resize(2);
  env.phases[0].a = 1.0;
  env.phases[1].a = 4.0;
  env.validate();
  return env;
}

}  // namespace

TEST_CASE("shift equivariance holds exactly on the torus") {
  const EnvironmentSpec env = checkerboard_2d();
  for (int o0 = 0; o0 < 2; ++o0)
    for (int o1 = 0; o1 < 2; ++o1) {
      const Realization r{&env, {o0, o1, 0}, 0};
      for (std::int64_t z0 = -3; z0 <= 3; ++z0)
        for (std::int64_t z1 = -3; z1 <= 3; ++z1)
          for (std::int64_t c0 = -2; c0 <= 2; ++c0)
            for (std::int64_t c1 = -2; c1 <= 2; ++c1) {
              const Idx3 z{z0, z1, 0};
              const Idx3 c{c0, c1, 0};
              const Idx3 cz{c0 + z0, c1 + z1, 0};
              CHECK(eval_env(shift(r, z), c) == eval_env(r, cz));
            }
    }
}

TEST_CASE("shift equivariance holds on iid draws") {
  const EnvironmentSpec env = iid_half_half();
  const Realization r{&env, {0, 0, 0}, 0x9e3779b97f4a7c15ull};
  for (std::int64_t z = -5; z <= 5; ++z)
    for (std::int64_t c = -8; c <= 8; ++c)
      CHECK(eval_env(shift(r, {z, 0, 0}), {c, 0, 0}) == eval_env(r, {c + z, 0, 0}));
}

TEST_CASE("iid draws are deterministic in (seed, cell) and follow the law") {
  const EnvironmentSpec env = iid_half_half();
  const Realization r{&env, {0, 0, 0}, 1234};
  const Realization r2{&env, {0, 0, 0}, 1234};
  for (std::int64_t c = -20; c <= 20; ++c)
    CHECK(eval_env(r, {c, 0, 0}) == eval_env(r2, {c, 0, 0}));

  // Frequency of phase 1 over many cells: within 4 standard errors of 1/2.
  const int n = 40000;
  int ones = 0;
  for (int c = 0; c < n; ++c) ones += eval_env(r, {c, 0, 0});
  const double freq = static_cast<double>(ones) / n;
  CHECK(std::abs(freq - 0.5) < 4.0 * 0.5 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("orbit plans enumerate all offsets with uniform weights") {
  const EnvironmentSpec env = checkerboard_2d();
  const SamplePlan plan = enumerate_or_sample(env, env.orbit_size(), 0);
  REQUIRE(plan.size() == 4);
  CHECK(plan.exact);
  std::set<std::pair<std::int64_t, std::int64_t>> seen;
  double wsum = 0;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    seen.insert({plan.realizations[i].offset[0], plan.realizations[i].offset[1]});
    CHECK(plan.weights[i] == doctest::Approx(0.25).epsilon(1e-15));
    wsum += plan.weights[i];
  }
  CHECK(seen.size() == 4);
  CHECK(wsum == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("sampled plans are reproducible and seed-sensitive") {
  const EnvironmentSpec env = iid_half_half();
  const SamplePlan p1 = enumerate_or_sample(env, 8, 42);
  const SamplePlan p2 = enumerate_or_sample(env, 8, 42);
  const SamplePlan p3 = enumerate_or_sample(env, 8, 43);
  REQUIRE(p1.size() == 8);
  CHECK(!p1.exact);
  bool all_equal = true, any_differ = false;
  for (std::size_t i = 0; i < 8; ++i) {
    all_equal = all_equal && p1.realizations[i].rseed == p2.realizations[i].rseed;
    any_differ = any_differ || p1.realizations[i].rseed != p3.realizations[i].rseed;
    CHECK(p1.weights[i] == doctest::Approx(0.125).epsilon(1e-15));
  }
  CHECK(all_equal);
  CHECK(any_differ);
}

TEST_CASE("expectation on exact plans is the plain weighted sum") {
  const EnvironmentSpec env = two_phase_torus_1d();
  const SamplePlan plan = enumerate_or_sample(env, env.orbit_size(), 0);
  const Estimate est = expectation(
      plan, [](const Realization& r) { return r.env->phases[eval_env(r, {0, 0, 0})].a; });
  CHECK(est.exact);
  CHECK(est.stderr_est == 0.0);
  CHECK(est.mean == doctest::Approx(2.5).epsilon(1e-15));
}

TEST_CASE("phase weights are volume fractions, law, or point mass") {
  CHECK(two_phase_torus_1d().phase_weights() == std::vector<double>{0.5, 0.5});
  CHECK(iid_half_half().phase_weights() == std::vector<double>{0.5, 0.5});
  EnvironmentSpec det;
  det.kind = EnvKind::deterministic;
  det.d = 1;
  det.phases.resize(1);
  det.validate();
  CHECK(det.phase_weights() == std::vector<double>{1.0});
}

TEST_CASE("reaction bounds scan the phase list") {
  EnvironmentSpec env = two_phase_torus_1d();
  env.phases[0].f = {1.0, 1.0};
  env.phases[1].f = {1.2, 1.0};
  env.phases[0].r = 1.0;
  env.phases[1].r = 1.5;
  CHECK(env.lambda_min() == doctest::Approx(-1.2).epsilon(1e-15));
  CHECK(env.r_min() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(env.mean_r() == doctest::Approx(1.25).epsilon(1e-15));
}

TEST_CASE("window averages collapse to the mean at commensurate windows") {
  for (int L : {2, 3}) {
    EnvironmentSpec env;
    env.kind = EnvKind::shift_torus;
    env.d = 1;
    env.L = {L, 1, 1};
    env.config.resize(L);
    for (int i = 0; i < L; ++i) env.config[i] = i % 2;
    env.phases.resize(2);
    env.phases[0].a = 1.0;
    env.phases[1].a = 4.0;
    env.validate();

    const SamplePlan plan = enumerate_or_sample(env, env.orbit_size(), 0);
    const double eps = 0.125;
    auto obs = [](int phase) { return phase == 1 ? 1.0 : 0.0; };
    const Estimate mean = expectation(plan, [&](const Realization& r) {
      return obs(eval_env(r, {0, 0, 0}));
    });
    // 2R/eps an integer multiple of L: the average is exact for every offset.
    for (int k = 1; k <= 3; ++k) {
      const double R = 0.5 * k * L * eps;
      for (const Realization& r : plan.realizations)
        CHECK(std::abs(birkhoff_average(r, obs, R, eps) - mean.mean) < 1e-14);
    }
    // Incommensurate window on a nonuniform orbit member: no exact collapse.
    if (L == 3) {
      double worst = 0;
      for (const Realization& r : plan.realizations)
        worst = std::max(worst,
                         std::abs(birkhoff_average(r, obs, 0.5 * eps * 4, eps) - mean.mean));
      CHECK(worst > 1e-3);
    }
  }
}

TEST_CASE("window averages of iid draws concentrate at the exact rate") {
  const EnvironmentSpec env = iid_half_half();
  const double eps = 1.0 / 64.0, R = 4.0;
  auto obs = [](int phase) { return phase == 1 ? 1.0 : 0.0; };
  // Exact standard error from the window weights: var = p(1-p) per cell.
  double w2 = 0;
  for (const auto& cell : oracles::window_cells_1d(R, eps)) w2 += cell.weight * cell.weight;
  const double se = std::sqrt(0.25 * w2);

  int within = 0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    const SamplePlan plan = enumerate_or_sample(env, 1, static_cast<std::uint64_t>(s));
    const double avg = birkhoff_average(plan.realizations[0], obs, R, eps);
    if (std::abs(avg - 0.5) <= 3.0 * se) ++within;
  }
  CHECK(within >= 17);
}

TEST_CASE("environment validation rejects malformed specs") {
  EnvironmentSpec env = two_phase_torus_1d();
  env.config = {0, 1, 0};  // wrong length for L = 2
  CHECK_THROWS_AS(env.validate(), ConfigError);

  EnvironmentSpec bad_phase = two_phase_torus_1d();
  bad_phase.config = {0, 5};
  CHECK_THROWS_AS(bad_phase.validate(), ConfigError);

  EnvironmentSpec no_phases = two_phase_torus_1d();
  no_phases.phases.clear();
  CHECK_THROWS_AS(no_phases.validate(), ConfigError);

  EnvironmentSpec bad_law = iid_half_half();
  bad_law.probabilities = {0.7, 0.7};
  CHECK_THROWS_AS(bad_law.validate(), ConfigError);

  EnvironmentSpec neg_law = iid_half_half();
  neg_law.probabilities = {1.5, -0.5};
  CHECK_THROWS_AS(neg_law.validate(), ConfigError);
}
