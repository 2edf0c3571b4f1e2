// Discretized probability spaces carrying the shift action.
//
// Three backends:
//   deterministic  single fixed phase, point mass
//   shift-torus    all lattice offsets of one periodic configuration,
//                  uniform weights; the shift action is exact and transitive
//   iid-lattice    one phase per lattice cell, drawn by a counter-based hash
//                  keyed on (realization seed, absolute cell index)
#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "stochunfold/common.hpp"

namespace stochunfold {

enum class EnvKind { deterministic, shift_torus, iid_lattice };

// Reaction density f(y) = scale/4 (y^2 - well^2)^2; f'' has minimum -scale*well^2.
struct ReactionParams {
  double scale = 1.0;
  double well = 1.0;
};

struct PhaseTable {
  double a = 1.0;               // scalar coefficient
  std::array<double, 9> A{};    // d x d row-major; defaults to a * Id
  bool explicit_A = false;
  double r = 1.0;               // dissipation weight
  ReactionParams f{};
};

struct EnvironmentSpec {
  EnvKind kind = EnvKind::deterministic;
  int d = 1;
  Int3 L{1, 1, 1};                    // shift-torus period per axis, 1 on unused axes
  std::vector<int> config;            // phase per torus cell, row-major, x1 fastest
  std::vector<double> probabilities;  // iid-lattice phase law
  std::uint64_t seed = 0;             // iid-lattice master seed
  std::vector<PhaseTable> phases;
  double C = 16.0;                    // declared ellipticity / growth constant

  int num_phases() const { return static_cast<int>(phases.size()); }
  std::int64_t orbit_size() const { return cells_of(L); }
  void validate() const;                    // throws ConfigError on any violation
  std::vector<double> phase_weights() const;  // volume fractions / law / {1}
  double lambda_min() const;                  // min over phases of the f convexity bound
  double r_min() const;
  double mean_r() const;
};

struct Realization {
  const EnvironmentSpec* env = nullptr;
  Idx3 offset{0, 0, 0};       // reduced mod L on the torus
  std::uint64_t rseed = 0;    // iid-lattice stream
};

Realization shift(const Realization& r, const Idx3& z);

// Phase index of the environment seen from realization r at lattice cell `cell`.
// Satisfies eval_env(shift(r, z), c) == eval_env(r, c + z) exactly.
int eval_env(const Realization& r, const Idx3& cell);

struct SamplePlan {
  std::shared_ptr<const EnvironmentSpec> env;
  std::vector<Realization> realizations;
  std::vector<double> weights;
  bool exact = false;  // full-orbit enumeration or point mass
  std::size_t size() const { return realizations.size(); }
};

// deterministic: M == 1, weight 1.  shift-torus: M == L^d, the full offset
// orbit in row-major order (x1 fastest), uniform weights.  iid-lattice: M
// Monte Carlo realizations of weight 1/M, streams split from (master seed, seed, index).
SamplePlan enumerate_or_sample(const EnvironmentSpec& spec, std::int64_t M,
                               std::uint64_t seed);

struct Estimate {
  double mean = 0.0;
  double stderr_est = 0.0;  // 0 for exact plans
  bool exact = false;
};

Estimate expectation(const SamplePlan& plan,
                     const std::function<double(const Realization&)>& observable);

// |Q_R|^{-1} int_{[-R,R]^d} obs(phase at floor(x/eps)) dx, evaluated exactly via
// per-axis partial-volume weights. Equals the full expectation whenever
// 2R/eps is an integer multiple of L on every axis of a shift torus.
double birkhoff_average(const Realization& r,
                        const std::function<double(int)>& phase_observable,
                        double R, double eps);

}  // namespace stochunfold
