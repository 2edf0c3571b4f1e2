// Shared basics: error types, compensated summation, padded 3d index helpers.
// All lattices and grids are handled as 3d arrays with extent 1 on unused axes,
// linearized row-major with the first axis fastest.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace stochunfold {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad input (config files, CLI arguments, incommensurate parameters).
// The CLI maps these to exit code 1.
struct ConfigError : Error {
  using Error::Error;
};

using Int3 = std::array<int, 3>;
using Idx3 = std::array<std::int64_t, 3>;
using Vec3 = std::array<double, 3>;

// Neumaier compensated summation; keeps weighted reductions stable enough
// that enumeration-order invariance holds to 1e-13.
struct Kahan {
  double sum = 0.0;
  double comp = 0.0;
  void add(double x) {
    double t = sum + x;
    if (std::abs(sum) >= std::abs(x))
      comp += (sum - t) + x;
    else
      comp += (x - t) + sum;
    sum = t;
  }
  double value() const { return sum + comp; }
};

inline std::int64_t wrap(std::int64_t v, std::int64_t period) {
  std::int64_t r = v % period;
  return r < 0 ? r + period : r;
}

inline std::int64_t cells_of(const Int3& n) {
  return std::int64_t(n[0]) * n[1] * n[2];
}

inline std::int64_t linear_index(const Idx3& i, const Int3& n) {
  return i[0] + n[0] * (i[1] + std::int64_t(n[1]) * i[2]);
}

inline Idx3 unravel(std::int64_t s, const Int3& n) {
  Idx3 i;
  i[0] = s % n[0];
  s /= n[0];
  i[1] = s % n[1];
  i[2] = s / n[1];
  return i;
}

// Visits sites in linearization order; the functor may also take the running
// linear index as a second argument.
template <class F>
void for_sites(const Int3& n, F&& f) {
  Idx3 i{};
  std::int64_t s = 0;
  for (i[2] = 0; i[2] < n[2]; ++i[2])
    for (i[1] = 0; i[1] < n[1]; ++i[1])
      for (i[0] = 0; i[0] < n[0]; ++i[0], ++s) {
        if constexpr (std::is_invocable_v<F, const Idx3&, std::int64_t>)
          f(i, s);
        else
          f(i);
      }
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

inline void require_config(bool cond, const std::string& msg) {
  if (!cond) throw ConfigError(msg);
}

}  // namespace stochunfold
