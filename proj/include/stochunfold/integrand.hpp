// Convex gradient integrands evaluated per phase: quadratic forms xi'A xi,
// p-th power (a/p)|xi|^p with p >= 2, and their sum. The quadratic `half` flag
// selects 1/2 xi'A xi, the convention under which the Euler-Lagrange operator
// is -div(A grad u) without a factor 2.
#pragma once

#include <cmath>
#include <string>

#include "stochunfold/common.hpp"
#include "stochunfold/env.hpp"

namespace stochunfold {

struct VSpec {
  enum class Kind { quadratic, power, power_quad };
  Kind kind = Kind::quadratic;
  double p = 2.0;
  bool half = false;

  void validate() const {
    if (kind != Kind::quadratic) {
      require_config(p >= 2.0, "integrand: p must be >= 2 (got " + std::to_string(p) + ")");
      require_config(!half, "integrand: 'half' only applies to the quadratic kind");
    }
  }
  bool is_quadratic() const { return kind == Kind::quadratic; }

  static VSpec quadratic(bool half_) {
    VSpec v;
    v.kind = Kind::quadratic;
    v.half = half_;
    return v;
  }
  static VSpec power(double p_) {
    VSpec v;
    v.kind = Kind::power;
    v.p = p_;
    return v;
  }
  static VSpec power_quad(double p_) {
    VSpec v;
    v.kind = Kind::power_quad;
    v.p = p_;
    return v;
  }
};

namespace detail {

inline double quad_value(const PhaseTable& ph, const double* xi, int d, double c) {
  double s = 0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) s += ph.A[3 * i + j] * xi[i] * xi[j];
  return c * s;
}

inline void quad_deriv(const PhaseTable& ph, const double* xi, int d, double c, double* out) {
  for (int i = 0; i < d; ++i) {
    double s = 0;
    for (int j = 0; j < d; ++j) s += ph.A[3 * i + j] * xi[j];
    out[i] += 2.0 * c * s;
  }
}

inline double norm2(const double* xi, int d) {
  double s = 0;
  for (int i = 0; i < d; ++i) s += xi[i] * xi[i];
  return s;
}

}  // namespace detail

inline double v_value(const VSpec& spec, const PhaseTable& ph, const double* xi, int d) {
  const double c = spec.half ? 0.5 : 1.0;
  switch (spec.kind) {
    case VSpec::Kind::quadratic:
      return detail::quad_value(ph, xi, d, c);
    case VSpec::Kind::power: {
      const double n2 = detail::norm2(xi, d);
      return n2 == 0 ? 0.0 : (ph.a / spec.p) * std::pow(n2, 0.5 * spec.p);
    }
    case VSpec::Kind::power_quad: {
      const double n2 = detail::norm2(xi, d);
      double v = 0.5 * ph.a * n2;
      if (n2 > 0) v += (ph.a / spec.p) * std::pow(n2, 0.5 * spec.p);
      return v;
    }
  }
  return 0;
}

inline void v_deriv(const VSpec& spec, const PhaseTable& ph, const double* xi, int d,
                    double* out) {
  for (int i = 0; i < d; ++i) out[i] = 0;
  const double c = spec.half ? 0.5 : 1.0;
  switch (spec.kind) {
    case VSpec::Kind::quadratic:
      detail::quad_deriv(ph, xi, d, c, out);
      return;
    case VSpec::Kind::power: {
      const double n2 = detail::norm2(xi, d);
      if (n2 == 0) return;
      const double w = ph.a * std::pow(n2, 0.5 * (spec.p - 2.0));
      for (int i = 0; i < d; ++i) out[i] = w * xi[i];
      return;
    }
    case VSpec::Kind::power_quad: {
      const double n2 = detail::norm2(xi, d);
      double w = ph.a;
      if (n2 > 0) w += ph.a * std::pow(n2, 0.5 * (spec.p - 2.0));
      for (int i = 0; i < d; ++i) out[i] = w * xi[i];
      return;
    }
  }
}

// out += D^2 V(xi) v.
inline void v_hess_apply(const VSpec& spec, const PhaseTable& ph, const double* xi,
                         const double* v, int d, double* out) {
  const double c = spec.half ? 0.5 : 1.0;
  switch (spec.kind) {
    case VSpec::Kind::quadratic:
      detail::quad_deriv(ph, v, d, c, out);
      return;
    case VSpec::Kind::power:
    case VSpec::Kind::power_quad: {
      const double n2 = detail::norm2(xi, d);
      double diag = spec.kind == VSpec::Kind::power_quad ? ph.a : 0.0;
      double rank1 = 0.0;
      if (n2 > 0) {
        diag += ph.a * std::pow(n2, 0.5 * (spec.p - 2.0));
        double xv = 0;
        for (int i = 0; i < d; ++i) xv += xi[i] * v[i];
        rank1 = ph.a * (spec.p - 2.0) * std::pow(n2, 0.5 * (spec.p - 4.0)) * xv;
      }
      for (int i = 0; i < d; ++i) out[i] += diag * v[i] + rank1 * xi[i];
      return;
    }
  }
}

}  // namespace stochunfold
