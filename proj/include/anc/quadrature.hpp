#pragma once

// Adaptive Gauss-Kronrod 7/15 on a finite interval. Intervals are always
// split at their midpoint and the acceptance test depends only on the
// interval length, so mirror-image integrands get mirror-image meshes.

#include "anc/common.hpp"

#include <array>
#include <cmath>

namespace anc {

struct QuadResult {
  double value = 0.0;
  double error = 0.0;
  long evaluations = 0;
  bool converged = true;
};

namespace detail {

inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
// Gauss weights for nodes 1, 3, 5 and the centre.
inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <typename F>
void gk15(F& f, double a, double b, double& kronrod, double& gauss) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  const double fc = f(c);
  kronrod = kKronrodWeights[7] * fc;
  gauss = kGaussWeights[3] * fc;
  for (int i = 0; i < 7; ++i) {
    const double d = h * kKronrodNodes[i];
    const double s = f(c - d) + f(c + d);
    kronrod += kKronrodWeights[i] * s;
    if (i % 2 == 1) gauss += kGaussWeights[i / 2] * s;
  }
  kronrod *= h;
  gauss *= h;
}

template <typename F>
void adapt(F& f, double a, double b, double tol_density, int depth,
           QuadResult& out) {
  double k, g;
  gk15(f, a, b, k, g);
  out.evaluations += 15;
  const double err = std::abs(k - g);
  if (err <= tol_density * (b - a) || depth == 0) {
    if (err > tol_density * (b - a)) out.converged = false;
    out.value += k;
    out.error += err;
    return;
  }
  const double m = 0.5 * (a + b);
  adapt(f, a, m, tol_density, depth - 1, out);
  adapt(f, m, b, tol_density, depth - 1, out);
}

}  // namespace detail

/// Integral of f over [a, b] to absolute tolerance abs_tol.
template <typename F>
QuadResult integrate_adaptive(F f, double a, double b, double abs_tol = 1e-14,
                              int max_depth = 30) {
  if (!(b > a) || !std::isfinite(a) || !std::isfinite(b))
    throw Error(ErrorKind::InvalidParameter, "integration needs finite a < b");
  QuadResult out;
  detail::adapt(f, a, b, abs_tol / (b - a), max_depth, out);
  return out;
}

}  // namespace anc
