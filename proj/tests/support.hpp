#pragma once

// Finite-difference oracles and random model instances shared by the tests.

#include "anc/models.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace anc::testing {

using Engine = std::mt19937_64;

inline double uniform(Engine& e, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(e);
}

inline VectorXd normal_vector(Engine& e, Eigen::Index n, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = d(e);
  return v;
}

inline MatrixXd random_rotation(Engine& e, int n) {
  MatrixXd g(n, n);
  for (int j = 0; j < n; ++j) g.col(j) = normal_vector(e, n);
  Eigen::HouseholderQR<MatrixXd> qr(g);
  MatrixXd q = qr.householderQ() * MatrixXd::Identity(n, n);
  if (q.determinant() < 0) q.col(0) *= -1.0;
  return q;
}

/// Central-difference Jacobian of f: R^p -> R^m at t.
inline MatrixXd fd_jacobian(const std::function<VectorXd(const VectorXd&)>& f,
                            const VectorXd& t, double h = 1e-6) {
  const VectorXd f0 = f(t);
  MatrixXd J(f0.size(), t.size());
  for (Eigen::Index a = 0; a < t.size(); ++a) {
    const double s = h * (1.0 + std::abs(t(a)));
    VectorXd tp = t, tm = t;
    tp(a) += s;
    tm(a) -= s;
    J.col(a) = (f(tp) - f(tm)) / (2.0 * s);
  }
  return J;
}

/// Second differences of f: returns the vector d^2 f / dt_a dt_b.
inline VectorXd fd_second(const std::function<VectorXd(const VectorXd&)>& f,
                          const VectorXd& t, Eigen::Index a, Eigen::Index b,
                          double h = 1e-4) {
  auto shift = [&](double da, double db) {
    VectorXd u = t;
    u(a) += da;
    u(b) += db;
    return f(u);
  };
  return (shift(h, h) - shift(h, -h) - shift(-h, h) + shift(-h, -h)) / (4.0 * h * h);
}

inline double rel_err(const MatrixXd& got, const MatrixXd& want) {
  return (got - want).cwiseAbs().maxCoeff() / (1.0 + want.cwiseAbs().maxCoeff());
}

struct Instance {
  std::string label;
  QuantileModel model;
  VectorXd x;
  VectorXd theta;
};

inline const std::vector<std::string>& family_labels() {
  static const std::vector<std::string> labels = {
      "location-scale",        "cauchy-location-scale", "inverted-cauchy",
      "circle2d",              "circleN",               "nonlinreg-known-sigma",
      "nonlinreg-unknown-sigma"};
  return labels;
}

/// A random model of the named family with a random (x, theta) in domain.
inline Instance random_instance(const std::string& label, Engine& e) {
  auto n_between = [&](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(e);
  };
  if (label == "location-scale" || label == "cauchy-location-scale" ||
      label == "inverted-cauchy") {
    const int n = n_between(2, 8);
    QuantileModel m = label == "location-scale"
                          ? make_location_scale(n)
                          : make_location_scale(n, ErrorLaw::Cauchy);
    if (label == "inverted-cauchy") m = invert_coordinates(m).model;
    return {label, m, normal_vector(e, n),
            VectorXd{{uniform(e, -3, 3), uniform(e, 0.2, 3)}}};
  }
  if (label == "circle2d") {
    const double v = uniform(e, 0.01, 1.0);
    return {label, make_circle(uniform(e, 0.3, 3), 2, v), normal_vector(e, 2, std::sqrt(v)),
            VectorXd::Constant(1, uniform(e, -3, 3))};
  }
  if (label == "circleN") {
    const int n = n_between(3, 6);
    const double v = uniform(e, 0.01, 1.0);
    return {label, make_circle(uniform(e, 0.3, 3), n, v, random_rotation(e, n)),
            normal_vector(e, n, std::sqrt(v)), VectorXd::Constant(1, uniform(e, -3, 3))};
  }
  if (label == "nonlinreg-known-sigma") {
    const double s0 = uniform(e, 0.05, 1.0);
    const bool parabola = e() % 2 == 0;
    const MeanFunction eta = parabola ? parabola_mean(uniform(e, -2, 2))
                                      : circle_mean(uniform(e, 0.5, 2), n_between(2, 5));
    return {label, make_nonlinear_regression(eta, KnownSigma{s0}),
            normal_vector(e, eta.n, s0), VectorXd::Constant(1, uniform(e, -1.5, 1.5))};
  }
  // unknown sigma: circle mean in n = 3..5
  const int n = n_between(3, 5);
  const MeanFunction eta = circle_mean(uniform(e, 0.5, 2), n, random_rotation(e, n));
  return {label, make_nonlinear_regression(eta, UnknownSigma{}), normal_vector(e, n),
          VectorXd{{uniform(e, -3, 3), uniform(e, 0.05, 1.0)}}};
}

}  // namespace anc::testing
