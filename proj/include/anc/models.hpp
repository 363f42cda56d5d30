#pragma once

// Quantile models y_i = y_i(x_i; theta): each response coordinate is a
// monotone map of one reference coordinate, with analytic parameter
// derivatives. Built-in families cover location-scale, Normal-on-the-circle,
// nonlinear regression with known or unknown scale, and the Cauchy
// location-scale model together with its coordinate inversion.

#include "anc/common.hpp"
#include "anc/diffgeo.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace anc {

enum class ErrorLaw { Normal, Cauchy };

std::string to_string(ErrorLaw law);
ErrorLaw error_law_from_string(std::string_view s);

/// Law of a single reference coordinate: Normal(0, scale^2) or Cauchy(0, scale).
class ReferenceLaw {
 public:
  ReferenceLaw(ErrorLaw law = ErrorLaw::Normal, double scale = 1.0);

  ErrorLaw law() const { return law_; }
  double scale() const { return scale_; }

  double log_pdf(double x) const;
  double dlog_pdf(double x) const;
  double cdf(double x) const;

  template <typename Engine>
  double sample(Engine& eng) const {
    if (law_ == ErrorLaw::Normal) {
      std::normal_distribution<double> d(0.0, scale_);
      return d(eng);
    }
    std::cauchy_distribution<double> d(0.0, scale_);
    return d(eng);
  }

 private:
  ErrorLaw law_;
  double scale_;
};

struct ParamInterval {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();

  bool contains(double v) const { return v > lower && v < upper; }
  bool unbounded() const { return std::isinf(lower) && std::isinf(upper); }
};

enum class Family {
  LocationScale,
  Circle2d,
  CircleN,
  NonlinRegKnownSigma,
  NonlinRegUnknownSigma,
  CauchyLocationScale,
  InvertedCauchy,
  Custom,
};

std::string to_string(Family f);
Family family_from_string(std::string_view s);

/// Regression surface eta: R^r -> R^n with first and second derivatives.
struct MeanFunction {
  std::string kind;
  int r = 0;
  int n = 0;
  std::function<VectorXd(const VectorXd&)> value;
  std::function<MatrixXd(const VectorXd&)> jacobian;
  std::function<CurvatureArray<double>(const VectorXd&)> hessian;
  MatrixXd search_box;  // r x 2, bounds for the coarse initialization grid
};

MeanFunction linear_mean(const MatrixXd& design);
/// eta(t) = C (rho cos t, rho sin t, 0, ..., 0)'; C defaults to identity.
MeanFunction circle_mean(double rho, int n, const MatrixXd& rotation = {});
/// eta(t) = (t, curvature t^2 / 2)
MeanFunction parabola_mean(double curvature);

class QuantileModel {
 public:
  using VecFn = std::function<VectorXd(const VectorXd&, const VectorXd&)>;
  using MatFn = std::function<MatrixXd(const VectorXd&, const VectorXd&)>;
  using ArrFn =
      std::function<CurvatureArray<double>(const VectorXd&, const VectorXd&)>;

  /// Everything a family has to provide. `inverse` is optional: when set it
  /// returns x solving y = y(x; theta) in closed form.
  struct Spec {
    Family family = Family::Custom;
    int n = 0;
    int p = 0;
    ReferenceLaw law;
    std::vector<ParamInterval> domain;
    std::vector<std::string> param_names;
    double asymptotic_n = 1.0;
    VecFn quantile;
    MatFn dtheta;
    ArrFn d2theta;
    VecFn dx;
    VecFn d2x;  // may be empty: treated as zero
    MatFn cross;
    VecFn inverse;
    // family metadata
    double rho = 0.0;
    MatrixXd rotation;
    std::optional<MeanFunction> eta;
  };

  explicit QuantileModel(Spec spec);

  Family family() const { return s_.family; }
  int n() const { return s_.n; }
  int p() const { return s_.p; }
  const ReferenceLaw& law() const { return s_.law; }
  const std::vector<ParamInterval>& param_domain() const { return s_.domain; }
  const std::vector<std::string>& param_names() const { return s_.param_names; }
  /// The sample size driving the moderate-deviation scale n^{1/2}.
  double asymptotic_n() const { return s_.asymptotic_n; }
  double rho() const { return s_.rho; }
  const MatrixXd& rotation() const { return s_.rotation; }
  const std::optional<MeanFunction>& eta() const { return s_.eta; }

  VectorXd quantile(const VectorXd& x, const VectorXd& theta) const;
  MatrixXd dquantile_dtheta(const VectorXd& x, const VectorXd& theta) const;
  CurvatureArray<double> d2quantile_dtheta2(const VectorXd& x,
                                           const VectorXd& theta) const;
  VectorXd dquantile_dx(const VectorXd& x, const VectorXd& theta) const;
  VectorXd d2quantile_dx2(const VectorXd& x, const VectorXd& theta) const;
  /// n x p matrix of d^2 y_i / dx_i dtheta_a
  MatrixXd cross_hessian(const VectorXd& x, const VectorXd& theta) const;

  bool has_closed_inverse() const { return static_cast<bool>(s_.inverse); }
  VectorXd closed_inverse(const VectorXd& y, const VectorXd& theta) const;

  double ref_log_density(const VectorXd& x) const;
  VectorXd ref_log_density_grad(const VectorXd& x) const;
  /// count x n matrix of reference draws; row k depends only on (seed, k).
  MatrixXd ref_sampler(std::uint64_t seed, int count) const;

  template <typename Engine>
  VectorXd sample_reference(Engine& eng) const {
    VectorXd x(s_.n);
    for (int i = 0; i < s_.n; ++i) x(i) = s_.law.sample(eng);
    return x;
  }

  bool in_domain(const VectorXd& theta) const;

 private:
  void check_theta(const VectorXd& theta) const;
  Spec s_;
};

QuantileModel make_location_scale(int n, ErrorLaw law = ErrorLaw::Normal);
QuantileModel make_circle(double rho, int n = 2, double variance_scale = 1.0,
                          const MatrixXd& rotation = {});

struct KnownSigma {
  double sigma0;
};
struct UnknownSigma {};
using SigmaMode = std::variant<KnownSigma, UnknownSigma>;

QuantileModel make_nonlinear_regression(const MeanFunction& eta,
                                        SigmaMode mode);

/// Result of the coordinate inversion y~ = 1/y applied to a Cauchy
/// location-scale model.
struct InvertedCauchy {
  QuantileModel model;  // Cauchy location-scale acting on y~

  static VectorXd map_parameters(const VectorXd& mu_sigma);
  static bool is_invertible(const VectorXd& y);
  /// Coordinate-wise reciprocal; empty when some coordinate is zero.
  static std::optional<VectorXd> map_point(const VectorXd& y);
};

InvertedCauchy invert_coordinates(const QuantileModel& model);

/// Identity basis used by circle families built without a rotation.
MatrixXd default_rotation(int n);

}  // namespace anc
