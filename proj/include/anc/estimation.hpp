#pragma once

#include "anc/models.hpp"

#include <optional>
#include <string>
#include <vector>

namespace anc {

struct FitResult {
  VectorXd theta_hat;
  VectorXd y_fit;   // y(0; theta_hat): fitted value at the reference centre
  VectorXd x_hat;   // solves y0 = y(x; theta_hat)
  MatrixXd obs_info;
  double loglik_hat = 0.0;
  double score_norm = 0.0;
  bool converged = false;
  int iterations = 0;
  std::string method;  // "closed-form", "newton" or "golden+newton"
};

struct FitOptions {
  bool allow_closed_form = true;
  int max_iterations = 100;
  double score_tol = 1e-8;
  double step_tol = 1e-10;
};

/// Log-likelihood of theta at data y implied by the quantile model:
/// l(x) - sum_i log dy_i/dx_i with x = x(y; theta).
double log_likelihood(const QuantileModel& model, const VectorXd& y,
                      const VectorXd& theta);

/// Analytic score from the quantile derivatives.
VectorXd score(const QuantileModel& model, const VectorXd& y,
               const VectorXd& theta);

/// Negative Hessian of the log-likelihood (central differences of the
/// analytic score, symmetrized).
MatrixXd observed_information(const QuantileModel& model, const VectorXd& y,
                              const VectorXd& theta);

/// Coordinate-wise root of y0_i = y_i(x_i; theta). Uses the family's closed
/// inverse when present, otherwise bracketing plus safeguarded Newton.
VectorXd fitted_reference(const QuantileModel& model, const VectorXd& y0,
                          const VectorXd& theta_hat);

/// Default starting point: moments/quantiles for location-scale, the data
/// angle for circles, a coarse least-squares grid for regression.
VectorXd default_init(const QuantileModel& model, const VectorXd& y0);

FitResult fit_mle(const QuantileModel& model, const VectorXd& y0,
                  const std::optional<VectorXd>& init = std::nullopt,
                  const FitOptions& opts = {});

/// Linear change of parameter that gives identity observed information:
/// theta = theta_hat + from_standard * tau, with obs_info = L L'.
struct Standardization {
  MatrixXd chol_lower;     // L
  MatrixXd to_standard;    // L'
  MatrixXd from_standard;  // L^{-T}
  VectorXd param_scales;   // diagonal of from_standard
  double n_scale = 1.0;
  double coordinate_scale = 1.0;  // n_scale^{1/2}
};

Standardization standardize(const QuantileModel& model, const FitResult& fit);
Standardization standardize(const MatrixXd& obs_info, double n_scale);

}  // namespace anc
