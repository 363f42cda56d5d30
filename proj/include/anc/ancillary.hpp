#pragma once

// Observed ancillary contours A0 = { y(x_hat0; theta) : theta near theta_hat0 }
// and the checks built on them.

#include "anc/diffgeo.hpp"
#include "anc/estimation.hpp"
#include "anc/models.hpp"

#include <optional>
#include <string>
#include <vector>

namespace anc {

/// Box of standardized (identity observed information) parameter offsets.
struct GridSpec {
  double half_width = 3.0;
  int points = 41;  // per parameter axis, odd so that 0 is a grid node
};

struct ContourCloud {
  VectorXd base_point;  // y0
  FitResult fit;
  Standardization standardization;
  MatrixXd grid;     // m x p standardized offsets
  MatrixXd offsets;  // m x p parameter offsets t = theta - theta_hat
  MatrixXd points;   // m x n, y(x_hat; theta_hat + t)
  Eigen::Index origin = 0;
  TaylorFrame<double> frame;
  GridSpec spec;

  Eigen::Index size() const { return points.rows(); }
};

ContourCloud build_contour(const QuantileModel& model, const VectorXd& y0,
                           const GridSpec& grid = {});
ContourCloud build_contour(const QuantileModel& model, const VectorXd& y0,
                           const FitResult& fit, const GridSpec& grid);

struct Projection {
  double distance = 0.0;
  VectorXd theta;
  VectorXd point;
};

/// Nearest point of the full trajectory { y(x_hat; theta) } to y by
/// Gauss-Newton in theta, staying inside the parameter domain.
Projection project_to_trajectory(const QuantileModel& model,
                                 const VectorXd& x_hat, VectorXd theta_init,
                                 const VectorXd& y);
/// Same, started from the nearest sample of the cloud.
Projection project_to_contour(const QuantileModel& model,
                              const ContourCloud& cloud, const VectorXd& y);
/// Distance to the affine tangent plane base + span(V).
double distance_to_tangent_plane(const TaylorFrame<double>& frame,
                                 const VectorXd& y);

struct PartitionReport {
  VectorXd t1_standard;
  VectorXd t1_offset;
  VectorXd y1;
  VectorXd theta_hat0;
  VectorXd theta_hat1;
  VectorXd x_hat0;
  VectorXd x_hat1;
  double mle_shift = 0.0;  // |theta_hat(y1) - (theta_hat0 + t1)|
  double discrepancy = 0.0;
  double discrepancy_standardized = 0.0;  // times n_scale^{1/2}
  double n_scale = 1.0;
  Eigen::Index points = 0;
};

/// Rebuilds the contour from a point y1 of A(y0) and measures how far it
/// strays from A(y0). t1 is in standardized units, |t1| <= cap.
PartitionReport partition_check(const QuantileModel& model, const VectorXd& y0,
                                const VectorXd& t1_standard,
                                const GridSpec& grid = {}, double cap = 4.0);

// ---------------------------------------------------------------------------

/// Exact ancillary labels for families that have one: the configuration
/// (y - mean)/sd for location-scale, (r, y~3, ..., y~n) for circles.
class ExactAncillaryComparator {
 public:
  explicit ExactAncillaryComparator(const QuantileModel& model);

  static bool supports(const QuantileModel& model);
  VectorXd label(const VectorXd& y) const;
  Family family() const { return family_; }

 private:
  Family family_;
  bool circle_ = false;
  MatrixXd rotation_;
};

struct ExactComparison {
  Family family = Family::Custom;
  double label_spread = 0.0;  // max |label(y_k) - label(y0)| over the cloud
  VectorXd label_at_base;
  std::optional<double> approx_radius;  // rho
  std::optional<double> exact_radius;   // r0
  Eigen::Index points = 0;
};

ExactComparison compare_exact(const QuantileModel& model,
                              const ContourCloud& cloud);

// ---------------------------------------------------------------------------

struct SeveriniReport {
  VectorXd y0;
  double theta_hat0 = 0.0;
  double r0 = 0.0;
  double rho = 0.0;
  VectorXd pivot_observed;  // C'(y0 - eta(theta_hat0))
  std::vector<VectorXd> local_solutions;
  bool recovers_y0 = false;
  double recovery_error = 0.0;
  Eigen::Index jacobian_rank = 0;
  bool locally_unique = false;
  bool degenerate = false;  // r0 == rho: level set is a whole circle
  std::optional<VectorXd> mirror_solution;
};

/// Sets the plug-in pivot y - eta(theta_hat(y)) equal to its observed value
/// and solves for y.
SeveriniReport severini_pivot_check(const QuantileModel& model,
                                    const VectorXd& y0, int starts = 16,
                                    double start_radius = 0.25,
                                    std::uint64_t seed = 2010);

// ---------------------------------------------------------------------------

struct CauchyInversionSpec {
  VectorXd point_tilde = VectorXd{{-1.0, 1.5}};  // data in inverted coordinates
  VectorXd window_lo = VectorXd{{-4.0, -4.0}};    // raster window, original y
  VectorXd window_hi = VectorXd{{4.0, 4.0}};
  int resolution = 400;
  double line_offset = 1.0;  // marked line y~2 = y~1 + offset
  double line_half_length = 6.0;
  int line_samples = 1201;
};

struct CauchyInversionReport {
  int component_count = 0;
  std::vector<long> component_sizes;
  long member_pixels = 0;
  long undefined_pixels = 0;
  int line_segment_count = 0;
  std::vector<VectorXd> excluded_line_points;
};

/// Back-maps the location-scale contour of the inverted Cauchy model
/// (a half-plane in y~) to the original y = 1/y~ coordinates and counts
/// connected components on a raster; pixels whose straight link would cross
/// a zero coordinate are not linked.
CauchyInversionReport cauchy_inversion_demo(const CauchyInversionSpec& spec = {});

}  // namespace anc
