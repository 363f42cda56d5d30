#pragma once

// Numerical checks of first-derivative and moderate-deviation ancillarity:
// the symmetric-in-theta quadrature identity and Monte Carlo order studies
// of contour-cell probabilities.

#include "anc/ancillary.hpp"
#include "anc/models.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace anc {

// --- quadrature identity ---------------------------------------------------

/// f(a; theta) = int phi(x - theta) phi(a - c x^2 / 2) dx over x in [-8, 8].
double curved_density(double a, double theta, double c);

struct QuadratureReport {
  double c = 0.0;
  double epsilon = 1e-4;
  std::vector<double> a_grid;
  std::vector<double> theta_grid;
  std::vector<double> derivative;  // d f / d theta at theta = 0, per a
  double max_abs_derivative = 0.0;
  double max_symmetry_gap = 0.0;  // max |f(a; t) - f(a; -t)| over both grids
};

QuadratureReport quadrature_first_derivative(double c,
                                             const std::vector<double>& theta_grid,
                                             const std::vector<double>& a_grid,
                                             double epsilon = 1e-4);

std::vector<double> linspace(double lo, double hi, int count);

// --- replicated runs --------------------------------------------------------

struct ReplicatedSpec {
  long reps = 0;
  int batches = 20;
  int stat_dim = 0;
  std::uint64_t stream = 0;
  /// Fills `stats` for replicate `rep`; the engine is seeded from
  /// (seed, stream, rep) only.
  std::function<void(long rep, std::mt19937_64& eng, Eigen::Ref<VectorXd> stats)>
      replicate;
};

struct ReplicatedResult {
  MatrixXd batch_means;  // batches x stat_dim
  std::vector<long> batch_sizes;
  VectorXd mean;
  VectorXd se;  // from the spread of batch means
  long reps = 0;
  std::uint64_t seed = 0;
};

class PartialResultsError : public Error {
 public:
  PartialResultsError(const std::string& what,
                      std::vector<std::pair<int, VectorXd>> done)
      : Error(ErrorKind::PartialResults, what), completed(std::move(done)) {}
  std::vector<std::pair<int, VectorXd>> completed;  // (batch index, mean)
};

ReplicatedResult run_replicated(const ReplicatedSpec& spec, int workers,
                                std::uint64_t seed);

// --- order study ------------------------------------------------------------

struct CellSpec {
  int cells_per_direction = 8;
  double spacing = 0.75;  // in units of the reference scale of y
  int transverse_dims = 1;
};

struct OrderStudySpec {
  std::string tag = "order-study";
  std::function<QuantileModel(int)> family;
  std::function<VectorXd(const QuantileModel&, int)> observed;
  std::vector<int> n_grid;
  CellSpec cells;
  std::vector<double> deltas = {0.5, 1.0, 2.0};
  long reps = 20000;
  int batches = 20;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct ArmStats {
  double sensitivity = 0.0;  // max over (delta, axis) of TV change / delta
  double se = 0.0;
  double best_delta = 0.0;
  std::vector<double> per_delta;     // max over axes, one per delta
  std::vector<double> per_delta_se;
  VectorXd cell_probs;               // at theta_hat0
  double max_zero_offset_z = 0.0;    // for delta = 0 arms, max |z| over cells
};

struct PerNStats {
  int n = 0;
  double n_scale = 1.0;
  ArmStats second_order;
  ArmStats tangent_only;
  bool inconclusive = false;
  double required_reps = 0.0;
};

struct SlopeFit {
  double slope = 0.0;
  double se = 0.0;
  double lower = 0.0;  // 95% band
  double upper = 0.0;
  bool defined = false;
};

struct VerificationReport {
  std::string tag;
  std::vector<int> n_grid;
  std::vector<double> deltas;
  std::vector<PerNStats> per_n;
  SlopeFit second_order_slope;
  SlopeFit tangent_only_slope;
  long reps = 0;
  int batches = 0;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> stream_seeds;  // one per n
  bool inconclusive = false;
  double required_reps = 0.0;
};

/// Weighted least squares of log(values) on log(n) with weights from the
/// relative standard errors; needs at least 3 points with positive values.
SlopeFit loglog_slope(const std::vector<double>& n,
                      const std::vector<double>& values,
                      const std::vector<double>& se);

VerificationReport ancillarity_order_study(const OrderStudySpec& spec);

}  // namespace anc
