#include "anc/montecarlo.hpp"

#include "anc/quadrature.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <thread>

namespace anc {

// --- quadrature identity ---------------------------------------------------

namespace {

double phi(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

}  // namespace

double curved_density(double a, double theta, double c) {
  if (!std::isfinite(a) || !std::isfinite(theta) || !std::isfinite(c))
    throw Error(ErrorKind::InvalidParameter, "curved_density needs finite arguments");
  const auto r = integrate_adaptive(
      [&](double x) { return phi(x - theta) * phi(a - 0.5 * c * x * x); }, -8.0,
      8.0, 1e-14);
  if (!r.converged)
    throw Error(ErrorKind::NumericalFailure,
                "adaptive quadrature did not reach tolerance (error estimate " +
                    std::to_string(r.error) + ")");
  return r.value;
}

std::vector<double> linspace(double lo, double hi, int count) {
  if (count < 1) return {};
  if (count == 1) return {lo};
  std::vector<double> v(count);
  for (int k = 0; k < count; ++k) v[k] = lo + (hi - lo) * k / (count - 1);
  return v;
}

QuadratureReport quadrature_first_derivative(double c,
                                             const std::vector<double>& theta_grid,
                                             const std::vector<double>& a_grid,
                                             double epsilon) {
  if (!std::isfinite(c)) throw Error(ErrorKind::InvalidParameter, "c must be finite");
  if (!(epsilon > 0.0)) throw Error(ErrorKind::InvalidParameter, "epsilon must be > 0");
  if (a_grid.empty()) throw Error(ErrorKind::InvalidParameter, "empty a-grid");
  for (double v : a_grid)
    if (!std::isfinite(v)) throw Error(ErrorKind::InvalidParameter, "a-grid not finite");
  for (double v : theta_grid)
    if (!std::isfinite(v)) throw Error(ErrorKind::InvalidParameter, "theta-grid not finite");

  QuadratureReport rep;
  rep.c = c;
  rep.epsilon = epsilon;
  rep.a_grid = a_grid;
  rep.theta_grid = theta_grid;
  for (double a : a_grid) {
    const double d = (curved_density(a, epsilon, c) - curved_density(a, -epsilon, c)) /
                     (2.0 * epsilon);
    rep.derivative.push_back(d);
    rep.max_abs_derivative = std::max(rep.max_abs_derivative, std::abs(d));
    for (double t : theta_grid)
      rep.max_symmetry_gap =
          std::max(rep.max_symmetry_gap,
                   std::abs(curved_density(a, t, c) - curved_density(a, -t, c)));
  }
  return rep;
}

// --- replicated runs --------------------------------------------------------

ReplicatedResult run_replicated(const ReplicatedSpec& spec, int workers,
                                std::uint64_t seed) {
  if (spec.reps <= 0) throw Error(ErrorKind::EmptyStudy, "no replicates requested");
  if (spec.stat_dim <= 0 || !spec.replicate)
    throw Error(ErrorKind::InvalidParameter, "study needs a replicate function and stat_dim > 0");
  if (spec.batches < 1) throw Error(ErrorKind::InvalidParameter, "batches must be >= 1");
  const int B = static_cast<int>(std::min<long>(spec.batches, spec.reps));
  const int W = std::clamp(workers, 1, B);

  MatrixXd means(B, spec.stat_dim);
  std::vector<long> sizes(B);
  std::vector<char> ok(B, 0);
  std::vector<std::string> errors(B);
  std::atomic<int> next{0};

  auto work = [&] {
    VectorXd stats(spec.stat_dim), sum(spec.stat_dim);
    std::mt19937_64 eng;
    for (int b; (b = next.fetch_add(1)) < B;) {
      const long lo = spec.reps * b / B, hi = spec.reps * (b + 1) / B;
      try {
        sum.setZero();
        for (long r = lo; r < hi; ++r) {
          stats.setZero();
          eng.seed(stream_seed(seed, spec.stream, static_cast<std::uint64_t>(r)));
          spec.replicate(r, eng, stats);
          sum += stats;
        }
        means.row(b) = (sum / static_cast<double>(hi - lo)).transpose();
        sizes[b] = hi - lo;
        ok[b] = 1;
      } catch (const std::exception& e) {
        errors[b] = e.what();
      }
    }
  };
  if (W == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < W; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  std::vector<std::pair<int, VectorXd>> done;
  std::string first_error;
  for (int b = 0; b < B; ++b) {
    if (ok[b]) done.emplace_back(b, means.row(b).transpose());
    else if (first_error.empty()) first_error = errors[b];
  }
  if (static_cast<int>(done.size()) != B)
    throw PartialResultsError(std::to_string(B - done.size()) + " of " +
                                  std::to_string(B) + " batches failed: " + first_error,
                              std::move(done));

  ReplicatedResult res;
  res.batch_means = means;
  res.batch_sizes = sizes;
  res.reps = spec.reps;
  res.seed = seed;
  res.mean = VectorXd::Zero(spec.stat_dim);
  for (int b = 0; b < B; ++b)
    res.mean += static_cast<double>(sizes[b]) * means.row(b).transpose();
  res.mean /= static_cast<double>(spec.reps);
  res.se = VectorXd::Zero(spec.stat_dim);
  if (B > 1) {
    const VectorXd bm = means.colwise().mean().transpose();
    for (int b = 0; b < B; ++b)
      res.se += (means.row(b).transpose() - bm).cwiseAbs2();
    res.se = (res.se / (B - 1.0) / B).cwiseSqrt();
  }
  return res;
}

// --- order study ------------------------------------------------------------

SlopeFit loglog_slope(const std::vector<double>& n,
                      const std::vector<double>& values,
                      const std::vector<double>& se) {
  SlopeFit out;
  const std::size_t m = n.size();
  if (m < 3 || values.size() != m || se.size() != m) return out;
  bool weighted = true;
  for (std::size_t i = 0; i < m; ++i) {
    if (!(values[i] > 0.0) || !(n[i] > 0.0)) return out;
    if (!(se[i] > 0.0)) weighted = false;
  }
  std::vector<double> x(m), y(m), w(m, 1.0);
  for (std::size_t i = 0; i < m; ++i) {
    x[i] = std::log(n[i]);
    y[i] = std::log(values[i]);
    if (weighted) w[i] = std::pow(values[i] / se[i], 2);  // 1 / var(log value)
  }
  double sw = 0, sx = 0, sy = 0;
  for (std::size_t i = 0; i < m; ++i) {
    sw += w[i];
    sx += w[i] * x[i];
    sy += w[i] * y[i];
  }
  const double xb = sx / sw, yb = sy / sw;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < m; ++i) {
    sxx += w[i] * (x[i] - xb) * (x[i] - xb);
    sxy += w[i] * (x[i] - xb) * (y[i] - yb);
  }
  if (!(sxx > 0.0)) return out;
  out.slope = sxy / sxx;
  if (weighted) {
    out.se = std::sqrt(1.0 / sxx);
  } else {
    double rss = 0;
    for (std::size_t i = 0; i < m; ++i) {
      const double e = y[i] - yb - out.slope * (x[i] - xb);
      rss += e * e;
    }
    out.se = std::sqrt(rss / (m - 2.0) / sxx);
  }
  out.lower = out.slope - 1.96 * out.se;
  out.upper = out.slope + 1.96 * out.se;
  out.defined = true;
  return out;
}

namespace {

struct Cell {
  VectorXd x_hat, theta_hat, base;
  MatrixXd pinv;  // p x n, maps y - base to a starting offset in theta
  TaylorFrame<double> frame;
};

// Arm layout: 0 is theta_hat0; then for each delta, axis and sign (+, -).
int arm_index(std::size_t di, int axis, int sign_minus, int p) {
  return 1 + (static_cast<int>(di) * p + axis) * 2 + sign_minus;
}

ArmStats summarize_arm(const ReplicatedResult& res, int which, int cells,
                       const std::vector<double>& deltas, int p) {
  const int B = static_cast<int>(res.batch_means.rows());
  auto col = [&](int arm, int k) { return (arm * cells + k) * 2 + which; };
  ArmStats st;
  st.cell_probs.resize(cells);
  for (int k = 0; k < cells; ++k) st.cell_probs(k) = res.mean(col(0, k));

  double best = -1.0;
  for (std::size_t di = 0; di < deltas.size(); ++di) {
    const double delta = deltas[di];
    const double scale = delta > 0.0 ? 1.0 / delta : 1.0;
    double best_axis = -1.0, best_axis_se = 0.0;
    for (int j = 0; j < p; ++j) {
      const int ap = arm_index(di, j, 0, p), am = arm_index(di, j, 1, p);
      // Total-variation change and its linearization with frozen signs.
      double s = 0.0;
      VectorXd sgn_p(cells), sgn_m(cells);
      for (int k = 0; k < cells; ++k) {
        const double dp = res.mean(col(ap, k)) - res.mean(col(0, k));
        const double dm = res.mean(col(am, k)) - res.mean(col(0, k));
        s += std::abs(dp) + std::abs(dm);
        sgn_p(k) = (dp > 0) - (dp < 0);
        sgn_m(k) = (dm > 0) - (dm < 0);
        if (delta == 0.0) {
          for (int a : {ap, am}) {
            VectorXd diff(B);
            for (int b = 0; b < B; ++b)
              diff(b) = res.batch_means(b, col(a, k)) - res.batch_means(b, col(0, k));
            const double m = diff.mean();
            const double se =
                B > 1 ? std::sqrt((diff.array() - m).square().sum() / (B - 1.0) / B) : 0.0;
            const double z = se > 0.0 ? std::abs(m) / se : (m == 0.0 ? 0.0 : INFINITY);
            st.max_zero_offset_z = std::max(st.max_zero_offset_z, z);
          }
        }
      }
      s *= 0.25 * scale;
      VectorXd lin(B);
      for (int b = 0; b < B; ++b) {
        double v = 0.0;
        for (int k = 0; k < cells; ++k) {
          const double base = res.batch_means(b, col(0, k));
          v += sgn_p(k) * (res.batch_means(b, col(ap, k)) - base) +
               sgn_m(k) * (res.batch_means(b, col(am, k)) - base);
        }
        lin(b) = 0.25 * scale * v;
      }
      const double lm = lin.mean();
      const double se =
          B > 1 ? std::sqrt((lin.array() - lm).square().sum() / (B - 1.0) / B) : 0.0;
      if (s > best_axis) {
        best_axis = s;
        best_axis_se = se;
      }
    }
    st.per_delta.push_back(best_axis);
    st.per_delta_se.push_back(best_axis_se);
    if (delta > 0.0 && best_axis > best) {
      best = best_axis;
      st.sensitivity = best_axis;
      st.se = best_axis_se;
      st.best_delta = delta;
    }
  }
  return st;
}

}  // namespace

VerificationReport ancillarity_order_study(const OrderStudySpec& spec) {
  if (!spec.family || !spec.observed)
    throw Error(ErrorKind::InvalidParameter, "order study needs a family generator and data");
  if (spec.n_grid.empty()) throw Error(ErrorKind::InvalidParameter, "empty n-grid");
  if (spec.deltas.empty()) throw Error(ErrorKind::InvalidParameter, "no theta offsets");
  if (spec.cells.cells_per_direction < 2 || spec.cells.transverse_dims < 1 ||
      !(spec.cells.spacing > 0.0))
    throw Error(ErrorKind::InvalidParameter, "cell spec needs >= 2 cells, >= 1 direction, spacing > 0");
  if (spec.reps <= 0) throw Error(ErrorKind::EmptyStudy, "no replicates requested");

  VerificationReport rep;
  rep.tag = spec.tag;
  rep.n_grid = spec.n_grid;
  rep.deltas = spec.deltas;
  rep.reps = spec.reps;
  rep.batches = static_cast<int>(std::min<long>(spec.batches, spec.reps));
  rep.seed = spec.seed;

  for (std::size_t ni = 0; ni < spec.n_grid.size(); ++ni) {
    const int nn = spec.n_grid[ni];
    const QuantileModel model = spec.family(nn);
    const VectorXd y0 = spec.observed(model, nn);
    const FitResult fit0 = fit_mle(model, y0);
    const Standardization st = standardize(model, fit0);
    const auto frame0 = build_frame(model, fit0.x_hat, fit0.theta_hat);
    const int n = model.n(), p = model.p();
    const int td = spec.cells.transverse_dims;
    if (p + td > n)
      throw Error(ErrorKind::InvalidParameter, "more transverse directions than the model has");

    // Transverse directions: complement of the tangent span at y0.
    Eigen::HouseholderQR<MatrixXd> qr(frame0.V);
    const MatrixXd Q = qr.householderQ() * MatrixXd::Identity(n, n);
    MatrixXd E = Q.middleCols(p, td);
    for (int j = 0; j < td; ++j) {
      Eigen::Index imax;
      E.col(j).cwiseAbs().maxCoeff(&imax);
      if (E(imax, j) < 0) E.col(j) *= -1.0;
    }
    const double ds =
        model.law().scale() * model.dquantile_dx(fit0.x_hat, fit0.theta_hat).cwiseAbs().mean();

    // Lattice of contours indexed by their fitted reference values.
    const int K = spec.cells.cells_per_direction;
    int cells = 1;
    for (int j = 0; j < td; ++j) cells *= K;
    std::vector<Cell> lattice;
    for (int idx = 0; idx < cells; ++idx) {
      VectorXd y = y0;
      int rem = idx;
      for (int j = 0; j < td; ++j) {
        const int k = rem % K;
        rem /= K;
        y += (k - 0.5 * (K - 1)) * spec.cells.spacing * ds * E.col(j);
      }
      const FitResult f = fit_mle(model, y, fit0.theta_hat);
      Cell c;
      c.x_hat = f.x_hat;
      c.theta_hat = f.theta_hat;
      c.frame = build_frame(model, f.x_hat, f.theta_hat);
      c.base = c.frame.base_point;
      c.pinv = c.frame.V.completeOrthogonalDecomposition().pseudoInverse();
      lattice.push_back(std::move(c));
    }

    std::vector<VectorXd> arms{fit0.theta_hat};
    for (double d : spec.deltas)
      for (int j = 0; j < p; ++j)
        for (double s : {1.0, -1.0}) {
          VectorXd th = fit0.theta_hat + s * d * st.from_standard.col(j);
          if (!model.in_domain(th))
            throw Error(ErrorKind::InvalidParameter, "theta offset leaves the parameter domain");
          arms.push_back(std::move(th));
        }

    ReplicatedSpec rs;
    rs.reps = spec.reps;
    rs.batches = spec.batches;
    rs.stream = ni;
    rs.stat_dim = static_cast<int>(arms.size()) * cells * 2;
    rs.replicate = [&](long, std::mt19937_64& eng, Eigen::Ref<VectorXd> stats) {
      const VectorXd x = model.sample_reference(eng);
      for (std::size_t a = 0; a < arms.size(); ++a) {
        const VectorXd y = model.quantile(x, arms[a]);
        int best2 = 0, best1 = 0;
        double d2 = INFINITY, d1 = INFINITY;
        for (int k = 0; k < cells; ++k) {
          const Cell& c = lattice[k];
          VectorXd start = c.theta_hat + c.pinv * (y - c.base);
          if (!model.in_domain(start)) start = c.theta_hat;
          const double dk = project_to_trajectory(model, c.x_hat, start, y).distance;
          if (dk < d2) {
            d2 = dk;
            best2 = k;
          }
          const double tk = distance_to_tangent_plane(c.frame, y);
          if (tk < d1) {
            d1 = tk;
            best1 = k;
          }
        }
        stats((static_cast<int>(a) * cells + best2) * 2 + 0) = 1.0;
        stats((static_cast<int>(a) * cells + best1) * 2 + 1) = 1.0;
      }
    };
    const ReplicatedResult res = run_replicated(rs, spec.workers, spec.seed);
    rep.stream_seeds.push_back(stream_seed(spec.seed, ni, 0));

    PerNStats pn;
    pn.n = nn;
    pn.n_scale = model.asymptotic_n();
    pn.second_order = summarize_arm(res, 0, cells, spec.deltas, p);
    pn.tangent_only = summarize_arm(res, 1, cells, spec.deltas, p);
    for (const ArmStats* a : {&pn.second_order, &pn.tangent_only}) {
      if (a->sensitivity < 2.0 * a->se) {
        pn.inconclusive = true;
        const double need = a->sensitivity > 0.0
                                 ? spec.reps * std::pow(3.0 * a->se / a->sensitivity, 2)
                                 : std::numeric_limits<double>::infinity();
        pn.required_reps = std::max(pn.required_reps, std::ceil(need));
      }
    }
    rep.inconclusive = rep.inconclusive || pn.inconclusive;
    rep.required_reps = std::max(rep.required_reps, pn.required_reps);
    rep.per_n.push_back(std::move(pn));
  }

  std::vector<double> ns, s2, e2, s1, e1;
  for (const auto& pn : rep.per_n) {
    ns.push_back(pn.n_scale);
    s2.push_back(pn.second_order.sensitivity);
    e2.push_back(pn.second_order.se);
    s1.push_back(pn.tangent_only.sensitivity);
    e1.push_back(pn.tangent_only.se);
  }
  rep.second_order_slope = loglog_slope(ns, s2, e2);
  rep.tangent_only_slope = loglog_slope(ns, s1, e1);
  return rep;
}

}  // namespace anc
