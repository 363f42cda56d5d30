#include "anc/ancillary.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace anc {

namespace {

bool is_location_scale(Family f) {
  return f == Family::LocationScale || f == Family::CauchyLocationScale ||
         f == Family::InvertedCauchy;
}

bool is_circle(Family f) { return f == Family::Circle2d || f == Family::CircleN; }

// All points of {-h, ..., h}^p with `points` nodes per axis, row-major in the
// last axis.
MatrixXd standard_grid(int p, const GridSpec& g) {
  if (g.points < 1 || !(g.half_width >= 0.0))
    throw Error(ErrorKind::InvalidParameter, "grid needs points >= 1 and half_width >= 0");
  long m = 1;
  for (int a = 0; a < p; ++a) {
    m *= g.points;
    if (m > 5'000'000)
      throw Error(ErrorKind::InvalidParameter, "grid too large");
  }
  const double step = g.points > 1 ? 2.0 * g.half_width / (g.points - 1) : 0.0;
  MatrixXd u(m, p);
  for (long k = 0; k < m; ++k) {
    long rem = k;
    for (int a = p - 1; a >= 0; --a) {
      const long idx = rem % g.points;
      rem /= g.points;
      u(k, a) = g.points > 1 ? -g.half_width + step * idx : 0.0;
    }
  }
  return u;
}

}  // namespace

ContourCloud build_contour(const QuantileModel& model, const VectorXd& y0,
                           const GridSpec& grid) {
  return build_contour(model, y0, fit_mle(model, y0), grid);
}

ContourCloud build_contour(const QuantileModel& model, const VectorXd& y0,
                           const FitResult& fit, const GridSpec& grid) {
  if (y0.size() != model.n())
    throw Error(ErrorKind::InvalidDimension, "data vector has wrong size");
  ContourCloud c;
  c.base_point = y0;
  c.fit = fit;
  c.standardization = standardize(model, fit);
  c.frame = build_frame(model, fit.x_hat, fit.theta_hat);
  require_full_rank(c.frame.V);
  c.spec = grid;

  const MatrixXd u = standard_grid(model.p(), grid);
  std::vector<Eigen::Index> keep;
  MatrixXd t = u * c.standardization.from_standard.transpose();
  for (Eigen::Index k = 0; k < u.rows(); ++k) {
    const VectorXd th = fit.theta_hat + t.row(k).transpose();
    if (model.in_domain(th)) keep.push_back(k);
  }
  c.grid.resize(keep.size(), model.p());
  c.offsets.resize(keep.size(), model.p());
  c.points.resize(keep.size(), model.n());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < keep.size(); ++j) {
    const Eigen::Index k = keep[j];
    c.grid.row(j) = u.row(k);
    c.offsets.row(j) = t.row(k);
    const VectorXd th = fit.theta_hat + t.row(k).transpose();
    c.points.row(j) = model.quantile(fit.x_hat, th).transpose();
    const double r = u.row(k).norm();
    if (r < best) {
      best = r;
      c.origin = static_cast<Eigen::Index>(j);
    }
  }
  return c;
}

// ---------------------------------------------------------------------------

Projection project_to_trajectory(const QuantileModel& model,
                                 const VectorXd& x_hat, VectorXd theta,
                                 const VectorXd& y) {
  if (!model.in_domain(theta))
    throw Error(ErrorKind::InvalidParameter, "start outside parameter domain");
  auto residual = [&](const VectorXd& th) -> VectorXd {
    return y - model.quantile(x_hat, th);
  };
  VectorXd r = residual(theta);
  double f = r.squaredNorm();
  for (int it = 0; it < 100; ++it) {
    const MatrixXd J = model.dquantile_dtheta(x_hat, theta);
    const VectorXd g = J.transpose() * r;
    // Newton on |r|^2 / 2 when the full Hessian is positive definite,
    // Gauss-Newton otherwise.
    MatrixXd H = J.transpose() * J;
    H -= model.d2quantile_dtheta2(x_hat, theta).contract_residual(r);
    VectorXd step;
    Eigen::LLT<MatrixXd> llt(H);
    if (llt.info() == Eigen::Success) step = llt.solve(g);
    else step = J.colPivHouseholderQr().solve(r);

    double lambda = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls, lambda *= 0.5) {
      const VectorXd cand = theta + lambda * step;
      if (!model.in_domain(cand)) continue;
      const VectorXd rc = residual(cand);
      const double fc = rc.squaredNorm();
      if (fc <= f) {
        theta = cand;
        r = rc;
        f = fc;
        moved = true;
        break;
      }
    }
    if (!moved || (lambda * step).norm() <= 1e-14 * (1.0 + theta.norm())) break;
  }
  return {std::sqrt(f), theta, y - r};
}

Projection project_to_contour(const QuantileModel& model,
                              const ContourCloud& cloud, const VectorXd& y) {
  if (cloud.size() == 0)
    throw Error(ErrorKind::InvalidDimension, "empty contour cloud");
  Eigen::Index best;
  (cloud.points.rowwise() - y.transpose()).rowwise().squaredNorm().minCoeff(&best);
  const VectorXd start =
      cloud.fit.theta_hat + cloud.offsets.row(best).transpose();
  return project_to_trajectory(model, cloud.fit.x_hat, start, y);
}

double distance_to_tangent_plane(const TaylorFrame<double>& frame,
                                 const VectorXd& y) {
  const VectorXd d = y - frame.base_point;
  return (d - frame.P * d).norm();
}

// ---------------------------------------------------------------------------

PartitionReport partition_check(const QuantileModel& model, const VectorXd& y0,
                                const VectorXd& t1_standard,
                                const GridSpec& grid, double cap) {
  if (t1_standard.size() != model.p())
    throw Error(ErrorKind::InvalidDimension, "t1 must have one entry per parameter");
  if (!(t1_standard.norm() <= cap))
    throw Error(ErrorKind::InvalidParameter,
                "t1 exceeds the moderate-deviation cap");
  const ContourCloud c0 = build_contour(model, y0, grid);

  PartitionReport rep;
  rep.t1_standard = t1_standard;
  rep.t1_offset = c0.standardization.from_standard * t1_standard;
  rep.theta_hat0 = c0.fit.theta_hat;
  rep.x_hat0 = c0.fit.x_hat;
  const VectorXd theta1 = rep.theta_hat0 + rep.t1_offset;
  if (!model.in_domain(theta1))
    throw Error(ErrorKind::InvalidParameter, "theta_hat0 + t1 leaves the domain");
  rep.y1 = model.quantile(rep.x_hat0, theta1);

  const FitResult f1 = fit_mle(model, rep.y1, theta1);
  const ContourCloud c1 = build_contour(model, rep.y1, f1, grid);
  rep.theta_hat1 = f1.theta_hat;
  rep.x_hat1 = f1.x_hat;
  rep.mle_shift = (rep.theta_hat1 - theta1).norm();
  rep.n_scale = model.asymptotic_n();
  rep.points = c1.size();

  double worst = 0.0;
  for (Eigen::Index k = 0; k < c1.size(); ++k) {
    const VectorXd y = c1.points.row(k).transpose();
    worst = std::max(worst, project_to_contour(model, c0, y).distance);
  }
  rep.discrepancy = worst;
  rep.discrepancy_standardized = worst * std::sqrt(rep.n_scale);
  return rep;
}

// ---------------------------------------------------------------------------

ExactAncillaryComparator::ExactAncillaryComparator(const QuantileModel& model)
    : family_(model.family()) {
  if (!supports(model))
    throw Error(ErrorKind::UnsupportedFamily,
                "no exact ancillary for family " + to_string(family_));
  circle_ = is_circle(family_);
  if (circle_) rotation_ = model.rotation();
}

bool ExactAncillaryComparator::supports(const QuantileModel& model) {
  return is_location_scale(model.family()) || is_circle(model.family());
}

VectorXd ExactAncillaryComparator::label(const VectorXd& y) const {
  if (circle_) {
    VectorXd yt = rotation_.transpose() * y;
    VectorXd out = yt;
    out(0) = yt.head(2).norm();
    out.segment(1, out.size() - 2) = yt.tail(yt.size() - 2);
    out.conservativeResize(yt.size() - 1);
    return out;
  }
  const double m = y.mean();
  const double s = std::sqrt((y.array() - m).square().mean());
  if (!(s > 0.0))
    throw Error(ErrorKind::DegenerateModel, "configuration undefined: zero spread");
  return (y.array() - m) / s;
}

ExactComparison compare_exact(const QuantileModel& model,
                              const ContourCloud& cloud) {
  const ExactAncillaryComparator cmp(model);
  ExactComparison out;
  out.family = model.family();
  out.label_at_base = cmp.label(cloud.base_point);
  out.points = cloud.size();
  for (Eigen::Index k = 0; k < cloud.size(); ++k) {
    const VectorXd l = cmp.label(cloud.points.row(k).transpose());
    out.label_spread =
        std::max(out.label_spread, (l - out.label_at_base).cwiseAbs().maxCoeff());
  }
  if (is_circle(model.family())) {
    out.approx_radius = model.rho();
    out.exact_radius = out.label_at_base(0);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// In rotated coordinates the pivot is ((r - rho) u, y~3, ..., y~n) with
// u = y~_{12}/r, so its Jacobian has eigenvalue 1 along u and 1 - rho/r
// across it.
struct CirclePivot {
  MatrixXd C;
  double rho;

  VectorXd value(const VectorXd& y) const {
    VectorXd yt = C.transpose() * y;
    const double r = yt.head(2).norm();
    if (!(r > 0.0))
      throw Error(ErrorKind::SingularInformation, "point at the circle centre");
    yt.head(2) *= (r - rho) / r;
    return yt;
  }
  MatrixXd jacobian(const VectorXd& y) const {
    const VectorXd yt = C.transpose() * y;
    const Eigen::Vector2d v = yt.head(2);
    const double r = v.norm();
    MatrixXd Jt = MatrixXd::Identity(y.size(), y.size());
    Jt.topLeftCorner(2, 2) = (1.0 - rho / r) * Eigen::Matrix2d::Identity() +
                             (rho / (r * r * r)) * v * v.transpose();
    return Jt * C.transpose();
  }
};

}  // namespace

SeveriniReport severini_pivot_check(const QuantileModel& model,
                                    const VectorXd& y0, int starts,
                                    double start_radius, std::uint64_t seed) {
  if (!is_circle(model.family()))
    throw Error(ErrorKind::UnsupportedFamily,
                "pivot check is implemented for circle families");
  if (model.n() < 3)
    throw Error(ErrorKind::InvalidDimension, "pivot check needs n >= 3");
  if (y0.size() != model.n())
    throw Error(ErrorKind::InvalidDimension, "data vector has wrong size");
  if (starts < 1) throw Error(ErrorKind::InvalidParameter, "starts must be >= 1");

  const CirclePivot piv{model.rotation(), model.rho()};
  SeveriniReport rep;
  rep.y0 = y0;
  rep.rho = model.rho();
  const VectorXd yt0 = piv.C.transpose() * y0;
  rep.r0 = yt0.head(2).norm();
  rep.theta_hat0 = std::atan2(yt0(1), yt0(0));
  rep.pivot_observed = piv.value(y0);
  rep.degenerate = std::abs(rep.r0 - rep.rho) <= 1e-12 * rep.rho;

  Eigen::JacobiSVD<MatrixXd> svd(piv.jacobian(y0));
  const VectorXd sv = svd.singularValues();
  rep.jacobian_rank = (sv.array() > 1e-10 * sv(0)).count();
  rep.locally_unique = rep.jacobian_rank == model.n();

  std::mt19937_64 eng(seed);
  std::normal_distribution<double> nd;
  auto solve = [&](VectorXd y) -> std::optional<VectorXd> {
    for (int it = 0; it < 60; ++it) {
      VectorXd res;
      try {
        res = piv.value(y) - rep.pivot_observed;
      } catch (const Error&) {
        return std::nullopt;
      }
      if (res.norm() < 1e-13) return y;
      y -= piv.jacobian(y).completeOrthogonalDecomposition().solve(res);
    }
    if ((piv.value(y) - rep.pivot_observed).norm() < 1e-10) return y;
    return std::nullopt;
  };
  for (int s = 0; s < starts; ++s) {
    VectorXd y = y0;
    if (s > 0)
      for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += start_radius * nd(eng);
    const auto sol = solve(y);
    if (!sol) continue;
    const bool dup = std::any_of(
        rep.local_solutions.begin(), rep.local_solutions.end(),
        [&](const VectorXd& q) { return (q - *sol).norm() < 1e-8; });
    if (!dup) rep.local_solutions.push_back(*sol);
  }
  if (!rep.local_solutions.empty()) {
    for (const auto& q : rep.local_solutions)
      rep.recovery_error = std::max(rep.recovery_error, (q - y0).norm());
    rep.recovers_y0 = rep.recovery_error < 1e-8;
  }

  // Far from y0 the same pivot value is also reached on the other side of
  // the circle, at radius 2 rho - r0.
  if (!rep.degenerate && rep.r0 < 2.0 * rep.rho) {
    VectorXd yt = yt0;
    yt.head(2) = -(2.0 * rep.rho - rep.r0) / rep.r0 * yt0.head(2);
    const VectorXd ym = piv.C * yt;
    if ((piv.value(ym) - rep.pivot_observed).norm() < 1e-10)
      rep.mirror_solution = ym;
  }
  return rep;
}

// ---------------------------------------------------------------------------

namespace {

struct UnionFind {
  std::vector<long> parent;
  explicit UnionFind(long n) : parent(n) {
    std::iota(parent.begin(), parent.end(), 0L);
  }
  long find(long a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(long a, long b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

int sign(double v) { return (v > 0) - (v < 0); }

}  // namespace

CauchyInversionReport cauchy_inversion_demo(const CauchyInversionSpec& spec) {
  if (spec.point_tilde.size() != 2 || spec.window_lo.size() != 2 ||
      spec.window_hi.size() != 2)
    throw Error(ErrorKind::InvalidDimension, "inversion demo is two-dimensional");
  if (spec.resolution < 2 || spec.line_samples < 2)
    throw Error(ErrorKind::InvalidParameter, "resolution and line_samples must be >= 2");
  if (!(spec.window_hi.array() > spec.window_lo.array()).all())
    throw Error(ErrorKind::InvalidParameter, "empty raster window");
  // In y~ the contour through y~0 is {m 1 + s z0, s > 0}: for n = 2 the open
  // half-plane on the side of the diagonal that contains y~0.
  const int side = sign(spec.point_tilde(1) - spec.point_tilde(0));
  if (side == 0)
    throw Error(ErrorKind::DegenerateModel, "point lies on the diagonal; no contour");

  CauchyInversionReport rep;
  const int R = spec.resolution;
  const double hx = (spec.window_hi(0) - spec.window_lo(0)) / R;
  const double hy = (spec.window_hi(1) - spec.window_lo(1)) / R;
  auto centre = [&](int i, int j) {
    return Eigen::Vector2d(spec.window_lo(0) + (i + 0.5) * hx,
                           spec.window_lo(1) + (j + 0.5) * hy);
  };
  std::vector<char> member(static_cast<std::size_t>(R) * R, 0);
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < R; ++j) {
      const Eigen::Vector2d y = centre(i, j);
      const auto yt = InvertedCauchy::map_point(y);
      if (!yt) {
        ++rep.undefined_pixels;
        continue;
      }
      if (sign((*yt)(1) - (*yt)(0)) == side) {
        member[static_cast<std::size_t>(i) * R + j] = 1;
        ++rep.member_pixels;
      }
    }

  UnionFind uf(static_cast<long>(R) * R);
  const int di[4] = {1, 0, 1, 1}, dj[4] = {0, 1, 1, -1};
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < R; ++j) {
      const long a = static_cast<long>(i) * R + j;
      if (!member[a]) continue;
      const Eigen::Vector2d ya = centre(i, j);
      for (int e = 0; e < 4; ++e) {
        const int i2 = i + di[e], j2 = j + dj[e];
        if (i2 < 0 || i2 >= R || j2 < 0 || j2 >= R) continue;
        const long b = static_cast<long>(i2) * R + j2;
        if (!member[b]) continue;
        const Eigen::Vector2d yb = centre(i2, j2);
        if (sign(ya(0)) != sign(yb(0)) || sign(ya(1)) != sign(yb(1))) continue;
        uf.unite(a, b);
      }
    }
  std::vector<long> count(static_cast<std::size_t>(R) * R, 0);
  for (long a = 0; a < static_cast<long>(R) * R; ++a)
    if (member[a]) ++count[uf.find(a)];
  for (long c : count)
    if (c > 0) rep.component_sizes.push_back(c);
  std::sort(rep.component_sizes.rbegin(), rep.component_sizes.rend());
  rep.component_count = static_cast<int>(rep.component_sizes.size());

  // Marked line y~2 = y~1 + offset; the points where it meets an axis of y~
  // have no preimage and split it.
  std::vector<double> s(spec.line_samples);
  for (int k = 0; k < spec.line_samples; ++k)
    s[k] = -spec.line_half_length +
           2.0 * spec.line_half_length * k / (spec.line_samples - 1);
  for (double z : {0.0, -spec.line_offset})
    if (std::abs(z) <= spec.line_half_length) s.push_back(z);
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  bool in_run = false;
  for (double t1 : s) {
    const VectorXd yt{{t1, t1 + spec.line_offset}};
    if (!InvertedCauchy::map_point(yt)) {
      rep.excluded_line_points.push_back(yt);
      in_run = false;
      continue;
    }
    if (!in_run) ++rep.line_segment_count;
    in_run = true;
  }
  return rep;
}

}  // namespace anc
