#pragma once

// Taylor frames of p-dimensional contours y(t) in R^n: tangent array V,
// curvature array W, first fundamental form V'V, the tangent projection P,
// regression coefficients H and the orthogonalized curvature W - VH.

#include "anc/common.hpp"

#include <cmath>
#include <sstream>
#include <vector>

namespace anc {

class QuantileModel;

/// A p x p array of vectors in R^dim, stored column-wise as a
/// dim x (p*p) matrix; entry (a, b) lives in column a*p + b.
template <typename Scalar>
class CurvatureArray {
 public:
  using Index = Eigen::Index;

  CurvatureArray() = default;
  CurvatureArray(Index dim, Index params)
      : params_(params), data_(Mat<Scalar>::Zero(dim, params * params)) {}
  explicit CurvatureArray(Mat<Scalar> data, Index params)
      : params_(params), data_(std::move(data)) {}

  Index dim() const { return data_.rows(); }
  Index params() const { return params_; }

  auto operator()(Index a, Index b) { return data_.col(a * params_ + b); }
  auto operator()(Index a, Index b) const {
    return data_.col(a * params_ + b);
  }

  const Mat<Scalar>& matrix() const { return data_; }
  Mat<Scalar>& matrix() { return data_; }

  /// sum_{a,b} t_a t_b w_ab
  Vec<Scalar> contract(const Vec<Scalar>& t) const {
    return data_ * outer_flat(t);
  }

  /// p x p matrix with entries r' w_ab
  Mat<Scalar> contract_residual(const Vec<Scalar>& r) const {
    const Vec<Scalar> flat = data_.transpose() * r;
    Mat<Scalar> out(params_, params_);
    for (Index a = 0; a < params_; ++a)
      for (Index b = 0; b < params_; ++b) out(a, b) = flat(a * params_ + b);
    return out;
  }

  Scalar asymmetry() const {
    Scalar worst = 0;
    for (Index a = 0; a < params_; ++a)
      for (Index b = a + 1; b < params_; ++b)
        worst = std::max(worst, ((*this)(a, b) - (*this)(b, a))
                                    .template lpNorm<Eigen::Infinity>());
    return worst;
  }

  void symmetrize() {
    for (Index a = 0; a < params_; ++a)
      for (Index b = a + 1; b < params_; ++b) {
        Vec<Scalar> avg = ((*this)(a, b) + (*this)(b, a)) / Scalar(2);
        (*this)(a, b) = avg;
        (*this)(b, a) = avg;
      }
  }

  static Vec<Scalar> outer_flat(const Vec<Scalar>& t) {
    const Index p = t.size();
    Vec<Scalar> k(p * p);
    for (Index a = 0; a < p; ++a)
      for (Index b = 0; b < p; ++b) k(a * p + b) = t(a) * t(b);
    return k;
  }

 private:
  Index params_ = 0;
  Mat<Scalar> data_;
};

template <typename Scalar>
struct TaylorFrame {
  Vec<Scalar> base_point;
  Mat<Scalar> V;            // n x p tangent vectors
  CurvatureArray<Scalar> W; // curvature vectors w_ab
  Mat<Scalar> gram;         // V'V
  Mat<Scalar> P;            // V (V'V)^-1 V'
  CurvatureArray<Scalar> H; // h_ab = (V'V)^-1 V' w_ab, each a p-vector
  CurvatureArray<Scalar> W_tilde;

  Eigen::Index dim() const { return V.rows(); }
  Eigen::Index params() const { return V.cols(); }
};

template <typename Scalar>
struct RankReport {
  Eigen::Index rank = 0;
  Vec<Scalar> singular_values;
  Mat<Scalar> null_directions;  // parameter-space directions with ~zero tangent
};

/// Rank of V relative to its largest singular value.
template <typename Scalar>
RankReport<Scalar> tangent_rank(const Mat<Scalar>& V,
                                Scalar rel_tol = Scalar(1e-10)) {
  Eigen::JacobiSVD<Mat<Scalar>> svd(V, Eigen::ComputeFullV);
  RankReport<Scalar> r;
  r.singular_values = svd.singularValues();
  const Scalar largest = r.singular_values.size() ? r.singular_values(0) : 0;
  for (Eigen::Index i = 0; i < r.singular_values.size(); ++i)
    if (r.singular_values(i) > rel_tol * largest && largest > 0) ++r.rank;
  const Eigen::Index p = V.cols();
  r.null_directions = svd.matrixV().rightCols(p - r.rank);
  return r;
}

template <typename Scalar>
void require_full_rank(const Mat<Scalar>& V) {
  const auto r = tangent_rank<Scalar>(V);
  if (r.rank < V.cols()) {
    std::ostringstream os;
    os << "tangent array has rank " << r.rank << " < " << V.cols()
       << "; null directions (columns):\n"
       << r.null_directions;
    throw Error(ErrorKind::DegenerateTangent, os.str());
  }
}

template <typename Scalar>
struct Orthogonalized {
  CurvatureArray<Scalar> H;
  CurvatureArray<Scalar> W_tilde;
};

/// Regress each curvature vector on span(V); returns coefficients and
/// residuals, with W == W_tilde + V H by construction.
template <typename Scalar>
Orthogonalized<Scalar> orthogonalize(const Mat<Scalar>& V,
                                     const CurvatureArray<Scalar>& W) {
  if (V.rows() != W.dim() || V.cols() != W.params())
    throw Error(ErrorKind::InvalidDimension,
                "orthogonalize: V and W shapes disagree");
  require_full_rank(V);
  const Eigen::Index p = V.cols();
  Eigen::ColPivHouseholderQR<Mat<Scalar>> qr(V);
  Mat<Scalar> coeffs = qr.solve(W.matrix());
  // one refinement sweep keeps V' W_tilde at rounding level for
  // ill-scaled tangents
  Mat<Scalar> resid = W.matrix() - V * coeffs;
  coeffs += qr.solve(resid);
  Orthogonalized<Scalar> out{CurvatureArray<Scalar>(coeffs, p),
                             CurvatureArray<Scalar>(W.matrix() - V * coeffs, p)};
  return out;
}

template <typename Scalar>
TaylorFrame<Scalar> make_frame(Vec<Scalar> base, Mat<Scalar> V,
                               CurvatureArray<Scalar> W) {
  TaylorFrame<Scalar> f;
  f.base_point = std::move(base);
  f.V = std::move(V);
  f.W = std::move(W);
  auto ortho = orthogonalize(f.V, f.W);
  f.gram = f.V.transpose() * f.V;
  f.P = f.V * f.gram.ldlt().solve(f.V.transpose());
  f.H = std::move(ortho.H);
  f.W_tilde = std::move(ortho.W_tilde);
  return f;
}

/// y0 + V t + t'W t / (2 sqrt(n_scale))
template <typename Scalar>
Vec<Scalar> expand(const TaylorFrame<Scalar>& f, const Vec<Scalar>& t,
                   Scalar n_scale = Scalar(1)) {
  return f.base_point + f.V * t + f.W.contract(t) / (Scalar(2) * std::sqrt(n_scale));
}

/// t~ = t + t'H t / (2 sqrt(n_scale)); with it
/// y0 + V t~ + t'W~t / (2 sqrt(n_scale)) reproduces expand(f, t, n_scale).
template <typename Scalar>
Vec<Scalar> reparameterize(const TaylorFrame<Scalar>& f, const Vec<Scalar>& t,
                           Scalar n_scale = Scalar(1)) {
  return t + f.H.contract(t) / (Scalar(2) * std::sqrt(n_scale));
}

template <typename Scalar>
Vec<Scalar> expand_orthogonal(const TaylorFrame<Scalar>& f,
                              const Vec<Scalar>& t,
                              Scalar n_scale = Scalar(1)) {
  const Vec<Scalar> tt = reparameterize(f, t, n_scale);
  return f.base_point + f.V * tt +
         f.W_tilde.contract(t) / (Scalar(2) * std::sqrt(n_scale));
}

/// Frame of the same contour under the linear change t = A s.
template <typename Scalar>
TaylorFrame<Scalar> linear_reparameterize(const TaylorFrame<Scalar>& f,
                                          const Mat<Scalar>& A) {
  const Eigen::Index p = f.params(), q = A.cols();
  if (A.rows() != p)
    throw Error(ErrorKind::InvalidDimension,
                "linear_reparameterize: A must have p rows");
  CurvatureArray<Scalar> W(f.dim(), q);
  for (Eigen::Index a = 0; a < q; ++a)
    for (Eigen::Index b = 0; b < q; ++b) {
      Vec<Scalar> acc = Vec<Scalar>::Zero(f.dim());
      for (Eigen::Index g = 0; g < p; ++g)
        for (Eigen::Index d = 0; d < p; ++d)
          acc += A(g, a) * A(d, b) * f.W(g, d);
      W(a, b) = acc;
    }
  return make_frame<Scalar>(f.base_point, f.V * A, std::move(W));
}

// ---------------------------------------------------------------------------
// Scalar-parameter re-expression removing the x-theta cross term.

template <typename Scalar>
struct ReexpressionRecord {
  Vec<Scalar> a;  // reference re-expression x~ = x + a x^2 / (2 sqrt n)
  Vec<Scalar> c;  // response re-expression, c v = b
  Vec<Scalar> w;  // theta^2 coefficient after absorbing the adjustment
  std::vector<Eigen::Index> dropped;
  Scalar n_scale = 1;
  Scalar input_cross_norm = 0;
  Scalar residual_cross_norm = 0;
};

/// Per coordinate y = x + v th + (2 x b th + w th^2) / (2 sqrt n). Writing
/// y = y~ + c y~^2 / (2 sqrt n) with c = b / v cancels the x th term; the x^2
/// term is folded into x (a = -c) and the th^2 coefficient becomes w - b v.
/// Coordinates with v = 0 do not move with the parameter and are dropped.
template <typename Scalar>
ReexpressionRecord<Scalar> reexpress_scalar(const Vec<Scalar>& v,
                                            const Vec<Scalar>& b,
                                            const Vec<Scalar>& w,
                                            Scalar n_scale = Scalar(1),
                                            Scalar zero_tol = Scalar(1e-12)) {
  const Eigen::Index n = v.size();
  if (b.size() != n || w.size() != n)
    throw Error(ErrorKind::InvalidDimension,
                "reexpress_scalar: v, b, w must have equal length");
  ReexpressionRecord<Scalar> r;
  r.n_scale = n_scale;
  r.a = Vec<Scalar>::Zero(n);
  r.c = Vec<Scalar>::Zero(n);
  r.w = w;
  r.input_cross_norm = b.norm();
  Scalar resid2 = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(v(i)) < zero_tol) {
      r.dropped.push_back(i);
      continue;
    }
    r.c(i) = b(i) / v(i);
    r.a(i) = -r.c(i);
    r.w(i) = w(i) - r.c(i) * v(i) * v(i);
    const Scalar left = b(i) - r.c(i) * v(i);
    resid2 += left * left;
  }
  if (static_cast<Eigen::Index>(r.dropped.size()) == n)
    throw Error(ErrorKind::DegenerateModel,
                "reexpress_scalar: no coordinate responds to the parameter");
  r.residual_cross_norm = std::sqrt(resid2);
  return r;
}

// ---------------------------------------------------------------------------

/// Frame of the trajectory t -> y(x_hat; theta_hat + t) at t = 0.
TaylorFrame<double> build_frame(const QuantileModel& model,
                                const VectorXd& x_hat,
                                const VectorXd& theta_hat);

}  // namespace anc
