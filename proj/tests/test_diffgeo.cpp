#include "anc/diffgeo.hpp"
#include "anc/estimation.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace anc;
using namespace anc::testing;

namespace {

CurvatureArray<double> random_array(Engine& e, int n, int p) {
  CurvatureArray<double> W(n, p);
  for (int a = 0; a < p; ++a)
    for (int b = a; b < p; ++b) {
      W(a, b) = normal_vector(e, n);
      W(b, a) = W(a, b);
    }
  return W;
}

}  // namespace

TEST(Frame, LocationScaleHasNoCurvature) {
  const auto m = make_location_scale(4);
  const auto f = fit_mle(m, VectorXd{{0.1, 1.5, -0.7, 2.2}});
  const auto fr = build_frame(m, f.x_hat, f.theta_hat);
  EXPECT_LT((fr.V.col(0) - VectorXd::Ones(4)).norm(), 1e-15);
  EXPECT_LT((fr.V.col(1) - f.x_hat).norm(), 1e-15);
  EXPECT_EQ(fr.W.matrix().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(fr.W_tilde.matrix().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Frame, CircleAtZero) {
  const auto m = make_circle(1.0, 2);
  const auto fr = build_frame(m, VectorXd{{0.2, 0.0}}, VectorXd::Zero(1));
  EXPECT_LT((fr.V.col(0) - VectorXd{{0.0, 1.0}}).norm(), 1e-15);
  EXPECT_LT((fr.W(0, 0) - VectorXd{{-1.0, 0.0}}).norm(), 1e-15);
  EXPECT_LT((fr.W_tilde(0, 0) - fr.W(0, 0)).norm(), 1e-15);
  EXPECT_LT(fr.H.matrix().norm(), 1e-15);
  const VectorXd t = VectorXd::Constant(1, 0.3);
  EXPECT_EQ(reparameterize(fr, t), t);
}

TEST(Frame, LinearRegressionIsFlat) {
  MatrixXd X(5, 2);
  X << 1, 0, 1, 1, 1, 2, 1, 3, 1, 4;
  const auto m = make_nonlinear_regression(linear_mean(X), KnownSigma{1.0});
  const auto fr = build_frame(m, VectorXd::Zero(5), VectorXd{{0.2, 0.1}});
  EXPECT_EQ(fr.H.matrix().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(fr.W_tilde.matrix().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Orthogonalize, AlreadyOrthogonal) {
  MatrixXd V(3, 1);
  V << 1, 0, 0;
  CurvatureArray<double> W(3, 1);
  W(0, 0) = VectorXd{{0.0, 2.0, -1.0}};
  const auto o = orthogonalize(V, W);
  EXPECT_EQ(o.H.matrix().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(o.W_tilde.matrix(), W.matrix());
}

TEST(Orthogonalize, PureTangentialCurvature) {
  Engine e(9);
  const MatrixXd V = MatrixXd::Random(6, 2);
  CurvatureArray<double> H0(2, 2);
  H0(0, 0) = VectorXd{{1.0, 2.0}};
  H0(0, 1) = H0(1, 0) = VectorXd{{-0.5, 0.3}};
  H0(1, 1) = VectorXd{{0.0, 4.0}};
  CurvatureArray<double> W(V * H0.matrix(), 2);
  const auto o = orthogonalize(V, W);
  EXPECT_LT((o.H.matrix() - H0.matrix()).norm(), 1e-12);
  EXPECT_LT(o.W_tilde.matrix().norm(), 1e-12);
}

TEST(Orthogonalize, NormalEquationsOracle) {
  Engine e(10);
  for (int k = 0; k < 200; ++k) {
    const int n = 5, p = 2;
    MatrixXd V(n, p);
    for (int a = 0; a < p; ++a) V.col(a) = normal_vector(e, n);
    const auto W = random_array(e, n, p);
    const auto o = orthogonalize(V, W);
    const MatrixXd G = V.transpose() * V;
    for (int a = 0; a < p; ++a)
      for (int b = 0; b < p; ++b) {
        const VectorXd h = G.llt().solve(V.transpose() * W(a, b));
        EXPECT_LT((o.H(a, b) - h).norm(), 1e-10 * (1 + h.norm()));
      }
    EXPECT_LT((W.matrix() - (o.W_tilde.matrix() + V * o.H.matrix())).cwiseAbs().maxCoeff(),
              1e-12 * (1 + W.matrix().cwiseAbs().maxCoeff()));
  }
}

TEST(Orthogonalize, RankDeficientTangent) {
  MatrixXd V(4, 2);
  V.col(0) = VectorXd{{1, 2, 3, 4}};
  V.col(1) = 2.0 * V.col(0);
  try {
    orthogonalize(V, CurvatureArray<double>(4, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateTangent);
    EXPECT_NE(std::string(e.what()).find("rank 1"), std::string::npos);
  }
}

TEST(Frame, RandomInvariants) {
  Engine e(12);
  for (int k = 0; k < 200; ++k) {
    const int n = std::uniform_int_distribution<int>(4, 50)(e);
    const int p = std::uniform_int_distribution<int>(1, 4)(e);
    MatrixXd V(n, p);
    for (int a = 0; a < p; ++a) V.col(a) = normal_vector(e, n);
    const auto fr = make_frame<double>(normal_vector(e, n), V, random_array(e, n, p));
    const double scale = 1 + fr.W.matrix().cwiseAbs().maxCoeff();
    EXPECT_LT((V.transpose() * fr.W_tilde.matrix()).cwiseAbs().maxCoeff(), 1e-10 * scale);
    EXPECT_LT((fr.P * fr.P - fr.P).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((fr.P - fr.P.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(Eigen::LLT<MatrixXd>(fr.gram).info(), Eigen::Success);
    EXPECT_LT(fr.W.asymmetry(), 1e-10);
    // reparameterization identity, with and without the n scale
    for (double ns : {1.0, 64.0}) {
      for (int r = 0; r < 5; ++r) {
        const VectorXd t = normal_vector(e, p, 2.0);
        const VectorXd lhs = expand(fr, t, ns);
        const VectorXd rhs = expand_orthogonal(fr, t, ns);
        EXPECT_LT((lhs - rhs).norm(), 1e-8 * (1 + t.squaredNorm()) * scale);
      }
    }
  }
}

TEST(Frame, ScalarReparameterizeFormula) {
  Engine e(13);
  MatrixXd V(3, 1);
  V << 1, 2, 0;
  CurvatureArray<double> W(3, 1);
  W(0, 0) = VectorXd{{0.3, 1.0, 2.0}};
  const auto fr = make_frame<double>(VectorXd::Zero(3), V, W);
  const double h = fr.H(0, 0)(0), t = 0.7, n = 25.0;
  EXPECT_NEAR(reparameterize<double>(fr, VectorXd::Constant(1, t), n)(0), t + h * t * t / (2 * 5.0),
              1e-15);
}

TEST(Frame, LinearReparameterizePreservesCurve) {
  Engine e(14);
  MatrixXd V(5, 2);
  V.col(0) = normal_vector(e, 5);
  V.col(1) = normal_vector(e, 5);
  const auto fr = make_frame<double>(normal_vector(e, 5), V, random_array(e, 5, 2));
  const MatrixXd A{{2.0, 0.5}, {-0.3, 1.0}};
  const auto g = linear_reparameterize(fr, A);
  const VectorXd s{{0.4, -0.9}};
  EXPECT_LT((expand(g, s) - expand(fr, VectorXd(A * s))).norm(), 1e-12);
}

class FrameFamily : public ::testing::TestWithParam<std::string> {};

TEST_P(FrameFamily, TangencyAndSecondOrderAccuracy) {
  Engine e(15);
  for (int k = 0; k < 200; ++k) {
    const auto inst = random_instance(GetParam(), e);
    const auto& m = inst.model;
    const auto fr = build_frame(m, inst.x, inst.theta);
    // Richardson: central differences at eps and eps/10 converge to V
    for (int a = 0; a < m.p(); ++a) {
      double errs[2];
      int j = 0;
      for (double eps : {1e-3, 1e-4}) {
        VectorXd tp = inst.theta, tm = inst.theta;
        tp(a) += eps;
        tm(a) -= eps;
        const VectorXd d = (m.quantile(inst.x, tp) - m.quantile(inst.x, tm)) / (2 * eps);
        errs[j++] = (d - fr.V.col(a)).norm();
      }
      EXPECT_LT(errs[1], 1e-6 * (1 + fr.V.col(a).norm()));
      if (errs[0] > 1e-9) EXPECT_LT(errs[1], 0.05 * errs[0]);
    }
    // remainder of the quadratic expansion shrinks like |t|^3
    if (fr.W.matrix().cwiseAbs().maxCoeff() == 0.0) continue;
    const VectorXd dir = normal_vector(e, m.p()).normalized();
    std::vector<double> lt, lr;
    for (double s : {1e-1, 3e-2, 1e-2, 3e-3}) {
      const VectorXd t = s * dir;
      if (!m.in_domain(inst.theta + t)) continue;
      const double r = (m.quantile(inst.x, inst.theta + t) - expand(fr, t)).norm();
      if (r < 1e-13) continue;
      lt.push_back(std::log(s));
      lr.push_back(std::log(r));
    }
    if (lt.size() < 3) continue;
    const double mx = std::accumulate(lt.begin(), lt.end(), 0.0) / lt.size();
    const double my = std::accumulate(lr.begin(), lr.end(), 0.0) / lr.size();
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < lt.size(); ++i) {
      sxy += (lt[i] - mx) * (lr[i] - my);
      sxx += (lt[i] - mx) * (lt[i] - mx);
    }
    EXPECT_GE(sxy / sxx, 2.7) << GetParam() << " instance " << k;
  }
}

INSTANTIATE_TEST_SUITE_P(AllFamilies, FrameFamily, ::testing::ValuesIn(family_labels()),
                         [](const auto& info) {
                           std::string s = info.param;
                           for (char& c : s)
                             if (c == '-') c = '_';
                           return s;
                         });

// --- scalar re-expression ---------------------------------------------------

TEST(Reexpress, ZeroCrossTerm) {
  const VectorXd v{{1.0, 2.0}}, w{{0.5, -1.0}};
  const auto r = reexpress_scalar<double>(v, VectorXd::Zero(2), w);
  EXPECT_EQ(r.c, VectorXd::Zero(2));
  EXPECT_EQ(r.w, w);
}

TEST(Reexpress, SingleCoordinate) {
  const auto r = reexpress_scalar<double>(VectorXd{{2.0}}, VectorXd{{3.0}}, VectorXd{{1.0}});
  EXPECT_DOUBLE_EQ(r.c(0), 1.5);
  EXPECT_DOUBLE_EQ(r.a(0), -1.5);
}

TEST(Reexpress, DropsIneffectiveCoordinates) {
  const auto r = reexpress_scalar<double>(VectorXd{{0.0, 1.0}}, VectorXd{{1.0, 1.0}},
                                          VectorXd{{0.0, 0.0}});
  ASSERT_EQ(r.dropped.size(), 1u);
  EXPECT_EQ(r.dropped[0], 0);
  try {
    reexpress_scalar<double>(VectorXd::Zero(2), VectorXd::Ones(2), VectorXd::Zero(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateModel);
  }
}

TEST(Reexpress, PolynomialExpansionOracle) {
  // y = x + v th + (2 x b th + w th^2) / (2 sqrt n); with y~ = y - c y^2/(2 sqrt n)
  // and x~ = x + a x^2/(2 sqrt n) the mixed x-th derivative of y~ at the
  // origin vanishes and the th^2 coefficient becomes the recorded w.
  Engine e(16);
  for (int k = 0; k < 200; ++k) {
    const VectorXd v{{uniform(e, 0.5, 2), uniform(e, -2, -0.5), uniform(e, 0.5, 2)}};
    const VectorXd b = normal_vector(e, 3), w = normal_vector(e, 3);
    const double n = 100.0, sq = std::sqrt(n);
    const auto r = reexpress_scalar<double>(v, b, w, n);
    EXPECT_LE(r.residual_cross_norm, 1e-10 * (r.input_cross_norm + 1));
    for (int i = 0; i < 3; ++i) {
      auto ytilde = [&](double xt, double th) {
        // invert x~ = x + a x^2 / (2 sqrt n) for the branch near 0
        const double A = r.a(i) / (2 * sq);
        const double x = A == 0.0 ? xt : (-1.0 + std::sqrt(1.0 + 4 * A * xt)) / (2 * A);
        const double y = x + v(i) * th + (2 * x * b(i) * th + w(i) * th * th) / (2 * sq);
        return y - r.c(i) * y * y / (2 * sq);
      };
      const double h = 1e-3;
      const double mixed = (ytilde(h, h) - ytilde(h, -h) - ytilde(-h, h) + ytilde(-h, -h)) / (4 * h * h);
      const double xx = (ytilde(h, 0) - 2 * ytilde(0, 0) + ytilde(-h, 0)) / (h * h);
      const double tt = (ytilde(0, h) - 2 * ytilde(0, 0) + ytilde(0, -h)) / (h * h);
      // the input mixed term is b / sqrt n; only differencing error remains
      EXPECT_LT(std::abs(mixed), 1e-5) << "input " << b(i) / sq;
      EXPECT_LT(std::abs(xx), 1e-5);
      EXPECT_NEAR(tt * sq, r.w(i), 1e-4 * (1 + std::abs(r.w(i))));
    }
  }
}
