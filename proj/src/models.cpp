#include "anc/models.hpp"

#include <numbers>
#include <sstream>

namespace anc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

MatrixXd resolve_rotation(const MatrixXd& rotation, int n) {
  if (rotation.size() == 0) return default_rotation(n);
  if (rotation.rows() != n || rotation.cols() != n)
    throw Error(ErrorKind::InvalidDimension, "rotation must be n x n");
  const double off =
      (rotation.transpose() * rotation - MatrixXd::Identity(n, n)).norm();
  if (off > 1e-10)
    throw Error(ErrorKind::InvalidParameter, "rotation must be orthonormal");
  return rotation;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(ErrorLaw law) {
  return law == ErrorLaw::Normal ? "normal" : "cauchy";
}

ErrorLaw error_law_from_string(std::string_view s) {
  if (s == "normal" || s == "Normal") return ErrorLaw::Normal;
  if (s == "cauchy" || s == "Cauchy") return ErrorLaw::Cauchy;
  throw Error(ErrorKind::Config, "unknown error law '" + std::string(s) + "'");
}

ReferenceLaw::ReferenceLaw(ErrorLaw law, double scale)
    : law_(law), scale_(scale) {
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw Error(ErrorKind::InvalidParameter, "reference scale must be > 0");
}

double ReferenceLaw::log_pdf(double x) const {
  const double z = x / scale_;
  if (law_ == ErrorLaw::Normal)
    return -0.5 * z * z - std::log(scale_) -
           0.5 * std::log(2.0 * std::numbers::pi);
  return -std::log(std::numbers::pi * scale_) - std::log1p(z * z);
}

double ReferenceLaw::dlog_pdf(double x) const {
  if (law_ == ErrorLaw::Normal) return -x / (scale_ * scale_);
  return -2.0 * x / (scale_ * scale_ + x * x);
}

double ReferenceLaw::cdf(double x) const {
  if (law_ == ErrorLaw::Normal)
    return 0.5 * std::erfc(-x / (scale_ * std::numbers::sqrt2));
  return 0.5 + std::atan(x / scale_) / std::numbers::pi;
}

// ---------------------------------------------------------------------------

std::string to_string(Family f) {
  switch (f) {
    case Family::LocationScale: return "location-scale";
    case Family::Circle2d: return "circle2d";
    case Family::CircleN: return "circleN";
    case Family::NonlinRegKnownSigma: return "nonlinreg-known-sigma";
    case Family::NonlinRegUnknownSigma: return "nonlinreg-unknown-sigma";
    case Family::CauchyLocationScale: return "cauchy-location-scale";
    case Family::InvertedCauchy: return "inverted-cauchy";
    case Family::Custom: return "custom";
  }
  return "custom";
}

Family family_from_string(std::string_view s) {
  for (Family f : {Family::LocationScale, Family::Circle2d, Family::CircleN,
                   Family::NonlinRegKnownSigma, Family::NonlinRegUnknownSigma,
                   Family::CauchyLocationScale, Family::InvertedCauchy})
    if (to_string(f) == s) return f;
  throw Error(ErrorKind::Config, "unknown family '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------

MatrixXd default_rotation(int n) { return MatrixXd::Identity(n, n); }

MeanFunction linear_mean(const MatrixXd& design) {
  if (design.rows() < 1 || design.cols() < 1)
    throw Error(ErrorKind::InvalidDimension, "empty design matrix");
  MeanFunction m;
  m.kind = "linear";
  m.n = static_cast<int>(design.rows());
  m.r = static_cast<int>(design.cols());
  m.value = [design](const VectorXd& t) -> VectorXd { return design * t; };
  m.jacobian = [design](const VectorXd&) -> MatrixXd { return design; };
  const int n = m.n, r = m.r;
  m.hessian = [n, r](const VectorXd&) { return CurvatureArray<double>(n, r); };
  m.search_box = MatrixXd(r, 2);
  m.search_box.col(0).setConstant(-10.0);
  m.search_box.col(1).setConstant(10.0);
  return m;
}

MeanFunction circle_mean(double rho, int n, const MatrixXd& rotation) {
  if (!(rho > 0.0))
    throw Error(ErrorKind::InvalidParameter, "circle radius must be > 0");
  if (n < 2) throw Error(ErrorKind::InvalidDimension, "circle needs n >= 2");
  const MatrixXd C = resolve_rotation(rotation, n);
  const VectorXd c1 = C.col(0), c2 = C.col(1);
  MeanFunction m;
  m.kind = "circle";
  m.n = n;
  m.r = 1;
  m.value = [=](const VectorXd& t) -> VectorXd {
    return rho * (std::cos(t(0)) * c1 + std::sin(t(0)) * c2);
  };
  m.jacobian = [=](const VectorXd& t) -> MatrixXd {
    return rho * (-std::sin(t(0)) * c1 + std::cos(t(0)) * c2);
  };
  m.hessian = [=](const VectorXd& t) {
    CurvatureArray<double> w(n, 1);
    w(0, 0) = -rho * (std::cos(t(0)) * c1 + std::sin(t(0)) * c2);
    return w;
  };
  m.search_box = MatrixXd(1, 2);
  m.search_box << -std::numbers::pi, std::numbers::pi;
  return m;
}

MeanFunction parabola_mean(double curvature) {
  MeanFunction m;
  m.kind = "parabola";
  m.n = 2;
  m.r = 1;
  m.value = [curvature](const VectorXd& t) -> VectorXd {
    return VectorXd{{t(0), 0.5 * curvature * t(0) * t(0)}};
  };
  m.jacobian = [curvature](const VectorXd& t) -> MatrixXd {
    return MatrixXd{{1.0}, {curvature * t(0)}};
  };
  m.hessian = [curvature](const VectorXd&) {
    CurvatureArray<double> w(2, 1);
    w(0, 0) = VectorXd{{0.0, curvature}};
    return w;
  };
  m.search_box = MatrixXd(1, 2);
  m.search_box << -5.0, 5.0;
  return m;
}

// ---------------------------------------------------------------------------

QuantileModel::QuantileModel(Spec spec) : s_(std::move(spec)) {
  if (s_.n < 1 || s_.p < 1)
    throw Error(ErrorKind::InvalidDimension, "model needs n >= 1 and p >= 1");
  if (static_cast<int>(s_.domain.size()) != s_.p)
    throw Error(ErrorKind::InvalidDimension,
                "param_domain must have one interval per parameter");
  if (s_.param_names.empty())
    for (int a = 0; a < s_.p; ++a)
      s_.param_names.push_back("theta" + std::to_string(a + 1));
  if (!s_.quantile || !s_.dtheta || !s_.d2theta || !s_.dx || !s_.cross)
    throw Error(ErrorKind::InvalidParameter,
                "model is missing a required derivative");
  if (!(s_.asymptotic_n > 0.0))
    throw Error(ErrorKind::InvalidParameter, "asymptotic_n must be > 0");
}

void QuantileModel::check_theta(const VectorXd& theta) const {
  if (theta.size() != s_.p)
    throw Error(ErrorKind::InvalidDimension,
                "parameter has dimension " + std::to_string(theta.size()) +
                    ", model expects " + std::to_string(s_.p));
}

VectorXd QuantileModel::quantile(const VectorXd& x,
                                 const VectorXd& theta) const {
  check_theta(theta);
  if (x.size() != s_.n)
    throw Error(ErrorKind::InvalidDimension, "reference vector has wrong size");
  return s_.quantile(x, theta);
}

MatrixXd QuantileModel::dquantile_dtheta(const VectorXd& x,
                                         const VectorXd& theta) const {
  check_theta(theta);
  return s_.dtheta(x, theta);
}

CurvatureArray<double> QuantileModel::d2quantile_dtheta2(
    const VectorXd& x, const VectorXd& theta) const {
  check_theta(theta);
  return s_.d2theta(x, theta);
}

VectorXd QuantileModel::dquantile_dx(const VectorXd& x,
                                     const VectorXd& theta) const {
  check_theta(theta);
  return s_.dx(x, theta);
}

VectorXd QuantileModel::d2quantile_dx2(const VectorXd& x,
                                       const VectorXd& theta) const {
  check_theta(theta);
  if (!s_.d2x) return VectorXd::Zero(s_.n);
  return s_.d2x(x, theta);
}

MatrixXd QuantileModel::cross_hessian(const VectorXd& x,
                                      const VectorXd& theta) const {
  check_theta(theta);
  return s_.cross(x, theta);
}

VectorXd QuantileModel::closed_inverse(const VectorXd& y,
                                       const VectorXd& theta) const {
  check_theta(theta);
  if (!s_.inverse)
    throw Error(ErrorKind::UnsupportedFamily, "model has no closed inverse");
  return s_.inverse(y, theta);
}

double QuantileModel::ref_log_density(const VectorXd& x) const {
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) s += s_.law.log_pdf(x(i));
  return s;
}

VectorXd QuantileModel::ref_log_density_grad(const VectorXd& x) const {
  VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) g(i) = s_.law.dlog_pdf(x(i));
  return g;
}

MatrixXd QuantileModel::ref_sampler(std::uint64_t seed, int count) const {
  if (count < 0) throw Error(ErrorKind::InvalidParameter, "negative count");
  MatrixXd out(count, s_.n);
  for (int k = 0; k < count; ++k) {
    std::mt19937_64 eng(stream_seed(seed, 0x5eed, static_cast<std::uint64_t>(k)));
    out.row(k) = sample_reference(eng).transpose();
  }
  return out;
}

bool QuantileModel::in_domain(const VectorXd& theta) const {
  if (theta.size() != s_.p) return false;
  for (int a = 0; a < s_.p; ++a)
    if (!s_.domain[a].contains(theta(a))) return false;
  return theta.allFinite();
}

// ---------------------------------------------------------------------------

QuantileModel make_location_scale(int n, ErrorLaw law) {
  if (n < 2)
    throw Error(ErrorKind::InvalidDimension,
                "location-scale MLE needs at least 2 coordinates");
  QuantileModel::Spec s;
  s.family = law == ErrorLaw::Normal ? Family::LocationScale
                                     : Family::CauchyLocationScale;
  s.n = n;
  s.p = 2;
  s.law = ReferenceLaw(law, 1.0);
  s.domain = {ParamInterval{}, ParamInterval{0.0, kInf}};
  s.param_names = {"mu", "sigma"};
  s.asymptotic_n = n;
  s.quantile = [](const VectorXd& z, const VectorXd& th) -> VectorXd {
    return (th(0) + th(1) * z.array()).matrix();
  };
  s.dtheta = [](const VectorXd& z, const VectorXd&) -> MatrixXd {
    MatrixXd V(z.size(), 2);
    V.col(0).setOnes();
    V.col(1) = z;
    return V;
  };
  s.d2theta = [n](const VectorXd&, const VectorXd&) {
    return CurvatureArray<double>(n, 2);
  };
  s.dx = [n](const VectorXd&, const VectorXd& th) -> VectorXd {
    return VectorXd::Constant(n, th(1));
  };
  s.cross = [n](const VectorXd&, const VectorXd&) -> MatrixXd {
    MatrixXd B = MatrixXd::Zero(n, 2);
    B.col(1).setOnes();
    return B;
  };
  s.inverse = [](const VectorXd& y, const VectorXd& th) -> VectorXd {
    return ((y.array() - th(0)) / th(1)).matrix();
  };
  return QuantileModel(std::move(s));
}

namespace {

QuantileModel regression_model(const MeanFunction& eta, SigmaMode mode,
                               Family family) {
  if (!eta.value || !eta.jacobian || !eta.hessian)
    throw Error(ErrorKind::InvalidParameter, "mean function is incomplete");
  const int n = eta.n, r = eta.r;
  if (n < 1 || r < 1)
    throw Error(ErrorKind::InvalidDimension, "mean function has empty shape");
  {
    const VectorXd probe = VectorXd::Zero(r);
    const VectorXd v = eta.value(probe);
    const MatrixXd J = eta.jacobian(probe);
    if (v.size() != n || J.rows() != n || J.cols() != r)
      throw Error(ErrorKind::InvalidDimension,
                  "mean function output does not match n = " +
                      std::to_string(n));
  }
  QuantileModel::Spec s;
  s.family = family;
  s.n = n;
  s.eta = eta;
  for (int a = 0; a < r; ++a) {
    s.domain.push_back(ParamInterval{});
    s.param_names.push_back(r == 1 ? "theta" : "theta" + std::to_string(a + 1));
  }

  if (const auto* known = std::get_if<KnownSigma>(&mode)) {
    if (!(known->sigma0 > 0.0))
      throw Error(ErrorKind::InvalidParameter, "sigma0 must be > 0");
    s.p = r;
    s.law = ReferenceLaw(ErrorLaw::Normal, known->sigma0);
    s.asymptotic_n = 1.0 / (known->sigma0 * known->sigma0);
    s.quantile = [eta](const VectorXd& x, const VectorXd& th) -> VectorXd {
      return eta.value(th) + x;
    };
    s.dtheta = [eta](const VectorXd&, const VectorXd& th) -> MatrixXd {
      return eta.jacobian(th);
    };
    s.d2theta = [eta](const VectorXd&, const VectorXd& th) {
      return eta.hessian(th);
    };
    s.dx = [n](const VectorXd&, const VectorXd&) -> VectorXd {
      return VectorXd::Ones(n);
    };
    s.cross = [n, r](const VectorXd&, const VectorXd&) -> MatrixXd {
      return MatrixXd::Zero(n, r);
    };
    s.inverse = [eta](const VectorXd& y, const VectorXd& th) -> VectorXd {
      return y - eta.value(th);
    };
    return QuantileModel(std::move(s));
  }

  // sigma unknown: theta = (theta_reg, sigma), y = eta(theta_reg) + sigma z
  s.p = r + 1;
  s.law = ReferenceLaw(ErrorLaw::Normal, 1.0);
  s.asymptotic_n = n;
  s.domain.push_back(ParamInterval{0.0, kInf});
  s.param_names.push_back("sigma");
  s.quantile = [eta, r](const VectorXd& z, const VectorXd& th) -> VectorXd {
    return eta.value(th.head(r)) + th(r) * z;
  };
  s.dtheta = [eta, n, r](const VectorXd& z, const VectorXd& th) -> MatrixXd {
    MatrixXd V(n, r + 1);
    V.leftCols(r) = eta.jacobian(th.head(r));
    V.col(r) = z;
    return V;
  };
  s.d2theta = [eta, n, r](const VectorXd&, const VectorXd& th) {
    const auto Wr = eta.hessian(th.head(r));
    CurvatureArray<double> W(n, r + 1);
    for (int a = 0; a < r; ++a)
      for (int b = 0; b < r; ++b) W(a, b) = Wr(a, b);
    return W;
  };
  s.dx = [n, r](const VectorXd&, const VectorXd& th) -> VectorXd {
    return VectorXd::Constant(n, th(r));
  };
  s.cross = [n, r](const VectorXd&, const VectorXd&) -> MatrixXd {
    MatrixXd B = MatrixXd::Zero(n, r + 1);
    B.col(r).setOnes();
    return B;
  };
  s.inverse = [eta, r](const VectorXd& y, const VectorXd& th) -> VectorXd {
    return (y - eta.value(th.head(r))) / th(r);
  };
  return QuantileModel(std::move(s));
}

}  // namespace

QuantileModel make_nonlinear_regression(const MeanFunction& eta,
                                        SigmaMode mode) {
  const Family f = std::holds_alternative<KnownSigma>(mode)
                       ? Family::NonlinRegKnownSigma
                       : Family::NonlinRegUnknownSigma;
  return regression_model(eta, mode, f);
}

QuantileModel make_circle(double rho, int n, double variance_scale,
                          const MatrixXd& rotation) {
  if (!(rho > 0.0))
    throw Error(ErrorKind::InvalidParameter, "circle radius must be > 0");
  if (n < 2) throw Error(ErrorKind::InvalidDimension, "circle needs n >= 2");
  if (!(variance_scale > 0.0))
    throw Error(ErrorKind::InvalidParameter, "variance_scale must be > 0");
  const MatrixXd C = resolve_rotation(rotation, n);
  const bool plain = n == 2 && C.isIdentity(0.0);
  QuantileModel::Spec s;
  s.family = plain ? Family::Circle2d : Family::CircleN;
  s.n = n;
  s.p = 1;
  s.law = ReferenceLaw(ErrorLaw::Normal, std::sqrt(variance_scale));
  s.domain = {ParamInterval{}};
  s.param_names = {"theta"};
  s.asymptotic_n = 1.0 / variance_scale;
  s.rho = rho;
  s.rotation = C;
  const MeanFunction eta = circle_mean(rho, n, C);
  s.eta = eta;
  s.quantile = [eta](const VectorXd& x, const VectorXd& th) -> VectorXd {
    return eta.value(th) + x;
  };
  s.dtheta = [eta](const VectorXd&, const VectorXd& th) -> MatrixXd {
    return eta.jacobian(th);
  };
  s.d2theta = [eta](const VectorXd&, const VectorXd& th) {
    return eta.hessian(th);
  };
  s.dx = [n](const VectorXd&, const VectorXd&) -> VectorXd {
    return VectorXd::Ones(n);
  };
  s.cross = [n](const VectorXd&, const VectorXd&) -> MatrixXd {
    return MatrixXd::Zero(n, 1);
  };
  s.inverse = [eta](const VectorXd& y, const VectorXd& th) -> VectorXd {
    return y - eta.value(th);
  };
  return QuantileModel(std::move(s));
}

// ---------------------------------------------------------------------------

VectorXd InvertedCauchy::map_parameters(const VectorXd& mu_sigma) {
  if (mu_sigma.size() != 2)
    throw Error(ErrorKind::InvalidDimension, "expected (mu, sigma)");
  const double mu = mu_sigma(0), sigma = mu_sigma(1);
  const double d = mu * mu + sigma * sigma;
  return VectorXd{{mu / d, sigma / d}};
}

bool InvertedCauchy::is_invertible(const VectorXd& y) {
  return (y.array() != 0.0).all() && y.allFinite();
}

std::optional<VectorXd> InvertedCauchy::map_point(const VectorXd& y) {
  if (!is_invertible(y)) return std::nullopt;
  return VectorXd(y.array().inverse());
}

InvertedCauchy invert_coordinates(const QuantileModel& model) {
  if (model.family() != Family::CauchyLocationScale)
    throw Error(ErrorKind::UnsupportedFamily,
                "coordinate inversion applies only to the Cauchy "
                "location-scale family, got " +
                    to_string(model.family()));
  auto spec_model = make_location_scale(model.n(), ErrorLaw::Cauchy);
  // same quantile form, relabelled as acting on the reciprocal coordinates
  QuantileModel::Spec s;
  s.family = Family::InvertedCauchy;
  s.n = model.n();
  s.p = 2;
  s.law = ReferenceLaw(ErrorLaw::Cauchy, 1.0);
  s.domain = spec_model.param_domain();
  s.param_names = {"mu_tilde", "sigma_tilde"};
  s.asymptotic_n = static_cast<double>(model.n());
  s.quantile = [m = spec_model](const VectorXd& x, const VectorXd& th) {
    return m.quantile(x, th);
  };
  s.dtheta = [m = spec_model](const VectorXd& x, const VectorXd& th) {
    return m.dquantile_dtheta(x, th);
  };
  s.d2theta = [m = spec_model](const VectorXd& x, const VectorXd& th) {
    return m.d2quantile_dtheta2(x, th);
  };
  s.dx = [m = spec_model](const VectorXd& x, const VectorXd& th) {
    return m.dquantile_dx(x, th);
  };
  s.cross = [m = spec_model](const VectorXd& x, const VectorXd& th) {
    return m.cross_hessian(x, th);
  };
  s.inverse = [m = spec_model](const VectorXd& y, const VectorXd& th) {
    return m.closed_inverse(y, th);
  };
  return InvertedCauchy{QuantileModel(std::move(s))};
}

}  // namespace anc
