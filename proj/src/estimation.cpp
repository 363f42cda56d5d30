#include "anc/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace anc {

namespace {

// Internal unconstrained coordinates: log for half-lines, logit for
// bounded intervals, identity otherwise.
struct DomainMap {
  std::vector<ParamInterval> dom;

  VectorXd to_internal(const VectorXd& th) const {
    VectorXd phi(th.size());
    for (Eigen::Index a = 0; a < th.size(); ++a) {
      const auto& d = dom[a];
      const bool lo = std::isfinite(d.lower), hi = std::isfinite(d.upper);
      if (lo && hi)
        phi(a) = std::log((th(a) - d.lower) / (d.upper - th(a)));
      else if (lo)
        phi(a) = std::log(th(a) - d.lower);
      else if (hi)
        phi(a) = -std::log(d.upper - th(a));
      else
        phi(a) = th(a);
    }
    return phi;
  }

  VectorXd to_natural(const VectorXd& phi) const {
    VectorXd th(phi.size());
    for (Eigen::Index a = 0; a < phi.size(); ++a) {
      const auto& d = dom[a];
      const bool lo = std::isfinite(d.lower), hi = std::isfinite(d.upper);
      if (lo && hi)
        th(a) = d.lower + (d.upper - d.lower) / (1.0 + std::exp(-phi(a)));
      else if (lo)
        th(a) = d.lower + std::exp(phi(a));
      else if (hi)
        th(a) = d.upper - std::exp(-phi(a));
      else
        th(a) = phi(a);
    }
    return th;
  }

  // d theta / d phi (diagonal)
  VectorXd jacobian(const VectorXd& th) const {
    VectorXd j(th.size());
    for (Eigen::Index a = 0; a < th.size(); ++a) {
      const auto& d = dom[a];
      const bool lo = std::isfinite(d.lower), hi = std::isfinite(d.upper);
      if (lo && hi)
        j(a) = (th(a) - d.lower) * (d.upper - th(a)) / (d.upper - d.lower);
      else if (lo)
        j(a) = th(a) - d.lower;
      else if (hi)
        j(a) = d.upper - th(a);
      else
        j(a) = 1.0;
    }
    return j;
  }
};

double safe_loglik(const QuantileModel& m, const VectorXd& y,
                   const VectorXd& th) {
  if (!m.in_domain(th)) return -std::numeric_limits<double>::infinity();
  try {
    const double v = log_likelihood(m, y, th);
    return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
  } catch (const Error&) {
    return -std::numeric_limits<double>::infinity();
  }
}

struct InternalProblem {
  const QuantileModel& model;
  const VectorXd& y;
  DomainMap map;

  double value(const VectorXd& phi) const {
    return safe_loglik(model, y, map.to_natural(phi));
  }
  VectorXd gradient(const VectorXd& phi) const {
    const VectorXd th = map.to_natural(phi);
    return map.jacobian(th).cwiseProduct(score(model, y, th));
  }
  MatrixXd hessian(const VectorXd& phi) const {
    const Eigen::Index p = phi.size();
    MatrixXd H(p, p);
    for (Eigen::Index a = 0; a < p; ++a) {
      const double h = 1e-6 * (1.0 + std::abs(phi(a)));
      VectorXd up = phi, dn = phi;
      up(a) += h;
      dn(a) -= h;
      H.col(a) = (gradient(up) - gradient(dn)) / (2.0 * h);
    }
    return 0.5 * (H + H.transpose());
  }
};

std::string trace_string(const std::vector<double>& norms) {
  std::ostringstream os;
  os << "score-norm trace:";
  for (double v : norms) os << ' ' << v;
  return os.str();
}

struct NewtonOutcome {
  VectorXd phi;
  int iterations = 0;
  std::vector<double> trace;
};

NewtonOutcome newton(const InternalProblem& prob, VectorXd phi,
                     const FitOptions& opts) {
  NewtonOutcome out;
  for (int it = 0; it < opts.max_iterations; ++it) {
    const VectorXd th = prob.map.to_natural(phi);
    const double snorm = score(prob.model, prob.y, th).norm();
    out.trace.push_back(snorm);
    out.iterations = it;
    if (snorm < opts.score_tol) break;

    const VectorXd g = prob.gradient(phi);
    const MatrixXd A = -prob.hessian(phi);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(A);
    const double big = es.eigenvalues().cwiseAbs().maxCoeff();
    if (!(big > 0.0) || !std::isfinite(big))
      throw Error(ErrorKind::SingularInformation,
                  "log-likelihood Hessian vanishes at the iterate");
    if (es.eigenvalues().cwiseAbs().minCoeff() < 1e-13 * big)
      throw Error(ErrorKind::SingularInformation,
                  "log-likelihood Hessian is singular at the iterate");

    // Levenberg shift when not a local maximum direction
    VectorXd step;
    double lambda = 0.0;
    for (int k = 0; k < 60; ++k) {
      Eigen::LLT<MatrixXd> llt(A + lambda * MatrixXd::Identity(A.rows(), A.cols()));
      if (llt.info() == Eigen::Success) {
        step = llt.solve(g);
        break;
      }
      lambda = lambda == 0.0 ? 1e-8 * big : 4.0 * lambda;
    }
    if (step.size() == 0)
      throw Error(ErrorKind::NumericalFailure, "could not form a Newton step");

    const double f0 = prob.value(phi);
    double alpha = 1.0;
    bool accepted = false;
    VectorXd cand;
    for (int k = 0; k < 60; ++k) {
      cand = phi + alpha * step;
      const double f1 = prob.value(cand);
      if (std::isfinite(f1) && f1 >= f0 - 1e-12 * (1.0 + std::abs(f0))) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;
    phi = cand;
    out.iterations = it + 1;
    if ((alpha * step).norm() <= opts.step_tol * (1.0 + phi.norm())) {
      out.trace.push_back(
          score(prob.model, prob.y, prob.map.to_natural(phi)).norm());
      break;
    }
  }
  out.phi = phi;
  return out;
}

VectorXd golden_section(const InternalProblem& prob, double lo, double hi) {
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  auto f = [&](double v) { return prob.value(VectorXd::Constant(1, v)); };
  double a = lo, b = hi;
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  for (int k = 0; k < 200 && (b - a) > 1e-13 * (1.0 + std::abs(a)); ++k) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return VectorXd::Constant(1, 0.5 * (a + b));
}

std::optional<VectorXd> closed_form_mle(const QuantileModel& m,
                                        const VectorXd& y) {
  switch (m.family()) {
    case Family::LocationScale: {
      const double mu = y.mean();
      const double s = std::sqrt((y.array() - mu).square().mean());
      if (!(s > 0.0))
        throw Error(ErrorKind::SingularInformation,
                    "all observations are equal; scale MLE is zero");
      return VectorXd{{mu, s}};
    }
    case Family::Circle2d:
    case Family::CircleN: {
      const VectorXd yr = m.rotation().transpose() * y;
      if (yr(0) == 0.0 && yr(1) == 0.0)
        throw Error(ErrorKind::SingularInformation,
                    "data point projects to the circle centre");
      return VectorXd::Constant(1, std::atan2(yr(1), yr(0)));
    }
    default:
      return std::nullopt;
  }
}

}  // namespace

// ---------------------------------------------------------------------------

VectorXd fitted_reference(const QuantileModel& model, const VectorXd& y0,
                          const VectorXd& theta) {
  if (y0.size() != model.n())
    throw Error(ErrorKind::InvalidDimension, "data vector has wrong size");
  if (!model.in_domain(theta))
    throw Error(ErrorKind::InvalidParameter, "parameter outside its domain");
  if (model.has_closed_inverse()) return model.closed_inverse(y0, theta);

  const Eigen::Index n = y0.size();
  const double s = model.law().scale();
  VectorXd lo = VectorXd::Constant(n, -s), hi = VectorXd::Constant(n, s);
  for (int k = 0;; ++k) {
    const VectorXd qlo = model.quantile(lo, theta), qhi = model.quantile(hi, theta);
    bool ok = true;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (qlo(i) > y0(i)) { lo(i) *= 2.0; ok = false; }
      if (qhi(i) < y0(i)) { hi(i) *= 2.0; ok = false; }
    }
    if (ok) break;
    if (k > 200)
      throw Error(ErrorKind::ReferenceSolveFailure,
                  "cannot bracket y0 = y(x; theta) for some coordinate");
  }
  VectorXd x = 0.5 * (lo + hi);
  for (int it = 0; it < 300; ++it) {
    const VectorXd q = model.quantile(x, theta) - y0;
    const VectorXd dq = model.dquantile_dx(x, theta);
    bool done = true;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (q(i) > 0) hi(i) = x(i); else lo(i) = x(i);
      double next = x(i) - q(i) / dq(i);
      if (!(next > lo(i) && next < hi(i))) next = 0.5 * (lo(i) + hi(i));
      if (std::abs(next - x(i)) > 1e-15 * (1.0 + std::abs(x(i))) &&
          std::abs(q(i)) > 1e-15 * (1.0 + std::abs(y0(i))))
        done = false;
      x(i) = next;
    }
    if (done) return x;
  }
  throw Error(ErrorKind::ReferenceSolveFailure,
              "reference solve did not converge");
}

double log_likelihood(const QuantileModel& model, const VectorXd& y,
                      const VectorXd& theta) {
  const VectorXd x = fitted_reference(model, y, theta);
  const VectorXd dx = model.dquantile_dx(x, theta);
  return model.ref_log_density(x) - dx.array().log().sum();
}

VectorXd score(const QuantileModel& model, const VectorXd& y,
               const VectorXd& theta) {
  const VectorXd x = fitted_reference(model, y, theta);
  const VectorXd qx = model.dquantile_dx(x, theta);
  const VectorXd qxx = model.d2quantile_dx2(x, theta);
  const MatrixXd qt = model.dquantile_dtheta(x, theta);
  const MatrixXd B = model.cross_hessian(x, theta);
  const VectorXd lg = model.ref_log_density_grad(x);
  // dx_i/dtheta_a = -Q_theta / Q_x
  const MatrixXd dxdt = -(qt.array().colwise() / qx.array()).matrix();
  MatrixXd per = (dxdt.array().colwise() * lg.array()).matrix();
  per -= ((dxdt.array().colwise() * qxx.array() + B.array()).colwise() /
          qx.array())
             .matrix();
  return per.colwise().sum().transpose();
}

MatrixXd observed_information(const QuantileModel& model, const VectorXd& y,
                              const VectorXd& theta) {
  const Eigen::Index p = theta.size();
  MatrixXd H(p, p);
  for (Eigen::Index a = 0; a < p; ++a) {
    double h = 1e-6 * (1.0 + std::abs(theta(a)));
    const auto& d = model.param_domain()[a];
    if (std::isfinite(d.lower)) h = std::min(h, 0.25 * (theta(a) - d.lower));
    if (std::isfinite(d.upper)) h = std::min(h, 0.25 * (d.upper - theta(a)));
    VectorXd up = theta, dn = theta;
    up(a) += h;
    dn(a) -= h;
    H.col(a) = (score(model, y, up) - score(model, y, dn)) / (2.0 * h);
  }
  return -0.5 * (H + H.transpose());
}

VectorXd default_init(const QuantileModel& model, const VectorXd& y0) {
  switch (model.family()) {
    case Family::LocationScale: {
      const double mu = y0.mean();
      double s = std::sqrt((y0.array() - mu).square().mean());
      return VectorXd{{mu, s > 0 ? s : 1.0}};
    }
    case Family::CauchyLocationScale:
    case Family::InvertedCauchy: {
      std::vector<double> v(y0.data(), y0.data() + y0.size());
      std::sort(v.begin(), v.end());
      auto q = [&](double prob) {
        const double pos = prob * static_cast<double>(v.size() - 1);
        const auto i = static_cast<std::size_t>(std::floor(pos));
        const double f = pos - static_cast<double>(i);
        return i + 1 < v.size() ? v[i] * (1 - f) + v[i + 1] * f : v[i];
      };
      const double half_iqr = 0.5 * (q(0.75) - q(0.25));
      return VectorXd{{q(0.5), half_iqr > 0 ? half_iqr : 1.0}};
    }
    case Family::Circle2d:
    case Family::CircleN: {
      const VectorXd yr = model.rotation().transpose() * y0;
      return VectorXd::Constant(1, std::atan2(yr(1), yr(0)));
    }
    case Family::NonlinRegKnownSigma:
    case Family::NonlinRegUnknownSigma: {
      const MeanFunction& eta = *model.eta();
      const int r = eta.r;
      const int per = r == 1 ? 201 : r == 2 ? 41 : r == 3 ? 15 : 7;
      VectorXd best(r), t(r);
      double best_rss = std::numeric_limits<double>::infinity();
      std::vector<int> idx(r, 0);
      while (true) {
        for (int a = 0; a < r; ++a)
          t(a) = eta.search_box(a, 0) + (eta.search_box(a, 1) - eta.search_box(a, 0)) *
                                           idx[a] / double(per - 1);
        const double rss = (y0 - eta.value(t)).squaredNorm();
        if (rss < best_rss) { best_rss = rss; best = t; }
        int a = 0;
        while (a < r && ++idx[a] == per) idx[a++] = 0;
        if (a == r) break;
      }
      if (model.family() == Family::NonlinRegKnownSigma) return best;
      VectorXd out(r + 1);
      out.head(r) = best;
      out(r) = std::max(std::sqrt(best_rss / y0.size()), 1e-8);
      return out;
    }
    case Family::Custom: {
      VectorXd th(model.p());
      for (int a = 0; a < model.p(); ++a) {
        const auto& d = model.param_domain()[a];
        if (std::isfinite(d.lower) && std::isfinite(d.upper)) th(a) = 0.5 * (d.lower + d.upper);
        else if (std::isfinite(d.lower)) th(a) = d.lower + 1.0;
        else if (std::isfinite(d.upper)) th(a) = d.upper - 1.0;
        else th(a) = 0.0;
      }
      return th;
    }
  }
  return VectorXd::Zero(model.p());
}

FitResult fit_mle(const QuantileModel& model, const VectorXd& y0,
                  const std::optional<VectorXd>& init, const FitOptions& opts) {
  if (y0.size() != model.n())
    throw Error(ErrorKind::InvalidDimension, "data vector has wrong size");
  if (!y0.allFinite())
    throw Error(ErrorKind::InvalidParameter, "data vector is not finite");
  if (init && !model.in_domain(*init))
    throw Error(ErrorKind::InvalidParameter, "initial value outside domain");

  FitResult fit;
  std::optional<VectorXd> closed;
  if (opts.allow_closed_form) closed = closed_form_mle(model, y0);

  if (closed) {
    fit.theta_hat = *closed;
    fit.method = "closed-form";
  } else {
    InternalProblem prob{model, y0, DomainMap{model.param_domain()}};
    const VectorXd start = init ? *init : default_init(model, y0);
    auto run = newton(prob, prob.map.to_internal(start), opts);
    fit.method = "newton";
    VectorXd th = prob.map.to_natural(run.phi);
    double snorm = score(model, y0, th).norm();
    if (!(snorm < opts.score_tol) && model.p() == 1) {
      const double phi0 = prob.map.to_internal(start)(0);
      const double a = std::abs(prob.hessian(run.phi)(0, 0));
      const double w = a > 0 ? std::min(3.0 / std::sqrt(a), 3.2) : 3.2;
      VectorXd g = golden_section(prob, phi0 - w, phi0 + w);
      auto polish = newton(prob, g, opts);
      run.iterations += polish.iterations;
      run.trace.insert(run.trace.end(), polish.trace.begin(), polish.trace.end());
      run.phi = polish.phi;
      th = prob.map.to_natural(run.phi);
      snorm = score(model, y0, th).norm();
      fit.method = "golden+newton";
    }
    if (!(snorm < opts.score_tol))
      throw Error(ErrorKind::ConvergenceFailure,
                  "no stationary point after " +
                      std::to_string(run.iterations) + " iterations; " +
                      trace_string(run.trace));
    fit.theta_hat = th;
    fit.iterations = run.iterations;
  }

  fit.x_hat = fitted_reference(model, y0, fit.theta_hat);
  fit.y_fit = model.quantile(VectorXd::Zero(model.n()), fit.theta_hat);
  fit.obs_info = observed_information(model, y0, fit.theta_hat);
  fit.loglik_hat = log_likelihood(model, y0, fit.theta_hat);
  fit.score_norm = score(model, y0, fit.theta_hat).norm();
  fit.converged = fit.score_norm < std::max(opts.score_tol, 1e-8);
  return fit;
}

Standardization standardize(const MatrixXd& obs_info, double n_scale) {
  if (obs_info.rows() != obs_info.cols() || obs_info.rows() == 0)
    throw Error(ErrorKind::InvalidDimension, "information must be square");
  if (!(n_scale > 0.0))
    throw Error(ErrorKind::InvalidParameter, "n_scale must be > 0");
  Eigen::LLT<MatrixXd> llt(0.5 * (obs_info + obs_info.transpose()));
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::SingularInformation,
                "observed information is not positive definite");
  Standardization s;
  s.chol_lower = llt.matrixL();
  s.to_standard = s.chol_lower.transpose();
  s.from_standard = s.to_standard.inverse();
  s.param_scales = s.from_standard.diagonal();
  s.n_scale = n_scale;
  s.coordinate_scale = std::sqrt(n_scale);
  return s;
}

Standardization standardize(const QuantileModel& model, const FitResult& fit) {
  if (!fit.converged)
    throw Error(ErrorKind::ConvergenceFailure,
                "standardize needs a converged fit");
  return standardize(fit.obs_info, model.asymptotic_n());
}

}  // namespace anc
