// Acceptance checks, one PASS/FAIL line per criterion.
//
//   acceptance          run all eight
//   acceptance 3 5      run the listed ones
//
// Exit status is nonzero if any selected criterion fails.

#include "anc/ancillary.hpp"
#include "anc/montecarlo.hpp"
#include "support.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

using namespace anc;
using namespace anc::testing;

namespace {

// Collects sub-check results; the criterion passes only if all of them do.
struct Checks {
  bool ok = true;
  std::ostringstream detail;

  void expect(bool cond, const std::string& what, double value = NAN) {
    if (!cond) ok = false;
    detail << "\n    " << (cond ? "ok   " : "FAIL ") << what;
    if (!std::isnan(value)) detail << " [" << value << "]";
  }
};

using Clock = std::chrono::steady_clock;

// --- 1. circle geometry -----------------------------------------------------

void circle_geometry(Checks& c) {
  const auto m = make_circle(1.0, 2);
  const VectorXd y0{{1.2, 0.0}};
  const auto cloud = build_contour(m, y0);
  c.expect(std::abs(cloud.fit.theta_hat(0)) < 1e-12, "theta_hat0 = 0", cloud.fit.theta_hat(0));
  c.expect((cloud.fit.x_hat - VectorXd{{0.2, 0.0}}).norm() < 1e-12, "x_hat0 = (0.2, 0)",
           (cloud.fit.x_hat - VectorXd{{0.2, 0.0}}).norm());
  double worst = 0.0;
  for (Eigen::Index k = 0; k < cloud.size(); ++k) {
    const double t = cloud.fit.theta_hat(0) + cloud.offsets(k, 0);
    const VectorXd expect{{0.2 + std::cos(t), std::sin(t)}};
    worst = std::max(worst, (cloud.points.row(k).transpose() - expect).norm());
  }
  c.expect(worst < 1e-12, "contour = (0.2, 0) + (cos t, sin t)", worst);

  const VectorXd v = cloud.frame.V.col(0);
  c.expect((v - VectorXd{{0.0, 1.0}}).norm() < 1e-12, "tangent v = (0, 1)", (v - VectorXd{{0.0, 1.0}}).norm());
  const auto traj = [&](const VectorXd& t) { return m.quantile(cloud.fit.x_hat, t); };
  const double fd = (fd_jacobian(traj, cloud.fit.theta_hat).col(0) - v).norm();
  c.expect(fd < 1e-6, "tangent matches finite differences to 1e-6", fd);
  const double dot = std::abs(cloud.frame.W(0, 0).dot(v));
  c.expect(dot < 1e-10, "acceleration orthogonal to tangent to 1e-10", dot);

  const auto cmp = compare_exact(m, cloud);
  c.expect(cmp.approx_radius && std::abs(*cmp.approx_radius - 1.0) < 1e-12,
           "contour curvature radius rho = 1", cmp.approx_radius.value_or(NAN));
  c.expect(cmp.exact_radius && std::abs(*cmp.exact_radius - 1.2) < 1e-12,
           "exact contour radius r0 = 1.2", cmp.exact_radius.value_or(NAN));
}

// --- 2. location-scale exactness ---------------------------------------------

void location_scale_exactness(Checks& c) {
  const auto m = make_location_scale(5);
  const VectorXd y0{{0.3, -1.2, 2.1, 0.8, -0.4}};
  const auto cloud = build_contour(m, y0);
  const VectorXd z = cloud.fit.x_hat;
  // y = m 1 + s z with s > 0: residual after the least-squares fit in (1, z)
  MatrixXd B(5, 2);
  B.col(0).setOnes();
  B.col(1) = z;
  double worst = 0.0, min_s = INFINITY;
  for (Eigen::Index k = 0; k < cloud.size(); ++k) {
    const VectorXd y = cloud.points.row(k).transpose();
    const VectorXd coef = B.colPivHouseholderQr().solve(y);
    worst = std::max(worst, (B * coef - y).cwiseAbs().maxCoeff());
    min_s = std::min(min_s, coef(1));
  }
  c.expect(worst < 1e-12, "cloud lies in {m 1 + s z_hat0}", worst);
  c.expect(min_s > 0.0, "s > 0 on the whole cloud", min_s);
  const auto cmp = compare_exact(m, cloud);
  c.expect(cmp.label_spread <= 1e-12, "configuration spread <= 1e-12", cmp.label_spread);
  const double w = cloud.frame.W.matrix().cwiseAbs().maxCoeff();
  const double wt = cloud.frame.W_tilde.matrix().cwiseAbs().maxCoeff();
  c.expect(w == 0.0, "W identically zero", w);
  c.expect(wt == 0.0, "W_tilde identically zero", wt);
}

// --- 3. partition property ---------------------------------------------------

void partition_property(Checks& c) {
  const auto ls = partition_check(make_location_scale(5), VectorXd{{0.3, -1.2, 2.1, 0.8, -0.4}},
                                  VectorXd{{1.0, 1.0}});
  c.expect(ls.discrepancy <= 1e-10, "location-scale discrepancy <= 1e-10", ls.discrepancy);
  const auto ci = partition_check(make_circle(1.0, 2), VectorXd{{1.2, 0.0}}, VectorXd{{1.5}});
  c.expect(ci.discrepancy <= 1e-10, "circle discrepancy <= 1e-10", ci.discrepancy);

  // curved scalar model: parabola mean, sigma0 = n^{-1/2}, data at fixed
  // standardized position
  std::vector<double> ns{16, 64, 256, 1024}, d, se;
  for (double n : ns) {
    const double s0 = 1.0 / std::sqrt(n);
    const auto m = make_nonlinear_regression(parabola_mean(1.0), KnownSigma{s0});
    const VectorXd y0 = m.eta()->value(VectorXd::Constant(1, 0.3)) + s0 * VectorXd{{-0.3, 1.0}};
    const auto r = partition_check(m, y0, VectorXd{{1.5}});
    d.push_back(r.discrepancy_standardized);
    se.push_back(1e-3 * r.discrepancy_standardized);  // deterministic: equal weights
    c.detail << "\n         n=" << n << " standardized discrepancy " << r.discrepancy_standardized;
  }
  const auto f = loglog_slope(ns, d, se);
  c.expect(f.defined && std::abs(f.slope + 1.0) <= 0.3, "curved model slope -1 +/- 0.3",
           f.slope);
}

// --- 4. quadrature -----------------------------------------------------------

void quadrature(Checks& c) {
  const auto a = linspace(-3, 3, 61);
  for (double cc : {0.5, 1.0, 2.0}) {
    const auto r = quadrature_first_derivative(cc, {0.1, 0.5, 1.0}, a);
    c.expect(r.max_abs_derivative < 1e-8, "c=" + std::to_string(cc) + " max |df/dtheta| < 1e-8",
             r.max_abs_derivative);
    c.expect(r.max_symmetry_gap <= 1e-12, "c=" + std::to_string(cc) + " f(a;t)=f(a;-t) to 1e-12",
             r.max_symmetry_gap);
  }
}

// --- 5. order study ----------------------------------------------------------

void order_study(Checks& c) {
  OrderStudySpec s;
  s.tag = "order-circle";
  s.family = [](int n) { return make_circle(1.0, 2, 1.0 / n); };
  s.observed = [](const QuantileModel&, int) { return VectorXd{{1.0, 0.0}}; };
  s.n_grid = {16, 32, 64, 128};
  s.reps = 20000;
  s.seed = 20240601;
  s.workers = 1;
  const auto r = ancillarity_order_study(s);
  for (const auto& pn : r.per_n)
    c.detail << "\n         n=" << pn.n << " second-order " << pn.second_order.sensitivity
             << " (se " << pn.second_order.se << "), tangent-only "
             << pn.tangent_only.sensitivity << " (se " << pn.tangent_only.se << ")";
  const auto& so = r.second_order_slope;
  const auto& to = r.tangent_only_slope;
  c.expect(so.defined && std::abs(so.slope + 1.0) <= 0.3, "second-order slope -1 +/- 0.3",
           so.slope);
  c.expect(to.defined && std::abs(to.slope + 0.5) <= 0.3, "tangent-only slope -0.5 +/- 0.3",
           to.slope);
  bool larger = true;
  for (const auto& pn : r.per_n)
    larger = larger && pn.tangent_only.sensitivity > pn.second_order.sensitivity;
  c.expect(larger, "tangent-only sensitivity larger at every n");
  c.expect(!r.inconclusive, "study conclusive (sensitivity >= 2 se)", r.required_reps);
}

// --- 6. Severini -------------------------------------------------------------

void severini(Checks& c) {
  const VectorXd y0{{1.3, 0.4, 0.2}};
  const auto r = severini_pivot_check(make_circle(1.0, 3), y0);
  c.expect(r.recovers_y0, "back-solution recovers y0");
  c.expect(r.recovery_error <= 1e-8, "recovery error <= 1e-8", r.recovery_error);
  c.expect(r.locally_unique && r.local_solutions.size() == 1,
           "single solution, full-rank Jacobian", static_cast<double>(r.local_solutions.size()));
}

// --- 7. Cauchy inversion -----------------------------------------------------

void cauchy(Checks& c) {
  const auto r = cauchy_inversion_demo();
  c.expect(r.component_count == 3, "three connected components",
           static_cast<double>(r.component_count));
  c.expect(!r.excluded_line_points.empty(), "zero-coordinate line points reported");
  bool flagged = true;
  for (const auto& p : r.excluded_line_points)
    flagged = flagged && (p.array() == 0.0).any() && !InvertedCauchy::is_invertible(p);
  for (const VectorXd& p : {VectorXd{{0.0, 1.0}}, VectorXd{{-2.0, 0.0}}, VectorXd{{0.0, 0.0}}})
    flagged = flagged && !InvertedCauchy::is_invertible(p);
  c.expect(flagged, "zero-coordinate points flagged non-invertible");
}

// --- 8. property suites and determinism -------------------------------------

void properties(Checks& c) {
  long failures = 0, checked = 0;
  for (const auto& label : family_labels()) {
    Engine e(std::hash<std::string>{}(label) & 0xffff);
    long fam_fail = 0;
    for (int k = 0; k < 200; ++k) {
      const auto inst = random_instance(label, e);
      const auto& m = inst.model;
      const auto yq = [&](const VectorXd& t) { return m.quantile(inst.x, t); };
      bool ok = rel_err(m.dquantile_dtheta(inst.x, inst.theta), fd_jacobian(yq, inst.theta)) < 1e-6;
      const auto W = m.d2quantile_dtheta2(inst.x, inst.theta);
      ok = ok && W.asymmetry() == 0.0;
      for (int a = 0; a < m.p(); ++a)
        for (int b = 0; b < m.p(); ++b) ok = ok && rel_err(W(a, b), fd_second(yq, inst.theta, a, b)) < 1e-5;
      ok = ok && (fitted_reference(m, yq(inst.theta), inst.theta) - inst.x).cwiseAbs().maxCoeff() <
                     1e-10 * (1 + inst.x.cwiseAbs().maxCoeff());
      // frame invariants at the generating parameter
      const auto fr = make_frame<double>(yq(inst.theta), m.dquantile_dtheta(inst.x, inst.theta), W);
      ok = ok && (fr.V.transpose() * fr.W_tilde.matrix()).cwiseAbs().maxCoeff() <
                     1e-9 * (1 + W.matrix().cwiseAbs().maxCoeff());
      ok = ok && (fr.P * fr.P - fr.P).cwiseAbs().maxCoeff() < 1e-10;
      ++checked;
      if (!ok) ++fam_fail;
    }
    failures += fam_fail;
    c.detail << "\n         " << label << ": " << 200 - fam_fail << "/200";
  }
  c.expect(failures == 0, "model/frame invariants on 200 instances per family",
           static_cast<double>(failures));

  OrderStudySpec s;
  s.family = [](int n) { return make_circle(1.0, 2, 1.0 / n); };
  s.observed = [](const QuantileModel&, int) { return VectorXd{{1.0, 0.0}}; };
  s.n_grid = {16, 32, 64};
  s.reps = 600;
  s.batches = 12;
  s.seed = 7;
  std::vector<VerificationReport> runs;
  for (int w : {1, 2, 5}) {
    s.workers = w;
    runs.push_back(ancillarity_order_study(s));
  }
  bool same = true;
  for (const auto& r : runs)
    for (std::size_t i = 0; i < r.per_n.size(); ++i) {
      const auto& a = r.per_n[i];
      const auto& b = runs[0].per_n[i];
      same = same && a.second_order.sensitivity == b.second_order.sensitivity &&
             a.second_order.se == b.second_order.se &&
             a.tangent_only.sensitivity == b.tangent_only.sensitivity &&
             a.tangent_only.se == b.tangent_only.se &&
             a.second_order.cell_probs == b.second_order.cell_probs;
    }
  c.expect(same, "order study bit-exact across 1, 2, 5 workers");
}

struct Criterion {
  const char* name;
  double budget_s;
  void (*run)(Checks&);
};

const Criterion kCriteria[] = {
    {"circle geometry", 1.0, circle_geometry},
    {"location-scale exactness", 1.0, location_scale_exactness},
    {"partition property", 120.0, partition_property},
    {"first-derivative quadrature", 5.0, quadrature},
    {"ancillarity order study", 600.0, order_study},
    {"Severini plug-in pivot", 1.0, severini},
    {"Cauchy inversion", 30.0, cauchy},
    {"property suites and determinism", 600.0, properties},
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> which;
  for (int i = 1; i < argc; ++i) {
    const int k = std::atoi(argv[i]);
    if (k < 1 || k > 8) {
      std::fprintf(stderr, "criterion must be 1..8, got '%s'\n", argv[i]);
      return 2;
    }
    which.push_back(k);
  }
  if (which.empty())
    for (int k = 1; k <= 8; ++k) which.push_back(k);

  bool all = true;
  for (int k : which) {
    const auto& cr = kCriteria[k - 1];
    Checks c;
    const auto t0 = Clock::now();
    try {
      cr.run(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("threw: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    c.expect(secs <= cr.budget_s, "within " + std::to_string(cr.budget_s) + " s", secs);
    all = all && c.ok;
    std::printf("%s criterion %d: %s (%.2f s)%s\n", c.ok ? "PASS" : "FAIL", k, cr.name, secs,
                c.detail.str().c_str());
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
