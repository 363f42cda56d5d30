#include "anc/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <system_error>
#include <unistd.h>

namespace anc::io {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json to_json(const VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json to_json(const MatrixXd& m) {
  json data = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

json to_json(const CurvatureArray<double>& w) {
  // entry (a, b) is the vector w_ab; stored as params x params x dim
  json data = json::array();
  for (Eigen::Index a = 0; a < w.params(); ++a)
    for (Eigen::Index b = 0; b < w.params(); ++b)
      for (Eigen::Index i = 0; i < w.dim(); ++i) data.push_back(w(a, b)(i));
  return {{"params", w.params()}, {"dim", w.dim()}, {"data", data}};
}

VectorXd vector_from_json(const json& j) {
  if (!j.is_array()) throw Error(ErrorKind::Config, "expected an array of numbers");
  VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw Error(ErrorKind::Config, "expected an array of numbers");
    v(i) = j[i].get<double>();
  }
  return v;
}

MatrixXd matrix_from_json(const json& j) {
  if (j.is_object()) {
    if (!j.contains("rows") || !j.contains("cols") || !j.contains("data"))
      throw Error(ErrorKind::Config, "matrix object needs rows, cols and data");
    const auto r = j.at("rows").get<long>(), c = j.at("cols").get<long>();
    const VectorXd d = vector_from_json(j.at("data"));
    if (r < 0 || c < 0 || d.size() != r * c)
      throw Error(ErrorKind::Config, "matrix data does not match its dims");
    MatrixXd m(r, c);
    for (long i = 0; i < r; ++i)
      for (long k = 0; k < c; ++k) m(i, k) = d(i * c + k);
    return m;
  }
  if (!j.is_array() || j.empty()) throw Error(ErrorKind::Config, "expected a matrix");
  const std::size_t c = j[0].size();
  MatrixXd m(j.size(), c);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const VectorXd row = vector_from_json(j[i]);
    if (static_cast<std::size_t>(row.size()) != c)
      throw Error(ErrorKind::Config, "ragged matrix rows");
    m.row(i) = row.transpose();
  }
  return m;
}

namespace {

json optional_number(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

json to_json(const FitResult& f) {
  return {{"theta_hat", to_json(f.theta_hat)}, {"y_fit", to_json(f.y_fit)},
          {"x_hat", to_json(f.x_hat)},         {"obs_info", to_json(f.obs_info)},
          {"loglik_hat", f.loglik_hat},        {"score_norm", f.score_norm},
          {"converged", f.converged},          {"iterations", f.iterations},
          {"method", f.method}};
}

json to_json(const TaylorFrame<double>& t) {
  return {{"dim", t.dim()},
          {"params", t.params()},
          {"base_point", to_json(t.base_point)},
          {"V", to_json(t.V)},
          {"W", to_json(t.W)},
          {"gram", to_json(t.gram)},
          {"P", to_json(t.P)},
          {"H", to_json(t.H)},
          {"W_tilde", to_json(t.W_tilde)}};
}

json to_json(const ContourCloud& c) {
  return {{"base_point", to_json(c.base_point)},
          {"fit", to_json(c.fit)},
          {"grid_spec", {{"half_width", c.spec.half_width}, {"points", c.spec.points}}},
          {"n_scale", c.standardization.n_scale},
          {"from_standard", to_json(c.standardization.from_standard)},
          {"origin", c.origin},
          {"standard_offsets", to_json(c.grid)},
          {"offsets", to_json(c.offsets)},
          {"points", to_json(c.points)}};
}

json to_json(const PartitionReport& r) {
  return {{"t1_standard", to_json(r.t1_standard)},
          {"t1_offset", to_json(r.t1_offset)},
          {"y1", to_json(r.y1)},
          {"theta_hat0", to_json(r.theta_hat0)},
          {"theta_hat1", to_json(r.theta_hat1)},
          {"x_hat0", to_json(r.x_hat0)},
          {"x_hat1", to_json(r.x_hat1)},
          {"mle_shift", r.mle_shift},
          {"discrepancy", r.discrepancy},
          {"discrepancy_standardized", r.discrepancy_standardized},
          {"n_scale", r.n_scale},
          {"points", r.points}};
}

json to_json(const ExactComparison& r) {
  return {{"family", to_string(r.family)},
          {"label_spread", r.label_spread},
          {"label_at_base", to_json(r.label_at_base)},
          {"approx_radius", optional_number(r.approx_radius)},
          {"exact_radius", optional_number(r.exact_radius)},
          {"points", r.points}};
}

json to_json(const SeveriniReport& r) {
  json sols = json::array();
  for (const auto& s : r.local_solutions) sols.push_back(to_json(s));
  return {{"y0", to_json(r.y0)},
          {"theta_hat0", r.theta_hat0},
          {"r0", r.r0},
          {"rho", r.rho},
          {"pivot_observed", to_json(r.pivot_observed)},
          {"local_solutions", sols},
          {"recovers_y0", r.recovers_y0},
          {"recovery_error", r.recovery_error},
          {"jacobian_rank", r.jacobian_rank},
          {"locally_unique", r.locally_unique},
          {"degenerate", r.degenerate},
          {"mirror_solution",
           r.mirror_solution ? to_json(*r.mirror_solution) : json(nullptr)}};
}

json to_json(const CauchyInversionReport& r) {
  json pts = json::array();
  for (const auto& p : r.excluded_line_points) pts.push_back(to_json(p));
  return {{"component_count", r.component_count},
          {"component_sizes", r.component_sizes},
          {"member_pixels", r.member_pixels},
          {"undefined_pixels", r.undefined_pixels},
          {"line_segment_count", r.line_segment_count},
          {"excluded_line_points", pts}};
}

json to_json(const QuadratureReport& r) {
  return {{"c", r.c},
          {"epsilon", r.epsilon},
          {"a_grid", r.a_grid},
          {"theta_grid", r.theta_grid},
          {"derivative", r.derivative},
          {"max_abs_derivative", r.max_abs_derivative},
          {"max_symmetry_gap", r.max_symmetry_gap}};
}

namespace {

json arm_json(const ArmStats& a) {
  return {{"sensitivity", a.sensitivity},
          {"se", a.se},
          {"best_delta", a.best_delta},
          {"per_delta", a.per_delta},
          {"per_delta_se", a.per_delta_se},
          {"cell_probs", to_json(a.cell_probs)},
          {"max_zero_offset_z", finite_or_null(a.max_zero_offset_z)}};
}

json slope_json(const SlopeFit& s) {
  if (!s.defined) return {{"defined", false}};
  return {{"defined", true}, {"slope", s.slope}, {"se", s.se},
          {"lower", s.lower}, {"upper", s.upper}};
}

}  // namespace

json to_json(const VerificationReport& r) {
  json per = json::array();
  for (const auto& p : r.per_n)
    per.push_back({{"n", p.n},
                   {"n_scale", p.n_scale},
                   {"second_order", arm_json(p.second_order)},
                   {"tangent_only", arm_json(p.tangent_only)},
                   {"inconclusive", p.inconclusive},
                   {"required_reps", finite_or_null(p.required_reps)}});
  return {{"tag", r.tag},
          {"n_grid", r.n_grid},
          {"deltas", r.deltas},
          {"reps", r.reps},
          {"batches", r.batches},
          {"seed", r.seed},
          {"stream_seeds", r.stream_seeds},
          {"per_n", per},
          {"second_order_slope", slope_json(r.second_order_slope)},
          {"tangent_only_slope", slope_json(r.tangent_only_slope)},
          {"inconclusive", r.inconclusive},
          {"required_reps", finite_or_null(r.required_reps)}};
}

std::string to_csv(const ContourCloud& c) {
  std::ostringstream os;
  const Eigen::Index p = c.offsets.cols(), n = c.points.cols();
  for (Eigen::Index a = 0; a < p; ++a) os << (a ? "," : "") << "t" << a + 1;
  for (Eigen::Index i = 0; i < n; ++i) os << ",y" << i + 1;
  os << '\n';
  for (Eigen::Index k = 0; k < c.size(); ++k) {
    for (Eigen::Index a = 0; a < p; ++a)
      os << (a ? "," : "") << format_double(c.offsets(k, a));
    for (Eigen::Index i = 0; i < n; ++i) os << ',' << format_double(c.points(k, i));
    os << '\n';
  }
  return os.str();
}

std::string to_csv(const VerificationReport& r) {
  std::ostringstream os;
  os << "n,n_scale,second_order_sensitivity,second_order_se,"
        "tangent_only_sensitivity,tangent_only_se,inconclusive,required_reps\n";
  for (const auto& p : r.per_n)
    os << p.n << ',' << format_double(p.n_scale) << ','
       << format_double(p.second_order.sensitivity) << ','
       << format_double(p.second_order.se) << ','
       << format_double(p.tangent_only.sensitivity) << ','
       << format_double(p.tangent_only.se) << ',' << (p.inconclusive ? 1 : 0)
       << ',' << format_double(p.required_reps) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> allowed,
                    const std::string& where) {
  if (!j.is_object()) throw Error(ErrorKind::Config, where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key()))
      throw Error(ErrorKind::Config, "unknown key '" + it.key() + "' in " + where);
}

template <typename T>
T required(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key))
    throw Error(ErrorKind::Config, where + " needs '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::Config, std::string("bad type for '") + key + "' in " + where);
  }
}

template <typename T>
T optional_key(const json& j, const char* key, T fallback, const std::string& where) {
  return j.contains(key) ? required<T>(j, key, where) : fallback;
}

MeanFunction eta_from_json(const json& j) {
  reject_unknown(j, {"kind", "design", "rho", "n", "rotation", "curvature"}, "eta");
  const auto kind = required<std::string>(j, "kind", "eta");
  if (kind == "linear") return linear_mean(matrix_from_json(j.at("design")));
  if (kind == "circle")
    return circle_mean(required<double>(j, "rho", "eta"), optional_key<int>(j, "n", 2, "eta"),
                       j.contains("rotation") ? matrix_from_json(j.at("rotation")) : MatrixXd{});
  if (kind == "parabola") return parabola_mean(optional_key<double>(j, "curvature", 1.0, "eta"));
  throw Error(ErrorKind::Config, "unknown eta kind '" + kind + "'");
}

}  // namespace

QuantileModel model_from_json(const json& j) {
  const std::string where = "model";
  reject_unknown(j,
                 {"family", "n", "rho", "variance_scale", "rotation", "error_law",
                  "sigma_mode", "sigma0", "eta"},
                 where);
  const Family fam = family_from_string(required<std::string>(j, "family", where));
  switch (fam) {
    case Family::LocationScale: {
      const auto law = error_law_from_string(
          optional_key<std::string>(j, "error_law", "normal", where));
      return make_location_scale(required<int>(j, "n", where), law);
    }
    case Family::CauchyLocationScale:
      return make_location_scale(required<int>(j, "n", where), ErrorLaw::Cauchy);
    case Family::InvertedCauchy:
      return invert_coordinates(
                 make_location_scale(required<int>(j, "n", where), ErrorLaw::Cauchy))
          .model;
    case Family::Circle2d:
    case Family::CircleN: {
      const int n = optional_key<int>(j, "n", 2, where);
      if (fam == Family::Circle2d && n != 2)
        throw Error(ErrorKind::Config, "circle2d has n = 2");
      return make_circle(required<double>(j, "rho", where), n,
                         optional_key<double>(j, "variance_scale", 1.0, where),
                         j.contains("rotation") ? matrix_from_json(j.at("rotation"))
                                                : MatrixXd{});
    }
    case Family::NonlinRegKnownSigma:
    case Family::NonlinRegUnknownSigma: {
      if (!j.contains("eta")) throw Error(ErrorKind::Config, "regression needs 'eta'");
      const MeanFunction eta = eta_from_json(j.at("eta"));
      const std::string mode = optional_key<std::string>(
          j, "sigma_mode", fam == Family::NonlinRegKnownSigma ? "known" : "unknown", where);
      if ((mode == "known") != (fam == Family::NonlinRegKnownSigma) ||
          (mode != "known" && mode != "unknown"))
        throw Error(ErrorKind::Config, "sigma_mode '" + mode + "' does not match family");
      if (j.contains("n") && required<int>(j, "n", where) != eta.n)
        throw Error(ErrorKind::InvalidDimension, "n does not match eta");
      if (mode == "known")
        return make_nonlinear_regression(eta, KnownSigma{required<double>(j, "sigma0", where)});
      return make_nonlinear_regression(eta, UnknownSigma{});
    }
    case Family::Custom:
      break;
  }
  throw Error(ErrorKind::Config, "family cannot be built from JSON");
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Config, std::string("malformed JSON: ") + e.what());
  }
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_json(ss.str());
}

void write_files_atomically(
    const std::vector<std::pair<std::filesystem::path, std::string>>& files) {
  namespace fs = std::filesystem;
  std::vector<fs::path> temps;
  auto cleanup = [&] {
    std::error_code ec;
    for (const auto& t : temps) fs::remove(t, ec);
  };
  try {
    for (const auto& [path, content] : files) {
      if (path.has_parent_path()) fs::create_directories(path.parent_path());
      fs::path tmp = path;
      tmp += ".tmp" + std::to_string(::getpid());
      temps.push_back(tmp);
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << content;
      out.close();
      if (!out) throw Error(ErrorKind::Config, "cannot write " + tmp.string());
    }
    for (std::size_t k = 0; k < files.size(); ++k) fs::rename(temps[k], files[k].first);
  } catch (const fs::filesystem_error& e) {
    cleanup();
    throw Error(ErrorKind::Config, e.what());
  } catch (...) {
    cleanup();
    throw;
  }
}

}  // namespace anc::io
