// anc: worked examples, contour/frame generation and verification studies.
//
//   anc example <circle2d|location-scale|nonlinreg-known|nonlinreg-unknown|
//                severini|cauchy-inversion>
//   anc contour --config run.json
//   anc frame   --config run.json
//   anc verify  --config run.json
//
// Exit status: 0 success, 1 numerical/runtime failure, 2 usage/config error.

#include "anc/ancillary.hpp"
#include "anc/io.hpp"
#include "anc/montecarlo.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using anc::Error;
using anc::ErrorKind;
using anc::MatrixXd;
using anc::VectorXd;
using anc::io::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Flags {
  std::optional<std::string> config, out, format, grid;
  std::optional<std::uint64_t> seed;
  std::optional<long> reps;
  std::optional<int> workers;
};

// Resolved run configuration: defaults < config file < flags.
struct RunConfig {
  std::string command;
  json raw = json::object();
  fs::path out = ".";
  std::string format = "csv";
  anc::GridSpec grid;
  std::optional<std::uint64_t> seed;
  long reps = 20000;
  int workers = 1;
};

anc::GridSpec parse_grid(const std::string& s) {
  const auto comma = s.find(',');
  if (comma == std::string::npos) throw UsageError("--grid expects \"half_width,points\"");
  try {
    std::size_t used = 0;
    anc::GridSpec g;
    const std::string a = s.substr(0, comma), b = s.substr(comma + 1);
    g.half_width = std::stod(a, &used);
    if (used != a.size()) throw UsageError("bad half_width");
    g.points = std::stoi(b, &used);
    if (used != b.size()) throw UsageError("bad points");
    if (!(g.half_width >= 0.0) || g.points < 1) throw UsageError("grid out of range");
    return g;
  } catch (const std::logic_error&) {
    throw UsageError("--grid expects \"half_width,points\"");
  }
}

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  if (!j.is_object()) throw Error(ErrorKind::Config, where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key()))
      throw Error(ErrorKind::Config, "unknown key '" + it.key() + "' in " + where);
}

RunConfig resolve(const std::string& command, const Flags& f, bool needs_config) {
  RunConfig rc;
  rc.command = command;
  if (f.config) {
    rc.raw = anc::io::read_json_file(*f.config);
    check_keys(rc.raw,
               {"model", "model_path", "data", "data_file", "simulate", "grid", "out",
                "format", "seed", "reps", "workers", "study"},
               "run config");
  } else if (needs_config) {
    throw UsageError(command + " needs --config");
  }
  try {
    if (rc.raw.contains("out")) rc.out = rc.raw["out"].get<std::string>();
    if (rc.raw.contains("format")) rc.format = rc.raw["format"].get<std::string>();
    if (rc.raw.contains("grid")) {
      const json& g = rc.raw["grid"];
      check_keys(g, {"half_width", "points"}, "grid");
      rc.grid.half_width = g.value("half_width", rc.grid.half_width);
      rc.grid.points = g.value("points", rc.grid.points);
    }
    if (rc.raw.contains("seed")) rc.seed = rc.raw["seed"].get<std::uint64_t>();
    if (rc.raw.contains("reps")) rc.reps = rc.raw["reps"].get<long>();
    if (rc.raw.contains("workers")) rc.workers = rc.raw["workers"].get<int>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Config, std::string("bad value in run config: ") + e.what());
  }
  if (f.out) rc.out = *f.out;
  if (f.format) rc.format = *f.format;
  if (f.grid) rc.grid = parse_grid(*f.grid);
  if (f.seed) rc.seed = *f.seed;
  if (f.reps) rc.reps = *f.reps;
  if (f.workers) rc.workers = *f.workers;
  if (rc.format != "csv" && rc.format != "json")
    throw UsageError("--format must be csv or json");
  if (rc.workers < 1) throw UsageError("--workers must be >= 1");
  if (rc.grid.points < 1 || !(rc.grid.half_width >= 0.0))
    throw Error(ErrorKind::Config, "grid out of range");
  return rc;
}

std::uint64_t require_seed(const RunConfig& rc, const std::string& what) {
  if (!rc.seed) throw Error(ErrorKind::Config, what + " is stochastic and needs a seed");
  return *rc.seed;
}

anc::QuantileModel model_of(const RunConfig& rc) {
  const bool inline_model = rc.raw.contains("model");
  const bool path_model = rc.raw.contains("model_path");
  if (inline_model == path_model)
    throw Error(ErrorKind::Config, "give exactly one of 'model' or 'model_path'");
  if (inline_model) return anc::io::model_from_json(rc.raw["model"]);
  return anc::io::model_from_json(
      anc::io::read_json_file(rc.raw["model_path"].get<std::string>()));
}

VectorXd read_data_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorKind::Config, "cannot read data file " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '[')
    return anc::io::vector_from_json(anc::io::parse_json(text));
  std::vector<double> v;
  std::string tok;
  std::istringstream ts(text);
  while (ts >> tok) {
    for (char& c : tok)
      if (c == ',') c = ' ';
    std::istringstream parts(tok);
    double x;
    while (parts >> x) v.push_back(x);
    if (!parts.eof()) throw Error(ErrorKind::Config, "non-numeric entry in data file");
  }
  return Eigen::Map<VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

VectorXd data_of(const RunConfig& rc, const anc::QuantileModel& model) {
  const int sources = rc.raw.contains("data") + rc.raw.contains("data_file") +
                      rc.raw.contains("simulate");
  if (sources != 1)
    throw Error(ErrorKind::Config, "give exactly one of 'data', 'data_file', 'simulate'");
  VectorXd y;
  if (rc.raw.contains("data")) {
    y = anc::io::vector_from_json(rc.raw["data"]);
  } else if (rc.raw.contains("data_file")) {
    y = read_data_file(rc.raw["data_file"].get<std::string>());
  } else {
    const json& s = rc.raw["simulate"];
    check_keys(s, {"theta", "seed"}, "simulate");
    if (!s.contains("theta")) throw Error(ErrorKind::Config, "simulate needs 'theta'");
    const std::uint64_t seed =
        s.contains("seed") ? s["seed"].get<std::uint64_t>() : require_seed(rc, "simulate");
    const VectorXd theta = anc::io::vector_from_json(s["theta"]);
    const VectorXd x = model.ref_sampler(seed, 1).row(0).transpose();
    y = model.quantile(x, theta);
  }
  if (y.size() != model.n())
    throw Error(ErrorKind::InvalidDimension, "data has " + std::to_string(y.size()) +
                                                 " entries, model has n = " +
                                                 std::to_string(model.n()));
  return y;
}

std::string vec_str(const VectorXd& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    s += (i ? "," : "") + anc::io::format_double(v(i));
  return s;
}

using Files = std::vector<std::pair<fs::path, std::string>>;

void add_json(Files& files, const fs::path& p, const json& j) {
  files.emplace_back(p, j.dump(2) + "\n");
}

void add_contour(Files& files, const RunConfig& rc, const anc::ContourCloud& c,
                 const std::string& stem = "contour") {
  if (rc.format == "csv") files.emplace_back(rc.out / (stem + ".csv"), anc::io::to_csv(c));
  else add_json(files, rc.out / (stem + ".json"), anc::io::to_json(c));
}

void contour_summary(const anc::ContourCloud& c) {
  std::cout << "theta_hat=" << vec_str(c.fit.theta_hat) << "\n"
            << "x_hat=" << vec_str(c.fit.x_hat) << "\n"
            << "points=" << c.size() << "\n"
            << "origin_row=" << vec_str(c.points.row(c.origin).transpose()) << "\n"
            << "origin_error="
            << anc::io::format_double((c.points.row(c.origin).transpose() - c.base_point).norm())
            << "\n";
}

// --- examples ---------------------------------------------------------------

int example(const std::string& name, const RunConfig& rc) {
  Files files;
  if (name == "circle2d") {
    const auto model = anc::make_circle(1.0, 2);
    const VectorXd y0{{1.2, 0.0}};
    const auto cloud = anc::build_contour(model, y0, rc.grid);
    const auto cmp = anc::compare_exact(model, cloud);
    add_contour(files, rc, cloud);
    add_json(files, rc.out / "frame.json", anc::io::to_json(cloud.frame));
    add_json(files, rc.out / "comparison.json", anc::io::to_json(cmp));
    anc::io::write_files_atomically(files);
    contour_summary(cloud);
    std::cout << "radius_approx=" << anc::io::format_double(*cmp.approx_radius) << "\n"
              << "radius_exact=" << anc::io::format_double(*cmp.exact_radius) << "\n"
              << "label_spread=" << anc::io::format_double(cmp.label_spread) << "\n";
  } else if (name == "location-scale") {
    const auto model = anc::make_location_scale(5);
    const VectorXd y0{{0.3, -1.2, 2.1, 0.8, -0.4}};
    const auto cloud = anc::build_contour(model, y0, rc.grid);
    const auto cmp = anc::compare_exact(model, cloud);
    add_contour(files, rc, cloud);
    add_json(files, rc.out / "frame.json", anc::io::to_json(cloud.frame));
    add_json(files, rc.out / "comparison.json", anc::io::to_json(cmp));
    anc::io::write_files_atomically(files);
    contour_summary(cloud);
    std::cout << "label_spread=" << anc::io::format_double(cmp.label_spread) << "\n"
              << "W_max=" << anc::io::format_double(cloud.frame.W.matrix().cwiseAbs().maxCoeff())
              << "\n";
  } else if (name == "nonlinreg-known") {
    // eta(t) = (t, t^2/2) observed with sigma0 = 1/4 (n = 16 scale)
    const double sigma0 = 0.25;
    const auto model =
        anc::make_nonlinear_regression(anc::parabola_mean(1.0), anc::KnownSigma{sigma0});
    const VectorXd y0 = model.eta()->value(VectorXd{{0.3}}) + sigma0 * VectorXd{{-0.3, 1.0}};
    const auto cloud = anc::build_contour(model, y0, rc.grid);
    const auto part = anc::partition_check(model, y0, VectorXd{{1.5}}, rc.grid);
    add_contour(files, rc, cloud);
    add_json(files, rc.out / "frame.json", anc::io::to_json(cloud.frame));
    add_json(files, rc.out / "partition.json", anc::io::to_json(part));
    anc::io::write_files_atomically(files);
    contour_summary(cloud);
    std::cout << "partition_discrepancy="
              << anc::io::format_double(part.discrepancy_standardized) << "\n";
  } else if (name == "nonlinreg-unknown") {
    const auto model =
        anc::make_nonlinear_regression(anc::circle_mean(1.0, 3), anc::UnknownSigma{});
    const VectorXd y0{{1.1, 0.2, 0.15}};
    const auto cloud = anc::build_contour(model, y0, rc.grid);
    add_contour(files, rc, cloud);
    add_json(files, rc.out / "frame.json", anc::io::to_json(cloud.frame));
    anc::io::write_files_atomically(files);
    contour_summary(cloud);
    const VectorXd zhat = cloud.frame.V.col(model.p() - 1);
    std::cout << "z_hat=" << vec_str(zhat) << "\n";
  } else if (name == "severini") {
    const auto model = anc::make_circle(1.0, 3);
    const VectorXd y0{{1.3, 0.4, 0.2}};
    const auto rep = anc::severini_pivot_check(model, y0);
    add_json(files, rc.out / "severini.json", anc::io::to_json(rep));
    anc::io::write_files_atomically(files);
    std::cout << "pivot_observed=" << vec_str(rep.pivot_observed) << "\n"
              << "local_solutions=" << rep.local_solutions.size() << "\n"
              << "recovers_y0=" << (rep.recovers_y0 ? "true" : "false") << "\n"
              << "recovery_error=" << anc::io::format_double(rep.recovery_error) << "\n"
              << "jacobian_rank=" << rep.jacobian_rank << "\n"
              << "unique_back_solution="
              << (rep.recovers_y0 && rep.locally_unique ? "y0" : "no") << "\n";
  } else if (name == "cauchy-inversion") {
    anc::CauchyInversionSpec spec;
    const auto rep = anc::cauchy_inversion_demo(spec);
    add_json(files, rc.out / "cauchy_inversion.json", anc::io::to_json(rep));
    anc::io::write_files_atomically(files);
    std::cout << "component_count=" << rep.component_count << "\n"
              << "line_segments=" << rep.line_segment_count << "\n";
    for (const auto& p : rep.excluded_line_points)
      std::cout << "excluded_point=" << vec_str(p) << "\n";
  } else {
    throw UsageError("unknown example '" + name + "'");
  }
  return 0;
}

// --- config-driven commands --------------------------------------------------

int contour(const RunConfig& rc) {
  const auto model = model_of(rc);
  const VectorXd y0 = data_of(rc, model);
  const auto cloud = anc::build_contour(model, y0, rc.grid);
  Files files;
  add_contour(files, rc, cloud);
  add_json(files, rc.out / "fit.json", anc::io::to_json(cloud.fit));
  anc::io::write_files_atomically(files);
  contour_summary(cloud);
  return 0;
}

int frame(const RunConfig& rc) {
  const auto model = model_of(rc);
  const VectorXd y0 = data_of(rc, model);
  const auto fit = anc::fit_mle(model, y0);
  const auto fr = anc::build_frame(model, fit.x_hat, fit.theta_hat);
  Files files;
  add_json(files, rc.out / "frame.json", anc::io::to_json(fr));
  add_json(files, rc.out / "fit.json", anc::io::to_json(fit));
  anc::io::write_files_atomically(files);
  std::cout << "theta_hat=" << vec_str(fit.theta_hat) << "\n"
            << "W_max=" << anc::io::format_double(fr.W.matrix().cwiseAbs().maxCoeff()) << "\n"
            << "W_tilde_max="
            << anc::io::format_double(fr.W_tilde.matrix().cwiseAbs().maxCoeff()) << "\n";
  return 0;
}

std::vector<double> doubles(const json& j) {
  if (j.is_number()) return {j.get<double>()};
  const VectorXd v = anc::io::vector_from_json(j);
  return {v.data(), v.data() + v.size()};
}

anc::OrderStudySpec order_spec(const json& s, const RunConfig& rc) {
  check_keys(s,
             {"kind", "family", "n_grid", "deltas", "batches", "cells_per_direction",
              "spacing", "rho", "n"},
             "study");
  anc::OrderStudySpec os;
  const std::string fam = s.value("family", std::string("circle"));
  os.tag = "order-" + fam;
  if (s.contains("n_grid")) os.n_grid = s["n_grid"].get<std::vector<int>>();
  if (s.contains("deltas")) os.deltas = doubles(s["deltas"]);
  os.batches = s.value("batches", os.batches);
  os.cells.cells_per_direction = s.value("cells_per_direction", os.cells.cells_per_direction);
  os.cells.spacing = s.value("spacing", os.cells.spacing);
  if (fam == "circle") {
    const double rho = s.value("rho", 1.0);
    if (os.n_grid.empty()) os.n_grid = {16, 32, 64, 128};
    os.family = [rho](int n) { return anc::make_circle(rho, 2, 1.0 / n); };
    os.observed = [rho](const anc::QuantileModel&, int) { return VectorXd{{rho, 0.0}}; };
  } else if (fam == "location-scale") {
    if (os.n_grid.empty()) os.n_grid = {3, 4, 6, 8};
    os.family = [](int n) { return anc::make_location_scale(n); };
    os.observed = [](const anc::QuantileModel& m, int) {
      return VectorXd(m.ref_sampler(7, 1).row(0).transpose());
    };
  } else {
    throw Error(ErrorKind::Config, "order study family must be circle or location-scale");
  }
  os.reps = rc.reps;
  os.seed = require_seed(rc, "order study");
  os.workers = rc.workers;
  return os;
}

int verify(const RunConfig& rc) {
  if (!rc.raw.contains("study")) throw Error(ErrorKind::Config, "verify needs 'study'");
  const json& s = rc.raw["study"];
  if (!s.is_object() || !s.contains("kind"))
    throw Error(ErrorKind::Config, "study needs 'kind'");
  const std::string kind = s["kind"].get<std::string>();
  Files files;
  if (kind == "quadrature") {
    check_keys(s, {"kind", "c", "a_range", "a_points", "theta_grid", "epsilon"}, "study");
    const auto cs = s.contains("c") ? doubles(s["c"]) : std::vector<double>{0.5, 1.0, 2.0};
    const auto ar = s.contains("a_range") ? doubles(s["a_range"]) : std::vector<double>{-3, 3};
    if (ar.size() != 2) throw Error(ErrorKind::Config, "a_range needs two numbers");
    const auto a = anc::linspace(ar[0], ar[1], s.value("a_points", 61));
    const auto th = s.contains("theta_grid") ? doubles(s["theta_grid"])
                                             : std::vector<double>{0.1, 0.5, 1.0};
    json reports = json::array();
    double worst = 0.0, gap = 0.0;
    for (double c : cs) {
      const auto r = anc::quadrature_first_derivative(c, th, a, s.value("epsilon", 1e-4));
      worst = std::max(worst, r.max_abs_derivative);
      gap = std::max(gap, r.max_symmetry_gap);
      reports.push_back(anc::io::to_json(r));
    }
    add_json(files, rc.out / "report.json",
             {{"study", "quadrature"}, {"max_abs_derivative", worst},
              {"max_symmetry_gap", gap}, {"per_c", reports}});
    anc::io::write_files_atomically(files);
    std::cout << "max_abs_derivative=" << anc::io::format_double(worst) << "\n"
              << "max_symmetry_gap=" << anc::io::format_double(gap) << "\n";
  } else if (kind == "order") {
    const auto rep = anc::ancillarity_order_study(order_spec(s, rc));
    add_json(files, rc.out / "report.json", anc::io::to_json(rep));
    files.emplace_back(rc.out / "report.csv", anc::io::to_csv(rep));
    anc::io::write_files_atomically(files);
    auto slope = [](const anc::SlopeFit& f) {
      return f.defined ? anc::io::format_double(f.slope) : std::string("undefined");
    };
    std::cout << "second_order_slope=" << slope(rep.second_order_slope) << "\n"
              << "tangent_only_slope=" << slope(rep.tangent_only_slope) << "\n"
              << "inconclusive=" << (rep.inconclusive ? "true" : "false") << "\n";
  } else if (kind == "partition") {
    check_keys(s, {"kind", "t1"}, "study");
    const auto model = model_of(rc);
    const VectorXd y0 = data_of(rc, model);
    const VectorXd t1 = s.contains("t1") ? anc::io::vector_from_json(s["t1"])
                                         : VectorXd::Constant(model.p(), 1.0);
    const auto rep = anc::partition_check(model, y0, t1, rc.grid);
    add_json(files, rc.out / "report.json", anc::io::to_json(rep));
    anc::io::write_files_atomically(files);
    std::cout << "discrepancy=" << anc::io::format_double(rep.discrepancy) << "\n"
              << "discrepancy_standardized="
              << anc::io::format_double(rep.discrepancy_standardized) << "\n";
  } else if (kind == "compare-exact") {
    check_keys(s, {"kind"}, "study");
    const auto model = model_of(rc);
    const auto cloud = anc::build_contour(model, data_of(rc, model), rc.grid);
    const auto rep = anc::compare_exact(model, cloud);
    add_json(files, rc.out / "report.json", anc::io::to_json(rep));
    anc::io::write_files_atomically(files);
    std::cout << "label_spread=" << anc::io::format_double(rep.label_spread) << "\n";
  } else {
    throw Error(ErrorKind::Config, "unknown study kind '" + kind + "'");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Approximate ancillary contours: examples and verification studies"};
  app.require_subcommand(1);
  Flags flags;
  std::string example_name;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "run configuration (JSON)");
    sub->add_option("--out", flags.out, "output directory");
    sub->add_option("--format", flags.format, "csv or json");
    sub->add_option("--seed", flags.seed, "base seed (u64)");
    sub->add_option("--reps", flags.reps, "Monte Carlo replicates");
    sub->add_option("--workers", flags.workers, "worker threads");
    sub->add_option("--grid", flags.grid, "\"half_width,points\"");
  };
  auto* ex = app.add_subcommand("example", "run a worked example");
  ex->add_option("name", example_name, "example name")->required();
  add_common(ex);
  auto* co = app.add_subcommand("contour", "build an ancillary contour cloud");
  add_common(co);
  auto* fr = app.add_subcommand("frame", "compute the Taylor frame at the MLE");
  add_common(fr);
  auto* ve = app.add_subcommand("verify", "run a verification study");
  add_common(ve);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (ex->parsed()) return example(example_name, resolve("example", flags, false));
    if (co->parsed()) return contour(resolve("contour", flags, true));
    if (fr->parsed()) return frame(resolve("frame", flags, true));
    if (ve->parsed()) return verify(resolve("verify", flags, true));
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n" << app.help();
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::Config ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
