#pragma once

// JSON / CSV serialization of fits, frames, contours and reports, and model
// construction from JSON configuration.

#include "anc/ancillary.hpp"
#include "anc/diffgeo.hpp"
#include "anc/estimation.hpp"
#include "anc/models.hpp"
#include "anc/montecarlo.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace anc::io {

using json = nlohmann::ordered_json;

/// "%.17g"; non-finite values print as nan / inf / -inf.
std::string format_double(double v);

json to_json(const VectorXd& v);
/// {"rows": r, "cols": c, "data": [row-major]}
json to_json(const MatrixXd& m);
json to_json(const CurvatureArray<double>& w);

VectorXd vector_from_json(const json& j);
/// Accepts {"rows", "cols", "data"} or an array of rows.
MatrixXd matrix_from_json(const json& j);

json to_json(const FitResult& fit);
json to_json(const TaylorFrame<double>& frame);
json to_json(const ContourCloud& cloud);
json to_json(const PartitionReport& r);
json to_json(const ExactComparison& r);
json to_json(const SeveriniReport& r);
json to_json(const CauchyInversionReport& r);
json to_json(const QuadratureReport& r);
json to_json(const VerificationReport& r);

/// Columns t1..tp, y1..yn, one row per cloud point.
std::string to_csv(const ContourCloud& cloud);
/// One row per n.
std::string to_csv(const VerificationReport& r);

/// Keys: family, n, rho, variance_scale, rotation, error_law, sigma_mode,
/// sigma0, eta. Unknown keys are rejected with a config error.
QuantileModel model_from_json(const json& j);

json parse_json(const std::string& text);
json read_json_file(const std::filesystem::path& path);

/// Writes every file to a temporary sibling first and renames only once all
/// temporaries are complete, so a failure leaves no partial outputs.
void write_files_atomically(
    const std::vector<std::pair<std::filesystem::path, std::string>>& files);

}  // namespace anc::io
