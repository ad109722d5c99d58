#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "lmlab/bound_lab.hpp"
#include "lmlab/matrix.hpp"
#include "lmlab/partition_fit.hpp"
#include "lmlab/softmax_lm.hpp"
#include "lmlab/world.hpp"

namespace lmlab {

using Json = nlohmann::ordered_json;

/// %.17g, with non-finite values spelled "inf", "-inf", "nan".
std::string format_double(double x);

/// Finite values become JSON numbers; non-finite ones become the strings above.
Json double_to_json(double x);
double double_from_json(const Json& j, const std::string& field);

/// Row-major nested arrays.
Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j, const std::string& field);

/// {"V","S","p_L","Pstar"} plus {"labels","p_T"} when a task is given.
Json world_to_json(const GroundTruth& gt, const Task* task = nullptr);
GroundTruth world_from_json(const Json& j);

/// {"d","V","S","Phi","Theta"}.
Json model_to_json(const SoftmaxModel& m);
SoftmaxModel model_from_json(const Json& j);

/// {"B","tau","v","intercept","subspace_dim"}.
Json certificate_to_json(const NaturalCertificate& c);

Json report_to_json(const BoundReport& r);

inline constexpr const char* kBoundsCsvHeader =
    "theorem_id,eps,gamma_mode,gamma,tau,B,predicted,measured,slack,holds";
std::string report_csv_row(const BoundReport& r);
std::string bounds_csv(const std::vector<BoundReport>& reports);

/// {"A","b","c","regression_mse"}.
Json quadfit_to_json(const QuadFit& f);

void write_text(const std::filesystem::path& path, const std::string& text);
Json read_json(const std::filesystem::path& path);

}  // namespace lmlab
