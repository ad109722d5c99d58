#include "lmlab/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lmlab/error.hpp"

namespace lmlab {

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

Json double_to_json(double x) {
  if (std::isfinite(x)) return x;
  return format_double(x);
}

double double_from_json(const Json& j, const std::string& field) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return INFINITY;
    if (s == "-inf") return -INFINITY;
    if (s == "nan") return NAN;
  }
  throw ConfigError(field, "expected a number");
}

Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(double_to_json(m(i, j)));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const Json& j, const std::string& field) {
  if (!j.is_array() || j.empty()) throw ConfigError(field, "expected a non-empty array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  if (cols == 0) throw ConfigError(field, "rows must be non-empty arrays");
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols) throw ConfigError(field, "ragged matrix");
    for (std::size_t c = 0; c < cols; ++c)
      m(i, c) = double_from_json(j[i][c], field + "[" + std::to_string(i) + "]");
  }
  return m;
}

namespace {

Json vector_to_json(std::span<const double> v) {
  Json out = Json::array();
  for (double x : v) out.push_back(double_to_json(x));
  return out;
}

Vector vector_from_json(const Json& j, const std::string& field) {
  if (!j.is_array()) throw ConfigError(field, "expected an array");
  Vector v;
  v.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i)
    v.push_back(double_from_json(j[i], field + "[" + std::to_string(i) + "]"));
  return v;
}

const Json& require(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(key, "missing");
  return j.at(key);
}

}  // namespace

Json world_to_json(const GroundTruth& gt, const Task* task) {
  Json j;
  j["V"] = gt.V;
  j["S"] = gt.S;
  j["p_L"] = vector_to_json(gt.p_L);
  j["Pstar"] = matrix_to_json(gt.Pstar);
  if (task) {
    j["labels"] = task->labels;
    j["p_T"] = vector_to_json(task->p_T);
    if (task->noisy()) j["prob_positive"] = vector_to_json(task->prob_positive);
  }
  return j;
}

GroundTruth world_from_json(const Json& j) {
  GroundTruth gt;
  gt.V = require(j, "V").get<std::size_t>();
  gt.S = require(j, "S").get<std::size_t>();
  gt.p_L = vector_from_json(require(j, "p_L"), "p_L");
  gt.Pstar = matrix_from_json(require(j, "Pstar"), "Pstar");
  gt.validate();
  return gt;
}

Json model_to_json(const SoftmaxModel& m) {
  Json j;
  j["d"] = m.d();
  j["V"] = m.Phi.cols();
  j["S"] = m.Theta.cols();
  j["Phi"] = matrix_to_json(m.Phi);
  j["Theta"] = matrix_to_json(m.Theta);
  return j;
}

SoftmaxModel model_from_json(const Json& j) {
  SoftmaxModel m{matrix_from_json(require(j, "Phi"), "Phi"), matrix_from_json(require(j, "Theta"), "Theta")};
  if (m.Phi.rows() != m.Theta.rows()) throw ConfigError("Theta", "row count must equal that of Phi");
  return m;
}

Json certificate_to_json(const NaturalCertificate& c) {
  Json j;
  j["B"] = double_to_json(c.B);
  j["tau"] = double_to_json(c.tau);
  j["v"] = vector_to_json(c.v_star);
  j["intercept"] = double_to_json(c.intercept);
  j["subspace_dim"] = c.subspace ? c.subspace->rows() : 0;
  return j;
}

Json report_to_json(const BoundReport& r) {
  Json j;
  j["theorem_id"] = to_string(r.theorem_id);
  j["eps"] = double_to_json(r.eps);
  j["gamma_mode"] = to_string(r.gamma_mode);
  j["gamma"] = double_to_json(r.gamma);
  j["tau"] = double_to_json(r.tau);
  j["B"] = double_to_json(r.B);
  j["predicted"] = double_to_json(r.predicted);
  j["measured"] = double_to_json(r.measured);
  j["slack"] = double_to_json(r.slack);
  j["holds"] = r.holds;
  j["gamma_vacuous"] = r.gamma_vacuous;
  return j;
}

std::string report_csv_row(const BoundReport& r) {
  std::ostringstream os;
  os << to_string(r.theorem_id) << ',' << format_double(r.eps) << ',' << to_string(r.gamma_mode) << ','
     << format_double(r.gamma) << ',' << format_double(r.tau) << ',' << format_double(r.B) << ','
     << format_double(r.predicted) << ',' << format_double(r.measured) << ',' << format_double(r.slack)
     << ',' << (r.holds ? "true" : "false");
  return os.str();
}

std::string bounds_csv(const std::vector<BoundReport>& reports) {
  std::string out = kBoundsCsvHeader;
  out += '\n';
  for (const auto& r : reports) {
    out += report_csv_row(r);
    out += '\n';
  }
  return out;
}

Json quadfit_to_json(const QuadFit& f) {
  Json j;
  j["A"] = matrix_to_json(f.A.matrix());
  j["b"] = vector_to_json(f.b);
  j["c"] = double_to_json(f.c);
  j["regression_mse"] = double_to_json(f.regression_mse);
  return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string(), "cannot open file");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string(), std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace lmlab
