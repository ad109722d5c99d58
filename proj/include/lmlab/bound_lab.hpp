#pragma once

#include <optional>
#include <span>
#include <string>
#include <variant>

#include "lmlab/linear_eval.hpp"
#include "lmlab/matrix.hpp"
#include "lmlab/numerics.hpp"
#include "lmlab/softmax_lm.hpp"
#include "lmlab/world.hpp"

namespace lmlab {

using LanguageModel = std::variant<TableModel, SoftmaxModel>;

/// V x S table of the model's predicted next-word distributions.
Matrix predicted_table(const LanguageModel& model);

/// Sigma_p(Delta) = sum_s p(s) Delta_s Delta_s^T with Delta_s = predicted_s - p*_s,
/// or Sigma_p(Phi Delta) when `projector` is given.
SymMatrix error_covariance(const GroundTruth& gt, const Matrix& predicted, std::span<const double> p,
                           const std::optional<Matrix>& projector = std::nullopt);

struct GammaRefined {
  double value = 0.0;
  bool perfect_model = false;  // error covariance under p_L is zero; value is +inf
  bool vacuous = false;        // p_T error has mass outside the p_L error range; value is 0
};

/// Inverse spectral norm of Sigma_L^{-1/2} Sigma_T Sigma_L^{-1/2}, with the
/// pseudo-inverse square root taken at `rel_cutoff`.
GammaRefined gamma_refined(const GroundTruth& gt, const Matrix& predicted, std::span<const double> p_T,
                           const std::optional<Matrix>& projector = std::nullopt,
                           double rel_cutoff = kDefaultRelCutoff);

struct PinskerGap {
  double lhs = 0.0;  // ||q - qstar||_1
  double rhs = 0.0;  // sqrt(2 KL(qstar || q)), nats
};

PinskerGap pinsker_gap(std::span<const double> q, std::span<const double> qstar);

struct SoftmaxPinsker {
  double lhs = 0.0;
  double rhs = 0.0;
  double rho = 0.0;       // E_{w~qstar}[-log p_theta(w)]
  double rho_star = 0.0;  // its minimum over theta (upper bound if unconverged)
  bool holds = false;
  bool inner_converged = true;
};

/// |lambda^T Phi (p_theta - qstar)| against ||Phi^T lambda||_inf sqrt(2 (rho - rho*)).
SoftmaxPinsker softmax_pinsker_check(const Matrix& phi, std::span<const double> theta,
                                     std::span<const double> qstar, std::span<const double> lambda);

enum class TheoremId { T4_1, T4_2, A2_unconstrained, A2_softmax };
enum class GammaMode { plain, refined };

std::string to_string(TheoremId id);
std::string to_string(GammaMode mode);
TheoremId parse_theorem_id(const std::string& s);
GammaMode parse_gamma_mode(const std::string& s);

struct BoundReport {
  TheoremId theorem_id = TheoremId::T4_1;
  GammaMode gamma_mode = GammaMode::plain;
  double eps = 0.0;
  double gamma = 0.0;
  double tau = 0.0;
  double B = 0.0;
  double predicted = 0.0;
  double measured = 0.0;
  double slack = 0.0;
  bool holds = false;
  bool gamma_vacuous = false;  // gamma = 0: predicted is +inf
};

struct BoundOptions {
  /// Cross-entropy baseline for eps. Defaults: optimal_xent for the table
  /// theorems, optimal_xent_phi for the softmax ones.
  std::optional<double> baseline;
  FitOptions fit{2000, 500, 0.0, std::nullopt, 0.0};
  double rel_cutoff = kDefaultRelCutoff;
};

/// Evaluates one theorem instance. The table theorems take a TableModel, the
/// softmax theorems a SoftmaxModel; every theorem except T4.1 requires a
/// certificate with a subspace. The measured downstream loss is fitted
/// starting from the certificate's classifier.
BoundReport theorem_bound_report(const GroundTruth& gt, const Task& task, const LanguageModel& model,
                                 const NaturalCertificate& cert, TheoremId id, GammaMode mode,
                                 const BoundOptions& opts = {});

/// Least-squares lambda with Phi^T lambda = v.
Vector embed_classifier(const Matrix& phi, std::span<const double> v);

struct Decomposition {
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  double alpha3 = 0.0;
  double loss_gap = 0.0;  // l_T(model, v) - l_T(truth, v)
  bool undefined = false; // a quadratic form vanished
};

/// Factors the loss gap of a fixed classifier v as alpha1 * alpha2 * alpha3.
Decomposition decomposition_diagnostics(const GroundTruth& gt, const Task& task,
                                        const Matrix& predicted, std::span<const double> v);

struct SubspaceTransfer {
  double tau_prime = 0.0;
  double B_prime = 0.0;
  double perp_norm = 0.0;      // ||P_perp v*||_2
  double perp_spectral = 0.0;  // ||P_perp Omega_T P_perp||_2
  Vector projected;            // P_Phi v*
};

SubspaceTransfer subspace_transfer(const GroundTruth& gt, const Task& task, const Matrix& phi,
                                   std::span<const double> vstar, double tau, double B);

}  // namespace lmlab
