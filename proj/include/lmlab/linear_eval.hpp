#pragma once

#include <optional>
#include <span>

#include "lmlab/matrix.hpp"
#include "lmlab/world.hpp"

namespace lmlab {

enum class LossKind { hinge, logistic };

/// Surrogate loss l(yhat, y): hinge (1 - y yhat)_+ or logistic log(1 + e^{-y yhat}).
double surrogate(LossKind kind, double yhat, int y);

/// sum_s p_T(s) E_y[l(v^T g(s) + intercept, y)] for a D x S feature table.
/// Noisy tasks average over both labels with their probabilities.
double clf_loss(const Matrix& features, const Task& task, std::span<const double> v,
                double intercept = 0.0, LossKind kind = LossKind::hinge);

struct FitConstraints {
  LossKind loss = LossKind::hinge;
  std::optional<double> inf_norm_bound;
  std::optional<Matrix> subspace;  // v must lie in its row-span
  bool intercept = false;
};

struct FitOptions {
  int max_iters = 5000;
  int patience = 1000;        // hinge: stop after this many non-improving steps
  double step_scale = 0.0;    // 0 picks a scale from the constraint radius
  std::optional<Vector> init; // warm start (projected onto the feasible set)
  double init_intercept = 0.0;
};

struct FitResult {
  Vector v;
  double intercept = 0.0;
  double loss = 0.0;  // exact clf_loss of the returned (v, intercept)
  int iterations = 0;
  bool stalled = false;
};

/// Projector onto {||v||_inf <= B} intersected with a subspace given by
/// orthonormal rows. Runs 50 rounds of Dykstra alternation, projects onto the
/// subspace once more and rescales radially, so both constraints hold.
class FeasibleSet {
 public:
  FeasibleSet(std::size_t dim, std::optional<double> bound, const std::optional<Matrix>& subspace);
  Vector project(std::span<const double> v) const;
  bool has_subspace() const noexcept { return basis_.rows() > 0; }
  /// ||v - P_span v||_2 (0 when there is no subspace).
  double subspace_residual(std::span<const double> v) const;

 private:
  Vector project_subspace(std::span<const double> v) const;
  std::size_t dim_;
  std::optional<double> bound_;
  Matrix basis_;  // orthonormal rows; empty when unconstrained
};

/// Projected subgradient (hinge, diminishing steps, best iterate kept) or
/// projected gradient with backtracking (logistic).
FitResult fit_linear(const Matrix& features, const Task& task, const FitConstraints& constraints,
                     const FitOptions& opts = {});

/// Fits a hinge classifier on the true conditionals under ||v||_inf <= B and,
/// if given, v in row-span(subspace). tau is the loss actually achieved.
NaturalCertificate natural_certificate(const GroundTruth& gt, const Task& task, double B,
                                       const std::optional<Matrix>& subspace = std::nullopt,
                                       const FitOptions& opts = {});

struct BayesAnalysis {
  double bayes_error = 0.0;
  double loss_of_gT = 0.0;  // hinge loss of g_T(s) = P(+1|s) - P(-1|s)
};

BayesAnalysis bayes_analysis(const Task& task, const GroundTruth& gt);

}  // namespace lmlab
