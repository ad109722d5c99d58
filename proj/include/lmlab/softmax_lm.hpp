#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>

#include "lmlab/matrix.hpp"
#include "lmlab/world.hpp"

namespace lmlab {

/// Word embeddings Phi (d x V) and per-context features Theta (d x S).
struct SoftmaxModel {
  Matrix Phi;
  Matrix Theta;

  std::size_t d() const noexcept { return Phi.rows(); }
  bool operator==(const SoftmaxModel&) const = default;
};

/// Unconstrained model: one distribution per context (V x S, columns stochastic).
struct TableModel {
  Matrix P;
};

struct SoftmaxPrediction {
  Vector p;
  double logZ = 0.0;
};

SoftmaxPrediction softmax_predict(const Matrix& phi, std::span<const double> theta);

/// Expected cross-entropy (nats) under p_L and the true conditionals.
/// A table with zero mass where the truth has mass gives +infinity.
double xent_loss(const GroundTruth& gt, const SoftmaxModel& model);
double xent_loss(const GroundTruth& gt, const TableModel& model);

/// Gradient of the context-s cross-entropy in theta: Phi (p_theta - p*_s).
Vector xent_grad(const GroundTruth& gt, std::size_t s, const Matrix& phi,
                 std::span<const double> theta);

/// sum_s p_L(s) H(p*_s), the minimum over all table models.
double optimal_xent(const GroundTruth& gt);

struct SolveOptions {
  double tol = 1e-10;       // gradient 2-norm
  int max_iters = 100000;
};

struct ContextSolve {
  Vector theta;
  double value = 0.0;  // E_{w~q}[-log p_theta(w)]
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Minimises rho(theta) = E_{w~q}[-log p_{theta,Phi}(w)] from theta0 by damped
/// Newton steps with Armijo backtracking.
ContextSolve minimize_context_xent(const Matrix& phi, std::span<const double> q,
                                   std::span<const double> theta0,
                                   const SolveOptions& opts = {});

struct PhiOptimum {
  double value = 0.0;
  Matrix ThetaStar;
  std::size_t unconverged = 0;  // contexts that hit the iteration cap
  double max_grad_norm = 0.0;
};

/// Best cross-entropy achievable with embeddings Phi, solved context by context.
PhiOptimum optimal_xent_phi(const GroundTruth& gt, const Matrix& phi, const SolveOptions& opts = {});

struct TrainOptions {
  std::optional<Matrix> fix_phi;
  int max_iters = 200;
  double initial_step = 1.0;  // first trial step for the Phi block
  double init_scale = 0.1;    // std. dev. of the random Theta init
  std::uint64_t seed = 0;
  /// Called with the iteration count and the current model, first at 0 and
  /// then after every completed iteration.
  std::function<void(int, const SoftmaxModel&)> on_checkpoint;
};

/// Alternates a Newton step on every context feature with a backtracking
/// gradient step on Phi (skipped when Phi is fixed). Deterministic given seed.
/// Throws DivergenceError if the loss exceeds 10x its initial value.
SoftmaxModel train_lm(const GroundTruth& gt, std::size_t d, const TrainOptions& opts = {});

/// Column s = Phi * softmax(Phi^T Theta[:,s]).
Matrix conditional_mean(const Matrix& phi, const Matrix& theta);

struct EpsilonModel {
  SoftmaxModel model;
  double achieved_eps = 0.0;
  double t = 0.0;
  bool unreachable = false;
};

/// Bisects t in Theta_t = (1-t) ThetaStar + t ThetaRand until the excess
/// cross-entropy over ThetaStar is within 1% of target (1e-9 absolute at 0).
EpsilonModel epsilon_model(const GroundTruth& gt, const Matrix& phi, const Matrix& theta_star,
                           const Matrix& theta_rand, double target_eps);

struct EpsilonTable {
  TableModel model;
  double achieved_eps = 0.0;
  double t = 0.0;
  bool unreachable = false;
};

/// Same bisection for tables P_t = (1-t) Pstar + t Q against optimal_xent.
EpsilonTable epsilon_table_model(const GroundTruth& gt, const Matrix& q, double target_eps);

}  // namespace lmlab
