#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "lmlab/matrix.hpp"
#include "lmlab/numerics.hpp"

namespace lmlab {

/// log Z(theta) ~ 0.5 theta^T A theta + b^T theta + c, so that the conditional
/// mean Phi p_theta ~ A theta + b. A = U U^T is PSD by construction.
struct QuadFit {
  SymMatrix A;
  Vector b;
  double c = 0.0;
  double regression_mse = 0.0;  // final value of the weighted objective
};

struct LogZWeights {
  double lambda1 = 0.0;  // squared log-partition residual
  double lambda2 = 1.0;  // squared conditional-mean residual
};

struct LogZFitOptions {
  int min_iters = 8;
  int max_iters = 2000;
  double rel_tol = 1e-9;  // stop once the relative improvement per step is below this
};

/// Fits (A, b, c) to explicit targets: logz[n] (needed when lambda1 > 0, and
/// for c) and means[:, n] (needed when lambda2 > 0) at samples thetas[:, n].
/// A linear least-squares start is projected onto the PSD cone and refined by
/// backtracking gradient descent on (U, b, c).
QuadFit fit_quadratic_targets(const Matrix& thetas, std::optional<Vector> logz,
                              std::optional<Matrix> means, const LogZWeights& weights = {},
                              const LogZFitOptions& opts = {});

/// Same fit with targets log Z_theta and Phi p_theta computed from Phi.
QuadFit fit_log_partition(const Matrix& thetas, const Matrix& phi, const LogZWeights& weights = {},
                          const LogZFitOptions& opts = {});

/// E_p ||Phi p_{f(s)} - A f(s) - b||^2 / E_p ||Phi p_{f(s)} - E_p Phi p_f||^2.
double residual_ratio(const Matrix& phi, const Matrix& theta, const QuadFit& fit,
                      std::span<const double> p);

struct LinearRelation {
  double max_dev = 0.0;   // over supp(p)
  double mean_dev = 0.0;  // p-weighted
  Vector deviations;      // per context
};

LinearRelation linear_relation_check(const Matrix& phi, const Matrix& theta, const QuadFit& fit,
                                     std::span<const double> p);

struct GaussianProbe {
  Vector errors;  // |log Z - 0.5 theta^T Sigma theta - theta^T mu - log V| per theta sample
  double max_abs_error = 0.0;
  double mean_abs_error = 0.0;
};

/// Draws V embeddings from N(mu, Sigma) and n_theta directions with
/// theta^T Sigma theta <= 4. Theta samples depend only on the seed, so runs
/// with different V share them.
GaussianProbe gaussian_logz_probe(std::span<const double> mu, const SymMatrix& sigma, std::size_t V,
                                  std::size_t n_theta, std::uint64_t seed);

}  // namespace lmlab
