#pragma once

#include <cstdint>

#include "lmlab/matrix.hpp"
#include "lmlab/numerics.hpp"
#include "lmlab/world.hpp"

namespace lmlab {

/// Omega = sum_s p_L(s) p*_s p*_s^T with its eigendecomposition.
struct Substitutability {
  SymMatrix omega;
  EigDecomp decomp;

  /// V x d block of the top-d eigenvectors.
  Matrix Ud(std::size_t d) const { return decomp.top(d); }
  /// lambda_d - lambda_{d+1} (lambda_d when d = V).
  double eigengap(std::size_t d) const;
};

Substitutability substitutability(const GroundTruth& gt);

/// sum_s p_L(s) [ -theta_s^T Phi p*_s + 0.5 ||Phi^T theta_s||^2 ].
double quad_loss(const GroundTruth& gt, const Matrix& phi, const Matrix& theta);

/// Column s = pinv(Phi Phi^T) Phi p*_s, the minimiser of the per-context quad loss.
Matrix quad_optimal_features(const GroundTruth& gt, const Matrix& phi,
                             double rel_cutoff = kDefaultRelCutoff);

struct QuadSolution {
  Matrix PhiStar;    // U_d^T
  Matrix ThetaStar;
  double value = 0.0;  // -0.5 * (sum of the top-d eigenvalues of Omega)
  bool degenerate_gap = false;
};

QuadSolution quad_closed_form(const GroundTruth& gt, std::size_t d);
QuadSolution quad_closed_form(const GroundTruth& gt, const Substitutability& sub, std::size_t d);

enum class QuadInit { random, spectral };

struct QuadTrainOptions {
  int max_iters = 20000;
  std::uint64_t seed = 0;
  QuadInit init = QuadInit::random;
  double perturbation = 0.05;  // relative noise on Omega for spectral init
};

struct QuadTrainResult {
  Matrix Phi;
  Matrix Theta;
  double final_loss = 0.0;
  int iterations = 0;
};

/// Block-coordinate descent on the quad objective: each sweep minimises
/// exactly over Theta (Phi fixed, rows orthonormalised) and then over Phi.
QuadTrainResult train_quad(const GroundTruth& gt, std::size_t d, const QuadTrainOptions& opts = {});

}  // namespace lmlab
