#include "lmlab/quad_lm.hpp"

#include <cmath>

#include "lmlab/error.hpp"
#include "lmlab/kernels.hpp"
#include "lmlab/rng.hpp"

namespace lmlab {

namespace {

// (Theta diag(w) Theta^T)^{-1} Theta diag(w) Pstar^T
Matrix phi_block_update(const Matrix& theta, std::span<const double> w, const Matrix& pstar) {
  const std::size_t d = theta.rows();
  const Matrix g = par::weighted_outer_sum(theta, w);
  Matrix weighted = theta;
  for (std::size_t s = 0; s < theta.cols(); ++s)
    for (double& x : weighted.col(s)) x *= w[s];
  const Matrix rhs = mul_abt(weighted, pstar);  // d x V
  const SymMatrix g_pinv = psd_pinv(SymMatrix(g));
  Matrix phi = g_pinv.matrix() * rhs;
  if (phi.rows() != d) throw InputError("train_quad: internal dimension error");
  return phi;
}

}  // namespace

double Substitutability::eigengap(std::size_t d) const {
  const auto& v = decomp.values;
  if (d == 0 || d > v.size()) throw InputError("eigengap: d out of range");
  return d == v.size() ? v[d - 1] : v[d - 1] - v[d];
}

Substitutability substitutability(const GroundTruth& gt) {
  Substitutability out;
  out.omega = SymMatrix(par::weighted_outer_sum(gt.Pstar, gt.p_L));
  out.decomp = sym_eig(out.omega);
  return out;
}

double quad_loss(const GroundTruth& gt, const Matrix& phi, const Matrix& theta) {
  if (phi.cols() != gt.V || theta.rows() != phi.rows() || theta.cols() != gt.S)
    throw InputError("quad_loss: dimension mismatch");
  CompensatedSum acc;
  for (std::size_t s = 0; s < gt.S; ++s) {
    if (gt.p_L[s] == 0.0) continue;
    const Vector fp = matvec(phi, gt.Pstar.col(s));
    const Vector scores = matvec_t(phi, theta.col(s));
    acc.add(gt.p_L[s] * (-dot(theta.col(s), fp) + 0.5 * dot(scores, scores)));
  }
  return acc.value();
}

Matrix quad_optimal_features(const GroundTruth& gt, const Matrix& phi, double rel_cutoff) {
  if (phi.cols() != gt.V) throw InputError("quad_optimal_features: Phi must have V columns");
  if (!all_finite(phi)) throw InputError("quad_optimal_features: non-finite Phi");
  const SymMatrix gram = SymMatrix::symmetrized(mul_abt(phi, phi));
  const SymMatrix pinv = psd_pinv(gram, rel_cutoff);
  return pinv.matrix() * (phi * gt.Pstar);
}

QuadSolution quad_closed_form(const GroundTruth& gt, std::size_t d) {
  return quad_closed_form(gt, substitutability(gt), d);
}

QuadSolution quad_closed_form(const GroundTruth& gt, const Substitutability& sub, std::size_t d) {
  if (d < 1 || d > gt.V) throw InputError("quad_closed_form: d must lie in [1, V]");
  QuadSolution out;
  out.PhiStar = sub.Ud(d).transposed();
  out.ThetaStar = quad_optimal_features(gt, out.PhiStar);
  CompensatedSum top;
  for (std::size_t i = 0; i < d; ++i) top.add(sub.decomp.values[i]);
  out.value = -0.5 * top.value();
  out.degenerate_gap = d < gt.V && sub.eigengap(d) <= 1e-12;
  return out;
}

QuadTrainResult train_quad(const GroundTruth& gt, std::size_t d, const QuadTrainOptions& opts) {
  if (d < 1 || d > gt.V) throw InputError("train_quad: d must lie in [1, V]");
  Rng rng(opts.seed);
  Matrix phi;
  if (opts.init == QuadInit::random) {
    Rng init_rng = rng.split("phi");
    phi = init_rng.normal_matrix(d, gt.V);
  } else {
    const Substitutability sub = substitutability(gt);
    Rng noise_rng = rng.split("perturbation");
    const Matrix noise = noise_rng.normal_matrix(gt.V, gt.V);
    const double scale = opts.perturbation * spectral_norm(sub.omega) / std::sqrt(double(gt.V));
    const SymMatrix perturbed =
        SymMatrix::symmetrized(sub.omega.matrix() + scale * noise);
    phi = sym_eig(perturbed).top(d).transposed();
  }

  QuadTrainResult out;
  double prev = quad_loss(gt, phi, Matrix(d, gt.S));
  for (int it = 0; it < opts.max_iters; ++it) {
    phi = orthonormal_row_basis(phi);
    if (phi.rows() != d)
      throw DivergenceError("train_quad: embedding rows became linearly dependent");
    // With orthonormal rows, the exact Theta minimiser is Phi Pstar.
    out.Theta = phi * gt.Pstar;
    phi = phi_block_update(out.Theta, gt.p_L, gt.Pstar);
    const double loss = quad_loss(gt, phi, out.Theta);
    out.iterations = it + 1;
    if (!std::isfinite(loss)) throw DivergenceError("train_quad: non-finite loss");
    if (loss > prev + 1e-12 * (std::abs(prev) + 1.0))
      throw DivergenceError("train_quad: loss increased from " + std::to_string(prev) + " to " +
                            std::to_string(loss));
    const bool done = prev - loss <= 1e-17;
    prev = loss;
    if (done) break;
  }
  // Re-express in orthonormal gauge with the exact Theta for that Phi.
  out.Phi = orthonormal_row_basis(phi);
  if (out.Phi.rows() != d) throw DivergenceError("train_quad: rank collapse");
  out.Theta = out.Phi * gt.Pstar;
  out.final_loss = quad_loss(gt, out.Phi, out.Theta);
  return out;
}

}  // namespace lmlab
