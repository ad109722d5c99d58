#pragma once

#include <Eigen/Dense>

#include "lmlab/matrix.hpp"
#include "lmlab/numerics.hpp"
#include "lmlab/rng.hpp"
#include "lmlab/world.hpp"

namespace lmlab::testing {

inline Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t j = 0; j < m.cols(); ++j)
    for (std::size_t i = 0; i < m.rows(); ++i) e(i, j) = m(i, j);
  return e;
}

inline Matrix from_eigen(const Eigen::MatrixXd& e) {
  Matrix m(e.rows(), e.cols());
  for (Eigen::Index j = 0; j < e.cols(); ++j)
    for (Eigen::Index i = 0; i < e.rows(); ++i) m(i, j) = e(i, j);
  return m;
}

inline SymMatrix random_symmetric(Rng& rng, std::size_t n) {
  return SymMatrix::symmetrized(rng.normal_matrix(n, n));
}

inline SymMatrix random_psd(Rng& rng, std::size_t n, std::size_t rank) {
  const Matrix g = rng.normal_matrix(n, rank);
  return SymMatrix::symmetrized(mul_abt(g, g));
}

inline GroundTruth random_world(std::uint64_t seed, std::size_t V, std::size_t S,
                                double concentration = 1.0) {
  WorldConfig cfg;
  cfg.V = V;
  cfg.S = S;
  cfg.concentration = concentration;
  cfg.seed = seed;
  return make_ground_truth(cfg);
}

/// Principal angles from an SVD of the product of orthonormal bases (QR).
inline Eigen::VectorXd svd_angles(const Matrix& a, const Matrix& b) {
  const Eigen::MatrixXd at = to_eigen(a).transpose();
  const Eigen::MatrixXd bt = to_eigen(b).transpose();
  const Eigen::Index d = at.cols();
  Eigen::HouseholderQR<Eigen::MatrixXd> qa(at);
  Eigen::HouseholderQR<Eigen::MatrixXd> qb(bt);
  const Eigen::MatrixXd ua = qa.householderQ() * Eigen::MatrixXd::Identity(at.rows(), d);
  const Eigen::MatrixXd ub = qb.householderQ() * Eigen::MatrixXd::Identity(bt.rows(), d);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(ua.transpose() * ub);
  Eigen::VectorXd s = svd.singularValues();
  Eigen::VectorXd out(d);
  for (Eigen::Index i = 0; i < d; ++i) out(i) = std::acos(std::min(1.0, std::max(-1.0, s(i))));
  std::sort(out.data(), out.data() + d);
  return out;
}

}  // namespace lmlab::testing
