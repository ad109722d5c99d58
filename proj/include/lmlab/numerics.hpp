#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "lmlab/matrix.hpp"

namespace lmlab {

/// Relative eigenvalue cutoff used by the pseudo-inverse family. Separates
/// numerical-zero eigenvalues of rank-deficient covariances from real ones.
inline constexpr double kDefaultRelCutoff = 1e-10;

/// Square matrix whose entries are exactly symmetric.
class SymMatrix {
 public:
  SymMatrix() = default;
  /// Throws InputError unless `m` is square and m(i,j) == m(j,i) bitwise.
  explicit SymMatrix(Matrix m);
  /// (m + m^T) / 2, for matrices that are symmetric only up to rounding.
  static SymMatrix symmetrized(const Matrix& m);

  std::size_t n() const noexcept { return m_.rows(); }
  const Matrix& matrix() const noexcept { return m_; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return m_(i, j); }

 private:
  Matrix m_;
};

/// Eigenvalues sorted descending with matching orthonormal eigenvector
/// columns. Each eigenvector's largest-magnitude component is positive
/// (ties broken by the lowest index).
struct EigDecomp {
  Vector values;
  Matrix vectors;

  /// n x d block of the leading eigenvectors.
  Matrix top(std::size_t d) const;
};

/// Cyclic Jacobi eigendecomposition. Stops when the off-diagonal Frobenius
/// norm falls below 1e-12 * ||m||_F or after 100 sweeps.
EigDecomp sym_eig(const SymMatrix& m);

/// Pseudo-inverse square root: eigenvalues >= rel_cutoff * lambda_max map to
/// lambda^{-1/2}, the rest to zero. Throws NotPsdError when an eigenvalue is
/// below -1e-10 * lambda_max.
SymMatrix psd_inv_sqrt(const SymMatrix& m, double rel_cutoff = kDefaultRelCutoff);

/// Moore-Penrose pseudo-inverse of a PSD matrix with the same cutoff rule.
SymMatrix psd_pinv(const SymMatrix& m, double rel_cutoff = kDefaultRelCutoff);

/// Principal square root of a PSD matrix (negative rounding noise clipped).
SymMatrix psd_sqrt(const SymMatrix& m);

/// Largest absolute eigenvalue.
double spectral_norm(const SymMatrix& m);

/// Orthonormal rows spanning row-span(a). Rows whose residual after
/// orthogonalisation falls below rel_tol * max row norm are dropped.
Matrix orthonormal_row_basis(const Matrix& a, double rel_tol = 1e-10);

/// Principal angles (radians, ascending) between row-span(a) and row-span(b).
/// Both inputs must be d x n with full row rank; otherwise DegenerateError.
/// Small angles come from the sines of the residual, large ones from the
/// cosines, so both ends of [0, pi/2] are resolved to working precision.
Vector principal_angles(const Matrix& a, const Matrix& b);

/// Solves (a + jitter I) x = b for symmetric positive (semi)definite `a` by
/// Cholesky, growing the jitter until the factorisation succeeds. Returns
/// nullopt if it never does.
std::optional<Vector> solve_spd(const Matrix& a, std::span<const double> b,
                                double initial_jitter = 0.0);

/// Orthogonal projector onto row-span(a) (n x n).
Matrix row_span_projector(const Matrix& a, double rel_tol = 1e-10);

}  // namespace lmlab
