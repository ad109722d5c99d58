#include "lmlab/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "lmlab/error.hpp"

namespace lmlab {

namespace {

constexpr int kMaxSweeps = 100;
constexpr double kOffDiagTol = 1e-12;
constexpr double kNegEigTol = 1e-10;

double off_diagonal_norm(const Matrix& a) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.cols(); ++j)
    for (std::size_t i = 0; i < j; ++i) s += a(i, j) * a(i, j);
  return std::sqrt(2.0 * s);
}

void canonicalize_sign(std::span<double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[best])) best = i;
  if (v[best] < 0.0)
    for (double& x : v) x = -x;
}

// Symmetric matrix from eigenpairs with f applied to each retained value.
template <class F>
SymMatrix spectral_map(const EigDecomp& e, F&& f) {
  const std::size_t n = e.values.size();
  Matrix out(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto mapped = f(e.values[k]);
    if (!mapped || *mapped == 0.0) continue;
    auto vk = e.vectors.col(k);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i <= j; ++i) out(i, j) += *mapped * vk[i] * vk[j];
  }
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < j; ++i) out(j, i) = out(i, j);
  return SymMatrix(std::move(out));
}

void check_psd(const EigDecomp& e) {
  if (e.values.empty()) return;
  const double lmax = e.values.front();
  const double lmin = e.values.back();
  if (lmin < 0.0 && lmin < -kNegEigTol * std::max(lmax, 0.0))
    throw NotPsdError("matrix is not positive semidefinite (min eigenvalue " +
                      std::to_string(lmin) + ")");
}

// Rows of `a` as vectors, orthonormalised by two passes of modified
// Gram-Schmidt. Returns the kept rows and how many were dropped.
std::pair<std::vector<Vector>, std::size_t> gram_schmidt_rows(const Matrix& a, double rel_tol) {
  double max_norm = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) max_norm = std::max(max_norm, norm2(a.row(i)));
  std::vector<Vector> basis;
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    Vector r = a.row(i);
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& q : basis) {
        const double c = dot(q, r);
        for (std::size_t k = 0; k < r.size(); ++k) r[k] -= c * q[k];
      }
    const double nr = norm2(r);
    if (max_norm == 0.0 || nr <= rel_tol * max_norm) {
      ++dropped;
      continue;
    }
    for (double& x : r) x /= nr;
    basis.push_back(std::move(r));
  }
  return {std::move(basis), dropped};
}

}  // namespace

SymMatrix::SymMatrix(Matrix m) : m_(std::move(m)) {
  if (m_.rows() != m_.cols()) throw InputError("SymMatrix: matrix is not square");
  for (std::size_t j = 0; j < m_.cols(); ++j)
    for (std::size_t i = 0; i < j; ++i)
      if (!(m_(i, j) == m_(j, i)) && !(std::isnan(m_(i, j)) && std::isnan(m_(j, i))))
        throw InputError("SymMatrix: matrix is not symmetric");
}

SymMatrix SymMatrix::symmetrized(const Matrix& m) {
  if (m.rows() != m.cols()) throw InputError("SymMatrix: matrix is not square");
  Matrix s(m.rows(), m.cols());
  for (std::size_t j = 0; j < m.cols(); ++j)
    for (std::size_t i = 0; i <= j; ++i) {
      const double v = 0.5 * (m(i, j) + m(j, i));
      s(i, j) = v;
      s(j, i) = v;
    }
  return SymMatrix(std::move(s));
}

Matrix EigDecomp::top(std::size_t d) const {
  if (d > values.size()) throw InputError("EigDecomp::top: d exceeds dimension");
  Matrix out(vectors.rows(), d);
  for (std::size_t k = 0; k < d; ++k) out.set_col(k, vectors.col(k));
  return out;
}

EigDecomp sym_eig(const SymMatrix& m) {
  if (!all_finite(m.matrix())) throw InputError("sym_eig: non-finite entries");
  const std::size_t n = m.n();
  Matrix a = m.matrix();
  Matrix v = Matrix::identity(n);
  const double target = kOffDiagTol * frobenius_norm(a);

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    if (off_diagonal_norm(a) <= target) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p);
        const double aqq = a(q, q);
        // Negligible against both diagonal entries: drop it.
        if (sweep > 3 && std::abs(app) + 100.0 * std::abs(apq) == std::abs(app) &&
            std::abs(aqq) + 100.0 * std::abs(apq) == std::abs(aqq)) {
          a(p, q) = 0.0;
          a(q, p) = 0.0;
          continue;
        }
        const double theta = (aqq - app) / (2.0 * apq);
        double t;
        if (std::abs(theta) > 1e150)
          t = 1.0 / (2.0 * theta);
        else
          t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (std::size_t r = 0; r < n; ++r) {
          if (r == p || r == q) continue;
          const double arp = a(r, p);
          const double arq = a(r, q);
          const double nrp = c * arp - s * arq;
          const double nrq = s * arp + c * arq;
          a(r, p) = nrp;
          a(p, r) = nrp;
          a(r, q) = nrq;
          a(q, r) = nrq;
        }
        a(p, p) = app - t * apq;
        a(q, q) = aqq + t * apq;
        a(p, q) = 0.0;
        a(q, p) = 0.0;

        auto vp = v.col(p);
        auto vq = v.col(q);
        for (std::size_t r = 0; r < n; ++r) {
          const double x = vp[r];
          const double y = vq[r];
          vp[r] = c * x - s * y;
          vq[r] = s * x + c * y;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

  EigDecomp out;
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    out.vectors.set_col(k, v.col(order[k]));
    canonicalize_sign(out.vectors.col(k));
  }
  return out;
}

SymMatrix psd_inv_sqrt(const SymMatrix& m, double rel_cutoff) {
  const EigDecomp e = sym_eig(m);
  check_psd(e);
  const double lmax = e.values.empty() ? 0.0 : e.values.front();
  return spectral_map(e, [&](double l) -> std::optional<double> {
    if (lmax <= 0.0 || l <= 0.0 || l < rel_cutoff * lmax) return std::nullopt;
    return 1.0 / std::sqrt(l);
  });
}

SymMatrix psd_pinv(const SymMatrix& m, double rel_cutoff) {
  const EigDecomp e = sym_eig(m);
  check_psd(e);
  const double lmax = e.values.empty() ? 0.0 : e.values.front();
  return spectral_map(e, [&](double l) -> std::optional<double> {
    if (lmax <= 0.0 || l <= 0.0 || l < rel_cutoff * lmax) return std::nullopt;
    return 1.0 / l;
  });
}

SymMatrix psd_sqrt(const SymMatrix& m) {
  const EigDecomp e = sym_eig(m);
  check_psd(e);
  return spectral_map(e, [](double l) -> std::optional<double> {
    if (l <= 0.0) return std::nullopt;
    return std::sqrt(l);
  });
}

double spectral_norm(const SymMatrix& m) {
  if (m.n() == 0) return 0.0;
  const EigDecomp e = sym_eig(m);
  return std::max(std::abs(e.values.front()), std::abs(e.values.back()));
}

Matrix orthonormal_row_basis(const Matrix& a, double rel_tol) {
  auto [basis, dropped] = gram_schmidt_rows(a, rel_tol);
  (void)dropped;
  Matrix q(basis.size(), a.cols());
  for (std::size_t i = 0; i < basis.size(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) q(i, j) = basis[i][j];
  return q;
}

Matrix row_span_projector(const Matrix& a, double rel_tol) {
  const Matrix q = orthonormal_row_basis(a, rel_tol);
  return mul_atb(q, q);
}

Vector principal_angles(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw InputError("principal_angles: inputs must have the same shape");
  if (!all_finite(a) || !all_finite(b)) throw InputError("principal_angles: non-finite entries");
  const Matrix qa = orthonormal_row_basis(a);
  const Matrix qb = orthonormal_row_basis(b);
  if (qa.rows() != a.rows() || qb.rows() != b.rows())
    throw DegenerateError("principal_angles: input does not have full row rank");
  const std::size_t d = a.rows();

  const Matrix m = mul_abt(qa, qb);    // d x d, cosines
  const Matrix r = qa - m * qb;        // component of span(a) orthogonal to span(b)
  const EigDecomp cos2 = sym_eig(SymMatrix::symmetrized(mul_abt(m, m)));
  const EigDecomp sin2 = sym_eig(SymMatrix::symmetrized(mul_abt(r, r)));

  Vector angles(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double c = std::sqrt(std::max(cos2.values[i], 0.0));
    const double s = std::sqrt(std::max(sin2.values[d - 1 - i], 0.0));
    angles[i] = std::clamp(std::atan2(s, c), 0.0, std::numbers::pi / 2.0);
  }
  std::sort(angles.begin(), angles.end());
  return angles;
}

std::optional<Vector> solve_spd(const Matrix& a, std::span<const double> b,
                                double initial_jitter) {
  const std::size_t n = a.rows();
  double diag_scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) diag_scale = std::max(diag_scale, std::abs(a(i, i)));
  if (diag_scale == 0.0) diag_scale = 1.0;
  double jitter = initial_jitter;
  for (int attempt = 0; attempt < 30; ++attempt) {
    Matrix l(n, n);
    bool ok = true;
    for (std::size_t j = 0; j < n && ok; ++j) {
      double s = a(j, j) + jitter;
      for (std::size_t k = 0; k < j; ++k) s -= l(j, k) * l(j, k);
      if (!(s > 0.0)) {
        ok = false;
        break;
      }
      l(j, j) = std::sqrt(s);
      for (std::size_t i = j + 1; i < n; ++i) {
        double t = a(i, j);
        for (std::size_t k = 0; k < j; ++k) t -= l(i, k) * l(j, k);
        l(i, j) = t / l(j, j);
      }
    }
    if (ok) {
      Vector y(n);
      for (std::size_t i = 0; i < n; ++i) {
        double t = b[i];
        for (std::size_t k = 0; k < i; ++k) t -= l(i, k) * y[k];
        y[i] = t / l(i, i);
      }
      Vector x(n);
      for (std::size_t ii = n; ii-- > 0;) {
        double t = y[ii];
        for (std::size_t k = ii + 1; k < n; ++k) t -= l(k, ii) * x[k];
        x[ii] = t / l(ii, ii);
      }
      if (all_finite(x)) return x;
    }
    jitter = jitter == 0.0 ? 1e-14 * diag_scale : jitter * 10.0;
  }
  return std::nullopt;
}

}  // namespace lmlab
