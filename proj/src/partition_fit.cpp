#include "lmlab/partition_fit.hpp"

#include <algorithm>
#include <cmath>

#include "lmlab/error.hpp"
#include "lmlab/kernels.hpp"
#include "lmlab/rng.hpp"
#include "lmlab/softmax_lm.hpp"

namespace lmlab {

namespace {

struct Targets {
  const Matrix& thetas;
  const std::optional<Vector>& logz;
  const std::optional<Matrix>& means;
  LogZWeights w;
};

struct Params {
  Matrix U;
  Vector b;
  double c = 0.0;
};

Matrix gram(const Matrix& u) { return mul_abt(u, u); }

double quad_value(const Matrix& a, std::span<const double> b, double c, std::span<const double> th) {
  return 0.5 * dot(th, matvec(a, th)) + dot(b, th) + c;
}

double objective(const Targets& t, const Params& p) {
  const Matrix a = gram(p.U);
  const std::size_t n = t.thetas.cols();
  CompensatedSum acc;
  for (std::size_t k = 0; k < n; ++k) {
    auto th = t.thetas.col(k);
    if (t.w.lambda1 > 0.0) {
      const double r = (*t.logz)[k] - quad_value(a, p.b, p.c, th);
      acc.add(t.w.lambda1 * r * r);
    }
    if (t.w.lambda2 > 0.0) {
      const Vector r = subtract(t.means->col(k), axpy(1.0, p.b, matvec(a, th)));
      acc.add(t.w.lambda2 * dot(r, r));
    }
  }
  return acc.value() / static_cast<double>(n);
}

void gradient(const Targets& t, const Params& p, Matrix& gu, Vector& gb, double& gc) {
  const std::size_t d = p.U.rows();
  const std::size_t n = t.thetas.cols();
  const Matrix a = gram(p.U);
  Matrix g(d, d);  // derivative in an unconstrained A
  gb.assign(d, 0.0);
  gc = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    auto th = t.thetas.col(k);
    if (t.w.lambda1 > 0.0) {
      const double r = (*t.logz)[k] - quad_value(a, p.b, p.c, th);
      const double f = -t.w.lambda1 * r * inv_n;
      for (std::size_t j = 0; j < d; ++j)
        for (std::size_t i = 0; i < d; ++i) g(i, j) += f * th[i] * th[j];
      for (std::size_t i = 0; i < d; ++i) gb[i] += 2.0 * f * th[i];
      gc += 2.0 * f;
    }
    if (t.w.lambda2 > 0.0) {
      const Vector r = subtract(t.means->col(k), axpy(1.0, p.b, matvec(a, th)));
      const double f = -2.0 * t.w.lambda2 * inv_n;
      for (std::size_t j = 0; j < d; ++j)
        for (std::size_t i = 0; i < d; ++i) g(i, j) += f * r[i] * th[j];
      for (std::size_t i = 0; i < d; ++i) gb[i] += f * r[i];
    }
  }
  gu = (g + g.transposed()) * p.U;
}

// Unconstrained least squares over (symmetric A, b, c).
Params linear_start(const Targets& t) {
  const std::size_t d = t.thetas.rows();
  const std::size_t n = t.thetas.cols();
  const std::size_t na = d * (d + 1) / 2;
  const bool fit_c = t.w.lambda1 > 0.0;
  const std::size_t np = na + d + (fit_c ? 1 : 0);
  auto aidx = [d](std::size_t i, std::size_t j) {
    if (i > j) std::swap(i, j);
    return j * (j + 1) / 2 + i;
  };
  (void)d;
  Matrix normal(np, np);
  Vector rhs(np, 0.0);
  Vector row(np);
  auto add_row = [&](double weight, double target) {
    for (std::size_t j = 0; j < np; ++j) {
      if (row[j] == 0.0) continue;
      const double rj = weight * row[j];
      auto nj = normal.col(j);
      for (std::size_t i = 0; i < np; ++i) nj[i] += rj * row[i];
      rhs[j] += rj * target;
    }
  };
  for (std::size_t k = 0; k < n; ++k) {
    auto th = t.thetas.col(k);
    if (t.w.lambda1 > 0.0) {
      std::fill(row.begin(), row.end(), 0.0);
      for (std::size_t j = 0; j < d; ++j)
        for (std::size_t i = 0; i <= j; ++i) row[aidx(i, j)] = i == j ? 0.5 * th[i] * th[i] : th[i] * th[j];
      for (std::size_t i = 0; i < d; ++i) row[na + i] = th[i];
      row[na + d] = 1.0;
      add_row(t.w.lambda1, (*t.logz)[k]);
    }
    if (t.w.lambda2 > 0.0) {
      auto m = t.means->col(k);
      for (std::size_t out = 0; out < d; ++out) {
        std::fill(row.begin(), row.end(), 0.0);
        for (std::size_t j = 0; j < d; ++j) row[aidx(out, j)] += th[j];
        row[na + out] = 1.0;
        add_row(t.w.lambda2, m[out]);
      }
    }
  }
  const double scale = std::max(trace(normal) / static_cast<double>(np), 1e-300);
  auto x = solve_spd(normal, rhs, 1e-13 * scale);
  if (!x) throw DegenerateError("fit_log_partition: singular regression");

  Matrix a(d, d);
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t i = 0; i <= j; ++i) a(i, j) = a(j, i) = (*x)[aidx(i, j)];
  Params p;
  p.U = psd_sqrt(SymMatrix::symmetrized(a)).matrix();
  p.b.assign(x->begin() + static_cast<std::ptrdiff_t>(na),
             x->begin() + static_cast<std::ptrdiff_t>(na + d));
  p.c = fit_c ? (*x)[na + d] : 0.0;
  return p;
}

}  // namespace

QuadFit fit_quadratic_targets(const Matrix& thetas, std::optional<Vector> logz,
                              std::optional<Matrix> means, const LogZWeights& weights,
                              const LogZFitOptions& opts) {
  const std::size_t d = thetas.rows();
  const std::size_t n = thetas.cols();
  if (d == 0) throw InputError("fit_log_partition: empty feature dimension");
  if (weights.lambda1 < 0.0 || weights.lambda2 < 0.0 || weights.lambda1 + weights.lambda2 <= 0.0)
    throw InputError("fit_log_partition: weights must be non-negative and not both zero");
  if (n < d + 1) throw InputError("fit_log_partition: need at least d+1 samples");
  if (weights.lambda1 > 0.0 && (!logz || logz->size() != n))
    throw InputError("fit_log_partition: log-partition targets required");
  if (weights.lambda2 > 0.0 && (!means || means->rows() != d || means->cols() != n))
    throw InputError("fit_log_partition: conditional-mean targets required");
  if (!all_finite(thetas)) throw InputError("fit_log_partition: non-finite samples");
  bool distinct = false;
  for (std::size_t k = 1; k < n && !distinct; ++k)
    distinct = !std::equal(thetas.col(k).begin(), thetas.col(k).end(), thetas.col(0).begin());
  if (!distinct) throw DegenerateError("fit_log_partition: all samples identical (singular regression)");

  const Targets t{thetas, logz, means, weights};
  Params p = linear_start(t);
  double f = objective(t, p);
  double step = 1.0;
  Matrix gu;
  Vector gb;
  double gc = 0.0;
  for (int it = 0; it < opts.max_iters && f > 0.0; ++it) {
    gradient(t, p, gu, gb, gc);
    if (weights.lambda1 == 0.0) gc = 0.0;
    const double g2 = dot(gu.data(), gu.data()) + dot(gb, gb) + gc * gc;
    if (g2 == 0.0) break;
    bool accepted = false;
    double next = f;
    for (int k = 0; k < 60; ++k, step *= 0.5) {
      Params cand{p.U - step * gu, axpy(-step, gb, p.b), p.c - step * gc};
      const double fc = objective(t, cand);
      if (fc <= f - 1e-4 * step * g2) {
        p = std::move(cand);
        next = fc;
        accepted = true;
        break;
      }
    }
    const double improvement = (f - next) / std::max(std::abs(f), 1e-300);
    f = next;
    if (accepted) step *= 2.0;
    if (it + 1 >= opts.min_iters && (!accepted || improvement < opts.rel_tol)) break;
  }

  QuadFit fit;
  fit.A = SymMatrix::symmetrized(gram(p.U));
  fit.b = p.b;
  fit.c = p.c;
  if (weights.lambda1 == 0.0 && logz) {
    CompensatedSum acc;
    for (std::size_t k = 0; k < n; ++k)
      acc.add((*logz)[k] - quad_value(fit.A.matrix(), fit.b, 0.0, thetas.col(k)));
    fit.c = acc.value() / static_cast<double>(n);
  }
  fit.regression_mse = f;
  return fit;
}

QuadFit fit_log_partition(const Matrix& thetas, const Matrix& phi, const LogZWeights& weights,
                          const LogZFitOptions& opts) {
  if (phi.rows() != thetas.rows()) throw InputError("fit_log_partition: Phi and samples disagree on d");
  Vector logz;
  const Matrix p = par::softmax_table(phi, thetas, &logz);
  return fit_quadratic_targets(thetas, std::move(logz), phi * p, weights, opts);
}

namespace {

Matrix relation_residuals(const Matrix& phi, const Matrix& theta, const QuadFit& fit, Matrix* means) {
  if (phi.rows() != theta.rows() || fit.A.n() != theta.rows() || fit.b.size() != theta.rows())
    throw InputError("linear relation: dimension mismatch");
  Matrix m = conditional_mean(phi, theta);
  Matrix r = m - fit.A.matrix() * theta;
  for (std::size_t s = 0; s < r.cols(); ++s) {
    auto c = r.col(s);
    for (std::size_t i = 0; i < c.size(); ++i) c[i] -= fit.b[i];
  }
  if (means) *means = std::move(m);
  return r;
}

}  // namespace

double residual_ratio(const Matrix& phi, const Matrix& theta, const QuadFit& fit,
                      std::span<const double> p) {
  if (p.size() != theta.cols()) throw InputError("residual_ratio: weights must have one entry per context");
  Matrix means;
  const Matrix r = relation_residuals(phi, theta, fit, &means);
  const Vector mean = matvec(means, p);
  CompensatedSum num;
  CompensatedSum den;
  for (std::size_t s = 0; s < theta.cols(); ++s) {
    if (p[s] == 0.0) continue;
    const Vector centred = subtract(means.col(s), mean);
    num.add(p[s] * dot(r.col(s), r.col(s)));
    den.add(p[s] * dot(centred, centred));
  }
  if (!(den.value() > 1e-14)) throw DegenerateError("residual_ratio: features are all identical");
  return num.value() / den.value();
}

LinearRelation linear_relation_check(const Matrix& phi, const Matrix& theta, const QuadFit& fit,
                                     std::span<const double> p) {
  if (p.size() != theta.cols()) throw InputError("linear_relation_check: weights must have one entry per context");
  const Matrix r = relation_residuals(phi, theta, fit, nullptr);
  LinearRelation out;
  out.deviations.resize(theta.cols());
  CompensatedSum mean;
  for (std::size_t s = 0; s < theta.cols(); ++s) {
    out.deviations[s] = norm2(r.col(s));
    if (p[s] == 0.0) continue;
    out.max_dev = std::max(out.max_dev, out.deviations[s]);
    mean.add(p[s] * out.deviations[s]);
  }
  out.mean_dev = mean.value();
  return out;
}

GaussianProbe gaussian_logz_probe(std::span<const double> mu, const SymMatrix& sigma, std::size_t V,
                                  std::size_t n_theta, std::uint64_t seed) {
  const std::size_t d = mu.size();
  if (sigma.n() != d) throw InputError("gaussian_logz_probe: Sigma must be d x d");
  if (V < 1 || n_theta < 1) throw InputError("gaussian_logz_probe: V and n_theta must be positive");
  const Matrix root = psd_sqrt(sigma).matrix();
  Rng rng(seed);

  // Centred embeddings phi_w - mu = Sigma^{1/2} z_w, one stream per word.
  const Rng emb = rng.split("embeddings");
  Matrix centred(d, V);
  const std::ptrdiff_t nv = static_cast<std::ptrdiff_t>(V);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t w = 0; w < nv; ++w) {
    Rng word = emb.split(static_cast<std::uint64_t>(w));
    const Vector z = word.normal_vector(d);
    centred.set_col(static_cast<std::size_t>(w), matvec(root, z));
  }

  Rng theta_rng = rng.split("theta");
  GaussianProbe out;
  out.errors.resize(n_theta);
  const double log_v = std::log(static_cast<double>(V));
  CompensatedSum mean;
  for (std::size_t k = 0; k < n_theta; ++k) {
    Vector th = theta_rng.normal_vector(d);
    const double nrm = norm2(th);
    for (double& x : th) x /= nrm;
    const double q = dot(th, matvec(sigma.matrix(), th));
    if (q > 4.0) {
      const double f = 2.0 / std::sqrt(q);
      for (double& x : th) x *= f;
    }
    const double half_q = 0.5 * dot(th, matvec(sigma.matrix(), th));
    const double lse = par::logsumexp_logits(centred, th);
    out.errors[k] = std::abs(lse - half_q - log_v);
    out.max_abs_error = std::max(out.max_abs_error, out.errors[k]);
    mean.add(out.errors[k]);
  }
  out.mean_abs_error = mean.value() / static_cast<double>(n_theta);
  return out;
}

}  // namespace lmlab
