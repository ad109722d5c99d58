#include <cmath>

#include "doctest.h"
#include "lmlab/error.hpp"
#include "lmlab/partition_fit.hpp"
#include "lmlab/softmax_lm.hpp"
#include "support.hpp"

using namespace lmlab;

namespace {

// Residual ratio observed by an independent least-squares script on Gaussian
// embeddings (V = 5000, d = 10, 512 unit-norm samples, 50 seeds): max 1.37e-4.
// Frozen with 50% slack.
constexpr double kGaussianResidualThreshold = 2.1e-4;

Matrix unit_columns(Rng& rng, std::size_t d, std::size_t n) {
  Matrix t = rng.normal_matrix(d, n);
  for (std::size_t j = 0; j < n; ++j) {
    const double nn = norm2(t.col(j));
    for (double& x : t.col(j)) x /= nn;
  }
  return t;
}

Matrix gaussian_phi(Rng& rng, std::size_t d, std::size_t V) {
  return (1.0 / std::sqrt(static_cast<double>(d))) * rng.normal_matrix(d, V);
}

}  // namespace

TEST_CASE("planted quadratic log-partition is recovered") {
  Rng rng(1);
  const std::size_t d = 3;
  const Matrix u = rng.normal_matrix(d, d);
  const Matrix a0 = mul_abt(u, u);
  const Vector b0 = rng.normal_vector(d);
  const double c0 = 0.7;
  const Matrix thetas = rng.normal_matrix(d, 60);
  Vector logz(60);
  for (std::size_t n = 0; n < 60; ++n) {
    const auto t = thetas.col(n);
    logz[n] = 0.5 * dot(t, matvec(a0, t)) + dot(b0, t) + c0;
  }
  LogZFitOptions opts;
  opts.max_iters = 20000;
  opts.rel_tol = 1e-15;
  const QuadFit fit = fit_quadratic_targets(thetas, logz, std::nullopt, {1.0, 0.0}, opts);
  CHECK(max_abs_diff(fit.A.matrix(), a0) <= 1e-4);
  for (std::size_t i = 0; i < d; ++i) CHECK(std::abs(fit.b[i] - b0[i]) <= 1e-4);
  CHECK(std::abs(fit.c - c0) <= 1e-4);
}

TEST_CASE("two-word world is not quadratic") {
  const Matrix phi = Matrix::from_rows({{1, -1}});
  Rng rng(2);
  Matrix thetas = rng.normal_matrix(1, 40);
  for (double& x : thetas.data()) x *= 2.0;
  const QuadFit fit = fit_log_partition(thetas, phi, {1.0, 1.0});
  CHECK(fit.regression_mse > 0.0);
  const EigDecomp e = sym_eig(fit.A);
  CHECK(e.values.back() >= -1e-10 * std::max(e.values.front(), 0.0));
}

TEST_CASE("fit_log_partition input errors") {
  Rng rng(3);
  const Matrix phi = rng.normal_matrix(2, 5);
  CHECK_THROWS_AS(fit_log_partition(Matrix(2, 10, 0.5), phi), DegenerateError);
  CHECK_THROWS_AS(fit_log_partition(rng.normal_matrix(2, 2), phi), InputError);
  CHECK_THROWS_AS(fit_log_partition(rng.normal_matrix(3, 10), phi), InputError);
}

TEST_CASE("residual_ratio examples") {
  Rng rng(4);
  const Matrix phi = rng.normal_matrix(2, 6);
  const Matrix theta = rng.normal_matrix(2, 30);
  const Vector p = rng.dirichlet(30, 1.0);

  // Mean predictor scores exactly one.
  const Matrix means = conditional_mean(phi, theta);
  Vector mean(2, 0.0);
  for (std::size_t s = 0; s < 30; ++s)
    for (std::size_t i = 0; i < 2; ++i) mean[i] += p[s] * means(i, s);
  const QuadFit trivial{SymMatrix(Matrix(2, 2)), mean, 0.0, 0.0};
  CHECK(residual_ratio(phi, theta, trivial, p) == doctest::Approx(1.0).epsilon(1e-12));

  const QuadFit fit = fit_log_partition(theta, phi);
  const Vector uniform(30, 1.0 / 30);
  CHECK(residual_ratio(phi, theta, fit, uniform) <= 1.0 + 1e-10);
  CHECK(residual_ratio(phi, theta, fit, uniform) >= 0.0);

  CHECK_THROWS_AS(residual_ratio(phi, Matrix(2, 30), fit, uniform), DegenerateError);
}

TEST_CASE("residual_ratio is invariant to a common shift of the embeddings") {
  Rng rng(5);
  const Matrix phi = rng.normal_matrix(3, 20);
  const Matrix theta = rng.normal_matrix(3, 40);
  const Vector shift = rng.normal_vector(3);
  Matrix moved = phi;
  for (std::size_t w = 0; w < 20; ++w)
    for (std::size_t i = 0; i < 3; ++i) moved(i, w) += shift[i];
  const Vector uniform(40, 1.0 / 40);
  const double r0 = residual_ratio(phi, theta, fit_log_partition(theta, phi), uniform);
  const double r1 = residual_ratio(moved, theta, fit_log_partition(theta, moved), uniform);
  CHECK(std::abs(r0 - r1) <= 1e-10);
}

TEST_CASE("linear_relation_check examples") {
  Rng rng(6);
  const Matrix phi = rng.normal_matrix(2, 7);
  const Matrix one = rng.normal_matrix(2, 1);
  const Vector m = matvec(phi, softmax_predict(phi, one.col(0)).p);
  const QuadFit exact{SymMatrix(Matrix(2, 2)), m, 0.0, 0.0};
  CHECK(linear_relation_check(phi, one, exact, Vector{1.0}).max_dev == 0.0);

  const Matrix theta = rng.normal_matrix(2, 15);
  const Matrix u = rng.normal_matrix(2, 2);
  const QuadFit fit{SymMatrix::symmetrized(mul_abt(u, u)), rng.normal_vector(2), 0.0, 0.0};
  const Vector p = rng.dirichlet(15, 1.0);
  const LinearRelation lr = linear_relation_check(phi, theta, fit, p);
  double mean_dev = 0.0;
  double max_dev = 0.0;
  for (std::size_t s = 0; s < 15; ++s) {
    const Vector cm = matvec(phi, softmax_predict(phi, theta.col(s)).p);
    const Vector pred = axpy(1.0, matvec(fit.A.matrix(), theta.col(s)), fit.b);
    const double dev = norm2(subtract(cm, pred));
    CHECK(std::abs(lr.deviations[s] - dev) <= 1e-12);
    mean_dev += p[s] * dev;
    max_dev = std::max(max_dev, dev);
  }
  CHECK(std::abs(lr.mean_dev - mean_dev) <= 1e-12);
  CHECK(std::abs(lr.max_dev - max_dev) <= 1e-12);
}

TEST_CASE("Gaussian embeddings give a near-linear conditional mean") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(seed);
    const Matrix phi = gaussian_phi(rng, 10, 5000);
    const Matrix thetas = unit_columns(rng, 10, 512);
    const QuadFit fit = fit_log_partition(thetas, phi);
    const EigDecomp e = sym_eig(fit.A);
    CHECK(e.values.back() >= -1e-10 * e.values.front());

    const Vector uniform(512, 1.0 / 512);
    const double r = residual_ratio(phi, thetas, fit, uniform);
    CHECK(r <= 0.05);
    CHECK(r <= kGaussianResidualThreshold);

    const LinearRelation lr = linear_relation_check(phi, thetas, fit, uniform);
    double mean_norm = 0.0;
    const Matrix means = conditional_mean(phi, thetas);
    for (std::size_t n = 0; n < 512; ++n) mean_norm += norm2(means.col(n)) / 512;
    CHECK(lr.mean_dev <= 0.05 * mean_norm);
  }
}

TEST_CASE("gaussian_logz_probe examples") {
  const Vector mu{0.3, -0.2};
  const GaussianProbe zero = gaussian_logz_probe(mu, SymMatrix(Matrix(2, 2)), 100, 5, 1);
  for (double e : zero.errors) CHECK(e <= 1e-12);

  const SymMatrix sigma(Matrix::from_rows({{0.5, 0.1}, {0.1, 0.3}}));
  const GaussianProbe a = gaussian_logz_probe(mu, sigma, 500, 8, 7);
  const GaussianProbe b = gaussian_logz_probe(mu, sigma, 500, 8, 7);
  CHECK(a.errors == b.errors);
  CHECK(a.errors.size() == 8);
}

TEST_CASE("Gaussian log-partition error shrinks with vocabulary size") {
  const std::size_t d = 5;
  const Vector mu(d, 0.0);
  const SymMatrix sigma((1.0 / d) * Matrix::identity(d));
  double err[3] = {0.0, 0.0, 0.0};
  const std::size_t sizes[3] = {1000, 10000, 100000};
  for (std::uint64_t seed = 0; seed < 20; ++seed)
    for (int k = 0; k < 3; ++k) err[k] += gaussian_logz_probe(mu, sigma, sizes[k], 4, seed).mean_abs_error / 20;
  CHECK(err[0] > err[1]);
  CHECK(err[1] > err[2]);
  CHECK(err[2] / err[0] <= 0.5);
}
