#include <cmath>

#include "doctest.h"
#include "lmlab/error.hpp"
#include "lmlab/linear_eval.hpp"
#include "support.hpp"

using namespace lmlab;
using lmlab::testing::random_world;

namespace {

double brute_loss(const Matrix& g, const Task& t, const Vector& v, double b, LossKind kind) {
  double total = 0.0;
  for (std::size_t s = 0; s < g.cols(); ++s) {
    double yhat = b;
    for (std::size_t i = 0; i < g.rows(); ++i) yhat += v[i] * g(i, s);
    const double q = t.p_positive(s);
    auto l = [&](int y) {
      return kind == LossKind::hinge ? std::max(0.0, 1.0 - y * yhat) : std::log1p(std::exp(-y * yhat));
    };
    total += t.p_T[s] * (q * l(1) + (1 - q) * l(-1));
  }
  return total;
}

Task random_task(Rng& rng, std::size_t S) {
  Task t;
  t.p_T = rng.dirichlet(S, 1.0);
  t.labels.resize(S);
  for (auto& y : t.labels) y = rng.uniform() < 0.5 ? 1 : -1;
  return t;
}

}  // namespace

TEST_CASE("clf_loss examples") {
  Rng rng(1);
  const Matrix g = rng.normal_matrix(4, 10);
  const Task t = random_task(rng, 10);
  CHECK(clf_loss(g, t, Vector(4, 0.0)) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(clf_loss(g, t, Vector(4, 0.0), 0.0, LossKind::logistic) == doctest::Approx(std::log(2.0)));

  // Labels agreeing with a scaled score clear the margin.
  const Vector v = rng.normal_vector(4);
  Task sep = t;
  double min_abs = 1e300;
  for (std::size_t s = 0; s < 10; ++s) {
    const double sc = dot(v, g.col(s));
    sep.labels[s] = sc >= 0 ? 1 : -1;
    min_abs = std::min(min_abs, std::abs(sc));
  }
  Vector vs = v;
  for (double& x : vs) x *= 1.01 / min_abs;
  CHECK(clf_loss(g, sep, vs) == 0.0);

  for (int rep = 0; rep < 20; ++rep) {
    const Task n = with_flip_noise(random_task(rng, 10), rng.uniform() * 0.5);
    const Vector u = rng.normal_vector(4);
    const double b = rng.normal();
    for (LossKind k : {LossKind::hinge, LossKind::logistic})
      CHECK(std::abs(clf_loss(g, n, u, b, k) - brute_loss(g, n, u, b, k)) <= 1e-12);
  }
}

TEST_CASE("clf_loss is convex in (v, intercept)") {
  Rng rng(2);
  const Matrix g = rng.normal_matrix(5, 20);
  const Task t = with_flip_noise(random_task(rng, 20), 0.1);
  for (int rep = 0; rep < 200; ++rep) {
    const Vector u = rng.normal_vector(5);
    const Vector v = rng.normal_vector(5);
    const double bu = rng.normal();
    const double bv = rng.normal();
    Vector mid(5);
    for (std::size_t i = 0; i < 5; ++i) mid[i] = 0.5 * (u[i] + v[i]);
    for (LossKind k : {LossKind::hinge, LossKind::logistic})
      CHECK(clf_loss(g, t, mid, 0.5 * (bu + bv), k) <=
            0.5 * (clf_loss(g, t, u, bu, k) + clf_loss(g, t, v, bv, k)) + 1e-12);
  }
}

TEST_CASE("fit_linear solves a separable task within the bound") {
  Rng rng(3);
  for (int rep = 0; rep < 5; ++rep) {
    const Matrix g = rng.normal_matrix(4, 15);
    const Vector v0 = rng.normal_vector(4);
    Task t = random_task(rng, 15);
    double min_abs = 1e300;
    for (std::size_t s = 0; s < 15; ++s) {
      const double sc = dot(v0, g.col(s));
      t.labels[s] = sc >= 0 ? 1 : -1;
      min_abs = std::min(min_abs, std::abs(sc));
    }
    const double B = norm_inf(v0) / min_abs;
    FitConstraints c;
    c.inf_norm_bound = B;
    for (LossKind k : {LossKind::hinge}) {
      c.loss = k;
      FitOptions fo;
      fo.max_iters = 50000;
      fo.patience = 50000;
      const FitResult r = fit_linear(g, t, c, fo);
      CHECK(r.loss <= 1e-4);
      CHECK(norm_inf(r.v) <= B + 1e-12);
      CHECK(r.loss == clf_loss(g, t, r.v, r.intercept, k));
    }
  }
}

TEST_CASE("FeasibleSet output satisfies both constraints") {
  Rng rng(4);
  for (int rep = 0; rep < 50; ++rep) {
    const Matrix phi = rng.normal_matrix(3, 12);
    const double B = 0.05 + rng.uniform();
    const FeasibleSet fs(12, B, phi);
    Vector x = rng.normal_vector(12);
    for (double& e : x) e *= 5.0;
    const Vector p = fs.project(x);
    CHECK(norm_inf(p) <= B + 1e-12);
    CHECK(fs.subspace_residual(p) <= 1e-10 * std::max(norm2(p), 1e-300));
  }
  // Full-rank subspace is vacuous.
  const FeasibleSet full(4, std::nullopt, rng.normal_matrix(4, 4));
  CHECK(!full.has_subspace());
}

TEST_CASE("subspace-constrained fits respect the subspace and are no better than unconstrained") {
  const GroundTruth gt = random_world(5, 10, 30);
  Rng rng(6);
  for (int rep = 0; rep < 5; ++rep) {
    const Task t = random_task(rng, 30);
    const Matrix phi = rng.normal_matrix(3, 10);
    FitConstraints c;
    c.inf_norm_bound = 5.0;
    c.subspace = phi;
    const FitResult sub = fit_linear(gt.Pstar, t, c);
    CHECK(norm_inf(sub.v) <= 5.0 + 1e-12);
    const FeasibleSet fs(10, std::nullopt, phi);
    CHECK(fs.subspace_residual(sub.v) <= 1e-10 * norm2(sub.v) + 1e-300);

    // Warm-started from the constrained solution, the unconstrained fit can only improve.
    c.subspace.reset();
    FitOptions fo;
    fo.init = sub.v;
    const FitResult free = fit_linear(gt.Pstar, t, c, fo);
    CHECK(free.loss <= sub.loss + 1e-8);
  }
}

TEST_CASE("logistic fit reaches first-order optimality without constraints") {
  Rng rng(7);
  const Matrix g = rng.normal_matrix(3, 25);
  const Task t = with_flip_noise(random_task(rng, 25), 0.3);
  FitConstraints c;
  c.loss = LossKind::logistic;
  FitOptions fo;
  fo.max_iters = 20000;
  const FitResult r = fit_linear(g, t, c, fo);
  // Central-difference gradient at the returned point.
  for (std::size_t i = 0; i < 3; ++i) {
    Vector a = r.v;
    Vector b = r.v;
    a[i] += 1e-6;
    b[i] -= 1e-6;
    const double fd = (clf_loss(g, t, a, 0.0, LossKind::logistic) - clf_loss(g, t, b, 0.0, LossKind::logistic)) / 2e-6;
    CHECK(std::abs(fd) <= 1e-5);
  }
}

TEST_CASE("fitting on conditional-mean features is no better than fitting on distributions") {
  const GroundTruth gt = random_world(8, 8, 25);
  Rng rng(9);
  for (int rep = 0; rep < 3; ++rep) {
    const Task t = random_task(rng, 25);
    const Matrix phi = rng.normal_matrix(3, 8);
    FitOptions small;
    small.max_iters = 3000;
    const FitResult on_mean = fit_linear(phi * gt.Pstar, t, FitConstraints{}, small);
    FitOptions big;
    big.max_iters = 4 * small.max_iters;
    big.patience = 4 * small.patience;
    const FitResult on_p = fit_linear(gt.Pstar, t, FitConstraints{}, big);
    CHECK(on_p.loss <= on_mean.loss + 1e-3);
  }
}

TEST_CASE("natural_certificate examples") {
  const GroundTruth gt = random_world(10, 12, 40);
  const NaturalTaskSpec spec{0, 1, 10.0, 0.02, {}};
  auto [task, witness] = make_natural_task(gt, spec);
  const NaturalCertificate cert = natural_certificate(gt, task, spec.B);
  CHECK(cert.tau <= witness.tau + 1e-6);
  CHECK(norm_inf(cert.v_star) <= spec.B + 1e-12);

  CHECK(natural_certificate(gt, task, 0.0).tau == doctest::Approx(1.0).epsilon(1e-15));

  Rng rng(11);
  const NaturalCertificate full = natural_certificate(gt, task, spec.B, rng.normal_matrix(12, 12));
  CHECK(std::abs(full.tau - cert.tau) <= 1e-8);
}

TEST_CASE("bayes_analysis examples and the factor-four bound") {
  const GroundTruth gt = random_world(12, 5, 20);
  Rng rng(13);
  const Task clean = random_task(rng, 20);
  const BayesAnalysis zero = bayes_analysis(clean, gt);
  CHECK(zero.bayes_error == 0.0);
  CHECK(zero.loss_of_gT == 0.0);

  for (double eta : {0.05, 0.2, 0.45}) {
    const BayesAnalysis b = bayes_analysis(with_flip_noise(clean, eta), gt);
    CHECK(b.bayes_error == doctest::Approx(eta).epsilon(1e-12));
    CHECK(b.loss_of_gT <= 4 * eta);
  }

  for (int rep = 0; rep < 200; ++rep) {
    Task t = random_task(rng, 20);
    t.prob_positive.resize(20);
    for (double& q : t.prob_positive) q = rng.uniform();
    const BayesAnalysis b = bayes_analysis(t, gt);
    CHECK(b.loss_of_gT <= 4 * b.bayes_error);
  }
}
