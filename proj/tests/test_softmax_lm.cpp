#include <cmath>

#include "doctest.h"
#include "lmlab/bound_lab.hpp"
#include "lmlab/error.hpp"
#include "lmlab/softmax_lm.hpp"
#include "support.hpp"

using namespace lmlab;
using lmlab::testing::random_world;

namespace {

// Double sum over contexts and words, with the log-softmax formed directly.
double brute_force_xent(const GroundTruth& gt, const SoftmaxModel& m) {
  double total = 0.0;
  for (std::size_t s = 0; s < gt.S; ++s) {
    std::vector<double> logits(gt.V);
    double mx = -1e300;
    for (std::size_t w = 0; w < gt.V; ++w) {
      double l = 0.0;
      for (std::size_t i = 0; i < m.d(); ++i) l += m.Theta(i, s) * m.Phi(i, w);
      logits[w] = l;
      mx = std::max(mx, l);
    }
    long double z = 0.0;
    for (double l : logits) z += std::exp(static_cast<long double>(l - mx));
    const double logz = mx + static_cast<double>(std::log(z));
    for (std::size_t w = 0; w < gt.V; ++w) total += gt.p_L[s] * gt.Pstar(w, s) * (logz - logits[w]);
  }
  return total;
}

double entropy_oracle(const GroundTruth& gt) {
  double h = 0.0;
  for (std::size_t s = 0; s < gt.S; ++s)
    for (std::size_t w = 0; w < gt.V; ++w) {
      const double p = gt.Pstar(w, s);
      if (p > 0.0) h -= gt.p_L[s] * p * std::log(p);
    }
  return h;
}

double context_loss(const Matrix& phi, std::span<const double> theta, std::span<const double> q) {
  const SoftmaxPrediction pr = softmax_predict(phi, theta);
  double l = 0.0;
  for (std::size_t w = 0; w < q.size(); ++w) l -= q[w] * std::log(pr.p[w]);
  return l;
}

}  // namespace

TEST_CASE("softmax_predict examples") {
  Rng rng(1);
  const Matrix phi = rng.normal_matrix(3, 6);
  const SoftmaxPrediction u = softmax_predict(phi, Vector(3, 0.0));
  for (double p : u.p) CHECK(p == doctest::Approx(1.0 / 6));
  CHECK(u.logZ == doctest::Approx(std::log(6.0)));

  const double t = 0.7;
  const SoftmaxPrediction two = softmax_predict(Matrix::from_rows({{1, -1}}), Vector{t});
  CHECK(two.p[0] == doctest::Approx(std::exp(t) / (std::exp(t) + std::exp(-t))));
  CHECK(two.p[1] == doctest::Approx(std::exp(-t) / (std::exp(t) + std::exp(-t))));

  const Vector theta = rng.normal_vector(3);
  const Vector c = rng.normal_vector(3);
  Matrix shifted = phi;
  for (std::size_t w = 0; w < 6; ++w)
    for (std::size_t i = 0; i < 3; ++i) shifted(i, w) += c[i];
  const SoftmaxPrediction a = softmax_predict(phi, theta);
  const SoftmaxPrediction b = softmax_predict(shifted, theta);
  for (std::size_t w = 0; w < 6; ++w) CHECK(a.p[w] == doctest::Approx(b.p[w]).epsilon(1e-12));
  CHECK(b.logZ - a.logZ == doctest::Approx(dot(theta, c)).epsilon(1e-12));
}

TEST_CASE("softmax output is stochastic and logZ dominates the max logit") {
  Rng rng(2);
  for (int rep = 0; rep < 50; ++rep) {
    const Matrix phi = rng.normal_matrix(4, 10);
    Vector theta = rng.normal_vector(4);
    for (double& x : theta) x *= 50.0;
    const SoftmaxPrediction pr = softmax_predict(phi, theta);
    CHECK(std::abs(compensated_sum(pr.p) - 1.0) <= 1e-12);
    double mx = -1e300;
    for (std::size_t w = 0; w < 10; ++w) mx = std::max(mx, dot(phi.col(w), theta));
    CHECK(pr.logZ >= mx);
  }
  CHECK_THROWS_AS(softmax_predict(Matrix::from_rows({{NAN, 1}}), Vector{1.0}), InputError);
}

TEST_CASE("xent_loss examples") {
  const GroundTruth gt = random_world(3, 6, 4);
  CHECK(xent_loss(gt, TableModel{gt.Pstar}) == doctest::Approx(entropy_oracle(gt)).epsilon(1e-13));
  CHECK(xent_loss(gt, TableModel{Matrix(6, 4, 1.0 / 6)}) == doctest::Approx(std::log(6.0)).epsilon(1e-13));

  Rng rng(4);
  const SoftmaxModel m{rng.normal_matrix(3, 6), rng.normal_matrix(3, 4)};
  CHECK(std::abs(xent_loss(gt, m) - brute_force_xent(gt, m)) <= 1e-12);

  Matrix missing = gt.Pstar;
  missing(0, 0) = 0.0;
  missing(1, 0) += gt.Pstar(0, 0);
  CHECK(std::isinf(xent_loss(gt, TableModel{missing})));
}

TEST_CASE("xent_grad examples") {
  const GroundTruth gt = random_world(5, 5, 3);
  Vector theta(5);
  for (std::size_t w = 0; w < 5; ++w) theta[w] = std::log(gt.Pstar(w, 1));
  for (double g : xent_grad(gt, 1, Matrix::identity(5), theta)) CHECK(std::abs(g) < 1e-15);

  Rng rng(6);
  const Matrix phi = rng.normal_matrix(3, 5);
  const Vector g0 = xent_grad(gt, 2, phi, Vector(3, 0.0));
  const Vector expect = matvec(phi, subtract(Vector(5, 0.2), gt.Pstar.col(2)));
  for (std::size_t i = 0; i < 3; ++i) CHECK(g0[i] == doctest::Approx(expect[i]).epsilon(1e-14));
}

TEST_CASE("xent_grad matches central finite differences") {
  const GroundTruth gt = random_world(7, 8, 5);
  Rng rng(8);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix phi = rng.normal_matrix(3, 8);
    const Vector theta = rng.normal_vector(3);
    const std::size_t s = rep % 5;
    const Vector g = xent_grad(gt, s, phi, theta);
    for (std::size_t i = 0; i < 3; ++i) {
      const double h = 1e-5;
      Vector tp = theta;
      Vector tm = theta;
      tp[i] += h;
      tm[i] -= h;
      const double fd = (context_loss(phi, tp, gt.Pstar.col(s)) - context_loss(phi, tm, gt.Pstar.col(s))) / (2 * h);
      CHECK(std::abs(fd - g[i]) <= 1e-5 * std::max(1.0, std::abs(g[i])));
    }
  }
}

TEST_CASE("optimal_xent examples") {
  WorldConfig cfg;
  cfg.structure = WorldStructure::explicit_table;
  cfg.pstar = Matrix::from_rows({{1, 0}, {0, 1}, {0, 0}});
  cfg.p_L = {0.4, 0.6};
  CHECK(optimal_xent(make_ground_truth(cfg)) == 0.0);
  cfg.pstar = Matrix(3, 2, 1.0 / 3);
  CHECK(optimal_xent(make_ground_truth(cfg)) == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const GroundTruth gt = random_world(seed, 12, 9);
    CHECK(std::abs(optimal_xent(gt) - entropy_oracle(gt)) <= 1e-12);
  }
}

TEST_CASE("optimal_xent_phi with invertible Phi reaches the entropy") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const GroundTruth gt = random_world(seed, 6, 7);
    Rng rng(seed + 100);
    const Matrix phi = rng.normal_matrix(6, 6);
    const PhiOptimum opt = optimal_xent_phi(gt, phi);
    CHECK(opt.unconverged == 0);
    CHECK(std::abs(opt.value - optimal_xent(gt)) <= 1e-8);
  }
}

TEST_CASE("optimal_xent_phi: restricted class, first-order optimality, mean matching") {
  const GroundTruth gt = random_world(9, 8, 5);
  Rng rng(10);
  for (int rep = 0; rep < 5; ++rep) {
    const Matrix phi = rng.normal_matrix(2, 8);
    const PhiOptimum opt = optimal_xent_phi(gt, phi);
    CHECK(opt.value >= optimal_xent(gt) - 1e-9);
    CHECK(opt.unconverged == 0);
    const Matrix means = conditional_mean(phi, opt.ThetaStar);
    const Matrix truth = phi * gt.Pstar;
    for (std::size_t s = 0; s < gt.S; ++s) {
      CHECK(norm2(xent_grad(gt, s, phi, opt.ThetaStar.col(s))) <= 1e-10);
      CHECK(norm2(subtract(means.col(s), truth.col(s))) <= 1e-8);
    }
  }
}

TEST_CASE("every model is at least as costly as the entropy") {
  const GroundTruth gt = random_world(11, 7, 6);
  Rng rng(12);
  for (int rep = 0; rep < 20; ++rep) {
    const SoftmaxModel m{rng.normal_matrix(3, 7), rng.normal_matrix(3, 6)};
    CHECK(xent_loss(gt, m) >= optimal_xent(gt) - 1e-10);
    Matrix q(7, 6);
    for (std::size_t s = 0; s < 6; ++s) q.set_col(s, rng.dirichlet(7, 1.0));
    CHECK(xent_loss(gt, TableModel{q}) >= optimal_xent(gt) - 1e-10);
  }
}

TEST_CASE("train_lm with fixed invertible Phi converges to the entropy") {
  const GroundTruth gt = random_world(13, 8, 10);
  Rng rng(14);
  TrainOptions opts;
  opts.fix_phi = rng.normal_matrix(8, 8);
  opts.seed = 3;
  const SoftmaxModel m = train_lm(gt, 8, opts);
  CHECK(std::abs(xent_loss(gt, m) - optimal_xent(gt)) <= 1e-6);
}

TEST_CASE("train_lm is deterministic, monotone, and a no-op at zero iterations") {
  const GroundTruth gt = random_world(15, 10, 12);
  TrainOptions opts;
  opts.seed = 21;
  opts.max_iters = 30;
  const SoftmaxModel a = train_lm(gt, 3, opts);
  const SoftmaxModel b = train_lm(gt, 3, opts);
  CHECK(a == b);

  opts.max_iters = 0;
  const SoftmaxModel init = train_lm(gt, 3, opts);
  Rng rng(21);
  CHECK(init.Phi == rng.split("phi").normal_matrix(3, 10));
  CHECK(xent_loss(gt, a) <= xent_loss(gt, init));
  CHECK_THROWS_AS(train_lm(gt, 11, opts), InputError);
}

TEST_CASE("conditional_mean examples") {
  Rng rng(16);
  const Matrix theta = rng.normal_matrix(4, 3);
  const Matrix cm = conditional_mean(Matrix::identity(4), theta);
  for (std::size_t s = 0; s < 3; ++s) {
    const SoftmaxPrediction pr = softmax_predict(Matrix::identity(4), theta.col(s));
    for (std::size_t w = 0; w < 4; ++w) CHECK(cm(w, s) == doctest::Approx(pr.p[w]).epsilon(1e-15));
  }
  // Linearity of p -> Phi p.
  const Matrix phi = rng.normal_matrix(2, 4);
  const Vector p = rng.dirichlet(4, 1.0);
  const Vector q = rng.dirichlet(4, 1.0);
  const double a = 0.3;
  Vector mix(4);
  for (std::size_t w = 0; w < 4; ++w) mix[w] = a * p[w] + (1 - a) * q[w];
  const Vector lhs = matvec(phi, mix);
  const Vector fp = matvec(phi, p);
  const Vector fq = matvec(phi, q);
  for (std::size_t i = 0; i < 2; ++i) CHECK(lhs[i] == doctest::Approx(a * fp[i] + (1 - a) * fq[i]));
}

TEST_CASE("epsilon_model bisection") {
  const GroundTruth gt = random_world(17, 8, 6);
  Rng rng(18);
  const Matrix phi = rng.normal_matrix(3, 8);
  const PhiOptimum opt = optimal_xent_phi(gt, phi);
  const Matrix theta_rand = rng.normal_matrix(3, 6);

  const EpsilonModel zero = epsilon_model(gt, phi, opt.ThetaStar, theta_rand, 0.0);
  CHECK(zero.t == 0.0);
  CHECK(std::abs(zero.achieved_eps) <= 1e-9);
  CHECK(zero.model.Theta == opt.ThetaStar);

  const double base = xent_loss(gt, SoftmaxModel{phi, opt.ThetaStar});
  const double full = xent_loss(gt, SoftmaxModel{phi, theta_rand}) - base;
  const EpsilonModel too_far = epsilon_model(gt, phi, opt.ThetaStar, theta_rand, 10 * full);
  CHECK(too_far.unreachable);
  CHECK(too_far.t == 1.0);
  CHECK(too_far.achieved_eps == doctest::Approx(full).epsilon(1e-12));

  for (double frac : {0.01, 0.2, 0.7}) {
    const EpsilonModel mid = epsilon_model(gt, phi, opt.ThetaStar, theta_rand, frac * full);
    CHECK(!mid.unreachable);
    CHECK(std::abs(mid.achieved_eps - frac * full) <= 0.01 * frac * full);
    CHECK(mid.achieved_eps == doctest::Approx(xent_loss(gt, mid.model) - base).epsilon(1e-12));
  }
}

TEST_CASE("epsilon_table_model bisection") {
  const GroundTruth gt = random_world(19, 6, 5);
  Rng rng(20);
  Matrix q(6, 5);
  for (std::size_t s = 0; s < 5; ++s) q.set_col(s, rng.dirichlet(6, 1.0));
  const EpsilonTable e = epsilon_table_model(gt, q, 0.05);
  if (!e.unreachable) CHECK(std::abs(e.achieved_eps - 0.05) <= 0.0005);
  CHECK(e.achieved_eps == doctest::Approx(xent_loss(gt, e.model) - optimal_xent(gt)).epsilon(1e-12));
}

TEST_CASE("projected error covariance is bounded by twice the suboptimality") {
  const GroundTruth gt = random_world(21, 9, 12);
  Rng rng(22);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix phi = rng.normal_matrix(3, 9);
    const PhiOptimum opt = optimal_xent_phi(gt, phi);
    const SoftmaxModel m{phi, opt.ThetaStar + 0.3 * rng.normal_matrix(3, 12)};
    const double eps = xent_loss(gt, m) - opt.value;
    const SymMatrix sigma = error_covariance(gt, predicted_table(m), gt.p_L, phi);
    for (int k = 0; k < 20; ++k) {
      const Vector lambda = rng.normal_vector(3);
      const double lhs = dot(lambda, matvec(sigma.matrix(), lambda));
      const double bound = norm_inf(matvec_t(phi, lambda));
      CHECK(lhs <= 2.0 * bound * bound * eps + 1e-10);
    }
  }
}
