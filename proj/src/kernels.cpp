#include "lmlab/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lmlab/error.hpp"

namespace lmlab {

namespace {

void check_softmax_dims(const Matrix& phi, const Matrix& theta) {
  if (phi.rows() != theta.rows()) throw InputError("softmax: Phi and Theta row counts differ");
}

double softmax_xent_column(const Matrix& phi, std::span<const double> theta,
                           std::span<const double> pstar, Vector& logits) {
  const std::size_t v = phi.cols();
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t w = 0; w < v; ++w) {
    logits[w] = dot(phi.col(w), theta);
    m = std::max(m, logits[w]);
  }
  double z = 0.0;
  for (std::size_t w = 0; w < v; ++w) z += std::exp(logits[w] - m);
  const double logz = m + std::log(z);
  CompensatedSum acc;
  for (std::size_t w = 0; w < v; ++w)
    if (pstar[w] > 0.0) acc.add(pstar[w] * (logz - logits[w]));
  return acc.value();
}

double table_xent_column(std::span<const double> q, std::span<const double> pstar) {
  CompensatedSum acc;
  for (std::size_t w = 0; w < q.size(); ++w) {
    if (pstar[w] <= 0.0) continue;
    if (q[w] <= 0.0) return std::numeric_limits<double>::infinity();
    acc.add(-pstar[w] * std::log(q[w]));
  }
  return acc.value();
}

void outer_sum_column(const Matrix& x, std::span<const double> w, std::size_t j, Matrix& out) {
  auto oj = out.col(j);
  for (std::size_t s = 0; s < x.cols(); ++s) {
    const double c = w[s] * x(j, s);
    if (c == 0.0) continue;
    auto xs = x.col(s);
    for (std::size_t i = 0; i <= j; ++i) oj[i] += c * xs[i];
  }
}

void mirror_upper(Matrix& m) {
  for (std::size_t j = 0; j < m.cols(); ++j)
    for (std::size_t i = 0; i < j; ++i) m(j, i) = m(i, j);
}

struct LseBlock {
  double max = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
};

LseBlock lse_block(const Matrix& phi, std::span<const double> theta, std::size_t lo,
                   std::size_t hi, Vector& logits) {
  LseBlock b;
  for (std::size_t w = lo; w < hi; ++w) {
    logits[w - lo] = dot(phi.col(w), theta);
    b.max = std::max(b.max, logits[w - lo]);
  }
  for (std::size_t w = lo; w < hi; ++w) b.sum += std::exp(logits[w - lo] - b.max);
  return b;
}

}  // namespace

double softmax_into(const Matrix& phi, std::span<const double> theta, std::span<double> p) {
  if (phi.rows() != theta.size() || p.size() != phi.cols())
    throw InputError("softmax: dimension mismatch");
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t w = 0; w < phi.cols(); ++w) {
    p[w] = dot(phi.col(w), theta);
    m = std::max(m, p[w]);
  }
  if (!std::isfinite(m)) throw InputError("softmax: non-finite logits");
  double z = 0.0;
  for (double& x : p) {
    x = std::exp(x - m);
    z += x;
  }
  for (double& x : p) x /= z;
  return m + std::log(z);
}

namespace ref {

Matrix softmax_table(const Matrix& phi, const Matrix& theta, Vector* logz) {
  check_softmax_dims(phi, theta);
  Matrix p(phi.cols(), theta.cols());
  if (logz) logz->assign(theta.cols(), 0.0);
  for (std::size_t s = 0; s < theta.cols(); ++s) {
    const double lz = softmax_into(phi, theta.col(s), p.col(s));
    if (logz) (*logz)[s] = lz;
  }
  return p;
}

Vector softmax_xent_terms(const Matrix& phi, const Matrix& theta, const Matrix& pstar) {
  check_softmax_dims(phi, theta);
  Vector terms(theta.cols());
  Vector logits(phi.cols());
  for (std::size_t s = 0; s < theta.cols(); ++s)
    terms[s] = softmax_xent_column(phi, theta.col(s), pstar.col(s), logits);
  return terms;
}

Vector table_xent_terms(const Matrix& q, const Matrix& pstar) {
  Vector terms(q.cols());
  for (std::size_t s = 0; s < q.cols(); ++s) terms[s] = table_xent_column(q.col(s), pstar.col(s));
  return terms;
}

Matrix weighted_outer_sum(const Matrix& x, std::span<const double> w) {
  Matrix out(x.rows(), x.rows());
  for (std::size_t j = 0; j < x.rows(); ++j) outer_sum_column(x, w, j, out);
  mirror_upper(out);
  return out;
}

double logsumexp_logits(const Matrix& phi, std::span<const double> theta) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t w = 0; w < phi.cols(); ++w) m = std::max(m, dot(phi.col(w), theta));
  double z = 0.0;
  for (std::size_t w = 0; w < phi.cols(); ++w) z += std::exp(dot(phi.col(w), theta) - m);
  return m + std::log(z);
}

}  // namespace ref

namespace par {

Matrix softmax_table(const Matrix& phi, const Matrix& theta, Vector* logz) {
  check_softmax_dims(phi, theta);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(theta.cols());
  Matrix p(phi.cols(), theta.cols());
  Vector lz(theta.cols());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t s = 0; s < n; ++s) lz[s] = softmax_into(phi, theta.col(s), p.col(s));
  if (logz) *logz = std::move(lz);
  return p;
}

Vector softmax_xent_terms(const Matrix& phi, const Matrix& theta, const Matrix& pstar) {
  check_softmax_dims(phi, theta);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(theta.cols());
  Vector terms(theta.cols());
#pragma omp parallel
  {
    Vector logits(phi.cols());
#pragma omp for schedule(static)
    for (std::ptrdiff_t s = 0; s < n; ++s)
      terms[s] = softmax_xent_column(phi, theta.col(s), pstar.col(s), logits);
  }
  return terms;
}

Vector table_xent_terms(const Matrix& q, const Matrix& pstar) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(q.cols());
  Vector terms(q.cols());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t s = 0; s < n; ++s) terms[s] = table_xent_column(q.col(s), pstar.col(s));
  return terms;
}

Matrix weighted_outer_sum(const Matrix& x, std::span<const double> w) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.rows());
  Matrix out(x.rows(), x.rows());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t j = 0; j < n; ++j) outer_sum_column(x, w, static_cast<std::size_t>(j), out);
  mirror_upper(out);
  return out;
}

double logsumexp_logits(const Matrix& phi, std::span<const double> theta) {
  if (phi.rows() != theta.size()) throw InputError("logsumexp: dimension mismatch");
  const std::size_t v = phi.cols();
  const std::size_t nblocks = (v + kLogsumexpBlock - 1) / kLogsumexpBlock;
  std::vector<LseBlock> blocks(nblocks);
#pragma omp parallel
  {
    Vector logits(kLogsumexpBlock);
#pragma omp for schedule(static)
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(nblocks); ++b) {
      const std::size_t lo = static_cast<std::size_t>(b) * kLogsumexpBlock;
      blocks[b] = lse_block(phi, theta, lo, std::min(v, lo + kLogsumexpBlock), logits);
    }
  }
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& b : blocks) m = std::max(m, b.max);
  double z = 0.0;
  for (const auto& b : blocks) z += b.sum * std::exp(b.max - m);
  return m + std::log(z);
}

}  // namespace par

}  // namespace lmlab
