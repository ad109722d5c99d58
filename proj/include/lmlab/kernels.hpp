#pragma once

// Hot loops in two flavours: par:: (OpenMP) and ref:: (serial). Every par
// kernel computes each output element with the same serial arithmetic as its
// ref counterpart and combines partial results in a fixed order, so results
// are identical for any thread count. The ref versions are kept for tests and
// the benchmark.

#include <span>

#include "lmlab/matrix.hpp"

namespace lmlab {

/// Softmax of Phi^T theta written into `p` (length V); returns log Z.
/// Uses max-logit subtraction.
double softmax_into(const Matrix& phi, std::span<const double> theta, std::span<double> p);

/// Fixed block length for the blocked log-sum-exp reduction.
inline constexpr std::size_t kLogsumexpBlock = 4096;

namespace ref {

/// Column s of the result is softmax(Phi^T Theta[:,s]); logz[s] its log Z.
Matrix softmax_table(const Matrix& phi, const Matrix& theta, Vector* logz = nullptr);
/// terms[s] = -sum_w pstar(w,s) * log p_{theta_s}(w), computed as
/// sum_w pstar(w,s) * (log Z_s - logit_w) so underflowed probabilities are exact.
Vector softmax_xent_terms(const Matrix& phi, const Matrix& theta, const Matrix& pstar);
/// terms[s] = -sum_w pstar(w,s) * log q(w,s); +inf where q = 0 < pstar.
Vector table_xent_terms(const Matrix& q, const Matrix& pstar);
/// sum_s w[s] * x_s x_s^T for the columns x_s of `x`.
Matrix weighted_outer_sum(const Matrix& x, std::span<const double> w);
/// log sum_w exp(Phi[:,w]^T theta) in one serial pass.
double logsumexp_logits(const Matrix& phi, std::span<const double> theta);

}  // namespace ref

namespace par {

Matrix softmax_table(const Matrix& phi, const Matrix& theta, Vector* logz = nullptr);
Vector softmax_xent_terms(const Matrix& phi, const Matrix& theta, const Matrix& pstar);
Vector table_xent_terms(const Matrix& q, const Matrix& pstar);
Matrix weighted_outer_sum(const Matrix& x, std::span<const double> w);
/// Blocked over kLogsumexpBlock words; block partials merged in order.
double logsumexp_logits(const Matrix& phi, std::span<const double> theta);

}  // namespace par

}  // namespace lmlab
