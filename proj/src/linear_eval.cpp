#include "lmlab/linear_eval.hpp"

#include <algorithm>
#include <cmath>

#include "lmlab/error.hpp"
#include "lmlab/numerics.hpp"

namespace lmlab {

namespace {

constexpr int kDykstraRounds = 50;

// d l(yhat, y) / d yhat
double surrogate_slope(LossKind kind, double yhat, int y) {
  if (kind == LossKind::hinge) return y * yhat < 1.0 ? -static_cast<double>(y) : 0.0;
  const double z = -y * yhat;
  const double sig = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  return -y * sig;
}

void check_dims(const Matrix& features, const Task& task, std::size_t vlen) {
  if (features.cols() != task.p_T.size()) throw InputError("clf_loss: feature table must have S columns");
  if (vlen != features.rows()) throw InputError("clf_loss: classifier length must equal feature dimension");
}

// Gradient (or subgradient) of clf_loss in (v, intercept).
void loss_gradient(const Matrix& features, const Task& task, std::span<const double> v,
                   double intercept, LossKind kind, Vector& gv, double& gb) {
  gv.assign(v.size(), 0.0);
  gb = 0.0;
  for (std::size_t s = 0; s < features.cols(); ++s) {
    const double w = task.p_T[s];
    if (w == 0.0) continue;
    const double yhat = dot(v, features.col(s)) + intercept;
    double slope;
    if (task.noisy()) {
      const double q = task.prob_positive[s];
      slope = q * surrogate_slope(kind, yhat, 1) + (1.0 - q) * surrogate_slope(kind, yhat, -1);
    } else {
      slope = surrogate_slope(kind, yhat, task.labels[s]);
    }
    if (slope == 0.0) continue;
    const double c = w * slope;
    auto x = features.col(s);
    for (std::size_t i = 0; i < v.size(); ++i) gv[i] += c * x[i];
    gb += c;
  }
}

FitResult fit_hinge(const Matrix& features, const Task& task, const FitConstraints& cons,
                    const FeasibleSet& set, const FitOptions& opts, Vector v, double b) {
  FitResult best{v, b, clf_loss(features, task, v, b, LossKind::hinge), 0, false};
  double scale = opts.step_scale;
  if (scale <= 0.0) {
    const double radius = cons.inf_norm_bound
                              ? *cons.inf_norm_bound * std::sqrt(static_cast<double>(v.size()))
                              : std::max(1.0, norm2(v));
    scale = 0.1 * std::max(radius, 1e-3);
  }
  Vector gv;
  double gb = 0.0;
  int since_best = 0;
  int it = 0;
  for (; it < opts.max_iters; ++it) {
    loss_gradient(features, task, v, b, LossKind::hinge, gv, gb);
    double gn2 = dot(gv, gv) + (cons.intercept ? gb * gb : 0.0);
    if (gn2 == 0.0) break;  // every margin satisfied: global optimum
    const double step = scale / std::sqrt(static_cast<double>(it) + 1.0) / std::sqrt(gn2);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= step * gv[i];
    v = set.project(v);
    if (cons.intercept) b -= step * gb;
    const double loss = clf_loss(features, task, v, b, LossKind::hinge);
    if (loss < best.loss) {
      best.v = v;
      best.intercept = b;
      best.loss = loss;
      since_best = 0;
    } else if (++since_best >= opts.patience) {
      best.stalled = true;
      ++it;
      break;
    }
  }
  best.iterations = it;
  return best;
}

FitResult fit_logistic(const Matrix& features, const Task& task, const FitConstraints& cons,
                       const FeasibleSet& set, const FitOptions& opts, Vector v, double b) {
  double max_norm2 = 1.0;
  for (std::size_t s = 0; s < features.cols(); ++s) {
    const double n = norm2(features.col(s));
    max_norm2 = std::max(max_norm2, n * n + (cons.intercept ? 1.0 : 0.0));
  }
  double t = opts.step_scale > 0.0 ? opts.step_scale : 4.0 / max_norm2;
  double f = clf_loss(features, task, v, b, LossKind::logistic);
  Vector gv;
  double gb = 0.0;
  int it = 0;
  for (; it < opts.max_iters; ++it) {
    loss_gradient(features, task, v, b, LossKind::logistic, gv, gb);
    bool accepted = false;
    double moved = 0.0;
    for (int k = 0; k < 60; ++k, t *= 0.5) {
      Vector cand = axpy(-t, gv, v);
      cand = set.project(cand);
      const double cb = cons.intercept ? b - t * gb : b;
      const Vector dv = subtract(cand, v);
      const double db = cb - b;
      const double model = f + dot(gv, dv) + gb * db + (dot(dv, dv) + db * db) / (2.0 * t);
      const double fc = clf_loss(features, task, cand, cb, LossKind::logistic);
      if (fc <= model + 1e-15 * std::abs(f)) {
        moved = std::sqrt(dot(dv, dv) + db * db);
        accepted = fc <= f;
        if (accepted) {
          v = std::move(cand);
          b = cb;
          f = fc;
        }
        break;
      }
    }
    if (!accepted || moved <= 1e-13 * std::max(1.0, norm2(v))) {
      ++it;
      break;
    }
    t *= 1.5;
  }
  return FitResult{v, b, f, it, false};
}

}  // namespace

double surrogate(LossKind kind, double yhat, int y) {
  const double m = y * yhat;
  if (kind == LossKind::hinge) return std::max(0.0, 1.0 - m);
  return m >= 0.0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
}

double clf_loss(const Matrix& features, const Task& task, std::span<const double> v,
                double intercept, LossKind kind) {
  check_dims(features, task, v.size());
  CompensatedSum acc;
  for (std::size_t s = 0; s < features.cols(); ++s) {
    const double w = task.p_T[s];
    if (w == 0.0) continue;
    const double yhat = dot(v, features.col(s)) + intercept;
    if (task.noisy()) {
      const double q = task.prob_positive[s];
      double l = 0.0;
      if (q > 0.0) l += q * surrogate(kind, yhat, 1);
      if (q < 1.0) l += (1.0 - q) * surrogate(kind, yhat, -1);
      acc.add(w * l);
    } else {
      acc.add(w * surrogate(kind, yhat, task.labels[s]));
    }
  }
  return acc.value();
}

FeasibleSet::FeasibleSet(std::size_t dim, std::optional<double> bound,
                         const std::optional<Matrix>& subspace)
    : dim_(dim), bound_(bound) {
  if (bound_ && !(*bound_ >= 0.0)) throw InputError("fit: inf-norm bound must be non-negative");
  if (subspace) {
    if (subspace->cols() != dim) throw InputError("fit: subspace must have one column per feature");
    Matrix q = orthonormal_row_basis(*subspace);
    if (q.rows() < dim) basis_ = std::move(q);
  }
}

Vector FeasibleSet::project_subspace(std::span<const double> v) const {
  if (!has_subspace()) return Vector(v.begin(), v.end());
  return matvec_t(basis_, matvec(basis_, v));
}

double FeasibleSet::subspace_residual(std::span<const double> v) const {
  if (!has_subspace()) return 0.0;
  return norm2(subtract(v, project_subspace(v)));
}

Vector FeasibleSet::project(std::span<const double> v) const {
  if (v.size() != dim_) throw InputError("fit: classifier has wrong length");
  auto clip = [&](Vector x) {
    if (bound_)
      for (double& e : x) e = std::clamp(e, -*bound_, *bound_);
    return x;
  };
  if (!has_subspace()) return clip(Vector(v.begin(), v.end()));

  Vector x(v.begin(), v.end());
  Vector p(dim_, 0.0);
  Vector q(dim_, 0.0);
  if (bound_) {
    for (int round = 0; round < kDykstraRounds; ++round) {
      Vector xp = x;
      for (std::size_t i = 0; i < dim_; ++i) xp[i] += p[i];
      const Vector y = clip(xp);
      for (std::size_t i = 0; i < dim_; ++i) p[i] = xp[i] - y[i];
      Vector yq = y;
      for (std::size_t i = 0; i < dim_; ++i) yq[i] += q[i];
      x = project_subspace(yq);
      for (std::size_t i = 0; i < dim_; ++i) q[i] = yq[i] - x[i];
    }
  }
  x = project_subspace(x);
  if (bound_) {
    const double m = norm_inf(x);
    if (m > *bound_) {
      const double f = m > 0.0 ? *bound_ / m : 0.0;
      for (double& e : x) e *= f;
    }
  }
  return x;
}

FitResult fit_linear(const Matrix& features, const Task& task, const FitConstraints& constraints,
                     const FitOptions& opts) {
  if (features.cols() != task.p_T.size()) throw InputError("fit_linear: feature table must have S columns");
  if (!all_finite(features)) throw InputError("fit_linear: non-finite features");
  const FeasibleSet set(features.rows(), constraints.inf_norm_bound, constraints.subspace);
  Vector v0 = opts.init ? *opts.init : Vector(features.rows(), 0.0);
  if (v0.size() != features.rows()) throw InputError("fit_linear: warm start has wrong length");
  v0 = set.project(v0);
  const double b0 = constraints.intercept ? opts.init_intercept : 0.0;
  if (constraints.loss == LossKind::hinge) return fit_hinge(features, task, constraints, set, opts, v0, b0);
  return fit_logistic(features, task, constraints, set, opts, v0, b0);
}

NaturalCertificate natural_certificate(const GroundTruth& gt, const Task& task, double B,
                                       const std::optional<Matrix>& subspace,
                                       const FitOptions& opts) {
  if (!(B >= 0.0)) throw InputError("natural_certificate: B must be non-negative");
  FitConstraints cons;
  cons.inf_norm_bound = B;
  cons.subspace = subspace;
  const FitResult fit = fit_linear(gt.Pstar, task, cons, opts);
  NaturalCertificate cert;
  cert.v_star = fit.v;
  cert.B = B;
  cert.tau = fit.loss;
  cert.intercept = fit.intercept;
  cert.subspace = subspace;
  return cert;
}

BayesAnalysis bayes_analysis(const Task& task, const GroundTruth& gt) {
  task.validate(gt.S);
  if (!task.noisy()) {
    // Deterministic labels: g_T = y, so both quantities vanish.
    return {0.0, 0.0};
  }
  CompensatedSum bayes;
  CompensatedSum loss;
  for (std::size_t s = 0; s < gt.S; ++s) {
    const double w = task.p_T[s];
    if (w == 0.0) continue;
    const double q = task.prob_positive[s];
    const double g = q - (1.0 - q);
    bayes.add(w * std::min(q, 1.0 - q));
    loss.add(w * (q * std::max(0.0, 1.0 - g) + (1.0 - q) * std::max(0.0, 1.0 + g)));
  }
  return {bayes.value(), loss.value()};
}

}  // namespace lmlab
