#include "lmlab/bound_lab.hpp"

#include <cmath>
#include <limits>

#include "lmlab/error.hpp"
#include "lmlab/kernels.hpp"

namespace lmlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kHoldsTol = 1e-8;

Matrix error_table(const GroundTruth& gt, const Matrix& predicted,
                   const std::optional<Matrix>& projector) {
  if (predicted.rows() != gt.V || predicted.cols() != gt.S)
    throw InputError("error covariance: predicted table must be V x S");
  Matrix delta = predicted - gt.Pstar;
  if (!projector) return delta;
  if (projector->cols() != gt.V) throw InputError("error covariance: projector must have V columns");
  return *projector * delta;
}

// sum_s p(s) (v^T x_s)^2 for the columns of x.
double quadratic_form(const Matrix& x, std::span<const double> p, std::span<const double> v) {
  CompensatedSum acc;
  for (std::size_t s = 0; s < x.cols(); ++s) {
    if (p[s] == 0.0) continue;
    const double a = dot(v, x.col(s));
    acc.add(p[s] * a * a);
  }
  return acc.value();
}

bool uses_subspace(TheoremId id) { return id != TheoremId::T4_1; }
bool is_softmax(TheoremId id) { return id == TheoremId::T4_2 || id == TheoremId::A2_softmax; }

}  // namespace

Matrix predicted_table(const LanguageModel& model) {
  if (const auto* t = std::get_if<TableModel>(&model)) return t->P;
  const auto& m = std::get<SoftmaxModel>(model);
  return par::softmax_table(m.Phi, m.Theta);
}

SymMatrix error_covariance(const GroundTruth& gt, const Matrix& predicted, std::span<const double> p,
                           const std::optional<Matrix>& projector) {
  if (p.size() != gt.S) throw InputError("error covariance: weight vector must have length S");
  return SymMatrix(par::weighted_outer_sum(error_table(gt, predicted, projector), p));
}

GammaRefined gamma_refined(const GroundTruth& gt, const Matrix& predicted, std::span<const double> p_T,
                           const std::optional<Matrix>& projector, double rel_cutoff) {
  const Matrix x = error_table(gt, predicted, projector);
  const SymMatrix sigma_l(par::weighted_outer_sum(x, gt.p_L));
  const SymMatrix sigma_t(par::weighted_outer_sum(x, p_T));
  const double norm_t = spectral_norm(sigma_t);
  const EigDecomp el = sym_eig(sigma_l);
  const double lmax = el.values.empty() ? 0.0 : el.values.front();

  if (!(lmax > 0.0)) {
    if (norm_t > 0.0) return {0.0, false, true};
    return {kInf, true, false};
  }
  // Mass of Sigma_T outside the retained eigenspace of Sigma_L makes every
  // positive gamma infeasible.
  const std::size_t n = el.values.size();
  Matrix keep(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    if (el.values[k] < rel_cutoff * lmax) continue;
    auto vk = el.vectors.col(k);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < n; ++i) keep(i, j) += vk[i] * vk[j];
  }
  const Matrix drop = Matrix::identity(n) - keep;
  const SymMatrix outside = SymMatrix::symmetrized(drop * sigma_t.matrix() * drop);
  if (spectral_norm(outside) > 1e-8 * std::max(norm_t, lmax)) return {0.0, false, true};

  const SymMatrix w = psd_inv_sqrt(sigma_l, rel_cutoff);
  const SymMatrix whitened = SymMatrix::symmetrized(w.matrix() * sigma_t.matrix() * w.matrix());
  const double top = spectral_norm(whitened);
  if (top == 0.0) return {kInf, false, false};
  return {1.0 / top, false, false};
}

PinskerGap pinsker_gap(std::span<const double> q, std::span<const double> qstar) {
  if (q.size() != qstar.size()) throw InputError("pinsker_gap: length mismatch");
  check_stochastic(q, "pinsker_gap: q", 1e-9);
  check_stochastic(qstar, "pinsker_gap: qstar", 1e-9);
  PinskerGap out;
  out.lhs = norm1(subtract(q, qstar));
  CompensatedSum kl;
  for (std::size_t w = 0; w < q.size(); ++w) {
    if (qstar[w] == 0.0) continue;
    if (q[w] == 0.0) {
      out.rhs = kInf;
      return out;
    }
    kl.add(qstar[w] * std::log(qstar[w] / q[w]));
  }
  out.rhs = std::sqrt(2.0 * std::max(kl.value(), 0.0));
  return out;
}

SoftmaxPinsker softmax_pinsker_check(const Matrix& phi, std::span<const double> theta,
                                     std::span<const double> qstar, std::span<const double> lambda) {
  if (!all_finite(phi) || !all_finite(theta) || !all_finite(qstar) || !all_finite(lambda))
    throw InputError("softmax_pinsker_check: non-finite input");
  if (lambda.size() != phi.rows() || theta.size() != phi.rows() || qstar.size() != phi.cols())
    throw InputError("softmax_pinsker_check: dimension mismatch");
  SoftmaxPinsker out;
  Vector p(phi.cols());
  const double logz = softmax_into(phi, theta, p);
  const Vector q_mean = matvec(phi, qstar);
  out.rho = logz - dot(theta, q_mean);

  const ContextSolve inner = minimize_context_xent(phi, qstar, theta);
  out.rho_star = std::min(inner.value, out.rho);
  out.inner_converged = inner.converged;

  const Vector phi_l = matvec_t(phi, lambda);
  out.lhs = std::abs(dot(lambda, subtract(matvec(phi, p), q_mean)));
  out.rhs = norm_inf(phi_l) * std::sqrt(2.0 * std::max(out.rho - out.rho_star, 0.0));
  out.holds = out.lhs <= out.rhs + kHoldsTol;
  return out;
}

std::string to_string(TheoremId id) {
  switch (id) {
    case TheoremId::T4_1: return "T4.1";
    case TheoremId::T4_2: return "T4.2";
    case TheoremId::A2_unconstrained: return "A.2-unconstrained";
    case TheoremId::A2_softmax: return "A.2-softmax";
  }
  return "?";
}

std::string to_string(GammaMode mode) { return mode == GammaMode::plain ? "plain" : "refined"; }

TheoremId parse_theorem_id(const std::string& s) {
  for (TheoremId id : {TheoremId::T4_1, TheoremId::T4_2, TheoremId::A2_unconstrained, TheoremId::A2_softmax})
    if (to_string(id) == s) return id;
  throw InputError("unknown theorem id '" + s + "'");
}

GammaMode parse_gamma_mode(const std::string& s) {
  if (s == "plain") return GammaMode::plain;
  if (s == "refined") return GammaMode::refined;
  throw InputError("unknown gamma mode '" + s + "'");
}

Vector embed_classifier(const Matrix& phi, std::span<const double> v) {
  const SymMatrix gram = SymMatrix::symmetrized(mul_abt(phi, phi));
  return matvec(psd_pinv(gram).matrix(), matvec(phi, v));
}

BoundReport theorem_bound_report(const GroundTruth& gt, const Task& task, const LanguageModel& model,
                                 const NaturalCertificate& cert, TheoremId id, GammaMode mode,
                                 const BoundOptions& opts) {
  task.validate(gt.S);
  const bool softmax = is_softmax(id);
  if (softmax != std::holds_alternative<SoftmaxModel>(model))
    throw InputError(to_string(id) + ": wrong model kind for this theorem");
  if (uses_subspace(id) && !cert.subspace)
    throw InputError(to_string(id) + ": certificate must be restricted to a subspace");
  if (cert.v_star.size() != gt.V) throw InputError("certificate classifier must have length V");

  std::optional<Matrix> phi;
  if (softmax) {
    phi = std::get<SoftmaxModel>(model).Phi;
    // The certificate must live in the span of the model's embeddings.
    const FeasibleSet span_of_phi(gt.V, std::nullopt, phi);
    if (span_of_phi.subspace_residual(cert.v_star) > 1e-8 * std::max(norm2(cert.v_star), 1.0))
      throw InputError(to_string(id) + ": certificate is not in the row-span of the model's Phi");
  } else if (uses_subspace(id)) {
    phi = *cert.subspace;
  }

  const Matrix pred = predicted_table(model);
  BoundReport r;
  r.theorem_id = id;
  r.gamma_mode = mode;
  r.tau = cert.tau;
  r.B = cert.B;

  double xent;
  double baseline;
  if (softmax) {
    const auto& m = std::get<SoftmaxModel>(model);
    xent = xent_loss(gt, m);
    baseline = opts.baseline ? *opts.baseline : optimal_xent_phi(gt, m.Phi).value;
  } else {
    xent = xent_loss(gt, std::get<TableModel>(model));
    baseline = opts.baseline ? *opts.baseline : optimal_xent(gt);
  }
  r.eps = xent - baseline;

  if (mode == GammaMode::plain) {
    const GammaResult g = gamma_plain(gt.p_L, task.p_T);
    r.gamma = g.value;
  } else {
    const GammaRefined g = gamma_refined(gt, pred, task.p_T,
                                         id == TheoremId::T4_1 ? std::nullopt : phi, opts.rel_cutoff);
    r.gamma = g.value;
  }

  // Designated features and the certificate's classifier expressed on them.
  const bool mean_features = id == TheoremId::T4_2 || id == TheoremId::A2_unconstrained;
  Matrix features = mean_features ? *phi * pred : pred;
  FitOptions fit = opts.fit;
  fit.init = mean_features ? embed_classifier(*phi, cert.v_star) : cert.v_star;
  fit.init_intercept = cert.intercept;
  FitConstraints cons;
  cons.intercept = cert.intercept != 0.0;
  r.measured = fit_linear(features, task, cons, fit).loss;

  const double eps = std::max(r.eps, 0.0);
  if (r.gamma <= 0.0) {
    r.gamma_vacuous = true;
    r.predicted = kInf;
  } else if (std::isinf(r.gamma)) {
    r.predicted = r.tau;
  } else {
    r.predicted = r.tau + std::sqrt(2.0 * r.B * r.B * eps / r.gamma);
  }
  r.slack = r.predicted - r.measured;
  r.holds = r.measured <= r.predicted + kHoldsTol;
  return r;
}

Decomposition decomposition_diagnostics(const GroundTruth& gt, const Task& task,
                                        const Matrix& predicted, std::span<const double> v) {
  if (v.size() != gt.V) throw InputError("decomposition: classifier must have length V");
  const Matrix delta = error_table(gt, predicted, std::nullopt);
  Decomposition out;
  out.loss_gap = clf_loss(predicted, task, v) - clf_loss(gt.Pstar, task, v);
  const double qt = quadratic_form(delta, task.p_T, v);
  const double ql = quadratic_form(delta, gt.p_L, v);
  if (!(qt > 0.0) || !(ql > 0.0)) {
    out.undefined = true;
    return out;
  }
  out.alpha1 = out.loss_gap / std::sqrt(qt);
  out.alpha2 = std::sqrt(qt / ql);
  out.alpha3 = std::sqrt(ql);
  return out;
}

SubspaceTransfer subspace_transfer(const GroundTruth& gt, const Task& task, const Matrix& phi,
                                   std::span<const double> vstar, double tau, double B) {
  if (phi.cols() != gt.V) throw InputError("subspace_transfer: Phi must have V columns");
  if (vstar.size() != gt.V) throw InputError("subspace_transfer: v* must have length V");
  const Matrix q = orthonormal_row_basis(phi);
  if (q.rows() != phi.rows()) throw DegenerateError("subspace_transfer: Phi must have full row rank");
  SubspaceTransfer out;
  out.projected = matvec_t(q, matvec(q, vstar));
  const Vector perp = subtract(vstar, out.projected);
  out.perp_norm = norm2(perp);

  const Matrix omega_t = par::weighted_outer_sum(gt.Pstar, task.p_T);
  const Matrix p_perp = Matrix::identity(gt.V) - mul_atb(q, q);
  out.perp_spectral = spectral_norm(SymMatrix::symmetrized(p_perp * omega_t * p_perp));
  out.tau_prime = tau + out.perp_norm * std::sqrt(out.perp_spectral);
  out.B_prime = B + out.perp_norm;
  return out;
}

}  // namespace lmlab
