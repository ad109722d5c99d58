#include "lmlab/softmax_lm.hpp"

#include <cmath>
#include <limits>

#include "lmlab/error.hpp"
#include "lmlab/kernels.hpp"
#include "lmlab/numerics.hpp"
#include "lmlab/rng.hpp"

namespace lmlab {

namespace {

struct ContextEval {
  double value = 0.0;
  Vector grad;  // Phi p - Phi q
  Vector p;
  Vector mean;  // Phi p
};

ContextEval evaluate_context(const Matrix& phi, std::span<const double> q_mean,
                             std::span<const double> theta) {
  ContextEval ev;
  ev.p.resize(phi.cols());
  const double logz = softmax_into(phi, theta, ev.p);
  ev.value = logz - dot(theta, q_mean);
  ev.mean = matvec(phi, ev.p);
  ev.grad = subtract(ev.mean, q_mean);
  return ev;
}

// Phi diag(p) Phi^T - (Phi p)(Phi p)^T, accumulated as a centred sum.
Matrix context_hessian(const Matrix& phi, const ContextEval& ev) {
  const std::size_t d = phi.rows();
  Matrix h(d, d);
  Vector c(d);
  for (std::size_t w = 0; w < phi.cols(); ++w) {
    const double pw = ev.p[w];
    if (pw == 0.0) continue;
    auto fw = phi.col(w);
    for (std::size_t i = 0; i < d; ++i) c[i] = fw[i] - ev.mean[i];
    for (std::size_t j = 0; j < d; ++j) {
      const double cj = pw * c[j];
      auto hj = h.col(j);
      for (std::size_t i = 0; i <= j; ++i) hj[i] += cj * c[i];
    }
  }
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t i = 0; i < j; ++i) h(j, i) = h(i, j);
  return h;
}

void check_model_dims(const GroundTruth& gt, const Matrix& phi, const Matrix& theta) {
  if (phi.cols() != gt.V) throw InputError("model: Phi must have V columns");
  if (theta.rows() != phi.rows()) throw InputError("model: Theta and Phi disagree on d");
  if (theta.cols() != gt.S) throw InputError("model: Theta must have S columns");
}

double weighted_total(std::span<const double> weights, std::span<const double> terms) {
  CompensatedSum acc;
  for (std::size_t s = 0; s < terms.size(); ++s) {
    if (weights[s] == 0.0) continue;
    if (std::isinf(terms[s])) return std::numeric_limits<double>::infinity();
    acc.add(weights[s] * terms[s]);
  }
  return acc.value();
}

Matrix interpolate(const Matrix& a, const Matrix& b, double t) {
  Matrix out = a;
  auto o = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = (1.0 - t) * o[i] + t * bd[i];
  return out;
}

// Bisection on a non-decreasing excess-loss curve f(t), f(0) = 0.
template <class F>
void bisect_epsilon(F&& f, double target, double& t_out, double& eps_out, bool& unreachable) {
  if (!(target >= 0.0)) throw InputError("epsilon target must be non-negative");
  t_out = 0.0;
  eps_out = f(0.0);
  unreachable = false;
  if (target == 0.0) return;
  const double tol = 0.01 * target;
  const double e1 = f(1.0);
  if (e1 < target - tol) {
    t_out = 1.0;
    eps_out = e1;
    unreachable = true;
    return;
  }
  double lo = 0.0;
  double hi = 1.0;
  t_out = 1.0;
  eps_out = e1;
  for (int it = 0; it < 200 && std::abs(eps_out - target) > tol; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double e = f(mid);
    t_out = mid;
    eps_out = e;
    if (e < target)
      lo = mid;
    else
      hi = mid;
  }
}

}  // namespace

SoftmaxPrediction softmax_predict(const Matrix& phi, std::span<const double> theta) {
  if (!all_finite(phi) || !all_finite(theta)) throw InputError("softmax_predict: non-finite input");
  SoftmaxPrediction out;
  out.p.resize(phi.cols());
  out.logZ = softmax_into(phi, theta, out.p);
  return out;
}

double xent_loss(const GroundTruth& gt, const SoftmaxModel& model) {
  check_model_dims(gt, model.Phi, model.Theta);
  return weighted_total(gt.p_L, par::softmax_xent_terms(model.Phi, model.Theta, gt.Pstar));
}

double xent_loss(const GroundTruth& gt, const TableModel& model) {
  if (model.P.rows() != gt.V || model.P.cols() != gt.S)
    throw InputError("table model must be V x S");
  return weighted_total(gt.p_L, par::table_xent_terms(model.P, gt.Pstar));
}

Vector xent_grad(const GroundTruth& gt, std::size_t s, const Matrix& phi,
                 std::span<const double> theta) {
  if (s >= gt.S) throw InputError("xent_grad: context out of range");
  if (phi.cols() != gt.V) throw InputError("xent_grad: Phi must have V columns");
  Vector p(gt.V);
  softmax_into(phi, theta, p);
  return matvec(phi, subtract(p, gt.Pstar.col(s)));
}

double optimal_xent(const GroundTruth& gt) {
  return weighted_total(gt.p_L, par::table_xent_terms(gt.Pstar, gt.Pstar));
}

ContextSolve minimize_context_xent(const Matrix& phi, std::span<const double> q,
                                   std::span<const double> theta0, const SolveOptions& opts) {
  if (theta0.size() != phi.rows() || q.size() != phi.cols())
    throw InputError("minimize_context_xent: dimension mismatch");
  const Vector q_mean = matvec(phi, q);
  ContextSolve out;
  out.theta.assign(theta0.begin(), theta0.end());
  ContextEval ev = evaluate_context(phi, q_mean, out.theta);
  out.grad_norm = norm2(ev.grad);

  while (out.iterations < opts.max_iters) {
    if (out.grad_norm <= opts.tol) {
      out.converged = true;
      break;
    }
    const Matrix h = context_hessian(phi, ev);
    Vector neg_g = ev.grad;
    for (double& x : neg_g) x = -x;
    Vector dir;
    if (auto sol = solve_spd(h, neg_g, 1e-12 * trace(h) / static_cast<double>(h.rows())))
      dir = std::move(*sol);
    else
      dir = neg_g;
    double slope = dot(ev.grad, dir);
    if (!(slope < 0.0)) {
      dir = neg_g;
      slope = -out.grad_norm * out.grad_norm;
    }

    bool accepted = false;
    double alpha = 1.0;
    for (int k = 0; k < 60; ++k, alpha *= 0.5) {
      const Vector cand = axpy(alpha, dir, out.theta);
      ContextEval ec = evaluate_context(phi, q_mean, cand);
      if (!std::isfinite(ec.value)) continue;
      const double gn = norm2(ec.grad);
      const bool armijo = ec.value <= ev.value + 1e-4 * alpha * slope;
      // Near the optimum the decrease drops below rounding; accept steps that
      // keep the value flat and shrink the gradient.
      const bool flat = ec.value <= ev.value + 4.0 * std::numeric_limits<double>::epsilon() *
                                                    (std::abs(ev.value) + 1.0) &&
                        gn < out.grad_norm;
      if (armijo || flat) {
        out.theta = cand;
        ev = std::move(ec);
        out.grad_norm = gn;
        accepted = true;
        break;
      }
    }
    ++out.iterations;
    if (!accepted) break;
  }
  if (out.grad_norm <= opts.tol) out.converged = true;
  out.value = ev.value;
  return out;
}

PhiOptimum optimal_xent_phi(const GroundTruth& gt, const Matrix& phi, const SolveOptions& opts) {
  if (phi.cols() != gt.V) throw InputError("optimal_xent_phi: Phi must have V columns");
  if (!all_finite(phi)) throw InputError("optimal_xent_phi: non-finite Phi");
  const std::size_t d = phi.rows();
  PhiOptimum out;
  out.ThetaStar = Matrix(d, gt.S);
  Vector values(gt.S);
  Vector gnorms(gt.S);
  std::vector<char> conv(gt.S);
  const Vector zero(d, 0.0);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(gt.S);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t s = 0; s < n; ++s) {
    ContextSolve sol = minimize_context_xent(phi, gt.Pstar.col(s), zero, opts);
    out.ThetaStar.set_col(s, sol.theta);
    values[s] = sol.value;
    gnorms[s] = sol.grad_norm;
    conv[s] = sol.converged;
  }
  out.value = weighted_total(gt.p_L, values);
  for (std::size_t s = 0; s < gt.S; ++s) {
    out.max_grad_norm = std::max(out.max_grad_norm, gnorms[s]);
    if (!conv[s]) ++out.unconverged;
  }
  return out;
}

SoftmaxModel train_lm(const GroundTruth& gt, std::size_t d, const TrainOptions& opts) {
  if (d < 1 || d > gt.V) throw InputError("train_lm: d must lie in [1, V]");
  Rng rng(opts.seed);
  SoftmaxModel model;
  if (opts.fix_phi) {
    if (opts.fix_phi->rows() != d || opts.fix_phi->cols() != gt.V)
      throw InputError("train_lm: fixed Phi must be d x V");
    model.Phi = *opts.fix_phi;
  } else {
    Rng phi_rng = rng.split("phi");
    model.Phi = phi_rng.normal_matrix(d, gt.V);
  }
  Rng theta_rng = rng.split("theta");
  model.Theta = opts.init_scale * theta_rng.normal_matrix(d, gt.S);

  const double loss0 = xent_loss(gt, model);
  double loss = loss0;
  double step = opts.initial_step;
  const SolveOptions one_step{1e-12, 1};
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(gt.S);
  if (opts.on_checkpoint) opts.on_checkpoint(0, model);

  for (int it = 0; it < opts.max_iters; ++it) {
    int moved = 0;
#pragma omp parallel for schedule(dynamic) reduction(+ : moved)
    for (std::ptrdiff_t s = 0; s < n; ++s) {
      if (gt.p_L[s] == 0.0) continue;
      ContextSolve sol = minimize_context_xent(model.Phi, gt.Pstar.col(s), model.Theta.col(s), one_step);
      if (sol.iterations > 0) {
        model.Theta.set_col(s, sol.theta);
        ++moved;
      }
    }
    double next = xent_loss(gt, model);

    if (!opts.fix_phi) {
      const Matrix p = par::softmax_table(model.Phi, model.Theta);
      Matrix g(d, gt.V);
      for (std::size_t s = 0; s < gt.S; ++s) {
        const double w = gt.p_L[s];
        if (w == 0.0) continue;
        auto th = model.Theta.col(s);
        for (std::size_t v = 0; v < gt.V; ++v) {
          const double r = w * (p(v, s) - gt.Pstar(v, s));
          auto gv = g.col(v);
          for (std::size_t i = 0; i < d; ++i) gv[i] += r * th[i];
        }
      }
      const double g2 = dot(g.data(), g.data());
      if (g2 > 0.0) {
        for (int k = 0; k < 60; ++k, step *= 0.5) {
          SoftmaxModel cand{model.Phi - step * g, model.Theta};
          const double lc = xent_loss(gt, cand);
          if (std::isfinite(lc) && lc <= next - 1e-4 * step * g2) {
            model = std::move(cand);
            next = lc;
            step *= 2.0;
            break;
          }
        }
      }
    }

    if (!std::isfinite(next) || next > 10.0 * std::abs(loss0) + 1e-12)
      throw DivergenceError("train_lm: loss diverged at iteration " + std::to_string(it) +
                            " (loss " + std::to_string(next) + ", initial " +
                            std::to_string(loss0) + ")");
    const bool stalled = loss - next <= 0.0;
    loss = next;
    if (opts.on_checkpoint) opts.on_checkpoint(it + 1, model);
    if (opts.fix_phi && moved == 0) break;
    if (!opts.fix_phi && stalled && moved == 0) break;
  }
  return model;
}

Matrix conditional_mean(const Matrix& phi, const Matrix& theta) {
  if (phi.rows() != theta.rows()) throw InputError("conditional_mean: Phi and Theta disagree on d");
  return phi * par::softmax_table(phi, theta);
}

EpsilonModel epsilon_model(const GroundTruth& gt, const Matrix& phi, const Matrix& theta_star,
                           const Matrix& theta_rand, double target_eps) {
  check_model_dims(gt, phi, theta_star);
  check_model_dims(gt, phi, theta_rand);
  const double base = xent_loss(gt, SoftmaxModel{phi, theta_star});
  auto excess = [&](double t) {
    return xent_loss(gt, SoftmaxModel{phi, interpolate(theta_star, theta_rand, t)}) - base;
  };
  EpsilonModel out;
  bisect_epsilon(excess, target_eps, out.t, out.achieved_eps, out.unreachable);
  out.model = SoftmaxModel{phi, interpolate(theta_star, theta_rand, out.t)};
  return out;
}

EpsilonTable epsilon_table_model(const GroundTruth& gt, const Matrix& q, double target_eps) {
  if (q.rows() != gt.V || q.cols() != gt.S) throw InputError("epsilon_table_model: Q must be V x S");
  const double base = optimal_xent(gt);
  auto excess = [&](double t) {
    return xent_loss(gt, TableModel{interpolate(gt.Pstar, q, t)}) - base;
  };
  EpsilonTable out;
  bisect_epsilon(excess, target_eps, out.t, out.achieved_eps, out.unreachable);
  out.model = TableModel{interpolate(gt.Pstar, q, out.t)};
  return out;
}

}  // namespace lmlab
