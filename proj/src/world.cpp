#include "lmlab/world.hpp"

#include <algorithm>
#include <cmath>

#include "lmlab/error.hpp"
#include "lmlab/rng.hpp"

namespace lmlab {

void check_stochastic(std::span<const double> p, const std::string& what, double tol) {
  CompensatedSum total;
  for (double x : p) {
    if (!std::isfinite(x) || x < 0.0)
      throw InputError(what + ": entries must be finite and non-negative");
    total.add(x);
  }
  if (std::abs(total.value() - 1.0) > tol) throw InputError(what + ": does not sum to 1");
}

void GroundTruth::validate() const {
  if (V < 2) throw InputError("world: V must be at least 2");
  if (S < 1) throw InputError("world: S must be at least 1");
  if (p_L.size() != S) throw InputError("world: p_L has wrong length");
  if (Pstar.rows() != V || Pstar.cols() != S) throw InputError("world: Pstar must be V x S");
  check_stochastic(p_L, "world: p_L");
  for (std::size_t s = 0; s < S; ++s)
    check_stochastic(Pstar.col(s), "world: Pstar column " + std::to_string(s));
}

GroundTruth make_ground_truth(const WorldConfig& cfg) {
  GroundTruth gt;
  if (cfg.structure == WorldStructure::explicit_table) {
    gt.V = cfg.pstar.rows();
    gt.S = cfg.pstar.cols();
    gt.Pstar = cfg.pstar;
    gt.p_L = cfg.p_L;
    gt.validate();
    return gt;
  }
  if (cfg.V < 2) throw InputError("world: V must be at least 2");
  if (cfg.S < 1) throw InputError("world: S must be at least 1");
  gt.V = cfg.V;
  gt.S = cfg.S;
  Rng root(cfg.seed);
  Rng ctx = root.split("p_L");
  gt.p_L = ctx.dirichlet(cfg.S, cfg.mixing_concentration);
  gt.Pstar = Matrix(cfg.V, cfg.S);

  if (cfg.structure == WorldStructure::dense) {
    Rng cols = root.split("conditionals");
    for (std::size_t s = 0; s < cfg.S; ++s) gt.Pstar.set_col(s, cols.dirichlet(cfg.V, cfg.concentration));
  } else {
    if (cfg.rank < 1 || cfg.rank > std::min(cfg.V, cfg.S))
      throw InputError("world: topic rank must lie in [1, min(V, S)]");
    Rng topic_rng = root.split("topics");
    Rng weight_rng = root.split("mixing");
    Matrix topics(cfg.V, cfg.rank);
    for (std::size_t k = 0; k < cfg.rank; ++k)
      topics.set_col(k, topic_rng.dirichlet(cfg.V, cfg.concentration));
    for (std::size_t s = 0; s < cfg.S; ++s) {
      const Vector w = weight_rng.dirichlet(cfg.rank, cfg.mixing_concentration);
      gt.Pstar.set_col(s, matvec(topics, w));
    }
  }
  // Renormalise away rounding so columns sum to 1 well inside 1e-12.
  for (std::size_t s = 0; s < gt.S; ++s) {
    auto c = gt.Pstar.col(s);
    const double z = compensated_sum(c);
    for (double& x : c) x /= z;
  }
  gt.validate();
  return gt;
}

void Task::validate(std::size_t S) const {
  if (p_T.size() != S) throw InputError("task: p_T has wrong length");
  if (labels.size() != S) throw InputError("task: labels have wrong length");
  check_stochastic(p_T, "task: p_T");
  for (int y : labels)
    if (y != 1 && y != -1) throw InputError("task: labels must be +1 or -1");
  if (noisy()) {
    if (prob_positive.size() != S) throw InputError("task: prob_positive has wrong length");
    for (double q : prob_positive)
      if (!(q >= 0.0 && q <= 1.0)) throw InputError("task: prob_positive must lie in [0, 1]");
  }
}

double Task::p_positive(std::size_t s) const {
  if (noisy()) return prob_positive[s];
  return labels[s] == 1 ? 1.0 : 0.0;
}

Task with_flip_noise(const Task& task, double eta) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw InputError("flip noise must lie in [0, 1]");
  Task out = task;
  out.prob_positive.resize(task.labels.size());
  for (std::size_t s = 0; s < task.labels.size(); ++s)
    out.prob_positive[s] = task.labels[s] == 1 ? 1.0 - eta : eta;
  return out;
}

std::pair<Task, NaturalCertificate> make_natural_task(const GroundTruth& gt,
                                                      const NaturalTaskSpec& spec) {
  if (spec.word_plus >= gt.V) throw InputError("task: word_plus out of range");
  if (spec.word_minus >= gt.V) throw InputError("task: word_minus out of range");
  if (spec.word_plus == spec.word_minus) throw InputError("task: word_plus equals word_minus");
  if (!(spec.margin > 0.0)) throw InputError("task: margin must be positive");
  if (!(spec.B >= 0.0)) throw InputError("task: B must be non-negative");

  std::vector<char> in_subset(gt.S, spec.context_subset.empty() ? 1 : 0);
  for (std::size_t s : spec.context_subset) {
    if (s >= gt.S) throw InputError("task: context index out of range");
    in_subset[s] = 1;
  }

  Task task;
  task.p_T.assign(gt.S, 0.0);
  task.labels.assign(gt.S, 1);
  CompensatedSum mass;
  for (std::size_t s = 0; s < gt.S; ++s) {
    const double diff = gt.Pstar(spec.word_plus, s) - gt.Pstar(spec.word_minus, s);
    task.labels[s] = diff >= 0.0 ? 1 : -1;
    if (in_subset[s] && std::abs(diff) >= spec.margin) {
      task.p_T[s] = gt.p_L[s];
      mass.add(gt.p_L[s]);
    }
  }
  const double total = mass.value();
  if (!(total > 0.0)) throw DegenerateError("task: every context was excluded (empty task)");
  for (double& p : task.p_T) p /= total;

  NaturalCertificate cert;
  cert.B = spec.B;
  cert.v_star.assign(gt.V, 0.0);
  cert.v_star[spec.word_plus] = spec.B;
  cert.v_star[spec.word_minus] = -spec.B;
  CompensatedSum tau;
  for (std::size_t s = 0; s < gt.S; ++s) {
    if (task.p_T[s] == 0.0) continue;
    const double score = dot(cert.v_star, gt.Pstar.col(s));
    tau.add(task.p_T[s] * std::max(0.0, 1.0 - task.labels[s] * score));
  }
  cert.tau = tau.value();
  return {std::move(task), std::move(cert)};
}

GammaResult gamma_plain(std::span<const double> p_L, std::span<const double> p_T) {
  if (p_L.size() != p_T.size()) throw InputError("gamma_plain: length mismatch");
  GammaResult r{1.0, false};
  bool any = false;
  for (std::size_t s = 0; s < p_T.size(); ++s) {
    if (p_T[s] <= 0.0) continue;
    any = true;
    if (p_L[s] <= 0.0) return {0.0, true};
    r.value = std::min(r.value, p_L[s] / p_T[s]);
  }
  if (!any) throw DegenerateError("gamma_plain: p_T has empty support");
  return r;
}

}  // namespace lmlab
