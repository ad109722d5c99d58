#include "lmlab/experiment.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <exception>
#include <set>

#include "lmlab/error.hpp"
#include "lmlab/linear_eval.hpp"
#include "lmlab/partition_fit.hpp"
#include "lmlab/quad_lm.hpp"
#include "lmlab/rng.hpp"

namespace lmlab {

namespace {

// Reads one JSON object, tracking which keys were consumed so leftovers can be
// reported as unknown fields.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const Json* find(const std::string& key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  template <std::unsigned_integral T>
  void read(const std::string& key, T& out) {
    if (const Json* v = find(key)) {
      if (!v->is_number_unsigned()) throw ConfigError(field(key), "expected a non-negative integer");
      out = v->get<T>();
    }
  }
  void read(const std::string& key, int& out) {
    if (const Json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(field(key), "expected an integer");
      out = v->get<int>();
    }
  }
  void read(const std::string& key, double& out) {
    if (const Json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(field(key), "expected a number");
      out = v->get<double>();
    }
  }
  void read(const std::string& key, std::string& out) {
    if (const Json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(field(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  void finish() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key())) throw ConfigError(field(item.key()), "unknown field");
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void parse_world(const Json& j, WorldConfig& w) {
  ObjectReader r(j, "world");
  r.read("V", w.V);
  r.read("S", w.S);
  std::string structure;
  r.read("structure", structure);
  if (structure == "dense" || structure.empty()) {
    w.structure = WorldStructure::dense;
  } else if (structure == "topic_mixture") {
    w.structure = WorldStructure::topic_mixture;
  } else if (structure == "explicit") {
    w.structure = WorldStructure::explicit_table;
  } else {
    throw ConfigError("world.structure", "expected dense, topic_mixture or explicit");
  }
  r.read("rank", w.rank);
  r.read("concentration", w.concentration);
  r.read("mixing_concentration", w.mixing_concentration);
  if (const Json* p = r.find("Pstar")) w.pstar = matrix_from_json(*p, "world.Pstar");
  if (const Json* p = r.find("p_L")) {
    if (!p->is_array()) throw ConfigError("world.p_L", "expected an array");
    w.p_L.clear();
    for (std::size_t i = 0; i < p->size(); ++i)
      w.p_L.push_back(double_from_json((*p)[i], "world.p_L[" + std::to_string(i) + "]"));
  }
  r.finish();
  if (w.structure == WorldStructure::explicit_table) {
    if (w.pstar.empty()) throw ConfigError("world.Pstar", "required for an explicit world");
    w.V = w.pstar.rows();
    w.S = w.pstar.cols();
  }
}

void parse_model(const Json& j, ModelConfig& m) {
  ObjectReader r(j, "model");
  r.read("d", m.d);
  std::string objective;
  r.read("objective", objective);
  if (objective == "xent" || objective.empty()) {
    m.objective = Objective::xent;
  } else if (objective == "quad") {
    m.objective = Objective::quad;
  } else {
    throw ConfigError("model.objective", "expected xent or quad");
  }
  std::string phi;
  r.read("phi", phi);
  if (phi == "trained" || phi.empty()) {
    m.phi = PhiPolicy::trained;
  } else if (phi == "random") {
    m.phi = PhiPolicy::random;
  } else {
    throw ConfigError("model.phi", "expected trained or random");
  }
  r.read("train_iters", m.train_iters);
  r.finish();
}

void parse_task(const Json& j, NaturalTaskSpec& t) {
  ObjectReader r(j, "task");
  r.read("word_plus", t.word_plus);
  r.read("word_minus", t.word_minus);
  r.read("B", t.B);
  r.read("margin", t.margin);
  if (const Json* c = r.find("contexts")) {
    if (!c->is_array()) throw ConfigError("task.contexts", "expected an array");
    t.context_subset.clear();
    for (std::size_t i = 0; i < c->size(); ++i) {
      if (!(*c)[i].is_number_unsigned())
        throw ConfigError("task.contexts[" + std::to_string(i) + "]", "expected a non-negative integer");
      t.context_subset.push_back((*c)[i].get<std::size_t>());
    }
  }
  r.finish();
}

void parse_sweep(const Json& j, SweepConfig& s) {
  ObjectReader r(j, "sweep");
  if (const Json* e = r.find("eps_targets")) {
    if (!e->is_array()) throw ConfigError("sweep.eps_targets", "expected an array");
    s.eps_targets.clear();
    for (std::size_t i = 0; i < e->size(); ++i)
      s.eps_targets.push_back(double_from_json((*e)[i], "sweep.eps_targets[" + std::to_string(i) + "]"));
  }
  r.read("points", s.points);
  r.read("theta_scale", s.theta_scale);
  r.read("fit_iters", s.fit_iters);
  r.finish();
}

void parse_logz(const Json& j, LogZConfig& l) {
  ObjectReader r(j, "logz");
  r.read("samples", l.samples);
  r.read("noise", l.noise);
  r.finish();
}

template <class T, class Parse>
std::vector<T> parse_list(const Json& j, const std::string& field, Parse parse) {
  if (!j.is_array() || j.empty()) throw ConfigError(field, "expected a non-empty array");
  std::vector<T> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string f = field + "[" + std::to_string(i) + "]";
    if (!j[i].is_string()) throw ConfigError(f, "expected a string");
    try {
      out.push_back(parse(j[i].get<std::string>()));
    } catch (const InputError& e) {
      throw ConfigError(f, e.what());
    }
  }
  return out;
}

std::uint64_t stream_seed(std::uint64_t seed, const char* label) { return Rng(seed).split(label).next_u64(); }

}  // namespace

ExperimentConfig parse_config(const Json& j) {
  ExperimentConfig cfg;
  ObjectReader r(j, "");
  r.read("seed", cfg.seed);
  if (const Json* w = r.find("world")) parse_world(*w, cfg.world);
  if (const Json* m = r.find("model")) parse_model(*m, cfg.model);
  if (const Json* t = r.find("task")) parse_task(*t, cfg.task);
  if (const Json* t = r.find("theorems")) cfg.theorems = parse_list<TheoremId>(*t, "theorems", parse_theorem_id);
  if (const Json* g = r.find("gamma_modes"))
    cfg.gamma_modes = parse_list<GammaMode>(*g, "gamma_modes", parse_gamma_mode);
  if (const Json* s = r.find("sweep")) parse_sweep(*s, cfg.sweep);
  if (const Json* l = r.find("logz")) parse_logz(*l, cfg.logz);
  r.finish();
  validate(cfg);
  return cfg;
}

void validate(const ExperimentConfig& cfg) {
  const auto& w = cfg.world;
  if (w.V < 2) throw ConfigError("world.V", "need at least 2 words");
  if (w.S < 1) throw ConfigError("world.S", "need at least 1 context");
  if (w.structure == WorldStructure::topic_mixture && (w.rank < 1 || w.rank > std::min(w.V, w.S)))
    throw ConfigError("world.rank", "must lie in [1, min(V, S)]");
  if (!(w.concentration > 0.0)) throw ConfigError("world.concentration", "must be positive");
  if (!(w.mixing_concentration > 0.0)) throw ConfigError("world.mixing_concentration", "must be positive");
  if (cfg.model.d < 1 || cfg.model.d > w.V) throw ConfigError("model.d", "must lie in [1, V]");
  if (cfg.model.train_iters < 0) throw ConfigError("model.train_iters", "must be non-negative");
  const auto& t = cfg.task;
  if (t.word_plus >= w.V) throw ConfigError("task.word_plus", "word index must be below V");
  if (t.word_minus >= w.V) throw ConfigError("task.word_minus", "word index must be below V");
  if (t.word_plus == t.word_minus) throw ConfigError("task.word_minus", "must differ from task.word_plus");
  if (!(t.B >= 0.0) || !std::isfinite(t.B)) throw ConfigError("task.B", "must be finite and non-negative");
  if (!(t.margin > 0.0)) throw ConfigError("task.margin", "must be positive");
  for (std::size_t i = 0; i < t.context_subset.size(); ++i)
    if (t.context_subset[i] >= w.S)
      throw ConfigError("task.contexts[" + std::to_string(i) + "]", "context index must be below S");
  for (std::size_t i = 0; i < cfg.sweep.eps_targets.size(); ++i) {
    const double e = cfg.sweep.eps_targets[i];
    if (!(e >= 0.0) || !std::isfinite(e))
      throw ConfigError("sweep.eps_targets[" + std::to_string(i) + "]", "must be finite and non-negative");
  }
  if (cfg.sweep.points < 5) throw ConfigError("sweep.points", "need at least 5 points");
  if (!(cfg.sweep.theta_scale > 0.0)) throw ConfigError("sweep.theta_scale", "must be positive");
  if (cfg.sweep.fit_iters < 1) throw ConfigError("sweep.fit_iters", "must be positive");
  if (cfg.logz.samples < cfg.model.d + 1) throw ConfigError("logz.samples", "need at least d + 1 samples");
  if (!(cfg.logz.noise >= 0.0)) throw ConfigError("logz.noise", "must be non-negative");
}

// ---------------------------------------------------------------------------

namespace {

struct LineFit {
  double a = 0.0;
  double c = 0.0;
  double r = -2.0;  // below any Pearson value: marks an invalid b
};

LineFit fit_at(std::span<const double> x, std::span<const double> y, double b) {
  const std::size_t n = x.size();
  Vector u(n);
  for (std::size_t i = 0; i < n; ++i) u[i] = std::sqrt(std::max(x[i] - b, 0.0));
  const double mu = compensated_sum(u) / n;
  const double my = compensated_sum(y) / n;
  double suu = 0.0;
  double syy = 0.0;
  double suy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    suu += (u[i] - mu) * (u[i] - mu);
    syy += (y[i] - my) * (y[i] - my);
    suy += (u[i] - mu) * (y[i] - my);
  }
  LineFit f;
  if (!(suu > 0.0)) return f;
  f.a = suy / suu;
  f.c = my - f.a * mu;
  f.r = syy > 0.0 ? suy / std::sqrt(suu * syy) : 0.0;
  return f;
}

}  // namespace

SqrtFit fit_sqrt_trend(std::span<const double> x, std::span<const double> y, int grid) {
  if (x.size() != y.size()) throw InputError("fit_sqrt_trend: x and y differ in length");
  if (grid < 2) throw InputError("fit_sqrt_trend: grid needs at least 2 points");
  if (!all_finite(x) || !all_finite(y)) throw InputError("fit_sqrt_trend: non-finite data");
  std::set<double> distinct(x.begin(), x.end());
  if (distinct.size() < 5) throw DegenerateError("fit_sqrt_trend: need at least 5 distinct x values");

  const double x_min = *distinct.begin();
  const double range = *distinct.rbegin() - x_min;
  const double step = range / (grid - 1);
  auto b_at = [&](int k) { return k == grid - 1 ? x_min : x_min - range + k * step; };

  int best_k = 0;
  LineFit best = fit_at(x, y, b_at(0));
  for (int k = 1; k < grid; ++k) {
    const LineFit f = fit_at(x, y, b_at(k));
    if (f.r > best.r) {
      best = f;
      best_k = k;
    }
  }
  double best_b = b_at(best_k);

  // Golden-section refinement of b on the bracket around the best grid point.
  double lo = b_at(std::max(best_k - 1, 0));
  double hi = b_at(std::min(best_k + 1, grid - 1));
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double m1 = hi - inv_phi * (hi - lo);
  double m2 = lo + inv_phi * (hi - lo);
  double r1 = fit_at(x, y, m1).r;
  double r2 = fit_at(x, y, m2).r;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
    if (r1 >= r2) {
      hi = m2;
      m2 = m1;
      r2 = r1;
      m1 = hi - inv_phi * (hi - lo);
      r1 = fit_at(x, y, m1).r;
    } else {
      lo = m1;
      m1 = m2;
      r1 = r2;
      m2 = lo + inv_phi * (hi - lo);
      r2 = fit_at(x, y, m2).r;
    }
  }
  const double refined_b = r1 >= r2 ? m1 : m2;
  const LineFit refined = fit_at(x, y, refined_b);
  if (refined.r > best.r) {
    best = refined;
    best_b = refined_b;
  }
  return {best.a, best_b, best.c, best.r};
}

// ---------------------------------------------------------------------------

WorldBundle build_world(const ExperimentConfig& cfg) {
  WorldConfig wc = cfg.world;
  wc.seed = stream_seed(cfg.seed, "world");
  WorldBundle out;
  out.gt = make_ground_truth(wc);
  std::tie(out.task, out.witness) = make_natural_task(out.gt, cfg.task);
  return out;
}

SoftmaxModel build_model(const ExperimentConfig& cfg, const GroundTruth& gt) {
  const std::size_t d = cfg.model.d;
  const std::uint64_t seed = stream_seed(cfg.seed, "model");
  if (cfg.model.phi == PhiPolicy::random) {
    const Matrix phi = Rng(seed).split("phi").normal_matrix(d, gt.V);
    if (cfg.model.objective == Objective::quad) return {phi, quad_optimal_features(gt, phi)};
    return {phi, optimal_xent_phi(gt, phi).ThetaStar};
  }
  if (cfg.model.objective == Objective::quad) {
    QuadTrainOptions opts;
    opts.seed = seed;
    opts.max_iters = std::max(cfg.model.train_iters, 1);
    QuadTrainResult r = train_quad(gt, d, opts);
    return {std::move(r.Phi), std::move(r.Theta)};
  }
  TrainOptions opts;
  opts.seed = seed;
  opts.max_iters = cfg.model.train_iters;
  return train_lm(gt, d, opts);
}

Certificates build_certificates(const ExperimentConfig& cfg, const WorldBundle& w, const Matrix& phi) {
  Certificates c;
  c.table = natural_certificate(w.gt, w.task, cfg.task.B);
  if (w.witness.tau < c.table.tau) c.table = w.witness;
  c.subspace = natural_certificate(w.gt, w.task, cfg.task.B, phi);
  return c;
}

namespace {

Matrix random_theta(const ExperimentConfig& cfg, std::size_t d, std::size_t S) {
  return cfg.sweep.theta_scale * Rng(cfg.seed).split("theta_rand").normal_matrix(d, S);
}

Matrix random_table(const ExperimentConfig& cfg, std::size_t V, std::size_t S) {
  Rng base = Rng(cfg.seed).split("table_rand");
  Matrix q(V, S);
  for (std::size_t s = 0; s < S; ++s) q.set_col(s, base.split(static_cast<std::uint64_t>(s)).dirichlet(V, 1.0));
  return q;
}

// Runs body(k) for k in [0, n) across threads; the first exception (by index) is rethrown.
template <class Body>
void parallel_points(std::size_t n, Body body) {
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t k = 0; k < n; ++k) {
    try {
      body(k);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

bool is_softmax_theorem(TheoremId id) { return id == TheoremId::T4_2 || id == TheoremId::A2_softmax; }

}  // namespace

BoundSweep run_bound_sweep(const ExperimentConfig& cfg, const WorldBundle& w, const SoftmaxModel& model,
                           const Certificates& certs) {
  const GroundTruth& gt = w.gt;
  const Matrix& phi = model.Phi;
  const PhiOptimum opt = optimal_xent_phi(gt, phi);
  const double table_baseline = optimal_xent(gt);
  const Matrix theta_rand = random_theta(cfg, phi.rows(), gt.S);
  const Matrix q = random_table(cfg, gt.V, gt.S);

  const auto& targets = cfg.sweep.eps_targets;
  const std::size_t per_point = cfg.theorems.size() * cfg.gamma_modes.size();
  BoundSweep out;
  out.unconverged_contexts = opt.unconverged;
  out.reports.resize(targets.size() * per_point);

  parallel_points(targets.size(), [&](std::size_t k) {
    const SoftmaxModel sm = epsilon_model(gt, phi, opt.ThetaStar, theta_rand, targets[k]).model;
    const TableModel tm = epsilon_table_model(gt, q, targets[k]).model;
    std::size_t slot = k * per_point;
    for (TheoremId id : cfg.theorems) {
      const bool softmax = is_softmax_theorem(id);
      const LanguageModel lm = softmax ? LanguageModel{sm} : LanguageModel{tm};
      const NaturalCertificate& cert = id == TheoremId::T4_1 ? certs.table : certs.subspace;
      BoundOptions bo;
      bo.baseline = softmax ? opt.value : table_baseline;
      for (GammaMode mode : cfg.gamma_modes) out.reports[slot++] = theorem_bound_report(gt, w.task, lm, cert, id, mode, bo);
    }
  });
  return out;
}

TrendSweep sweep_and_fit_sqrt(const ExperimentConfig& cfg, const WorldBundle& w) {
  const GroundTruth& gt = w.gt;
  const int iters = std::max(cfg.model.train_iters, cfg.sweep.points - 1);
  const int n = cfg.sweep.points;

  // Geometric spacing over [0, iters], strictly increasing.
  std::vector<int> marks(n);
  for (int k = 0; k < n; ++k) {
    const double g = std::pow(iters + 1.0, static_cast<double>(k) / (n - 1)) - 1.0;
    marks[k] = std::max(static_cast<int>(std::lround(g)), k == 0 ? 0 : marks[k - 1] + 1);
  }
  for (int k = n - 1; k > 0 && marks[k] > iters - (n - 1 - k); --k) marks[k] = iters - (n - 1 - k);

  std::vector<SoftmaxModel> models(n);
  TrainOptions opts;
  opts.seed = stream_seed(cfg.seed, "model");
  opts.max_iters = iters;
  std::size_t next = 0;
  opts.on_checkpoint = [&](int it, const SoftmaxModel& m) {
    if (next < marks.size() && marks[next] == it) models[next++] = m;
  };
  const SoftmaxModel last = train_lm(gt, cfg.model.d, opts);
  // Training can stop early; remaining checkpoints repeat the final model.
  for (; next < models.size(); ++next) models[next] = last;

  TrendSweep out;
  out.rows.resize(n);
  std::vector<int> unconverged(n, 0);
  parallel_points(static_cast<std::size_t>(n), [&](std::size_t k) {
    const SoftmaxModel& m = models[k];
    const PhiOptimum opt = optimal_xent_phi(gt, m.Phi);
    TrendRow& row = out.rows[k];
    row.t = marks[k];
    row.xent = xent_loss(gt, m);
    row.eps = row.xent - opt.value;
    unconverged[k] = opt.unconverged;
    // A classifier lambda on Phi p_f scores (Phi^T lambda)^T p_f, so the fit runs
    // on p_f over v = Phi^T lambda with the task's budget ||v||_inf <= B.
    FitConstraints cons;
    cons.loss = LossKind::logistic;
    cons.inf_norm_bound = cfg.task.B;
    cons.subspace = m.Phi;
    FitOptions fo;
    fo.max_iters = cfg.sweep.fit_iters;
    row.downstream_loss = fit_linear(predicted_table(m), w.task, cons, fo).loss;
  });
  for (int u : unconverged) out.unconverged_contexts += u;

  Vector x(n);
  Vector y(n);
  for (int k = 0; k < n; ++k) {
    x[k] = out.rows[k].xent;
    y[k] = out.rows[k].downstream_loss;
  }
  out.fit = fit_sqrt_trend(x, y);
  return out;
}

std::string sweep_csv(const std::vector<TrendRow>& rows) {
  std::string out = kSweepCsvHeader;
  out += '\n';
  for (const auto& r : rows) {
    out += format_double(r.t) + ',' + format_double(r.eps) + ',' + format_double(r.xent) + ',' +
           format_double(r.downstream_loss) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

Json sqrtfit_to_json(const SqrtFit& f, std::size_t points) {
  Json j;
  j["a"] = double_to_json(f.a);
  j["b"] = double_to_json(f.b);
  j["c"] = double_to_json(f.c);
  j["r_value"] = double_to_json(f.r_value);
  j["points"] = points;
  return j;
}

int quad_verify(const ExperimentConfig& cfg, const GroundTruth& gt, const std::filesystem::path& out) {
  const std::size_t d = cfg.model.d;
  const Substitutability sub = substitutability(gt);
  const QuadSolution sol = quad_closed_form(gt, sub, d);
  Json j;
  j["d"] = d;
  j["eigengap"] = double_to_json(sub.eigengap(d));
  j["degenerate_gap"] = sol.degenerate_gap;
  j["closed_form_value"] = double_to_json(sol.value);
  Json runs = Json::array();
  bool ok = true;
  for (QuadInit init : {QuadInit::random, QuadInit::spectral}) {
    QuadTrainOptions opts;
    opts.seed = stream_seed(cfg.seed, "quad");
    opts.init = init;
    const QuadTrainResult r = train_quad(gt, d, opts);
    const double gap = r.final_loss - sol.value;
    double max_angle = 0.0;
    for (double a : principal_angles(r.Phi, sol.PhiStar)) max_angle = std::max(max_angle, a);
    const bool pass = std::abs(gap) <= 1e-6 && (sol.degenerate_gap || max_angle <= 1e-3);
    ok = ok && pass;
    Json run;
    run["init"] = init == QuadInit::random ? "random" : "spectral";
    run["final_loss"] = double_to_json(r.final_loss);
    run["loss_gap"] = double_to_json(gap);
    run["max_angle"] = double_to_json(max_angle);
    run["iterations"] = r.iterations;
    run["pass"] = pass;
    runs.push_back(std::move(run));
  }
  j["runs"] = std::move(runs);
  write_json(out / "quad.json", j);
  return ok ? 0 : 1;
}

int fit_logz(const ExperimentConfig& cfg, const GroundTruth& gt, const SoftmaxModel& model,
             const std::filesystem::path& out) {
  const std::size_t d = model.d();
  const std::size_t n = cfg.logz.samples;
  Rng rng = Rng(cfg.seed).split("logz");
  Matrix thetas(d, n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto base = model.Theta.col(k % gt.S);
    for (std::size_t i = 0; i < d; ++i) thetas(i, k) = base[i] + (k < gt.S ? 0.0 : cfg.logz.noise * rng.normal());
  }
  const QuadFit fit = fit_log_partition(thetas, model.Phi);
  const LinearRelation lr = linear_relation_check(model.Phi, model.Theta, fit, gt.p_L);
  Json j;
  j["fit"] = quadfit_to_json(fit);
  j["residual_ratio"] = double_to_json(residual_ratio(model.Phi, model.Theta, fit, gt.p_L));
  j["max_dev"] = double_to_json(lr.max_dev);
  j["mean_dev"] = double_to_json(lr.mean_dev);
  write_json(out / "logz.json", j);
  return 0;
}

}  // namespace

int run_experiment(const std::string& command, const ExperimentConfig& cfg, const std::filesystem::path& out) {
  static const std::set<std::string> known{"synth", "train", "certify", "bound", "quad-verify", "fit-logz", "sweep"};
  if (!known.count(command)) throw ConfigError("command", "unknown subcommand '" + command + "'");
  validate(cfg);
  std::filesystem::create_directories(out);

  const WorldBundle w = build_world(cfg);
  write_json(out / "world.json", world_to_json(w.gt, &w.task));
  if (command == "synth") return 0;
  if (command == "quad-verify") return quad_verify(cfg, w.gt, out);

  const SoftmaxModel model = build_model(cfg, w.gt);
  write_json(out / "model.json", model_to_json(model));
  if (command == "train") return 0;
  if (command == "fit-logz") return fit_logz(cfg, w.gt, model, out);
  if (command == "sweep") {
    const TrendSweep trend = sweep_and_fit_sqrt(cfg, w);
    write_text(out / "sweep.csv", sweep_csv(trend.rows));
    write_json(out / "sqrtfit.json", sqrtfit_to_json(trend.fit, trend.rows.size()));
    return trend.unconverged_contexts == 0 ? 0 : 1;
  }

  const Certificates certs = build_certificates(cfg, w, model.Phi);
  Json cj;
  cj["table"] = certificate_to_json(certs.table);
  cj["subspace"] = certificate_to_json(certs.subspace);
  write_json(out / "certificate.json", cj);
  if (command == "certify") return 0;

  const BoundSweep sweep = run_bound_sweep(cfg, w, model, certs);
  bool all_hold = true;
  Json reports = Json::array();
  for (const auto& r : sweep.reports) {
    all_hold = all_hold && r.holds;
    reports.push_back(report_to_json(r));
  }
  Json j;
  j["reports"] = std::move(reports);
  j["all_hold"] = all_hold;
  j["unconverged_contexts"] = sweep.unconverged_contexts;
  write_text(out / "bounds.csv", bounds_csv(sweep.reports));
  write_json(out / "bounds.json", j);
  return all_hold && sweep.unconverged_contexts == 0 ? 0 : 1;
}

}  // namespace lmlab
