#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lmlab/bound_lab.hpp"
#include "lmlab/io.hpp"
#include "lmlab/softmax_lm.hpp"
#include "lmlab/world.hpp"

namespace lmlab {

enum class Objective { xent, quad };
enum class PhiPolicy { trained, random };

struct ModelConfig {
  std::size_t d = 3;
  Objective objective = Objective::xent;
  PhiPolicy phi = PhiPolicy::trained;
  int train_iters = 200;
};

struct SweepConfig {
  /// Target suboptimalities (nats) for the bound sweep.
  std::vector<double> eps_targets{0.0, 1e-4, 3e-4, 1e-3, 3e-3, 0.01, 0.03, 0.05, 0.1, 0.2};
  /// Training checkpoints recorded by the trend sweep.
  int points = 10;
  double theta_scale = 1.0;
  int fit_iters = 2000;
};

struct LogZConfig {
  std::size_t samples = 512;
  double noise = 0.5;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  WorldConfig world;
  ModelConfig model;
  NaturalTaskSpec task;
  std::vector<TheoremId> theorems{TheoremId::T4_1, TheoremId::T4_2, TheoremId::A2_unconstrained,
                                  TheoremId::A2_softmax};
  std::vector<GammaMode> gamma_modes{GammaMode::plain, GammaMode::refined};
  SweepConfig sweep;
  LogZConfig logz;
};

/// Parses and validates; unknown keys and bad values raise ConfigError with
/// the dotted field path.
ExperimentConfig parse_config(const Json& j);
void validate(const ExperimentConfig& cfg);

struct SqrtFit {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double r_value = 0.0;
};

/// y ~ a sqrt(x - b) + c. Scans 100 evenly spaced b in [x_min - range, x_min],
/// fits (a, c) by least squares on sqrt(x - b) for each, keeps the b with the
/// highest Pearson r and refines it by golden-section search on its bracket.
/// Needs at least 5 points with distinct x.
SqrtFit fit_sqrt_trend(std::span<const double> x, std::span<const double> y, int grid = 100);

/// World, task and the task's witness certificate.
struct WorldBundle {
  GroundTruth gt;
  Task task;
  NaturalCertificate witness;
};

WorldBundle build_world(const ExperimentConfig& cfg);

/// Trains (or, for the random policy, solves for Theta under a fixed random
/// Phi) the configured model.
SoftmaxModel build_model(const ExperimentConfig& cfg, const GroundTruth& gt);

struct Certificates {
  NaturalCertificate table;     // unconstrained
  NaturalCertificate subspace;  // restricted to row-span(Phi)
};

Certificates build_certificates(const ExperimentConfig& cfg, const WorldBundle& w, const Matrix& phi);

struct BoundSweep {
  std::vector<BoundReport> reports;  // ordered by eps target, theorem, gamma mode
  int unconverged_contexts = 0;
};

BoundSweep run_bound_sweep(const ExperimentConfig& cfg, const WorldBundle& w, const SoftmaxModel& model,
                           const Certificates& certs);

struct TrendRow {
  double t = 0.0;  // training iteration of the checkpoint
  double eps = 0.0;
  double xent = 0.0;
  double downstream_loss = 0.0;
};

struct TrendSweep {
  std::vector<TrendRow> rows;
  SqrtFit fit;
  int unconverged_contexts = 0;
};

/// Trains a cross-entropy model and keeps `sweep.points` checkpoints spaced
/// geometrically over the run. For each, records its cross-entropy, its
/// suboptimality against the best Theta for its Phi, and the fitted logistic
/// loss of its conditional-mean features, then fits the square-root trend of
/// loss against cross-entropy.
TrendSweep sweep_and_fit_sqrt(const ExperimentConfig& cfg, const WorldBundle& w);

inline constexpr const char* kSweepCsvHeader = "t,eps,xent,downstream_loss";
std::string sweep_csv(const std::vector<TrendRow>& rows);

/// Runs one CLI subcommand, writing its artifacts into `out`. Returns the
/// process exit status: 0 when every check holds and every solver converged,
/// 1 otherwise.
int run_experiment(const std::string& command, const ExperimentConfig& cfg, const std::filesystem::path& out);

}  // namespace lmlab
