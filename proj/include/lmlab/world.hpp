#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <string>
#include <vector>

#include "lmlab/matrix.hpp"

namespace lmlab {

/// A finite language world: context distribution p_L and the true next-word
/// conditional for every context (column s of Pstar).
struct GroundTruth {
  std::size_t V = 0;
  std::size_t S = 0;
  Vector p_L;
  Matrix Pstar;

  /// Throws InputError unless V >= 2, S >= 1 and all distributions are
  /// stochastic within 1e-12.
  void validate() const;
  bool operator==(const GroundTruth&) const = default;
};

enum class WorldStructure { dense, topic_mixture, explicit_table };

struct WorldConfig {
  std::size_t V = 10;
  std::size_t S = 20;
  WorldStructure structure = WorldStructure::dense;
  std::size_t rank = 3;  // topic_mixture only
  /// Dirichlet concentration of conditionals (dense) or topics (topic_mixture).
  double concentration = 1.0;
  /// Dirichlet concentration of p_L and of the topic mixing weights.
  double mixing_concentration = 1.0;
  std::uint64_t seed = 0;
  Matrix pstar;  // explicit_table only
  Vector p_L;    // explicit_table only
};

GroundTruth make_ground_truth(const WorldConfig& cfg);

/// Binary task over contexts. Labels are deterministic unless prob_positive
/// is non-empty, in which case it holds P(y = +1 | s) per context.
struct Task {
  Vector p_T;
  std::vector<int> labels;
  Vector prob_positive;

  void validate(std::size_t S) const;
  bool noisy() const noexcept { return !prob_positive.empty(); }
  /// P(y = +1 | s), from prob_positive or from the deterministic label.
  double p_positive(std::size_t s) const;
};

/// Copy of `task` whose labels flip with probability eta.
Task with_flip_noise(const Task& task, double eta);

/// Witness that a task is (tau, B)-natural, optionally restricted to the
/// row-span of a d x V matrix.
struct NaturalCertificate {
  Vector v_star;
  double B = 0.0;
  double tau = 0.0;
  double intercept = 0.0;
  std::optional<Matrix> subspace;
};

struct NaturalTaskSpec {
  std::size_t word_plus = 0;
  std::size_t word_minus = 1;
  double B = 1.0;
  double margin = 0.01;
  std::vector<std::size_t> context_subset;  // empty means every context
};

/// Labels contexts by sign(p*(w+|s) - p*(w-|s)), keeps contexts whose gap is
/// at least `margin`, and weights them proportionally to p_L. The certificate
/// is v* = B (e_{w+} - e_{w-}) with its hinge loss on the true conditionals.
std::pair<Task, NaturalCertificate> make_natural_task(const GroundTruth& gt,
                                                      const NaturalTaskSpec& spec);

struct GammaResult {
  double value = 0.0;
  bool vacuous = false;  // supp(p_T) is not covered by supp(p_L)
};

/// Largest gamma with p_L(s) >= gamma p_T(s) for every s.
GammaResult gamma_plain(std::span<const double> p_L, std::span<const double> p_T);

/// Throws InputError unless `p` is a probability vector within `tol`.
void check_stochastic(std::span<const double> p, const std::string& what, double tol = 1e-12);

}  // namespace lmlab
