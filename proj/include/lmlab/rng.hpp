#pragma once

#include <cstdint>
#include <string_view>

#include "lmlab/matrix.hpp"

namespace lmlab {

/// Counter-based splittable generator. Output i of a stream is a pure
/// function of (key, i), and child streams are derived from a label, so
/// results never depend on how work is scheduled across threads.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept;

  /// Independent child stream named by `label`; does not advance this stream.
  Rng split(std::string_view label) const noexcept;
  /// Child stream for an integer index (sweep point, context, seed offset).
  Rng split(std::uint64_t index) const noexcept;

  std::uint64_t next_u64() noexcept;
  /// Uniform on the open interval (0, 1).
  double uniform() noexcept;
  double normal() noexcept;
  /// Gamma(shape, 1), shape > 0.
  double gamma(double shape) noexcept;
  /// Symmetric Dirichlet(concentration) sample of length n.
  Vector dirichlet(std::size_t n, double concentration);
  Vector normal_vector(std::size_t n);
  Matrix normal_matrix(std::size_t rows, std::size_t cols);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept;

  std::uint64_t key() const noexcept { return key_; }

 private:
  Rng(std::uint64_t key, int) noexcept : key_(key) {}
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace lmlab
