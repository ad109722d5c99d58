#include "lmlab/rng.hpp"

#include <cmath>
#include <numbers>

#include "lmlab/error.hpp"

namespace lmlab {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

// FNV-1a
std::uint64_t hash_label(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Rng::Rng(std::uint64_t seed) noexcept : key_(splitmix64(seed ^ 0x6a09e667f3bcc909ULL)) {}

Rng Rng::split(std::string_view label) const noexcept {
  return Rng(splitmix64(key_ ^ hash_label(label)), 0);
}

Rng Rng::split(std::uint64_t index) const noexcept {
  return Rng(splitmix64(splitmix64(key_ + 0x3c6ef372fe94f82bULL) ^ index), 0);
}

std::uint64_t Rng::next_u64() noexcept {
  return splitmix64(key_ ^ splitmix64(counter_++));
}

double Rng::uniform() noexcept {
  // 53 random bits, shifted off zero.
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() noexcept {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::gamma(double shape) noexcept {
  if (shape < 1.0) {
    // Boost to shape+1, then scale by U^{1/shape}.
    const double g = gamma(shape + 1.0);
    return g * std::pow(uniform(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x;
    double v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

Vector Rng::dirichlet(std::size_t n, double concentration) {
  if (!(concentration > 0.0)) throw InputError("dirichlet: concentration must be positive");
  Vector out(n);
  double total = 0.0;
  for (double& x : out) {
    x = gamma(concentration);
    total += x;
  }
  if (total <= 0.0) {
    // All draws underflowed (tiny concentration): put the mass on one entry.
    out.assign(n, 0.0);
    out[below(n)] = 1.0;
    return out;
  }
  for (double& x : out) x /= total;
  return out;
}

Vector Rng::normal_vector(std::size_t n) {
  Vector out(n);
  for (double& x : out) x = normal();
  return out;
}

Matrix Rng::normal_matrix(std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (double& x : m.data()) x = normal();
  return m;
}

std::uint64_t Rng::below(std::uint64_t n) noexcept {
  if (n == 0) return 0;
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

}  // namespace lmlab
