#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace lmlab {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or out-of-contract input (non-finite entries, non-stochastic
/// columns, dimension mismatches).
class InputError : public Error {
 public:
  using Error::Error;
};

class NotPsdError : public Error {
 public:
  using Error::Error;
};

/// A quantity is undefined because its inputs are degenerate: rank-deficient
/// spans, empty tasks, identical regression samples, zero-variance features.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Experiment configuration failed validation; `field()` is the dotted path
/// of the offending entry, e.g. "task.word_plus".
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace lmlab
