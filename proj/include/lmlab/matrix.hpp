#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace lmlab {

using Vector = std::vector<double>;

/// Dense column-major matrix. Columns are contiguous, so a column of a
/// V x S probability table (one conditional distribution) or of a d x V
/// embedding matrix (one word vector) is a cheap span.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);

  static Matrix identity(std::size_t n);
  /// Builds from a list of rows; all rows must have equal length.
  static Matrix from_rows(const std::vector<Vector>& rows);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix from_columns(const std::vector<Vector>& cols);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[j * rows_ + i]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[j * rows_ + i]; }

  std::span<double> col(std::size_t j) noexcept { return {data_.data() + j * rows_, rows_}; }
  std::span<const double> col(std::size_t j) const noexcept {
    return {data_.data() + j * rows_, rows_};
  }
  Vector row(std::size_t i) const;
  void set_col(std::size_t j, std::span<const double> values);

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  Matrix transposed() const;
  std::vector<Vector> to_rows() const;

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

/// a * x
Vector matvec(const Matrix& a, std::span<const double> x);
/// a^T * x
Vector matvec_t(const Matrix& a, std::span<const double> x);
/// a * b^T
Matrix mul_abt(const Matrix& a, const Matrix& b);
/// a^T * b
Matrix mul_atb(const Matrix& a, const Matrix& b);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double norm1(std::span<const double> a);
double norm_inf(std::span<const double> a);
double frobenius_norm(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
double trace(const Matrix& a);
bool all_finite(std::span<const double> a);
bool all_finite(const Matrix& a);

Vector axpy(double alpha, std::span<const double> x, std::span<const double> y);  // alpha*x + y
Vector subtract(std::span<const double> a, std::span<const double> b);

/// Neumaier compensated summation.
class CompensatedSum {
 public:
  void add(double x) noexcept;
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double compensated_sum(std::span<const double> xs);

}  // namespace lmlab
