#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace stepbcd {

/// Dense row-major matrix of doubles.
///
/// Every product below accumulates each output cell over the inner index in
/// increasing order, so results do not depend on blocking or thread count.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix column_vector(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double> column(std::size_t c) const;
  void set_column(std::size_t c, std::span<const double> values);

  /// Columns `indices` in the given order.
  Matrix select_columns(std::span<const std::size_t> indices) const;

  Matrix transpose() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

std::string shape_string(const Matrix& m);

/// A * B. Throws DimensionError naming both shapes when A.cols != B.rows.
Matrix matmul(const Matrix& a, const Matrix& b);

/// A^T * B without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);

/// Sum of squared entries.
double frobenius_sq(const Matrix& m);
/// ||A - B||_F^2.
double distance_sq(const Matrix& a, const Matrix& b);
double dot(const Matrix& a, const Matrix& b);

bool all_finite(const Matrix& m);

/// Bitwise equality, distinguishing -0.0 from 0.0 and comparing NaN payloads.
bool bit_equal(const Matrix& a, const Matrix& b);

void require_same_shape(const Matrix& a, const Matrix& b, const char* context);

}  // namespace stepbcd
