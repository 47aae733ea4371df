#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace headprune {

// Dense row-major matrix of doubles. Zero-sized dimensions are allowed so that a
// layer with every head removed still has a well-formed (0 x d) output projection.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  // Throws ShapeError on a length mismatch and NumericalError on non-finite entries.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  bool all_finite() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double scale);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
// aᵀ·b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a·bᵀ without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);

// Numerically stable row-wise softmax (max subtraction per row).
Matrix softmax_rows(const Matrix& scores);

// Square root of the sum of squared entries.
double l2_norm(const Matrix& m);

Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix hadamard3(const Matrix& a, const Matrix& b, const Matrix& c);

// Columns [first, first + count) of m.
Matrix column_block(const Matrix& m, std::size_t first, std::size_t count);
// Rows [first, first + count) of m.
Matrix row_block(const Matrix& m, std::size_t first, std::size_t count);
// m with rows [first, first + count) removed.
Matrix erase_rows(const Matrix& m, std::size_t first, std::size_t count);
// Horizontal concatenation; every part must have `rows` rows.
Matrix hconcat(std::span<const Matrix> parts, std::size_t rows);

}  // namespace headprune
