// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace srnn {

/// Dense row-major matrix of doubles. Vectors are 1 x n matrices.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix row_vector(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  void fill(double v);
  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_string() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// a * b. Throws ShapeError naming both shapes when a.cols != b.rows.
Matrix matmul(const Matrix& a, const Matrix& b);

/// Hadamard product.
Matrix elementwise_mul(const Matrix& a, const Matrix& b);

// Kernels used by the recurrent layers. All accumulate into `out`.
void add_matmul(const Matrix& a, const Matrix& b, Matrix& out);     // out += a * b
void add_matmul_nt(const Matrix& a, const Matrix& b, Matrix& out);  // out += a * b^T
void add_matmul_tn(const Matrix& a, const Matrix& b, Matrix& out);  // out += a^T * b
void add_row_broadcast(const Matrix& row, Matrix& out);             // out[r,:] += row
void add_column_sums(const Matrix& a, Matrix& row);                 // row += sum_r a[r,:]
void add_in_place(Matrix& out, const Matrix& a);                    // out += a, prefix rows of out when a is shorter

/// Sets w to +0.0 wherever mask is 0; other entries are untouched.
void apply_mask_in_place(Matrix& w, const Matrix& mask);

/// First `n` rows of `m`.
Matrix top_rows(const Matrix& m, std::size_t n);

/// Linear-interpolation percentile, p in [0,100]. Sorts a copy of `values`.
double percentile(std::span<const double> values, double p);

struct Stats {
  double mean = 0.0;
  double variance = 0.0;  // population variance
  double std = 0.0;
};

Stats stats(std::span<const double> values);

/// Solves a * x = b for symmetric positive definite `a` by Cholesky.
std::vector<double> solve_spd(const Matrix& a, std::span<const double> b);

bool all_finite(const Matrix& m);

}  // namespace srnn
