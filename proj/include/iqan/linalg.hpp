#pragma once

// Dense real-valued arrays of order 1..3 and the handful of contractions the
// fusion code is written in. Storage is row-major everywhere; for Tensor3 the
// first index is slowest and the third fastest. No broadcasting: every shape
// mismatch raises ShapeError.

#include <array>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace iqan {

class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t n, double fill = 0.0) : data_(n, fill) {}
  Vector(std::initializer_list<double> values) : data_(values) {}
  explicit Vector(std::vector<double> values) : data_(std::move(values)) {}

  std::size_t size() const noexcept { return data_.size(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& raw() const noexcept { return data_; }

  bool all_finite() const noexcept;
  bool operator==(const Vector&) const = default;

 private:
  std::vector<double> data_;
};

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  /// Nested-list construction, one inner list per row.
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix column(const Vector& v);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  /// Copies a single-column matrix out as a Vector.
  Vector to_vector() const;
  Matrix transposed() const;

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const noexcept;
  void fill(double value);

  Matrix& operator+=(const Matrix& other);
  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

class Tensor3 {
 public:
  using Dims = std::array<std::size_t, 3>;

  Tensor3() = default;
  explicit Tensor3(Dims dims, double fill = 0.0);
  Tensor3(Dims dims, std::vector<double> data);

  const Dims& dims() const noexcept { return dims_; }
  std::size_t dim(int axis) const;  // axis in {1,2,3}
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * dims_[1] + j) * dims_[2] + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * dims_[1] + j) * dims_[2] + k];
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool all_finite() const noexcept;
  bool operator==(const Tensor3&) const = default;

 private:
  Dims dims_{0, 0, 0};
  std::vector<double> data_;
};

/// (T x_i U)[.., j, ..] = sum_d T[.., d, ..] * U[d, j]; axis is 1-based.
Tensor3 mode_product(const Tensor3& t, const Matrix& u, int axis);

/// Rank-one matrix u v^T.
Matrix outer_product(const Vector& u, const Vector& v);

/// out[k] = sum_{i,j} T[i,j,k] q[i] v[j]
Vector full_bilinear(const Tensor3& t, const Vector& q, const Vector& v);

Vector matvec(const Matrix& m, const Vector& x);
/// m^T x without materialising the transpose.
Vector matvec_transposed(const Matrix& m, const Vector& x);
Matrix matmul(const Matrix& a, const Matrix& b);
Vector elementwise_product(const Vector& a, const Vector& b);
Matrix elementwise_product(const Matrix& a, const Matrix& b);

Vector operator+(const Vector& a, const Vector& b);
Vector operator-(const Vector& a, const Vector& b);
Vector operator*(double s, const Vector& v);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& m);
Tensor3 operator+(const Tensor3& a, const Tensor3& b);
Tensor3 operator*(double s, const Tensor3& t);

double dot(const Vector& a, const Vector& b);
double max_abs_diff(std::span<const double> a, std::span<const double> b);

}  // namespace iqan
