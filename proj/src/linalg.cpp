#include "iqan/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "iqan/errors.hpp"

namespace iqan {
namespace {

bool finite_span(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_length(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": length " + std::to_string(a) + " vs " + std::to_string(b));
  }
}

}  // namespace

bool Vector::all_finite() const noexcept { return finite_span(data_); }

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("matrix " + std::to_string(rows) + "x" + std::to_string(cols) + " given " +
                     std::to_string(data_.size()) + " values");
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() == 0 ? 0 : rows.begin()->size()) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::column(const Vector& v) { return Matrix(v.size(), 1, v.raw()); }

Vector Matrix::to_vector() const {
  if (cols_ != 1) throw ShapeError("to_vector: expected a column, got " + shape_str(*this));
  return Vector(data_);
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

bool Matrix::all_finite() const noexcept { return finite_span(data_); }

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Matrix& Matrix::operator+=(const Matrix& other) {
  if (!same_shape(other)) throw ShapeError("matrix +=: " + shape_str(*this) + " vs " + shape_str(other));
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor3::Tensor3(Dims dims, double fill) : dims_(dims), data_(dims[0] * dims[1] * dims[2], fill) {}

Tensor3::Tensor3(Dims dims, std::vector<double> data) : dims_(dims), data_(std::move(data)) {
  if (data_.size() != dims[0] * dims[1] * dims[2]) throw ShapeError("tensor3: data length does not match dims");
}

std::size_t Tensor3::dim(int axis) const {
  if (axis < 1 || axis > 3) throw ShapeError("tensor3: invalid axis " + std::to_string(axis));
  return dims_[axis - 1];
}

bool Tensor3::all_finite() const noexcept { return finite_span(data_); }

Tensor3 mode_product(const Tensor3& t, const Matrix& u, int axis) {
  const std::size_t n = t.dim(axis);
  if (u.rows() != n) {
    throw ShapeError("mode_product: axis " + std::to_string(axis) + " has size " + std::to_string(n) +
                     " but factor is " + shape_str(u));
  }
  Tensor3::Dims out_dims = t.dims();
  out_dims[axis - 1] = u.cols();
  Tensor3 out(out_dims);
  const auto [d1, d2, d3] = t.dims();
  for (std::size_t i = 0; i < d1; ++i)
    for (std::size_t j = 0; j < d2; ++j)
      for (std::size_t k = 0; k < d3; ++k) {
        const double x = t(i, j, k);
        if (x == 0.0) continue;
        for (std::size_t c = 0; c < u.cols(); ++c) {
          switch (axis) {
            case 1: out(c, j, k) += x * u(i, c); break;
            case 2: out(i, c, k) += x * u(j, c); break;
            default: out(i, j, c) += x * u(k, c); break;
          }
        }
      }
  return out;
}

Matrix outer_product(const Vector& u, const Vector& v) {
  Matrix m(u.size(), v.size());
  for (std::size_t i = 0; i < u.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) m(i, j) = u[i] * v[j];
  return m;
}

Vector full_bilinear(const Tensor3& t, const Vector& q, const Vector& v) {
  const auto [d1, d2, d3] = t.dims();
  if (d1 != q.size() || d2 != v.size()) {
    throw ShapeError("full_bilinear: tensor is " + std::to_string(d1) + "x" + std::to_string(d2) + "x" +
                     std::to_string(d3) + ", inputs " + std::to_string(q.size()) + " and " +
                     std::to_string(v.size()));
  }
  Vector out(d3);
  for (std::size_t i = 0; i < d1; ++i)
    for (std::size_t j = 0; j < d2; ++j) {
      const double w = q[i] * v[j];
      for (std::size_t k = 0; k < d3; ++k) out[k] += t(i, j, k) * w;
    }
  return out;
}

Vector matvec(const Matrix& m, const Vector& x) {
  if (m.cols() != x.size()) {
    throw ShapeError("matvec: " + shape_str(m) + " times length " + std::to_string(x.size()));
  }
  Vector y(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double acc = 0.0;
    const auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
  return y;
}

Vector matvec_transposed(const Matrix& m, const Vector& x) {
  if (m.rows() != x.size()) {
    throw ShapeError("matvec_transposed: " + shape_str(m) + "^T times length " + std::to_string(x.size()));
  }
  Vector y(m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) y[c] += row[c] * x[r];
  }
  return y;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: " + shape_str(a) + " times " + shape_str(b));
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double x = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += x * b(k, j);
    }
  return c;
}

Vector elementwise_product(const Vector& a, const Vector& b) {
  require_same_length(a.size(), b.size(), "elementwise_product");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

Matrix elementwise_product(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeError("elementwise_product: " + shape_str(a) + " vs " + shape_str(b));
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

Vector operator+(const Vector& a, const Vector& b) {
  require_same_length(a.size(), b.size(), "vector +");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Vector operator-(const Vector& a, const Vector& b) {
  require_same_length(a.size(), b.size(), "vector -");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

Vector operator*(double s, const Vector& v) {
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = s * v[i];
  return out;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  Matrix out = a;
  out += b;
  return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeError("matrix -: " + shape_str(a) + " vs " + shape_str(b));
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

Matrix operator*(double s, const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = s * m[i];
  return out;
}

Tensor3 operator+(const Tensor3& a, const Tensor3& b) {
  if (a.dims() != b.dims()) throw ShapeError("tensor3 +: dims differ");
  Tensor3 out(a.dims());
  for (std::size_t i = 0; i < a.size(); ++i) out.values()[i] = a.values()[i] + b.values()[i];
  return out;
}

Tensor3 operator*(double s, const Tensor3& t) {
  Tensor3 out(t.dims());
  for (std::size_t i = 0; i < t.size(); ++i) out.values()[i] = s * t.values()[i];
  return out;
}

double dot(const Vector& a, const Vector& b) {
  require_same_length(a.size(), b.size(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  require_same_length(a.size(), b.size(), "max_abs_diff");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace iqan
