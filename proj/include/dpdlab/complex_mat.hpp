// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace dpdlab::numerics {

using cdouble = std::complex<double>;
using ComplexVec = std::vector<cdouble>;

/// Dense row-major complex matrix. Small and dependency-free; every heavier
/// decomposition in the project (QR least squares, ZF inverses) is built on it.
class ComplexMat {
 public:
  ComplexMat() = default;
  ComplexMat(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols) {
    if (rows == 0 || cols == 0) {
      throw std::invalid_argument("ComplexMat: dims must be nonzero");
    }
  }

  static ComplexMat identity(std::size_t n) {
    ComplexMat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  cdouble& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const cdouble& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  cdouble* data() { return data_.data(); }
  const cdouble* data() const { return data_.data(); }

  std::span<cdouble> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const cdouble> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  ComplexVec col(std::size_t c) const {
    ComplexVec v(rows_);
    for (std::size_t r = 0; r < rows_; ++r) v[r] = (*this)(r, c);
    return v;
  }

  void set_col(std::size_t c, std::span<const cdouble> v) {
    for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = v[r];
  }

  ComplexMat hermitian() const {
    ComplexMat out(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) out(c, r) = std::conj((*this)(r, c));
    return out;
  }

  double frobenius_norm() const {
    double s = 0.0;
    for (const auto& z : data_) s += std::norm(z);
    return std::sqrt(s);
  }

  double sum_abs2() const {
    double s = 0.0;
    for (const auto& z : data_) s += std::norm(z);
    return s;
  }

  bool all_finite() const {
    for (const auto& z : data_) {
      if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    }
    return true;
  }

  ComplexMat& operator*=(cdouble s) {
    for (auto& z : data_) z *= s;
    return *this;
  }

  friend ComplexMat operator-(const ComplexMat& a, const ComplexMat& b) {
    if (a.rows_ != b.rows_ || a.cols_ != b.cols_) {
      throw std::invalid_argument("ComplexMat: shape mismatch in subtraction");
    }
    ComplexMat out = a;
    for (std::size_t i = 0; i < out.data_.size(); ++i) out.data_[i] -= b.data_[i];
    return out;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  ComplexVec data_;
};

ComplexMat matmul(const ComplexMat& a, const ComplexMat& b);
ComplexVec matvec(const ComplexMat& a, std::span<const cdouble> x);

/// Solves A·X = B for square A by Gaussian elimination with partial pivoting.
/// Intended for the small (U×U) systems in precoding; throws on singular A.
ComplexMat solve_square(ComplexMat a, ComplexMat b);

/// Frobenius-based condition estimate ‖A‖_F·‖A⁻¹‖_F for square A.
/// Returns +inf when A is numerically singular.
double cond_estimate(const ComplexMat& a);

}  // namespace dpdlab::numerics
