// SPDX-License-Identifier: Apache-2.0
#include "dpdlab/complex_mat.hpp"

#include <limits>

namespace dpdlab::numerics {

ComplexMat matmul(const ComplexMat& a, const ComplexMat& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dims disagree");
  }
  ComplexMat out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const cdouble aik = a(i, k);
      if (aik == cdouble{}) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) {
        out(i, j) += aik * b(k, j);
      }
    }
  }
  return out;
}

ComplexVec matvec(const ComplexMat& a, std::span<const cdouble> x) {
  if (a.cols() != x.size()) {
    throw std::invalid_argument("matvec: dims disagree");
  }
  ComplexVec y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    cdouble acc{};
    const cdouble* row = a.data() + i * a.cols();
    for (std::size_t j = 0; j < a.cols(); ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
  return y;
}

ComplexMat solve_square(ComplexMat a, ComplexMat b) {
  const std::size_t n = a.rows();
  if (a.cols() != n || b.rows() != n) {
    throw std::invalid_argument("solve_square: shape mismatch");
  }
  for (std::size_t k = 0; k < n; ++k) {
    // partial pivot
    std::size_t piv = k;
    double best = std::abs(a(k, k));
    for (std::size_t r = k + 1; r < n; ++r) {
      if (std::abs(a(r, k)) > best) {
        best = std::abs(a(r, k));
        piv = r;
      }
    }
    if (best < n * std::numeric_limits<double>::epsilon() * (a.frobenius_norm() + 1e-300)) {
      throw std::runtime_error("solve_square: matrix is numerically singular");
    }
    if (piv != k) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a(k, c), a(piv, c));
      for (std::size_t c = 0; c < b.cols(); ++c) std::swap(b(k, c), b(piv, c));
    }
    const cdouble d = a(k, k);
    for (std::size_t r = k + 1; r < n; ++r) {
      const cdouble f = a(r, k) / d;
      if (f == cdouble{}) continue;
      for (std::size_t c = k; c < n; ++c) a(r, c) -= f * a(k, c);
      for (std::size_t c = 0; c < b.cols(); ++c) b(r, c) -= f * b(k, c);
    }
  }
  // back substitution
  ComplexMat x(n, b.cols());
  for (std::size_t c = 0; c < b.cols(); ++c) {
    for (std::size_t ri = n; ri-- > 0;) {
      cdouble acc = b(ri, c);
      for (std::size_t j = ri + 1; j < n; ++j) acc -= a(ri, j) * x(j, c);
      x(ri, c) = acc / a(ri, ri);
    }
  }
  return x;
}

double cond_estimate(const ComplexMat& a) {
  try {
    const ComplexMat inv = solve_square(a, ComplexMat::identity(a.rows()));
    return a.frobenius_norm() * inv.frobenius_norm();
  } catch (const std::runtime_error&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace dpdlab::numerics
