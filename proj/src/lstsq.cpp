// SPDX-License-Identifier: Apache-2.0
#include "dpdlab/lstsq.hpp"

#include <cmath>
#include <limits>

namespace dpdlab::numerics {

namespace {

// In-place Householder QR of M (rows >= cols), applying the same reflections
// to every column of RHS. Afterwards the upper triangle of M holds R.
void householder_qr(ComplexMat& m, ComplexMat& rhs) {
  const std::size_t rows = m.rows();
  const std::size_t cols = m.cols();
  ComplexVec v(rows);
  for (std::size_t k = 0; k < cols; ++k) {
    double xnorm2 = 0.0;
    for (std::size_t i = k; i < rows; ++i) xnorm2 += std::norm(m(i, k));
    const double xnorm = std::sqrt(xnorm2);
    if (xnorm == 0.0) continue;

    // v = x + e^{jφ}·‖x‖·e₁ with φ the phase of the pivot (avoids cancellation)
    const cdouble pivot = m(k, k);
    const double pabs = std::abs(pivot);
    const cdouble phase = (pabs > 0.0) ? pivot / pabs : cdouble(1.0, 0.0);
    const cdouble alpha = phase * xnorm;

    double vnorm2 = 0.0;
    for (std::size_t i = k; i < rows; ++i) {
      v[i] = m(i, k);
      if (i == k) v[i] += alpha;
      vnorm2 += std::norm(v[i]);
    }
    if (vnorm2 == 0.0) continue;
    const double beta = 2.0 / vnorm2;

    // reflect remaining columns of M
    for (std::size_t c = k; c < cols; ++c) {
      cdouble dot{};
      for (std::size_t i = k; i < rows; ++i) dot += std::conj(v[i]) * m(i, c);
      dot *= beta;
      for (std::size_t i = k; i < rows; ++i) m(i, c) -= dot * v[i];
    }
    // reflect RHS
    for (std::size_t c = 0; c < rhs.cols(); ++c) {
      cdouble dot{};
      for (std::size_t i = k; i < rows; ++i) dot += std::conj(v[i]) * rhs(i, c);
      dot *= beta;
      for (std::size_t i = k; i < rows; ++i) rhs(i, c) -= dot * v[i];
    }
  }
}

}  // namespace

ComplexMat lstsq(const ComplexMat& a, const ComplexMat& b, double ridge) {
  if (a.rows() < a.cols()) {
    throw std::invalid_argument("lstsq: system must have rows >= cols");
  }
  if (b.rows() != a.rows()) {
    throw std::invalid_argument("lstsq: rhs row count mismatch");
  }
  if (ridge < 0.0) {
    throw std::invalid_argument("lstsq: ridge must be nonnegative");
  }

  const std::size_t p = a.cols();
  const bool ridged = ridge > 0.0;
  const std::size_t rows = a.rows() + (ridged ? p : 0);

  // Stack [A; sqrt(ridge)·I] over [b; 0]; QR of the stack solves the ridge problem.
  ComplexMat m(rows, p);
  ComplexMat rhs(rows, b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < p; ++j) m(i, j) = a(i, j);
    for (std::size_t c = 0; c < b.cols(); ++c) rhs(i, c) = b(i, c);
  }
  if (ridged) {
    const double s = std::sqrt(ridge);
    for (std::size_t j = 0; j < p; ++j) m(a.rows() + j, j) = s;
  }

  householder_qr(m, rhs);

  // rank check on R's diagonal
  double dmax = 0.0;
  for (std::size_t j = 0; j < p; ++j) dmax = std::max(dmax, std::abs(m(j, j)));
  const double tol =
      static_cast<double>(std::max(rows, p)) * std::numeric_limits<double>::epsilon() * dmax;
  for (std::size_t j = 0; j < p; ++j) {
    if (std::abs(m(j, j)) <= tol) {
      throw std::runtime_error("lstsq: rank-deficient system (no ridge to regularize it)");
    }
  }

  ComplexMat x(p, b.cols());
  for (std::size_t c = 0; c < b.cols(); ++c) {
    for (std::size_t ji = p; ji-- > 0;) {
      cdouble acc = rhs(ji, c);
      for (std::size_t j = ji + 1; j < p; ++j) acc -= m(ji, j) * x(j, c);
      x(ji, c) = acc / m(ji, ji);
    }
  }
  return x;
}

ComplexVec lstsq(const ComplexMat& a, std::span<const cdouble> b, double ridge) {
  ComplexMat rhs(a.rows(), 1);
  if (b.size() != a.rows()) {
    throw std::invalid_argument("lstsq: rhs length mismatch");
  }
  for (std::size_t i = 0; i < a.rows(); ++i) rhs(i, 0) = b[i];
  const ComplexMat x = lstsq(a, rhs, ridge);
  return x.col(0);
}

}  // namespace dpdlab::numerics
