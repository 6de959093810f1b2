// SPDX-License-Identifier: Apache-2.0
//
// Test-only reference implementations, kept deliberately naive and independent
// of the library's computation paths.
#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "dpdlab/complex_mat.hpp"

namespace oracles {

using dpdlab::numerics::cdouble;
using dpdlab::numerics::ComplexMat;
using dpdlab::numerics::ComplexVec;

/// Direct O(N²) DFT summation, unnormalized forward convention.
inline ComplexVec naive_dft(const ComplexVec& x, bool inverse = false) {
  const std::size_t n = x.size();
  ComplexVec out(n);
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t k = 0; k < n; ++k) {
    cdouble acc{};
    for (std::size_t i = 0; i < n; ++i) {
      const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>(k) *
                         static_cast<double>(i) / static_cast<double>(n);
      acc += x[i] * cdouble(std::cos(ang), std::sin(ang));
    }
    out[k] = inverse ? acc / static_cast<double>(n) : acc;
  }
  return out;
}

/// Memory polynomial evaluated with explicit double loops and pow().
inline ComplexVec naive_mp(const ComplexVec& x, int memory, int order,
                           const ComplexVec& coeffs /* k-major, m-minor */) {
  ComplexVec y(x.size());
  const int n_orders = (order + 1) / 2;
  for (std::size_t n = 0; n < x.size(); ++n) {
    cdouble acc{};
    for (int ki = 0; ki < n_orders; ++ki) {
      const int k = 2 * ki + 1;
      for (int m = 0; m <= memory; ++m) {
        if (static_cast<std::size_t>(m) > n) continue;
        const cdouble xm = x[n - m];
        acc += coeffs[static_cast<std::size_t>(ki * (memory + 1) + m)] * xm *
               std::pow(std::abs(xm), k - 1);
      }
    }
    y[n] = acc;
  }
  return y;
}

/// Per-subcarrier precoding loop: x̌[k] = alpha·W·š[k].
inline ComplexMat naive_precode(const ComplexMat& s, const ComplexMat& w, double alpha) {
  ComplexMat x(s.rows(), w.rows());
  for (std::size_t k = 0; k < s.rows(); ++k) {
    for (std::size_t b = 0; b < w.rows(); ++b) {
      cdouble acc{};
      for (std::size_t u = 0; u < w.cols(); ++u) acc += w(b, u) * s(k, u);
      x(k, b) = alpha * acc;
    }
  }
  return x;
}

inline double max_abs_diff(const ComplexVec& a, const ComplexVec& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

inline double rel_frob_diff(const ComplexMat& a, const ComplexMat& b) {
  return (a - b).frobenius_norm() / std::max(b.frobenius_norm(), 1e-300);
}

}  // namespace oracles
