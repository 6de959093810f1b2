// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace dpdlab::nn {

/// Dense row-major real matrix used by the network code. Biases are stored as
/// 1×D matrices so parameters, gradients, and Adam moments share one shape.
struct RealMat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  RealMat() = default;
  RealMat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {
    if (r <= 0 || c <= 0) throw std::invalid_argument("RealMat: dims must be positive");
  }

  double& operator()(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  const double& operator()(int r, int c) const {
    return a[static_cast<std::size_t>(r) * cols + c];
  }

  double* row_ptr(int r) { return a.data() + static_cast<std::size_t>(r) * cols; }
  const double* row_ptr(int r) const { return a.data() + static_cast<std::size_t>(r) * cols; }

  std::size_t size() const { return a.size(); }
  void zero() { std::fill(a.begin(), a.end(), 0.0); }

  bool same_shape(const RealMat& o) const { return rows == o.rows && cols == o.cols; }
};

/// out = x·wᵀ + 1·b  (x: S×Di, w: Do×Di, b: 1×Do)
void linear_forward(const RealMat& x, const RealMat& w, const RealMat& b, RealMat& out);

/// dw += deltaᵀ·x, db += column sums of delta, dx = delta·w (dx optional)
void linear_backward(const RealMat& x, const RealMat& w, const RealMat& delta, RealMat& dw,
                     RealMat& db, RealMat* dx);

}  // namespace dpdlab::nn
