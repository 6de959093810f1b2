// SPDX-License-Identifier: Apache-2.0
#include "dpdlab/real_mat.hpp"

namespace dpdlab::nn {

void linear_forward(const RealMat& x, const RealMat& w, const RealMat& b, RealMat& out) {
  if (x.cols != w.cols || b.cols != w.rows || b.rows != 1) {
    throw std::invalid_argument("linear_forward: shape mismatch");
  }
  if (out.rows != x.rows || out.cols != w.rows) out = RealMat(x.rows, w.rows);
  for (int s = 0; s < x.rows; ++s) {
    const double* xs = x.row_ptr(s);
    double* os = out.row_ptr(s);
    for (int o = 0; o < w.rows; ++o) {
      const double* wo = w.row_ptr(o);
      double acc = b(0, o);
      for (int i = 0; i < x.cols; ++i) acc += xs[i] * wo[i];
      os[o] = acc;
    }
  }
}

void linear_backward(const RealMat& x, const RealMat& w, const RealMat& delta, RealMat& dw,
                     RealMat& db, RealMat* dx) {
  if (delta.rows != x.rows || delta.cols != w.rows || !dw.same_shape(w)) {
    throw std::invalid_argument("linear_backward: shape mismatch");
  }
  for (int s = 0; s < x.rows; ++s) {
    const double* xs = x.row_ptr(s);
    const double* ds = delta.row_ptr(s);
    for (int o = 0; o < w.rows; ++o) {
      const double d = ds[o];
      if (d == 0.0) continue;
      double* dwo = dw.row_ptr(o);
      for (int i = 0; i < x.cols; ++i) dwo[i] += d * xs[i];
      db(0, o) += d;
    }
  }
  if (dx != nullptr) {
    if (dx->rows != x.rows || dx->cols != x.cols) *dx = RealMat(x.rows, x.cols);
    dx->zero();
    for (int s = 0; s < x.rows; ++s) {
      const double* ds = delta.row_ptr(s);
      double* dxs = dx->row_ptr(s);
      for (int o = 0; o < w.rows; ++o) {
        const double d = ds[o];
        if (d == 0.0) continue;
        const double* wo = w.row_ptr(o);
        for (int i = 0; i < x.cols; ++i) dxs[i] += d * wo[i];
      }
    }
  }
}

}  // namespace dpdlab::nn
