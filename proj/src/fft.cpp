// SPDX-License-Identifier: Apache-2.0
#include "dpdlab/fft.hpp"

#include <numbers>

namespace dpdlab::numerics {

void dft_inplace(ComplexVec& v, FftDirection direction) {
  const std::size_t n = v.size();
  if (!is_power_of_two(n)) {
    throw std::invalid_argument("dft: length must be a power of two");
  }
  if (n == 1) return;

  // bit-reversal permutation
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(v[i], v[j]);
  }

  // Twiddles from direct trig calls; the incremental-product recurrence loses
  // ~len·eps per stage, which is visible at N=32768 against 1e-12 tolerances.
  const double sign = (direction == FftDirection::kForward) ? -1.0 : 1.0;
  ComplexVec twiddle(n / 2);
  const double step = sign * 2.0 * std::numbers::pi / static_cast<double>(n);
  for (std::size_t j = 0; j < n / 2; ++j) {
    const double ang = step * static_cast<double>(j);
    twiddle[j] = cdouble(std::cos(ang), std::sin(ang));
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t stride = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const cdouble w = twiddle[k * stride];
        const cdouble u = v[i + k];
        const cdouble t = v[i + k + len / 2] * w;
        v[i + k] = u + t;
        v[i + k + len / 2] = u - t;
      }
    }
  }

  if (direction == FftDirection::kInverse) {
    const double inv_n = 1.0 / static_cast<double>(n);
    for (auto& z : v) z *= inv_n;
  }
}

ComplexVec dft(const ComplexVec& v, FftDirection direction) {
  ComplexVec out = v;
  dft_inplace(out, direction);
  return out;
}

}  // namespace dpdlab::numerics
