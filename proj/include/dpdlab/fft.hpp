// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dpdlab/complex_mat.hpp"

namespace dpdlab::numerics {

enum class FftDirection { kForward, kInverse };

constexpr bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// Radix-2 iterative DFT. Forward is unnormalized,
///   X[k] = sum_n x[n]·e^{-j2πkn/N},
/// and the inverse carries the 1/N factor, so inverse(forward(x)) == x.
/// Throws std::invalid_argument unless the length is a power of two.
void dft_inplace(ComplexVec& v, FftDirection direction);
ComplexVec dft(const ComplexVec& v, FftDirection direction);

}  // namespace dpdlab::numerics
