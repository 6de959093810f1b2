// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dpdlab/complex_mat.hpp"

namespace dpdlab::numerics {

/// Minimizes ‖A·x − b‖² + ridge·‖x‖² by Householder QR on the (optionally
/// ridge-augmented) system. Requires rows ≥ cols. With ridge == 0 a
/// rank-deficient A is reported via std::runtime_error.
ComplexVec lstsq(const ComplexMat& a, std::span<const cdouble> b, double ridge = 0.0);

/// Multi-RHS variant: returns X minimizing ‖A·X − B‖_F² + ridge·‖X‖_F².
ComplexMat lstsq(const ComplexMat& a, const ComplexMat& b, double ridge = 0.0);

}  // namespace dpdlab::numerics
