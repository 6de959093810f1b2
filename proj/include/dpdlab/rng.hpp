// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>

#include "dpdlab/complex_mat.hpp"

namespace dpdlab::numerics {

/// Counter-based random stream: draw i is a pure function of (seed, stream_id, i),
/// so identical (seed, stream_id) pairs reproduce identical sequences regardless
/// of thread schedule, and distinct stream ids are decorrelated.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform();

  /// Uniform integer in [0, bound); bound must be > 0.
  std::uint64_t uniform_int(std::uint64_t bound);

  /// Standard normal, unit variance.
  double gaussian();

  /// Circularly symmetric complex Gaussian with unit total variance
  /// (variance 0.5 per component).
  cdouble complex_gaussian();

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// FNV-1a composition of a tag and up to two indices into a stream id, used to
/// hand every independent unit of work (state, symbol, branch, ...) its own stream.
std::uint64_t derive_stream_id(std::string_view tag, std::uint64_t a = 0, std::uint64_t b = 0);

}  // namespace dpdlab::numerics
