// SPDX-License-Identifier: Apache-2.0
#include "dpdlab/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dpdlab::numerics {

namespace {

constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;  // golden-ratio increment

// SplitMix64 finalizer; full-avalanche mix of a 64-bit word.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {
  // derive a per-stream key so (seed, stream_id) pairs land far apart
  key_ = mix64(mix64(seed + kGamma) ^ mix64(stream_id * 0xda942042e4dd58b5ULL + 1));
}

std::uint64_t RngStream::next_u64() {
  return mix64(key_ + (++counter_) * kGamma);
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::uniform_int(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("uniform_int: bound must be positive");
  // rejection sampling to avoid modulo bias
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound + 1) % bound;
  std::uint64_t x = next_u64();
  while (x > limit) x = next_u64();
  return x % bound;
}

double RngStream::gaussian() {
  // Box-Muller; always consumes two uniforms so draw positions stay counter-aligned.
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log1p(-u1));  // u1 in [0,1) => 1-u1 in (0,1]
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

cdouble RngStream::complex_gaussian() {
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-std::log1p(-u1));  // scales both components by 1/sqrt(2)
  const double ang = 2.0 * std::numbers::pi * u2;
  return {r * std::cos(ang), r * std::sin(ang)};
}

std::uint64_t derive_stream_id(std::string_view tag, std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  constexpr std::uint64_t kPrime = 0x100000001b3ULL;
  for (const char ch : tag) {
    h = (h ^ static_cast<unsigned char>(ch)) * kPrime;
  }
  for (int i = 0; i < 8; ++i) h = (h ^ ((a >> (8 * i)) & 0xff)) * kPrime;
  for (int i = 0; i < 8; ++i) h = (h ^ ((b >> (8 * i)) & 0xff)) * kPrime;
  return h;
}

}  // namespace dpdlab::numerics
