// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numbers>

#include "dpdlab/fft.hpp"
#include "dpdlab/lstsq.hpp"
#include "dpdlab/rng.hpp"
#include "oracles.hpp"

using namespace dpdlab::numerics;

namespace {

ComplexVec random_vec(std::size_t n, RngStream& rng) {
  ComplexVec v(n);
  for (auto& z : v) z = rng.complex_gaussian();
  return v;
}

}  // namespace

TEST_CASE("dft: impulse spreads flat") {
  const ComplexVec x{1.0, 0.0, 0.0, 0.0};
  const ComplexVec y = dft(x, FftDirection::kForward);
  for (const auto& z : y) CHECK(std::abs(z - cdouble{1.0, 0.0}) < 1e-14);
}

TEST_CASE("dft: single tone lands on one bin") {
  // e^{j2π·3n/8} -> 8·δ[k−3], checked against direct summation as well
  const std::size_t n = 8;
  ComplexVec x(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double ang = 2.0 * std::numbers::pi * 3.0 * static_cast<double>(i) / 8.0;
    x[i] = {std::cos(ang), std::sin(ang)};
  }
  const ComplexVec y = dft(x, FftDirection::kForward);
  for (std::size_t k = 0; k < n; ++k) {
    const cdouble expect = (k == 3) ? cdouble{8.0, 0.0} : cdouble{0.0, 0.0};
    CHECK(std::abs(y[k] - expect) < 1e-12);
  }
  CHECK(oracles::max_abs_diff(y, oracles::naive_dft(x)) < 1e-12);
}

TEST_CASE("dft: roundtrip identity at N=1024") {
  RngStream rng(7, 1);
  const ComplexVec x = random_vec(1024, rng);
  const ComplexVec back = dft(dft(x, FftDirection::kForward), FftDirection::kInverse);
  CHECK(oracles::max_abs_diff(back, x) < 1e-12);
}

TEST_CASE("dft: matches direct summation on random input") {
  RngStream rng(9, 2);
  const ComplexVec x = random_vec(64, rng);
  CHECK(oracles::max_abs_diff(dft(x, FftDirection::kForward), oracles::naive_dft(x)) < 1e-10);
  CHECK(oracles::max_abs_diff(dft(x, FftDirection::kInverse), oracles::naive_dft(x, true)) <
        1e-10);
}

TEST_CASE("dft: Parseval under the unnormalized convention") {
  RngStream rng(11, 3);
  for (const std::size_t n : {64UL, 2048UL, 32768UL}) {
    const ComplexVec x = random_vec(n, rng);
    const ComplexVec y = dft(x, FftDirection::kForward);
    double ex = 0.0, ey = 0.0;
    for (const auto& z : x) ex += std::norm(z);
    for (const auto& z : y) ey += std::norm(z);
    CHECK(std::abs(ey - static_cast<double>(n) * ex) <= 1e-12 * ey);
  }
}

TEST_CASE("dft: linearity") {
  RngStream rng(13, 4);
  const ComplexVec x = random_vec(256, rng);
  const ComplexVec y = random_vec(256, rng);
  const cdouble a{0.7, -1.3}, b{-0.2, 0.5};
  ComplexVec mix(256);
  for (std::size_t i = 0; i < 256; ++i) mix[i] = a * x[i] + b * y[i];
  const ComplexVec lhs = dft(mix, FftDirection::kForward);
  const ComplexVec fx = dft(x, FftDirection::kForward);
  const ComplexVec fy = dft(y, FftDirection::kForward);
  for (std::size_t i = 0; i < 256; ++i) {
    CHECK(std::abs(lhs[i] - (a * fx[i] + b * fy[i])) < 1e-12 * (1.0 + std::abs(lhs[i])));
  }
}

TEST_CASE("dft: rejects non-power-of-two lengths") {
  ComplexVec x(12);
  CHECK_THROWS_AS(dft(x, FftDirection::kForward), std::invalid_argument);
}

TEST_CASE("lstsq: identity system") {
  ComplexMat a = ComplexMat::identity(3);
  const ComplexVec b{cdouble{1, 0}, cdouble{2, 0}, cdouble{3, 0}};
  const ComplexVec x = lstsq(a, b);
  CHECK(std::abs(x[0] - cdouble{1, 0}) < 1e-14);
  CHECK(std::abs(x[1] - cdouble{2, 0}) < 1e-14);
  CHECK(std::abs(x[2] - cdouble{3, 0}) < 1e-14);
}

TEST_CASE("lstsq: recovers an embedded exact solution") {
  RngStream rng(17, 5);
  ComplexMat a(40, 7);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) a(i, j) = rng.complex_gaussian();
  ComplexVec x0(7);
  for (auto& z : x0) z = rng.complex_gaussian();
  const ComplexVec b = matvec(a, x0);
  const ComplexVec x = lstsq(a, b);
  CHECK(oracles::max_abs_diff(x, x0) < 1e-10);
}

TEST_CASE("lstsq: huge ridge drives the solution to zero") {
  RngStream rng(19, 6);
  ComplexMat a(10, 3);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) a(i, j) = rng.complex_gaussian();
  const ComplexVec b = random_vec(10, rng);
  const ComplexVec x = lstsq(a, b, 1e12);
  for (const auto& z : x) CHECK(std::abs(z) < 1e-9);
}

TEST_CASE("lstsq: residual orthogonality up to the ridge term") {
  // A^H(b - A x̂) = ridge·x̂ at the minimizer
  RngStream rng(23, 7);
  ComplexMat a(30, 5);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) a(i, j) = rng.complex_gaussian();
  const ComplexVec b = random_vec(30, rng);
  for (const double ridge : {0.0, 1e-3, 0.5}) {
    const ComplexVec x = lstsq(a, b, ridge);
    ComplexVec residual(30);
    const ComplexVec ax = matvec(a, x);
    for (std::size_t i = 0; i < 30; ++i) residual[i] = b[i] - ax[i];
    const ComplexVec lhs = matvec(a.hermitian(), residual);
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(std::abs(lhs[j] - ridge * x[j]) < 1e-9);
    }
  }
}

TEST_CASE("lstsq: rank-deficient without ridge is an error") {
  ComplexMat a(6, 2);
  for (std::size_t i = 0; i < 6; ++i) {
    a(i, 0) = {1.0, 0.0};
    a(i, 1) = {2.0, 0.0};  // second column is a multiple of the first
  }
  ComplexVec b(6, cdouble{1.0, 0.0});
  CHECK_THROWS_AS(lstsq(a, b), std::runtime_error);
  CHECK_NOTHROW(lstsq(a, b, 1e-6));  // ridge regularizes it
}

TEST_CASE("lstsq: underdetermined shape rejected") {
  ComplexMat a(2, 5);
  ComplexVec b(2);
  CHECK_THROWS_AS(lstsq(a, b), std::invalid_argument);
}

TEST_CASE("rng: identical stream reproduces identical draws") {
  RngStream a(42, 1234), b(42, 1234);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  RngStream c(42, 1234), d(42, 1234);
  for (int i = 0; i < 100; ++i) CHECK(c.complex_gaussian() == d.complex_gaussian());
}

TEST_CASE("rng: complex gaussian has unit total variance") {
  RngStream rng(42, 99);
  const std::size_t n = 1'000'000;
  double acc = 0.0;
  double mean_re = 0.0, mean_im = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const cdouble z = rng.complex_gaussian();
    acc += std::norm(z);
    mean_re += z.real();
    mean_im += z.imag();
  }
  CHECK(acc / static_cast<double>(n) == doctest::Approx(1.0).epsilon(0.01));
  CHECK(std::abs(mean_re / static_cast<double>(n)) < 0.01);
  CHECK(std::abs(mean_im / static_cast<double>(n)) < 0.01);
}

TEST_CASE("rng: distinct stream ids decorrelate") {
  RngStream a(42, 1), b(42, 2);
  const std::size_t n = 100'000;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a.gaussian();
    const double y = b.gaussian();
    sab += x * y;
    saa += x * x;
    sbb += y * y;
  }
  CHECK(std::abs(sab / std::sqrt(saa * sbb)) < 0.01);
}

TEST_CASE("rng: uniform_int stays in range and covers values") {
  RngStream rng(5, 5);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto v = rng.uniform_int(7);
    REQUIRE(v < 7);
    hits[static_cast<std::size_t>(v)]++;
  }
  for (const int h : hits) CHECK(h > 700);
  CHECK_THROWS_AS(rng.uniform_int(0), std::invalid_argument);
}

TEST_CASE("solve_square and cond_estimate behave on small systems") {
  RngStream rng(31, 8);
  ComplexMat a(4, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) a(i, j) = rng.complex_gaussian();
  const ComplexMat inv = solve_square(a, ComplexMat::identity(4));
  CHECK(oracles::rel_frob_diff(matmul(a, inv), ComplexMat::identity(4)) < 1e-12);
  CHECK(cond_estimate(ComplexMat::identity(4)) == doctest::Approx(4.0));

  ComplexMat sing(2, 2);
  sing(0, 0) = sing(0, 1) = sing(1, 0) = sing(1, 1) = {1.0, 0.0};
  CHECK_THROWS_AS(solve_square(sing, ComplexMat::identity(2)), std::runtime_error);
}
