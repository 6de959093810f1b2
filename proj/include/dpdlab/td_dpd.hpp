// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dpdlab/mp_model.hpp"

namespace dpdlab::tddpd {

using numerics::cdouble;
using numerics::ComplexMat;
using numerics::ComplexVec;
using pa::MpCoeffs;

/// Same per-branch / per-state container and file schema as the PA array;
/// `gain` is the linear gain the cascade PA∘DPD is driven towards.
using TdDpdModel = pa::PaArrayModel;

/// Memory-polynomial basis matrix: column (k, m) holds x[n−m]·|x[n−m]|^{k−1}
/// with zero history, k-major m-minor. p = (M+1)·(K+1)/2 columns.
ComplexMat mp_regressor_matrix(std::span<const cdouble> x, int memory_len, int order);

struct DpdSpec {
  int memory_len = 3;
  int order = 7;
};

struct IlaOptions {
  int iterations = 2;
  double ridge = 1e-8;
};

struct IlaResult {
  MpCoeffs coeffs;
  std::vector<double> cascade_nmse_db;  // one entry per accepted iteration
};

/// Indirect-learning fit of a postinverse for one PA branch: solves
/// lstsq(regressors(y/g), u) with y = PA(u), copies the solution as the
/// predistorter, and iterates with u ← DPD(x). Throws on divergence
/// (cascade NMSE increasing two iterations in a row).
IlaResult ila_fit(const MpCoeffs& branch_pa, std::span<const cdouble> probe, const DpdSpec& spec,
                  const IlaOptions& options, cdouble target_gain);

/// Per-branch mp_apply of the DPD coefficients for the given state.
ComplexMat td_dpd_apply(const TdDpdModel& model, const ComplexMat& frame, int state_id);

/// NMSE in dB of y against g·x (the cascade linearity figure).
double cascade_nmse_db(std::span<const cdouble> y, std::span<const cdouble> x, cdouble gain);

/// Paper-schedule MP dimensions: memory 3/4/5/6/7 for 10..50 MHz and order
/// 7/7/5 for −20/−22/−24 dBm, extended to off-grid values by nearest point.
int mp_schedule_memory(double bandwidth_mhz);
int mp_schedule_order(double rms_power_dbm);

}  // namespace dpdlab::tddpd
