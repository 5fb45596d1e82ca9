// SPDX-License-Identifier: Apache-2.0
/**
 * @file   verification.hpp
 * @brief  Self-checks behind the `verify` command.
 *
 * Combines the enumeration suite with finite-difference gradient checks,
 * the spectral-norm SVD comparison, padding invariance, the BLEU fixture
 * table and the Taylor-matrix checks. Every report carries the acceptance
 * criterion it gates (0 for supporting checks).
 */
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "taylorgan/oracle.hpp"

namespace taylorgan {

inline constexpr double kFiniteDifferenceStep = 1e-5;
inline constexpr double kFiniteDifferenceTol = 1e-4;

struct FdErrors {
  double max_abs = 0.0;
  double max_rel = 0.0; // worst per-tensor |a - n|_2 / max(|a|_2, |n|_2)
};

using FdFunction = std::function<Var(Graph &, std::span<const Var>)>;

/// Compares reverse-mode gradients of a scalar f(inputs) with central
/// differences for every entry of every input.
FdErrors finite_difference_inputs(const FdFunction &f, std::vector<Tensor> inputs,
                                  double step = kFiniteDifferenceStep);

/// Same for a scalar built from parameters.
FdErrors finite_difference_params(const std::function<Var(Graph &)> &f,
                                  const std::vector<Parameter *> &params,
                                  double step = kFiniteDifferenceStep);

std::vector<OracleReport> gradient_checks(std::uint64_t seed);
OracleReport stop_gradient_check();
OracleReport spectral_norm_check(std::uint64_t seed);
std::vector<OracleReport> masking_checks(std::uint64_t seed);
OracleReport bleu_fixture_check();
std::vector<OracleReport> taylor_matrix_checks(std::uint64_t seed);

/// Everything above plus run_suite.
std::vector<OracleReport> run_verification(const OracleOptions &options);

bool all_passed(const std::vector<OracleReport> &reports);
/// Fixed-width table with per-check error columns.
std::string format_report_table(const std::vector<OracleReport> &reports);

} // namespace taylorgan
