// SPDX-License-Identifier: Apache-2.0
/**
 * @file   oracle.hpp
 * @brief  Exact expectations over every fixed-length sequence of a tiny space.
 *
 * The oracle vocabulary is {SOS} plus C candidate tokens (ids 1..C). The
 * generator runs without EOS, so the space is all C^T sequences. Estimator
 * expectations are computed as one batched surrogate weighted by pi(x).
 */
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "taylorgan/estimators.hpp"

namespace taylorgan {

inline constexpr std::size_t kMaxOracleCandidates = 6;
inline constexpr std::size_t kMaxOracleLength = 4;

class EnumerationSpace {
public:
  /// Throws std::invalid_argument past the caps.
  EnumerationSpace(std::size_t candidates, std::size_t length);

  std::size_t candidates() const { return candidates_; }
  std::size_t length() const { return length_; }
  std::size_t size() const { return batch_.batch; }
  /// Every sequence, lexicographic in candidate order.
  const SequenceBatch &batch() const { return batch_; }
  /// Index of the first sequence sharing x[0..t] with sequence s, and the
  /// number of sequences sharing it.
  std::size_t prefix_begin(std::size_t s, std::size_t t) const;
  std::size_t prefix_span(std::size_t t) const;

private:
  std::size_t candidates_, length_;
  SequenceBatch batch_;
};

/// Generator over {SOS} + C candidates, no EOS, small widths.
Generator make_oracle_generator(std::size_t candidates, std::uint64_t seed);
/// Discriminator over the same vocabulary: d_E = 8, one conv layer (ELU) and
/// the output layer. `linear` drops the conv layer, so R is linear in E.
Discriminator make_oracle_discriminator(std::size_t candidates, std::uint64_t seed,
                                        bool linear = false);

/// pi(x) for every sequence of the space.
std::vector<double> sequence_probs(Generator &gen, const EnumerationSpace &space);

/// Flattened gradient over the generator's parameters, in parameters() order.
std::vector<double> flatten(const GradientMap &grads, const Generator &gen);

/// grad_theta sum_x pi(x) R(x) with R fixed.
std::vector<double> exact_objective_gradient(Generator &gen,
                                             const EnumerationSpace &space,
                                             std::span<const double> rewards);

struct ExpectationOptions {
  EstimatorKind kind = EstimatorKind::kReinforce;
  double baseline = 0.0;
  double bandwidth = 0.5;
};

/// sum_x pi(x) g(x) for the single-sample estimator g of `options.kind`
/// (reinforce, straight_through or taylor), rewards from `disc`.
std::vector<double> estimator_expectation(Generator &gen, Discriminator &disc,
                                          const EnumerationSpace &space,
                                          const ExpectationOptions &options);

/// Single-sample generator gradient of an estimator on `tokens` (N = 1).
std::vector<double> sample_gradient(Generator &gen, Discriminator &disc,
                                    const SequenceBatch &tokens,
                                    const ExpectationOptions &options);

struct OracleReport {
  std::string name;
  int criterion = 0; // acceptance criterion number, 0 for supporting checks
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool relative = false; // tolerance applies to max_rel_error
  bool informational = false;
  bool passed = false;
  std::size_t space_size = 0;
  double seconds = 0.0;
  std::string detail;
};

struct OracleOptions {
  std::uint64_t seed = 0;
  /// Corrupts the kernel normalization seen by the normalization check.
  bool inject_fault = false;
};

std::vector<OracleReport> run_suite(const OracleOptions &options);

/// max_i |a_i - b_i|
double max_abs_diff(std::span<const double> a, std::span<const double> b);
/// |a - b|_2 / max(|a|_2, |b|_2), 0 when both vanish.
double rel_diff(std::span<const double> a, std::span<const double> b);

} // namespace taylorgan
