// SPDX-License-Identifier: Apache-2.0
/**
 * @file   estimators.hpp
 * @brief  Generator update rules written as surrogate scalars.
 *
 * Each surrogate S satisfies grad_theta S = the estimator, so the generator
 * minimizes -(S + entropy bonus). Coefficients that multiply log-probs are
 * graph constants. Per-sample weights default to 1/N; passing explicit
 * weights (e.g. pi(x) over an enumerated space) turns a batch surrogate into
 * an expectation.
 */
#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "taylorgan/discriminator.hpp"
#include "taylorgan/generator.hpp"

namespace taylorgan {

enum class EstimatorKind { kReinforce, kStraightThrough, kGumbelSoftmax, kTaylor, kMle };

std::string estimator_name(EstimatorKind kind);
EstimatorKind parse_estimator(const std::string &name);

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::kTaylor;
  double bandwidth = 0.5;      // Lambda, taylor only
  double entropy_weight = 0.02;
  double baseline_decay = 0.9;
  double gumbel_start = 1.0;   // relaxation temperature at step 0
  double gumbel_end = 0.3;     // relaxation temperature at the last step
};

/// Exponential moving average of batch-mean rewards.
class BaselineState {
public:
  explicit BaselineState(double decay = 0.9) : decay_(decay) {}

  /// b <- decay * b + (1 - decay) * mean; the first call sets b = mean.
  double update(std::span<const double> rewards);
  double value() const { return value_; }
  bool initialized() const { return initialized_; }
  void restore(double value, bool initialized) {
    value_ = value;
    initialized_ = initialized;
  }

private:
  double decay_;
  double value_ = 0.0;
  bool initialized_ = false;
};

/// K[u, v] = C(v) exp(-|e_u - e_v|^2 / (2 Lambda^2)) with sum_u K[u, v] = 1
/// over admissible u. Rows and columns of inadmissible tokens are zero.
struct KernelMatrix {
  Tensor k;     // [V, V]
  Tensor log_k; // [V, V]; -inf where k is exactly zero by construction
  TokenMask mask;
  double bandwidth = 0.0;
};

/// `corrupt_normalization` scales C(v) by 1.5 for the first admissible v; it
/// exists only to exercise the verification suite's negative control.
KernelMatrix hamming_kernel(const Tensor &embedding, double bandwidth,
                            const TokenMask &mask,
                            bool corrupt_normalization = false);

/// Column sums of K over admissible rows; max |sum - 1| over admissible v.
double kernel_normalization_error(const KernelMatrix &kernel);

/// A~[n,t,v] = K[v,x_t] pi(v) / sum_u K[v,u] pi(u) * (rtilde[n,t,v] - b),
/// zero past each length and for inadmissible v. `log_probs` and `probs`
/// are [N,T,V] step distributions at temperature 1.
Tensor taylor_advantages(const Tensor &log_probs, const Tensor &probs,
                         const SequenceBatch &tokens, const Tensor &rtilde,
                         const KernelMatrix &kernel, double baseline);

/// sum_n w_n sum_{t,v} A~[n,t,v] log pi(v | x_<t).
Var taylor_surrogate(const PolicyOutputs &policy, const Tensor &advantages,
                     std::span<const double> weights = {});

/// sum_n w_n (R_n - b) log pi(x_n).
Var reinforce_surrogate(const PolicyOutputs &policy, const SequenceBatch &tokens,
                        std::span<const double> rewards, double baseline,
                        std::span<const double> weights = {});

/// sum_n w_n sum_t (sum_v pi(v | x_<t) e_v) . dE_t with dE and W_E constant.
Var straight_through_surrogate(const PolicyOutputs &policy,
                               const SequenceBatch &tokens,
                               const Tensor &delta_e, const Tensor &embedding,
                               std::span<const double> weights = {});

/// coef * sum_n w_n sum_t H(pi(. | x_<t)), steps past each length excluded.
Var entropy_bonus(const PolicyOutputs &policy, const SequenceBatch &tokens,
                  double coef, std::span<const double> weights = {});

/// Exponential anneal from gumbel_start to gumbel_end over `total` steps.
double gumbel_temperature(const EstimatorConfig &config, std::size_t step,
                          std::size_t total);

struct GumbelStep {
  Var loss;               // -mean R(soft) - entropy bonus
  SequenceBatch hard;     // argmax of the perturbed logits, cut at EOS
  double mean_reward = 0.0;
};

/// Relaxed rollout: y_t = softmax((logits + g) / tau), g ~ Gumbel(0, 1).
/// y_t W_G feeds the next recurrent step and y_t W_E feeds the
/// discriminator; the soft sequence is scored over the hard sample's length.
GumbelStep gumbel_softmax_step(Graph &graph, Generator &gen, Discriminator &disc,
                               std::size_t count, std::size_t max_len, double tau,
                               double entropy_weight, std::mt19937_64 &rng);

} // namespace taylorgan
