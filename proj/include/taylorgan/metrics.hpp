// SPDX-License-Identifier: Apache-2.0
/**
 * @file   metrics.hpp
 * @brief  Smoothed BLEU, Self-BLEU and language-model based scores.
 *
 * Sentences are token-id sequences without EOS. Smoothed precision of order
 * n is max(p_n, eps / Count) where Count is the number of candidate n-grams;
 * when a candidate set has no n-grams of order n the precision is eps.
 */
#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "taylorgan/generator.hpp"

namespace taylorgan {

using Sentence = std::vector<TokenId>;

struct NGramHash {
  std::size_t operator()(const Sentence &g) const noexcept;
};

/// n-gram counts of one order.
class NGramTable {
public:
  NGramTable() = default;
  NGramTable(const Sentence &sentence, std::size_t n);

  std::size_t count(const Sentence &gram) const;
  std::size_t total() const { return total_; }
  const std::unordered_map<Sentence, std::size_t, NGramHash> &counts() const {
    return counts_;
  }

private:
  std::unordered_map<Sentence, std::size_t, NGramHash> counts_;
  std::size_t total_ = 0;
};

struct BleuConfig {
  std::size_t max_order = 4;
  double epsilon = 0.1;
  bool brevity_penalty = true;
};

/// Clipped matches and candidate n-gram count of one order, summed over the
/// candidates; each candidate is clipped against the largest count of that
/// n-gram in any single reference.
struct PrecisionCounts {
  std::size_t matched = 0;
  std::size_t total = 0;
};

PrecisionCounts precision_counts(const std::vector<Sentence> &candidates,
                                 const std::vector<Sentence> &references,
                                 std::size_t n);
double smoothed_precision(const std::vector<Sentence> &candidates,
                          const std::vector<Sentence> &references, std::size_t n,
                          double epsilon);

/// exp(1 - r/c) when c < r, else 1; c = candidate length, r = closest
/// reference length (shorter on ties), both summed over candidates.
double brevity_penalty(const std::vector<Sentence> &candidates,
                       const std::vector<Sentence> &references);

/// Brevity penalty times the geometric mean of smoothed precisions 1..k.
double bleu(const std::vector<Sentence> &candidates,
            const std::vector<Sentence> &references, const BleuConfig &config);

/// Mean over the first `sample_size` sentences of the BLEU of each sentence
/// against all other sentences of that sample.
double self_bleu(const std::vector<Sentence> &corpus, const BleuConfig &config,
                 std::size_t sample_size);

/// Mean over sequences of -log pi_LM(x) / length (EOS counted).
double lm_score(Generator &lm, const SequenceBatch &samples,
                std::size_t batch_size = 256);
double lm_score(Generator &lm, const Corpus &corpus, std::size_t max_len);

struct LmHyper {
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t steps = 500;
  std::size_t batch_size = 64;
  std::size_t max_len = 20;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::size_t min_samples = 1000;
};

/// Fresh generator trained with mle_step on `corpus`.
Generator train_language_model(const Corpus &corpus, const GeneratorConfig &shape,
                               const LmHyper &hyper);

/// Trains a fresh language model on `generated` and scores `real_eval` with it.
/// Throws std::invalid_argument with fewer than hyper.min_samples sentences.
double rlm_score(const Corpus &generated, const Corpus &real_eval,
                 const GeneratorConfig &shape, const LmHyper &hyper);

/// Sentences of a batch with EOS and padding removed.
std::vector<Sentence> strip_batch(const SequenceBatch &batch,
                                  std::optional<TokenId> eos = Vocabulary::kEos);

} // namespace taylorgan
