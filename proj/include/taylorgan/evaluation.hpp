// SPDX-License-Identifier: Apache-2.0
/**
 * @file   evaluation.hpp
 * @brief  Sampling, metric evaluation and temperature sweeps on a frozen model.
 */
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "taylorgan/generator.hpp"
#include "taylorgan/metrics.hpp"

namespace taylorgan {

inline const std::vector<std::string> kAllMetrics = {"bleu", "self_bleu", "lm", "rlm",
                                                     "perplexity"};

struct EvalOptions {
  std::vector<std::string> metrics = kAllMetrics;
  std::size_t samples = 1000;
  std::size_t max_len = 20;
  std::size_t bleu_order = 3;
  /// Sentences used for Self-BLEU; 0 uses every sample.
  std::size_t self_bleu_size = 0;
  std::uint64_t seed = 0;
  LmHyper lm;
};

/// Data the metrics are computed against.
struct EvalContext {
  const Corpus *references = nullptr; // held-out real text (BLEU, RLM, perplexity)
  const Corpus *lm_train = nullptr;   // real text for the LM-score model
  /// Real-data LM; trained from `lm_train` on first use when empty.
  std::optional<Generator> lm;
};

struct EvalRow {
  double temperature = 1.0;
  std::map<std::string, double> values; // keyed by CSV column name
};

/// `n` sequences sampled at `temperature` from a generator seeded by `seed`.
SequenceBatch sample_batch(Generator &gen, std::size_t n, std::size_t max_len,
                           double temperature, std::uint64_t seed);

/// Decoded sample lines with PAD/EOS stripped.
std::vector<std::string> sample_text(Generator &gen, const Vocabulary &vocab,
                                     std::size_t n, std::size_t max_len,
                                     double temperature, std::uint64_t seed);

/// Throws std::invalid_argument for an unknown metric name.
void check_metrics(const std::vector<std::string> &metrics);

/// Metrics of samples drawn at one temperature; samples are always seeded by
/// `options.seed`, so a sweep row equals a standalone call.
EvalRow evaluate(Generator &gen, double temperature, const EvalOptions &options,
                 EvalContext &context);

std::vector<EvalRow> sweep(Generator &gen, const std::vector<double> &temperatures,
                           const EvalOptions &options, EvalContext &context);

/// Header "temperature,neg_bleu<k>,self_bleu<k>,lm,rlm,perplexity" restricted
/// to the selected metrics, then one row per temperature.
std::string sweep_csv(const std::vector<EvalRow> &rows, const EvalOptions &options);

/// Comma-separated numbers, e.g. "0.5,1,1.5".
std::vector<double> parse_number_list(const std::string &text);
/// Comma-separated names.
std::vector<std::string> parse_name_list(const std::string &text);

} // namespace taylorgan
