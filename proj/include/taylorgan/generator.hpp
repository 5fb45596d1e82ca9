// SPDX-License-Identifier: Apache-2.0
/**
 * @file   generator.hpp
 * @brief  Autoregressive GRU policy with a tied output projection.
 *
 * logits_t = (h_t P + p) W^T where W is the token embedding matrix, so the
 * embedding is the only token-indexed parameter. The first input is SOS; a
 * sequence ends at (and includes) the first EOS. With `eos` unset, sequences
 * always run for the full length (used by exhaustive enumeration).
 */
#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "taylorgan/ops.hpp"
#include "taylorgan/optim.hpp"
#include "taylorgan/vocab.hpp"

namespace taylorgan {

struct GeneratorConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 300;
  std::size_t hidden_dim = 512;
  TokenId sos = Vocabulary::kSos;
  std::optional<TokenId> eos = Vocabulary::kEos;
  /// Tokens the policy may emit; must have vocab_size entries.
  TokenMask candidates;

  /// Defaults for a corpus vocabulary: every token except PAD and SOS.
  static GeneratorConfig for_vocab(const Vocabulary &vocab,
                                   std::size_t embed_dim = 300,
                                   std::size_t hidden_dim = 512);
};

/// Sampled sequences plus the distributions they were sampled from.
struct PolicyRollout {
  SequenceBatch tokens;
  Tensor step_dists;     // [N, T, V]; every row sums to 1
  Tensor step_logprobs;  // [N, T]; 0 past the sequence length
  Tensor step_entropies; // [N, T]; 0 past the sequence length
  double temperature = 1.0;
};

/// Differentiable policy evaluated on fixed tokens (teacher forcing).
struct PolicyOutputs {
  Var log_probs; // [N, T, V], temperature 1; non-candidates report 0
  Var probs;     // [N, T, V]
};

class Generator {
public:
  Generator(GeneratorConfig config, std::uint64_t seed);

  const GeneratorConfig &config() const { return config_; }
  Parameter &embedding() { return embedding_; }
  const Parameter &embedding() const { return embedding_; }

  std::vector<Parameter *> parameters();
  std::vector<const Parameter *> parameters() const;

  /// Replaces the embedding matrix (e.g. with pretrained vectors).
  void set_embedding(const Tensor &matrix);

  /// Policy over every position of `batch`: step t is conditioned on SOS and
  /// tokens [0, t). Positions past a sequence's length see PAD inputs.
  PolicyOutputs teacher_force(Graph &graph, const SequenceBatch &batch);

  /// Samples `count` sequences of at most `max_len` tokens from
  /// softmax(logits / temperature). After a sequence emits EOS its remaining
  /// tokens are PAD, but distributions are still recorded for every step.
  PolicyRollout rollout(std::size_t count, std::size_t max_len,
                        double temperature, std::mt19937_64 &rng);

  /// log pi(x) per sequence: sum of step log-probabilities up to the length.
  std::vector<double> log_prob(const SequenceBatch &batch);

  /// exp(-sum log pi / number of tokens), tokens counted including EOS.
  double perplexity(const Corpus &corpus, std::size_t max_len,
                    std::size_t batch_size = 64);

  /// One Adam step on the mean per-token negative log-likelihood.
  double mle_step(const SequenceBatch &batch, Adam &optimizer);

  /// Mean per-token negative log-likelihood as a graph node.
  Var nll_loss(Graph &graph, const SequenceBatch &batch);

  /// Pieces of the recurrent step, shared with the relaxed (Gumbel) rollout.
  ops::GruWeights gru_vars(Graph &graph);
  Var initial_state(Graph &graph, std::size_t batch) const;
  Var logits_from_state(Graph &graph, Var hidden);

private:
  GeneratorConfig config_;
  Parameter embedding_;
  Parameter w_xz_, w_hz_, b_z_;
  Parameter w_xr_, w_hr_, b_r_;
  Parameter w_xn_, w_hn_, b_n_;
  Parameter proj_w_, proj_b_;
};

/// Log-probability of the realized token at every step, zero past each
/// sequence length: [N, T].
Var token_log_probs(const PolicyOutputs &policy, const SequenceBatch &batch);

} // namespace taylorgan
