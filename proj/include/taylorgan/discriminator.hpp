// SPDX-License-Identifier: Apache-2.0
/**
 * @file   discriminator.hpp
 * @brief  Masked convolutional reward network, its loss and the Taylor matrix.
 *
 * R(x) is the pre-sigmoid logit. Every sequence tensor is [N, T, C]; after the
 * embedding and after every conv layer, positions at or beyond the valid
 * length of that layer are zeroed. Pooling halves the valid length (ceil).
 */
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "taylorgan/ops.hpp"
#include "taylorgan/optim.hpp"
#include "taylorgan/spectral_norm.hpp"
#include "taylorgan/vocab.hpp"

namespace taylorgan {

enum class Activation { kElu, kIdentity };

struct DiscLayer {
  enum class Kind { kConv, kMeanPool };
  Kind kind = Kind::kConv;
  std::size_t width = 0;    // conv only
  std::size_t channels = 0; // conv only
};

struct DiscriminatorConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 300;
  std::vector<DiscLayer> body = standard_body();
  std::vector<std::size_t> dense = {1024};
  Activation activation = Activation::kElu;
  double lambda_sn = 0.07;
  double lambda_e = 0.2;
  double norm_threshold = 1.0;
  int power_iterations = 1;

  /// Conv3-512, Conv4-512, MeanPool, Conv3-1024, Conv4-1024.
  static std::vector<DiscLayer> standard_body();
  /// Comma-separated "conv<width>x<channels>" or "pool", e.g. "conv3x64,pool".
  /// The empty string is an empty body.
  static std::vector<DiscLayer> parse_body(const std::string &text);
  static std::string format_body(const std::vector<DiscLayer> &body);
};

/// Rewards of a batch with the embedding-output gradient and, optionally,
/// the Taylor matrix.
struct RewardBundle {
  std::vector<double> rewards; // [N]
  Tensor delta_e;              // [N, T, d_E]; zero past each length
  Tensor taylor;               // [N, T, |V|]; empty unless requested
};

/// Discriminator loss split into its parts (values only).
struct DiscLossParts {
  double total = 0.0;
  double classification = 0.0;
  double spectral = 0.0;
  double embedding = 0.0;
  double real_reward = 0.0; // mean logit on real data
  double fake_reward = 0.0; // mean logit on generated data
};

class Discriminator {
public:
  Discriminator(DiscriminatorConfig config, std::uint64_t seed);

  const DiscriminatorConfig &config() const { return config_; }
  Parameter &embedding() { return embedding_; }
  const Parameter &embedding() const { return embedding_; }
  void set_embedding(const Tensor &matrix);

  std::vector<Parameter *> parameters();
  std::vector<const Parameter *> parameters() const;
  /// Weights covered by the spectral penalty, in a fixed order, with the
  /// matching power-iteration states.
  std::vector<Parameter *> spectral_weights();
  std::vector<const Parameter *> spectral_weights() const;
  std::vector<PowerIterState> &power_states() { return power_; }
  const std::vector<PowerIterState> &power_states() const { return power_; }

  /// Embedding lookup E(x): [N, T, d_E] (not yet masked).
  Var embed(Graph &graph, const SequenceBatch &batch);
  /// Logits from an embedding-output tensor [N, T, d_E]: [N].
  Var forward_from_embedding(Graph &graph, Var emb,
                             std::span<const std::size_t> lengths);
  /// Logits of a token batch: [N].
  Var logits(Graph &graph, const SequenceBatch &batch);

  /// R(x) for every row of the batch.
  std::vector<double> reward(const SequenceBatch &batch);
  /// Rewards plus dR/dE for each row; fills the Taylor matrix when asked.
  RewardBundle reward_bundle(const SequenceBatch &batch, bool with_taylor);

  /// (lambda_SN / 2) sum sigma^2 + lambda_E / (2|V|) sum relu(|e_v|^2 - M^2).
  /// Runs `iters` power iterations per weight (config value when < 1).
  Var reg_loss(Graph &graph, int iters = 0);
  /// -mean log D(real) - mean log(1 - D(fake)) + reg_loss.
  Var d_loss(Graph &graph, const SequenceBatch &real, const SequenceBatch &fake,
             DiscLossParts *parts = nullptr, int iters = 0);
  DiscLossParts train_step(const SequenceBatch &real, const SequenceBatch &fake,
                           Adam &optimizer, StepStats *stats = nullptr);

  /// Current spectral norm estimates (no power iteration).
  std::vector<double> sigmas() const;

private:
  Var activate(Var x) const;

  struct ConvParams {
    Parameter kernel, bias;
    std::size_t width = 0;
  };
  struct DenseParams {
    Parameter weight, bias;
  };

  DiscriminatorConfig config_;
  Parameter embedding_;
  std::vector<ConvParams> convs_;
  std::vector<DenseParams> dense_;
  DenseParams output_;
  std::vector<PowerIterState> power_;
};

/// R~[n,t,v] = R_n + e_v . dE_{n,t} - e_{x_t} . dE_{n,t}; zero past each
/// length. `embedding` is the discriminator's [|V|, d_E] matrix.
Tensor taylor_matrix(const RewardBundle &bundle, const Tensor &embedding,
                     const SequenceBatch &batch);

} // namespace taylorgan
