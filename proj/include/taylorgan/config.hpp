// SPDX-License-Identifier: Apache-2.0
/**
 * @file   config.hpp
 * @brief  Run configuration read from a flat "key = value" text file.
 *
 * Blank lines and lines starting with '#' are ignored. Every key must name a
 * RunConfig field; unknown or repeated keys are errors.
 */
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "taylorgan/estimators.hpp"

namespace taylorgan {

struct RunConfig {
  // estimator
  std::string estimator = "taylor";
  double bandwidth = 0.5;
  double entropy_weight = 0.02;
  double baseline_decay = 0.9;
  double gumbel_start = 1.0;
  double gumbel_end = 0.3;
  // model
  std::size_t vocab_size = 5303; // cap including the reserved tokens
  std::size_t gen_embed_dim = 300;
  std::size_t gen_hidden_dim = 512;
  std::size_t disc_embed_dim = 300;
  std::string disc_body = "conv3x512,conv4x512,pool,conv3x1024,conv4x1024";
  std::string disc_dense = "1024";
  // optimization
  std::size_t batch_size = 64;
  std::size_t max_len = 50;
  std::size_t steps = 1000;
  double learning_rate = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double clip_norm = 10.0;
  double lambda_sn = 0.07;
  double lambda_e = 0.2;
  double norm_threshold = 1.0;
  int power_iterations = 1;
  std::uint64_t seed = 0;
  // paths
  std::string train_path;
  std::string valid_path;
  std::string vectors_path;
  std::string checkpoint_path = "taylorgan.ckpt";
  std::string log_path = "taylorgan.log.jsonl";
  // evaluation cadence (0 disables)
  std::size_t checkpoint_every = 0;
  std::size_t eval_every = 0;
  std::size_t eval_samples = 500;
  std::size_t lm_steps = 500;

  /// Key/value pairs in declaration order, values formatted as in a file.
  std::vector<std::pair<std::string, std::string>> items() const;
  void set(const std::string &key, const std::string &value);
  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  EstimatorConfig estimator_config() const;
  AdamConfig adam_config() const;
};

RunConfig parse_run_config(std::istream &in, const std::string &source = "<input>");
RunConfig load_run_config(const std::string &path);

} // namespace taylorgan
