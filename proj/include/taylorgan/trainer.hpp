// SPDX-License-Identifier: Apache-2.0
/**
 * @file   trainer.hpp
 * @brief  Alternating discriminator/generator training with a JSONL run log.
 *
 * Each step: sample a batch from the generator, take one discriminator step
 * on real + sampled data, compute rewards, update the baseline and take one
 * generator step with the configured estimator.
 */
#pragma once

#include <fstream>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "taylorgan/checkpoint.hpp"
#include "taylorgan/config.hpp"
#include "taylorgan/metrics.hpp"

namespace taylorgan {

/// Append-only JSONL writer. The first line is the config header; later
/// lines are "d", "g", "metric" or "error" records with monotone steps.
class RunLog {
public:
  RunLog() = default;
  /// Empty path keeps records in memory only.
  explicit RunLog(const std::string &path);

  void header(const RunConfig &config);
  void write(const std::string &json_line);
  const std::vector<std::string> &lines() const { return lines_; }

private:
  std::unique_ptr<std::ofstream> out_;
  std::vector<std::string> lines_;
};

struct StepRecord {
  std::size_t step = 0;
  DiscLossParts d;
  StepStats d_stats;
  std::vector<double> sigmas;
  double g_loss = 0.0;
  double g_reward = 0.0; // mean reward of the sampled batch
  double baseline = 0.0;
  double temperature = 1.0; // relaxation temperature (gumbel only)
  StepStats g_stats;
};

struct TrainSummary {
  std::vector<StepRecord> steps;
  std::optional<double> best_lm_score;
};

class Trainer {
public:
  /// Loads corpora and builds models; throws on an invalid config.
  explicit Trainer(RunConfig config);
  Trainer(const Trainer &) = delete;
  Trainer &operator=(const Trainer &) = delete;

  const RunConfig &config() const { return config_; }
  const Vocabulary &vocab() const { return vocab_; }
  const Corpus &train_corpus() const { return train_; }
  const Corpus &valid_corpus() const { return valid_; }
  Generator &generator() { return gen_; }
  Discriminator &discriminator() { return disc_; }
  const BaselineState &baseline() const { return baseline_; }
  const RunLog &log() const { return log_; }
  std::size_t steps_done() const { return step_; }

  /// One D step and one G step; appends two log records.
  StepRecord step();
  /// Runs the remaining steps with periodic checkpoints and metric snapshots,
  /// then writes the final checkpoint to `checkpoint_path`.
  TrainSummary run();

  void save(const std::string &path) const;

private:
  double generator_step(const SequenceBatch &real, const SequenceBatch &fake,
                        StepRecord &rec, std::uint64_t gumbel_seed);
  double snapshot_metrics();
  void check_finite(const char *what, double value);

  RunConfig config_;
  EstimatorConfig est_;
  Vocabulary vocab_;
  Corpus train_;
  Corpus valid_;
  Generator gen_;
  Discriminator disc_;
  Adam g_opt_;
  Adam d_opt_;
  BaselineState baseline_;
  BatchStream real_stream_;
  std::mt19937_64 rng_;
  RunLog log_;
  std::size_t step_ = 0;
  std::optional<Generator> real_lm_;
};

/// Model configs implied by a run config and vocabulary.
GeneratorConfig generator_config(const RunConfig &config, const Vocabulary &vocab);
DiscriminatorConfig discriminator_config(const RunConfig &config,
                                         const Vocabulary &vocab);

/// LM hyperparameters used for evaluation under a run config.
LmHyper lm_hyper(const RunConfig &config);

} // namespace taylorgan
