// SPDX-License-Identifier: Apache-2.0
/**
 * @file   optim.hpp
 * @brief  Adam with bias correction and global-norm gradient clipping.
 */
#pragma once

#include <vector>

#include "taylorgan/autodiff.hpp"

namespace taylorgan {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Maximum global gradient norm; <= 0 disables clipping.
  double clip_norm = 10.0;
};

struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  long step = 0;
};

struct StepStats {
  double grad_norm = 0.0;    // before clipping
  double clipped_norm = 0.0; // after clipping
};

double global_norm(const std::vector<Tensor> &grads);

/// Rescales `grads` in place so their global norm is at most `max_norm`.
/// Returns the norm before rescaling.
double clip_by_global_norm(std::vector<Tensor> &grads, double max_norm);

class Adam {
public:
  Adam(AdamConfig config, std::vector<Parameter *> params);

  /// Minimization step using the gradients of the tracked parameters;
  /// parameters absent from `grads` are treated as having zero gradient.
  StepStats step(const GradientMap &grads);
  StepStats step(std::vector<Tensor> grads);

  const AdamConfig &config() const { return config_; }
  const AdamState &state() const { return state_; }

private:
  AdamConfig config_;
  std::vector<Parameter *> params_;
  AdamState state_;
};

} // namespace taylorgan
