// SPDX-License-Identifier: Apache-2.0
#include "taylorgan/optim.hpp"

#include <cmath>

namespace taylorgan {

double global_norm(const std::vector<Tensor> &grads) {
  double s = 0.0;
  for (const auto &g : grads)
    s += g.squared_norm();
  return std::sqrt(s);
}

double clip_by_global_norm(std::vector<Tensor> &grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto &g : grads)
      for (double &x : g.data())
        x *= factor;
  }
  return norm;
}

Adam::Adam(AdamConfig config, std::vector<Parameter *> params)
    : config_(config), params_(std::move(params)) {
  for (const Parameter *p : params_) {
    state_.first_moment.emplace_back(p->value.shape());
    state_.second_moment.emplace_back(p->value.shape());
  }
}

StepStats Adam::step(const GradientMap &grads) {
  std::vector<Tensor> g;
  g.reserve(params_.size());
  for (const Parameter *p : params_)
    g.push_back(grads.param(*p));
  return step(std::move(g));
}

StepStats Adam::step(std::vector<Tensor> grads) {
  if (grads.size() != params_.size())
    throw std::invalid_argument("Adam::step: gradient count mismatch");
  StepStats stats;
  stats.grad_norm = clip_by_global_norm(grads, config_.clip_norm);
  stats.clipped_norm = global_norm(grads);
  if (!std::isfinite(stats.grad_norm))
    throw NumericError("non-finite gradient norm");

  ++state_.step;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state_.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state_.step));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor &m = state_.first_moment[i];
    Tensor &v = state_.second_moment[i];
    Tensor &w = params_[i]->value;
    const Tensor &g = grads[i];
    if (g.size() != w.size())
      throw ShapeError("Adam::step: gradient shape mismatch for '" +
                       params_[i]->name + "'");
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      w[k] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
  return stats;
}

} // namespace taylorgan
