// SPDX-License-Identifier: Apache-2.0
#include "taylorgan/spectral_norm.hpp"

#include <cmath>
#include <memory>
#include <random>

namespace taylorgan {

namespace {

double normalize(Tensor &x) {
  const double norm = std::sqrt(x.squared_norm());
  if (norm > 0)
    for (double &e : x.data())
      e /= norm;
  return norm;
}

// One sweep v <- W^T u / |.|, u <- W v / |.|. Returns |W v| (the current sigma
// estimate) or 0 if the matrix annihilated the iterate.
double power_sweep(const Tensor &w, Tensor &u, Tensor &v) {
  const std::size_t rows = w.dim(0), cols = w.dim(1);
  Tensor nv({cols});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      nv[j] += w.at(i, j) * u[i];
  if (normalize(nv) == 0)
    return 0.0;
  Tensor nu({rows});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      nu[i] += w.at(i, j) * nv[j];
  const double sigma = normalize(nu);
  if (sigma == 0)
    return 0.0;
  u = std::move(nu);
  v = std::move(nv);
  return sigma;
}

double run_power_iteration(const Tensor &w, PowerIterState &state, int iters) {
  if (w.rank() != 2)
    throw ShapeError("spectral_norm: weight must be rank 2, got " +
                     shape_to_string(w.shape()));
  if (iters < 1)
    throw std::invalid_argument("spectral_norm: iters must be >= 1");
  if (!state.initialized() || state.u.size() != w.dim(0) ||
      state.v.size() != w.dim(1))
    state.init(w.dim(0), w.dim(1), 0x5eed);
  double sigma = 0.0;
  for (int it = 0; it < iters; ++it) {
    sigma = power_sweep(w, state.u, state.v);
    if (sigma == 0)
      return 0.0;
  }
  // sigma = u^T W v with the final unit vectors.
  double s = 0.0;
  for (std::size_t i = 0; i < w.dim(0); ++i)
    for (std::size_t j = 0; j < w.dim(1); ++j)
      s += state.u[i] * w.at(i, j) * state.v[j];
  return s;
}

} // namespace

void PowerIterState::init(std::size_t rows, std::size_t cols,
                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  u = Tensor({rows});
  v = Tensor({cols});
  for (double &e : u.data())
    e = normal(rng);
  for (double &e : v.data())
    e = normal(rng);
  normalize(u);
  normalize(v);
}

double spectral_norm_value(const Tensor &weight, PowerIterState &state,
                           int iters) {
  return run_power_iteration(weight, state, iters);
}

Var spectral_norm(Var weight, PowerIterState &state, int iters) {
  const double sigma = run_power_iteration(weight.value(), state, iters);
  auto u = std::make_shared<Tensor>(state.u);
  auto v = std::make_shared<Tensor>(state.v);
  const bool zero = sigma == 0.0;
  return weight.graph().record(
      "spectral_norm", Tensor::scalar(sigma), {weight},
      [u, v, zero](const Graph::BackwardContext &c) {
        Tensor *g = c.grad_in[0];
        if (!g || zero)
          return;
        const double s = c.grad.item();
        const std::size_t rows = u->size(), cols = v->size();
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j)
            g->at(i, j) += s * (*u)[i] * (*v)[j];
      });
}

} // namespace taylorgan
