// SPDX-License-Identifier: Apache-2.0
/**
 * @file   spectral_norm.hpp
 * @brief  Largest singular value by power iteration, as a differentiable node.
 */
#pragma once

#include <cstdint>

#include "taylorgan/autodiff.hpp"

namespace taylorgan {

/// Persistent left/right singular vector estimates for one weight matrix.
/// Both are unit vectors once initialized.
struct PowerIterState {
  Tensor u; // [rows]
  Tensor v; // [cols]

  bool initialized() const { return u.rank() == 1 && u.size() > 0; }
  /// Random unit vectors drawn from `seed`.
  void init(std::size_t rows, std::size_t cols, std::uint64_t seed);
};

/// Runs `iters` power iterations on the rank-2 weight (updating `state`) and
/// returns sigma = u^T W v. The adjoint with respect to W is u v^T; u and v
/// are treated as constants. A zero matrix yields sigma = 0 and zero gradient.
Var spectral_norm(Var weight, PowerIterState &state, int iters);

/// Value-only variant for tests and diagnostics.
double spectral_norm_value(const Tensor &weight, PowerIterState &state,
                           int iters);

} // namespace taylorgan
