// SPDX-License-Identifier: Apache-2.0
/**
 * @file   ops.hpp
 * @brief  Differentiable primitives recorded on a Graph.
 *
 * Sequence tensors are laid out [batch, time, channels]. Length-aware ops take
 * the number of valid time steps per batch row; entries past that length are
 * zero on output and receive no gradient.
 */
#pragma once

#include <span>
#include <vector>

#include "taylorgan/autodiff.hpp"

namespace taylorgan {

/// Per-token flag; false entries get probability exactly 0 (log-prob 0).
using TokenMask = std::vector<bool>;

namespace ops {

/// a[m,k] * b[k,n], or a[m,k] * b[n,k]^T when transpose_b is set.
Var matmul(Var a, Var b, bool transpose_b = false);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product of equally-shaped tensors.
Var mul(Var a, Var b);
/// Adds a vector along the last axis.
Var add_bias(Var x, Var bias);
Var scale(Var x, double factor);
Var add_scalar(Var x, double offset);

/// ELU with alpha = 1.
Var elu(Var x);
Var sigmoid(Var x);
Var tanh(Var x);
Var relu(Var x);
Var log(Var x);
Var exp(Var x);
/// log(sigmoid(x)) without overflow for large |x|.
Var log_sigmoid(Var x);

Var sum(Var x);
Var mean(Var x);
/// Reduces the last axis: [..., n] -> [...].
Var sum_last(Var x);

/// Softmax over the last axis of x / temperature. Masked-out entries are 0.
Var softmax(Var x, double temperature = 1.0, const TokenMask *mask = nullptr);
/// log-softmax over the last axis; masked-out entries are reported as 0.
Var log_softmax(Var x, double temperature = 1.0,
                const TokenMask *mask = nullptr);

/// Rows of table[V, d] selected by ids -> [ids.size(), d].
Var one_hot_gather(Var table, std::span<const TokenId> ids);
/// x[..., V] with one entry picked per row -> [...].
Var pick_last(Var x, std::span<const TokenId> index);

Var stop_gradient(Var x);
Var reshape(Var x, Shape shape);
/// T tensors of shape [N, C] -> [N, T, C].
Var stack_steps(std::span<const Var> steps);
/// Zeroes x[n, t, :] for t >= lengths[n].
Var mask_steps(Var x, std::span<const std::size_t> lengths);

/// "Same" 1-D convolution. x[N,T,Cin], kernel[Cout, K*Cin] with column
/// index k*Cin + c, bias[Cout]. Left pad (K-1)/2, right pad K-1-(K-1)/2.
Var conv1d_same(Var x, Var kernel, Var bias, std::size_t width);
/// Window 2, stride 2, ceil mode. Averages only positions < lengths[n];
/// output row n is valid up to ceil(lengths[n] / 2).
Var mean_pool(Var x, std::span<const std::size_t> lengths);
/// x[N,T,C] -> [N,C], averaging the first lengths[n] steps.
Var global_mean_pool(Var x, std::span<const std::size_t> lengths);
/// Squared L2 norm of each row: w[V,d] -> [V].
Var row_sq_norms(Var w);

struct GruWeights {
  Var w_xz, w_hz, b_z;
  Var w_xr, w_hr, b_r;
  Var w_xn, w_hn, b_n;
};

/// z = s(x Wxz + h Whz + bz), r = s(x Wxr + h Whr + br),
/// n = tanh(x Wxn + (r*h) Whn + bn), h' = n + z * (h - n).
Var gru_cell(Var x, Var h, const GruWeights &w);

} // namespace ops
} // namespace taylorgan
