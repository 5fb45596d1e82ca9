// SPDX-License-Identifier: Apache-2.0
#include "taylorgan/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <memory>

namespace taylorgan::ops {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;
using Ctx = Graph::BackwardContext;

ConstMap as_matrix(const Tensor &t, std::size_t rows, std::size_t cols) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(rows),
                  static_cast<Eigen::Index>(cols));
}

MutMap as_matrix(Tensor &t, std::size_t rows, std::size_t cols) {
  return MutMap(t.data().data(), static_cast<Eigen::Index>(rows),
                static_cast<Eigen::Index>(cols));
}

void require(bool cond, const std::string &what) {
  if (!cond)
    throw ShapeError(what);
}

void require_same_shape(const char *op, Var a, Var b) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      shape_to_string(a.shape()) + " vs " +
                                      shape_to_string(b.shape()));
}

std::size_t last_dim(const Tensor &t) {
  require(t.rank() >= 1, "expected rank >= 1");
  return t.shape().back();
}

// Elementwise y = f(x) with dy/dx = df(x, y).
template <class F, class DF> Var unary(const char *name, Var x, F f, DF df) {
  const Tensor &xv = x.value();
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i)
    y[i] = f(xv[i]);
  return x.graph().record(name, std::move(y), {x}, [df](const Ctx &c) {
    Tensor *gx = c.grad_in[0];
    if (!gx)
      return;
    const Tensor &xv = *c.in[0];
    for (std::size_t i = 0; i < xv.size(); ++i)
      (*gx)[i] += c.grad[i] * df(xv[i], c.out[i]);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0)
    return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_lengths(const Tensor &x, std::span<const std::size_t> lengths,
                   const char *op) {
  require(x.rank() == 3, std::string(op) + ": expected [N,T,C], got " +
                             shape_to_string(x.shape()));
  require(lengths.size() == x.dim(0),
          std::string(op) + ": lengths size does not match batch");
}

} // namespace

Var matmul(Var a, Var b, bool transpose_b) {
  const Tensor &av = a.value();
  const Tensor &bv = b.value();
  require(av.rank() == 2 && bv.rank() == 2,
          "matmul: operands must be rank 2, got " + shape_to_string(av.shape()) +
              " and " + shape_to_string(bv.shape()));
  const std::size_t m = av.dim(0), k = av.dim(1);
  const std::size_t n = transpose_b ? bv.dim(0) : bv.dim(1);
  require((transpose_b ? bv.dim(1) : bv.dim(0)) == k,
          "matmul: inner dimensions differ " + shape_to_string(av.shape()) +
              " x " + shape_to_string(bv.shape()) +
              (transpose_b ? "^T" : ""));
  Tensor y({m, n});
  if (transpose_b)
    as_matrix(y, m, n).noalias() =
        as_matrix(av, m, k) * as_matrix(bv, n, k).transpose();
  else
    as_matrix(y, m, n).noalias() = as_matrix(av, m, k) * as_matrix(bv, k, n);
  return a.graph().record(
      "matmul", std::move(y), {a, b}, [m, k, n, transpose_b](const Ctx &c) {
        auto g = as_matrix(c.grad, m, n);
        if (Tensor *ga = c.grad_in[0]) {
          if (transpose_b)
            as_matrix(*ga, m, k).noalias() += g * as_matrix(*c.in[1], n, k);
          else
            as_matrix(*ga, m, k).noalias() +=
                g * as_matrix(*c.in[1], k, n).transpose();
        }
        if (Tensor *gb = c.grad_in[1]) {
          if (transpose_b)
            as_matrix(*gb, n, k).noalias() +=
                g.transpose() * as_matrix(*c.in[0], m, k);
          else
            as_matrix(*gb, k, n).noalias() +=
                as_matrix(*c.in[0], m, k).transpose() * g;
        }
      });
}

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tensor y = a.value();
  y.axpy(1.0, b.value());
  return a.graph().record("add", std::move(y), {a, b}, [](const Ctx &c) {
    for (Tensor *g : c.grad_in)
      if (g)
        g->axpy(1.0, c.grad);
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tensor y = a.value();
  y.axpy(-1.0, b.value());
  return a.graph().record("sub", std::move(y), {a, b}, [](const Ctx &c) {
    if (c.grad_in[0])
      c.grad_in[0]->axpy(1.0, c.grad);
    if (c.grad_in[1])
      c.grad_in[1]->axpy(-1.0, c.grad);
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  const Tensor &av = a.value();
  const Tensor &bv = b.value();
  Tensor y(av.shape());
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = av[i] * bv[i];
  return a.graph().record("mul", std::move(y), {a, b}, [](const Ctx &c) {
    for (int side = 0; side < 2; ++side) {
      Tensor *g = c.grad_in[side];
      if (!g)
        continue;
      const Tensor &other = *c.in[1 - side];
      for (std::size_t i = 0; i < g->size(); ++i)
        (*g)[i] += c.grad[i] * other[i];
    }
  });
}

Var add_bias(Var x, Var bias) {
  const Tensor &xv = x.value();
  const Tensor &bv = bias.value();
  const std::size_t n = last_dim(xv);
  require(bv.rank() == 1 && bv.dim(0) == n,
          "add_bias: bias " + shape_to_string(bv.shape()) +
              " does not match last axis of " + shape_to_string(xv.shape()));
  Tensor y = xv;
  const std::size_t rows = xv.size() / n;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j)
      y[r * n + j] += bv[j];
  return x.graph().record(
      "add_bias", std::move(y), {x, bias}, [rows, n](const Ctx &c) {
        if (c.grad_in[0])
          c.grad_in[0]->axpy(1.0, c.grad);
        if (Tensor *gb = c.grad_in[1])
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n; ++j)
              (*gb)[j] += c.grad[r * n + j];
      });
}

Var scale(Var x, double factor) {
  return unary(
      "scale", x, [factor](double v) { return factor * v; },
      [factor](double, double) { return factor; });
}

Var add_scalar(Var x, double offset) {
  return unary(
      "add_scalar", x, [offset](double v) { return v + offset; },
      [](double, double) { return 1.0; });
}

Var elu(Var x) {
  return unary(
      "elu", x, [](double v) { return v > 0 ? v : std::expm1(v); },
      [](double v, double y) { return v > 0 ? 1.0 : y + 1.0; });
}

Var sigmoid(Var x) {
  return unary(
      "sigmoid", x, stable_sigmoid,
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var x) {
  return unary(
      "relu", x, [](double v) { return v > 0 ? v : 0.0; },
      [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Var log(Var x) {
  return unary(
      "log", x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Var exp(Var x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Var log_sigmoid(Var x) {
  // log s(x) = -softplus(-x); derivative s(-x).
  return unary(
      "log_sigmoid", x,
      [](double v) {
        return v >= 0 ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v));
      },
      [](double v, double) { return stable_sigmoid(-v); });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data())
    s += v;
  return x.graph().record("sum", Tensor::scalar(s), {x}, [](const Ctx &c) {
    if (Tensor *g = c.grad_in[0])
      for (double &v : g->data())
        v += c.grad.item();
  });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  return scale(sum(x), 1.0 / n);
}

Var sum_last(Var x) {
  const Tensor &xv = x.value();
  const std::size_t n = last_dim(xv);
  Shape out_shape(xv.shape().begin(), xv.shape().end() - 1);
  Tensor y(out_shape);
  const std::size_t rows = y.size();
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      s += xv[r * n + j];
    y[r] = s;
  }
  return x.graph().record("sum_last", std::move(y), {x},
                          [rows, n](const Ctx &c) {
                            if (Tensor *g = c.grad_in[0])
                              for (std::size_t r = 0; r < rows; ++r)
                                for (std::size_t j = 0; j < n; ++j)
                                  (*g)[r * n + j] += c.grad[r];
                          });
}

namespace {

// Shared forward for softmax / log_softmax. Writes probabilities into `prob`
// and log-probabilities into `logp` (masked entries 0 in both).
void softmax_rows(const Tensor &x, double temperature, const TokenMask *mask,
                  Tensor &prob, Tensor &logp) {
  if (!(temperature > 0))
    throw std::invalid_argument("softmax: temperature must be positive");
  const std::size_t n = last_dim(x);
  if (mask && mask->size() != n)
    throw ShapeError("softmax: mask size does not match last axis");
  const std::size_t rows = x.size() / n;
  for (std::size_t r = 0; r < rows; ++r) {
    const double *xr = x.data().data() + r * n;
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (!mask || (*mask)[j])
        m = std::max(m, xr[j]);
    if (!std::isfinite(m))
      throw NumericError("softmax: no admissible entries");
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (!mask || (*mask)[j])
        z += std::exp((xr[j] - m) / temperature);
    const double log_z = std::log(z);
    for (std::size_t j = 0; j < n; ++j) {
      if (mask && !(*mask)[j]) {
        prob[r * n + j] = 0.0;
        logp[r * n + j] = 0.0;
        continue;
      }
      const double l = (xr[j] - m) / temperature - log_z;
      logp[r * n + j] = l;
      prob[r * n + j] = std::exp(l);
    }
  }
}

} // namespace

Var softmax(Var x, double temperature, const TokenMask *mask) {
  const Tensor &xv = x.value();
  Tensor prob(xv.shape()), logp(xv.shape());
  softmax_rows(xv, temperature, mask, prob, logp);
  const std::size_t n = last_dim(xv);
  return x.graph().record(
      "softmax", std::move(prob), {x}, [n, temperature](const Ctx &c) {
        Tensor *g = c.grad_in[0];
        if (!g)
          return;
        const Tensor &y = c.out;
        const std::size_t rows = y.size() / n;
        for (std::size_t r = 0; r < rows; ++r) {
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j)
            dot += c.grad[r * n + j] * y[r * n + j];
          for (std::size_t j = 0; j < n; ++j)
            (*g)[r * n + j] +=
                y[r * n + j] * (c.grad[r * n + j] - dot) / temperature;
        }
      });
}

Var log_softmax(Var x, double temperature, const TokenMask *mask) {
  const Tensor &xv = x.value();
  auto prob = std::make_shared<Tensor>(xv.shape());
  Tensor logp(xv.shape());
  softmax_rows(xv, temperature, mask, *prob, logp);
  const std::size_t n = last_dim(xv);
  std::shared_ptr<const TokenMask> m =
      mask ? std::make_shared<TokenMask>(*mask) : nullptr;
  return x.graph().record(
      "log_softmax", std::move(logp), {x},
      [n, temperature, prob, m](const Ctx &c) {
        Tensor *g = c.grad_in[0];
        if (!g)
          return;
        const std::size_t rows = prob->size() / n;
        for (std::size_t r = 0; r < rows; ++r) {
          double gsum = 0.0;
          for (std::size_t j = 0; j < n; ++j)
            if (!m || (*m)[j])
              gsum += c.grad[r * n + j];
          for (std::size_t j = 0; j < n; ++j) {
            if (m && !(*m)[j])
              continue;
            (*g)[r * n + j] +=
                (c.grad[r * n + j] - (*prob)[r * n + j] * gsum) / temperature;
          }
        }
      });
}

Var one_hot_gather(Var table, std::span<const TokenId> ids) {
  const Tensor &tv = table.value();
  require(tv.rank() == 2, "one_hot_gather: table must be rank 2");
  const std::size_t vocab = tv.dim(0), d = tv.dim(1);
  Tensor y({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= vocab)
      throw std::out_of_range("one_hot_gather: id " + std::to_string(ids[i]) +
                              " >= " + std::to_string(vocab));
    std::copy_n(tv.data().data() + ids[i] * d, d, y.data().data() + i * d);
  }
  auto idx = std::make_shared<std::vector<TokenId>>(ids.begin(), ids.end());
  return table.graph().record(
      "one_hot_gather", std::move(y), {table}, [idx, d](const Ctx &c) {
        Tensor *g = c.grad_in[0];
        if (!g)
          return;
        for (std::size_t i = 0; i < idx->size(); ++i)
          for (std::size_t j = 0; j < d; ++j)
            (*g)[(*idx)[i] * d + j] += c.grad[i * d + j];
      });
}

Var pick_last(Var x, std::span<const TokenId> index) {
  const Tensor &xv = x.value();
  const std::size_t n = last_dim(xv);
  const std::size_t rows = xv.size() / n;
  require(index.size() == rows, "pick_last: index size does not match rows");
  Shape out_shape(xv.shape().begin(), xv.shape().end() - 1);
  Tensor y(out_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    if (index[r] >= n)
      throw std::out_of_range("pick_last: index out of range");
    y[r] = xv[r * n + index[r]];
  }
  auto idx = std::make_shared<std::vector<TokenId>>(index.begin(), index.end());
  return x.graph().record("pick_last", std::move(y), {x},
                          [idx, n](const Ctx &c) {
                            if (Tensor *g = c.grad_in[0])
                              for (std::size_t r = 0; r < idx->size(); ++r)
                                (*g)[r * n + (*idx)[r]] += c.grad[r];
                          });
}

Var stop_gradient(Var x) {
  return x.graph().record("stop_gradient", x.value(), {x}, nullptr);
}

Var reshape(Var x, Shape shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  return x.graph().record("reshape", std::move(y), {x}, [](const Ctx &c) {
    if (Tensor *g = c.grad_in[0])
      for (std::size_t i = 0; i < g->size(); ++i)
        (*g)[i] += c.grad[i];
  });
}

Var stack_steps(std::span<const Var> steps) {
  require(!steps.empty(), "stack_steps: no steps");
  const Shape s0 = steps[0].shape();
  require(s0.size() == 2, "stack_steps: steps must be [N, C]");
  const std::size_t n = s0[0], ch = s0[1], t_len = steps.size();
  Tensor y({n, t_len, ch});
  for (std::size_t t = 0; t < t_len; ++t) {
    require(steps[t].shape() == s0, "stack_steps: inconsistent step shapes");
    const Tensor &sv = steps[t].value();
    for (std::size_t b = 0; b < n; ++b)
      std::copy_n(sv.data().data() + b * ch, ch, &y.at(b, t, 0));
  }
  std::vector<Var> inputs(steps.begin(), steps.end());
  return steps[0].graph().record(
      "stack_steps", std::move(y), std::move(inputs),
      [n, ch, t_len](const Ctx &c) {
        for (std::size_t t = 0; t < t_len; ++t) {
          Tensor *g = c.grad_in[t];
          if (!g)
            continue;
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t j = 0; j < ch; ++j)
              (*g)[b * ch + j] += c.grad[(b * t_len + t) * ch + j];
        }
      });
}

Var mask_steps(Var x, std::span<const std::size_t> lengths) {
  const Tensor &xv = x.value();
  check_lengths(xv, lengths, "mask_steps");
  const std::size_t t_len = xv.dim(1), ch = xv.dim(2);
  auto lens = std::make_shared<std::vector<std::size_t>>(lengths.begin(),
                                                          lengths.end());
  Tensor y = xv;
  for (std::size_t b = 0; b < lens->size(); ++b)
    for (std::size_t t = std::min((*lens)[b], t_len); t < t_len; ++t)
      std::fill_n(&y.at(b, t, 0), ch, 0.0);
  return x.graph().record(
      "mask_steps", std::move(y), {x}, [lens, t_len, ch](const Ctx &c) {
        Tensor *g = c.grad_in[0];
        if (!g)
          return;
        for (std::size_t b = 0; b < lens->size(); ++b) {
          const std::size_t valid = std::min((*lens)[b], t_len);
          for (std::size_t i = b * t_len * ch; i < (b * t_len + valid) * ch;
               ++i)
            (*g)[i] += c.grad[i];
        }
      });
}

Var conv1d_same(Var x, Var kernel, Var bias, std::size_t width) {
  const Tensor &xv = x.value();
  const Tensor &kv = kernel.value();
  require(xv.rank() == 3, "conv1d_same: input must be [N,T,C]");
  require(width >= 1, "conv1d_same: width must be >= 1");
  const std::size_t n = xv.dim(0), t_len = xv.dim(1), cin = xv.dim(2);
  require(kv.rank() == 2 && kv.dim(1) == width * cin,
          "conv1d_same: kernel " + shape_to_string(kv.shape()) +
              " does not match width " + std::to_string(width) + " x " +
              std::to_string(cin) + " input channels");
  const std::size_t cout = kv.dim(0);
  require(bias.value().rank() == 1 && bias.value().dim(0) == cout,
          "conv1d_same: bias size does not match output channels");
  const std::ptrdiff_t pad_left = static_cast<std::ptrdiff_t>((width - 1) / 2);
  const std::size_t cols = width * cin;

  auto patches = std::make_shared<Tensor>(Shape{n * t_len, cols});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t t = 0; t < t_len; ++t) {
      double *row = patches->data().data() + (b * t_len + t) * cols;
      for (std::size_t k = 0; k < width; ++k) {
        const std::ptrdiff_t src =
            static_cast<std::ptrdiff_t>(t + k) - pad_left;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_len))
          continue;
        std::copy_n(xv.data().data() +
                        (b * t_len + static_cast<std::size_t>(src)) * cin,
                    cin, row + k * cin);
      }
    }
  Tensor y({n, t_len, cout});
  auto ym = as_matrix(y, n * t_len, cout);
  ym.noalias() = as_matrix(*patches, n * t_len, cols) *
                 as_matrix(kv, cout, cols).transpose();
  const Tensor &bv = bias.value();
  for (std::size_t r = 0; r < n * t_len; ++r)
    for (std::size_t o = 0; o < cout; ++o)
      y[r * cout + o] += bv[o];

  return x.graph().record(
      "conv1d_same", std::move(y), {x, kernel, bias},
      [patches, n, t_len, cin, cout, cols, width, pad_left](const Ctx &c) {
        const std::size_t rows = n * t_len;
        auto g = as_matrix(c.grad, rows, cout);
        if (Tensor *gk = c.grad_in[1])
          as_matrix(*gk, cout, cols).noalias() +=
              g.transpose() * as_matrix(*patches, rows, cols);
        if (Tensor *gb = c.grad_in[2])
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t o = 0; o < cout; ++o)
              (*gb)[o] += c.grad[r * cout + o];
        if (Tensor *gx = c.grad_in[0]) {
          Tensor dpatch({rows, cols});
          as_matrix(dpatch, rows, cols).noalias() =
              g * as_matrix(*c.in[1], cout, cols);
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t t = 0; t < t_len; ++t) {
              const double *row = dpatch.data().data() + (b * t_len + t) * cols;
              for (std::size_t k = 0; k < width; ++k) {
                const std::ptrdiff_t src =
                    static_cast<std::ptrdiff_t>(t + k) - pad_left;
                if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_len))
                  continue;
                double *dst = &gx->at(b, static_cast<std::size_t>(src), 0);
                for (std::size_t ch = 0; ch < cin; ++ch)
                  dst[ch] += row[k * cin + ch];
              }
            }
        }
      });
}

Var mean_pool(Var x, std::span<const std::size_t> lengths) {
  const Tensor &xv = x.value();
  check_lengths(xv, lengths, "mean_pool");
  const std::size_t n = xv.dim(0), t_len = xv.dim(1), ch = xv.dim(2);
  const std::size_t t_out = (t_len + 1) / 2;
  // count[b * t_out + j]: number of valid inputs in window j.
  auto count = std::make_shared<std::vector<std::size_t>>(n * t_out, 0);
  Tensor y({n, t_out, ch});
  for (std::size_t b = 0; b < n; ++b) {
    const std::size_t valid = std::min(lengths[b], t_len);
    for (std::size_t j = 0; j < t_out; ++j) {
      std::size_t cnt = 0;
      for (std::size_t i = 2 * j; i < std::min(2 * j + 2, valid); ++i, ++cnt)
        for (std::size_t k = 0; k < ch; ++k)
          y.at(b, j, k) += xv.at(b, i, k);
      (*count)[b * t_out + j] = cnt;
      if (cnt > 1)
        for (std::size_t k = 0; k < ch; ++k)
          y.at(b, j, k) /= static_cast<double>(cnt);
    }
  }
  return x.graph().record(
      "mean_pool", std::move(y), {x}, [count, n, t_len, t_out, ch](const Ctx &c) {
        Tensor *g = c.grad_in[0];
        if (!g)
          return;
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t j = 0; j < t_out; ++j) {
            const std::size_t cnt = (*count)[b * t_out + j];
            for (std::size_t i = 2 * j; i < 2 * j + cnt && i < t_len; ++i)
              for (std::size_t k = 0; k < ch; ++k)
                g->at(b, i, k) += c.grad.at(b, j, k) / static_cast<double>(cnt);
          }
      });
}

Var global_mean_pool(Var x, std::span<const std::size_t> lengths) {
  const Tensor &xv = x.value();
  check_lengths(xv, lengths, "global_mean_pool");
  const std::size_t n = xv.dim(0), t_len = xv.dim(1), ch = xv.dim(2);
  auto valid = std::make_shared<std::vector<std::size_t>>(n);
  Tensor y({n, ch});
  for (std::size_t b = 0; b < n; ++b) {
    (*valid)[b] = std::min(lengths[b], t_len);
    if ((*valid)[b] == 0)
      continue;
    for (std::size_t t = 0; t < (*valid)[b]; ++t)
      for (std::size_t k = 0; k < ch; ++k)
        y.at(b, k) += xv.at(b, t, k);
    for (std::size_t k = 0; k < ch; ++k)
      y.at(b, k) /= static_cast<double>((*valid)[b]);
  }
  return x.graph().record(
      "global_mean_pool", std::move(y), {x}, [valid, n, ch](const Ctx &c) {
        Tensor *g = c.grad_in[0];
        if (!g)
          return;
        for (std::size_t b = 0; b < n; ++b) {
          if ((*valid)[b] == 0)
            continue;
          const double inv = 1.0 / static_cast<double>((*valid)[b]);
          for (std::size_t t = 0; t < (*valid)[b]; ++t)
            for (std::size_t k = 0; k < ch; ++k)
              g->at(b, t, k) += c.grad.at(b, k) * inv;
        }
      });
}

Var row_sq_norms(Var w) {
  const Tensor &wv = w.value();
  require(wv.rank() == 2, "row_sq_norms: expected rank 2");
  const std::size_t rows = wv.dim(0), d = wv.dim(1);
  Tensor y({rows});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j)
      y[r] += wv.at(r, j) * wv.at(r, j);
  return w.graph().record("row_sq_norms", std::move(y), {w},
                          [rows, d](const Ctx &c) {
                            Tensor *g = c.grad_in[0];
                            if (!g)
                              return;
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t j = 0; j < d; ++j)
                                g->at(r, j) += 2.0 * c.in[0]->at(r, j) * c.grad[r];
                          });
}

Var gru_cell(Var x, Var h, const GruWeights &w) {
  Var z = sigmoid(add_bias(add(matmul(x, w.w_xz), matmul(h, w.w_hz)), w.b_z));
  Var r = sigmoid(add_bias(add(matmul(x, w.w_xr), matmul(h, w.w_hr)), w.b_r));
  Var cand = tanh(
      add_bias(add(matmul(x, w.w_xn), matmul(mul(r, h), w.w_hn)), w.b_n));
  return add(cand, mul(z, sub(h, cand)));
}

} // namespace taylorgan::ops
