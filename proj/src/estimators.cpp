// SPDX-License-Identifier: Apache-2.0
#include "taylorgan/estimators.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace taylorgan {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Below this the linear-space denominator is recomputed in log space.
constexpr double kTinyDenominator = 1e-200;

std::vector<double> sample_weights(std::span<const double> weights, std::size_t n) {
  if (weights.empty())
    return std::vector<double>(n, 1.0 / double(n));
  if (weights.size() != n)
    throw std::invalid_argument("surrogate weights must have one entry per row");
  return {weights.begin(), weights.end()};
}

void check_policy(const PolicyOutputs &policy, const SequenceBatch &tokens) {
  const Shape s = policy.log_probs.shape();
  if (s.size() != 3 || s[0] != tokens.batch || s[1] != tokens.max_len)
    throw ShapeError("policy outputs do not match the token batch");
}

} // namespace

std::string estimator_name(EstimatorKind kind) {
  switch (kind) {
  case EstimatorKind::kReinforce:
    return "reinforce";
  case EstimatorKind::kStraightThrough:
    return "straight_through";
  case EstimatorKind::kGumbelSoftmax:
    return "gumbel_softmax";
  case EstimatorKind::kTaylor:
    return "taylor";
  case EstimatorKind::kMle:
    return "mle";
  }
  return "unknown";
}

EstimatorKind parse_estimator(const std::string &name) {
  for (EstimatorKind k :
       {EstimatorKind::kReinforce, EstimatorKind::kStraightThrough,
        EstimatorKind::kGumbelSoftmax, EstimatorKind::kTaylor, EstimatorKind::kMle})
    if (estimator_name(k) == name)
      return k;
  throw std::invalid_argument("unknown estimator '" + name + "'");
}

double BaselineState::update(std::span<const double> rewards) {
  if (rewards.empty())
    throw std::invalid_argument("baseline update needs a non-empty batch");
  double mean = 0.0;
  for (double r : rewards)
    mean += r;
  mean /= double(rewards.size());
  value_ = initialized_ ? decay_ * value_ + (1.0 - decay_) * mean : mean;
  initialized_ = true;
  return value_;
}

KernelMatrix hamming_kernel(const Tensor &embedding, double bandwidth,
                            const TokenMask &mask, bool corrupt_normalization) {
  if (!(bandwidth > 0))
    throw std::invalid_argument("kernel bandwidth must be positive");
  if (embedding.rank() != 2 || mask.size() != embedding.dim(0))
    throw ShapeError("hamming_kernel: mask does not match embedding rows");
  const std::size_t v = embedding.dim(0), d = embedding.dim(1);
  ConstMap e(embedding.data().data(), Eigen::Index(v), Eigen::Index(d));
  RowMat gram = e * e.transpose();

  KernelMatrix out;
  out.k = Tensor({v, v});
  out.log_k = Tensor({v, v}, kNegInf);
  out.mask = mask;
  out.bandwidth = bandwidth;
  const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
  bool corrupted = false;
  std::vector<double> a(v);
  for (std::size_t col = 0; col < v; ++col) {
    if (!mask[col])
      continue;
    // The diagonal term is exp(0) and is the column maximum.
    double total = 0.0;
    for (std::size_t u = 0; u < v; ++u) {
      if (!mask[u])
        continue;
      const double d2 =
          u == col ? 0.0 : std::max(0.0, gram(u, u) + gram(col, col) - 2.0 * gram(u, col));
      a[u] = -d2 * inv;
      total += std::exp(a[u]);
    }
    double log_c = -std::log(total);
    if (corrupt_normalization && !corrupted) {
      log_c += std::log(1.5);
      corrupted = true;
    }
    for (std::size_t u = 0; u < v; ++u) {
      if (!mask[u])
        continue;
      out.log_k.at(u, col) = a[u] + log_c;
      out.k.at(u, col) = std::exp(a[u] + log_c);
    }
  }
  return out;
}

double kernel_normalization_error(const KernelMatrix &kernel) {
  const std::size_t v = kernel.k.dim(0);
  double worst = 0.0;
  for (std::size_t col = 0; col < v; ++col) {
    if (!kernel.mask[col])
      continue;
    double s = 0.0;
    for (std::size_t u = 0; u < v; ++u)
      if (kernel.mask[u])
        s += kernel.k.at(u, col);
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

Tensor taylor_advantages(const Tensor &log_probs, const Tensor &probs,
                         const SequenceBatch &tokens, const Tensor &rtilde,
                         const KernelMatrix &kernel, double baseline) {
  const std::size_t n = tokens.batch, t_len = tokens.max_len;
  const std::size_t v = kernel.k.dim(0);
  const Shape want{n, t_len, v};
  if (log_probs.shape() != want || probs.shape() != want || rtilde.shape() != want)
    throw ShapeError("taylor_advantages: expected [N,T,V] = " +
                     shape_to_string(want));
  const Eigen::Index rows = Eigen::Index(n * t_len), cols = Eigen::Index(v);
  ConstMap p(probs.data().data(), rows, cols);
  ConstMap k(kernel.k.data().data(), cols, cols);
  RowMat denom = p * k.transpose(); // denom(nt, v) = sum_u K[v,u] pi(u)

  Tensor adv({n, t_len, v});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t t = 0; t < std::min(tokens.lengths[b], t_len); ++t) {
      const std::size_t r = b * t_len + t;
      const TokenId x = tokens.at(b, t);
      if (x >= v)
        throw std::out_of_range("taylor_advantages: token id out of range");
      for (std::size_t y = 0; y < v; ++y) {
        if (!kernel.mask[y])
          continue;
        double w;
        const double den = denom(Eigen::Index(r), Eigen::Index(y));
        if (den > kTinyDenominator) {
          w = kernel.k.at(y, x) * probs.at(b, t, y) / den;
        } else {
          double hi = kNegInf;
          for (std::size_t u = 0; u < v; ++u)
            if (kernel.mask[u] && kernel.log_k.at(y, u) > kNegInf)
              hi = std::max(hi, kernel.log_k.at(y, u) + log_probs.at(b, t, u));
          double s = 0.0;
          for (std::size_t u = 0; u < v; ++u)
            if (kernel.mask[u] && kernel.log_k.at(y, u) > kNegInf)
              s += std::exp(kernel.log_k.at(y, u) + log_probs.at(b, t, u) - hi);
          const double log_num = kernel.log_k.at(y, x) + log_probs.at(b, t, y);
          w = log_num == kNegInf ? 0.0 : std::exp(log_num - hi - std::log(s));
        }
        adv.at(b, t, y) = w * (rtilde.at(b, t, y) - baseline);
      }
    }
  return adv;
}

Var taylor_surrogate(const PolicyOutputs &policy, const Tensor &advantages,
                     std::span<const double> weights) {
  const Shape s = policy.log_probs.shape();
  if (advantages.shape() != s)
    throw ShapeError("taylor_surrogate: advantages must match policy shape");
  const std::size_t n = s[0], per_row = s[1] * s[2];
  const std::vector<double> w = sample_weights(weights, n);
  Tensor coef = advantages;
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t i = 0; i < per_row; ++i)
      coef[b * per_row + i] *= w[b];
  Graph &g = policy.log_probs.graph();
  return ops::sum(ops::mul(policy.log_probs, g.constant(std::move(coef))));
}

Var reinforce_surrogate(const PolicyOutputs &policy, const SequenceBatch &tokens,
                        std::span<const double> rewards, double baseline,
                        std::span<const double> weights) {
  check_policy(policy, tokens);
  if (rewards.size() != tokens.batch)
    throw std::invalid_argument("reinforce_surrogate: one reward per sequence");
  const std::size_t n = tokens.batch, t_len = tokens.max_len;
  const std::vector<double> w = sample_weights(weights, n);
  Tensor coef({n, t_len});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t t = 0; t < std::min(tokens.lengths[b], t_len); ++t)
      coef.at(b, t) = w[b] * (rewards[b] - baseline);
  Var lp = token_log_probs(policy, tokens);
  return ops::sum(ops::mul(lp, lp.graph().constant(std::move(coef))));
}

Var straight_through_surrogate(const PolicyOutputs &policy,
                               const SequenceBatch &tokens,
                               const Tensor &delta_e, const Tensor &embedding,
                               std::span<const double> weights) {
  check_policy(policy, tokens);
  const std::size_t n = tokens.batch, t_len = tokens.max_len;
  const std::size_t v = policy.probs.shape()[2];
  if (embedding.rank() != 2 || embedding.dim(0) != v || delta_e.rank() != 3 ||
      delta_e.dim(0) != n || delta_e.dim(1) != t_len ||
      delta_e.dim(2) != embedding.dim(1))
    throw ShapeError("straight_through_surrogate: delta_e/embedding mismatch");
  const std::vector<double> w = sample_weights(weights, n);
  // coef[n,t,v] = w_n * e_v . dE_{n,t}
  Tensor coef({n, t_len, v});
  const std::size_t d = embedding.dim(1);
  Eigen::Map<RowMat> cm(coef.data().data(), Eigen::Index(n * t_len), Eigen::Index(v));
  cm.noalias() = ConstMap(delta_e.data().data(), Eigen::Index(n * t_len), Eigen::Index(d)) *
                 ConstMap(embedding.data().data(), Eigen::Index(v), Eigen::Index(d)).transpose();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t t = 0; t < t_len; ++t) {
      const double scale = t < tokens.lengths[b] ? w[b] : 0.0;
      for (std::size_t j = 0; j < v; ++j)
        coef.at(b, t, j) *= scale;
    }
  Graph &g = policy.probs.graph();
  return ops::sum(ops::mul(policy.probs, g.constant(std::move(coef))));
}

Var entropy_bonus(const PolicyOutputs &policy, const SequenceBatch &tokens,
                  double coef, std::span<const double> weights) {
  check_policy(policy, tokens);
  const std::size_t n = tokens.batch, t_len = tokens.max_len;
  const std::vector<double> w = sample_weights(weights, n);
  // sum_v p log p = -H, per step
  Var neg_h = ops::sum_last(ops::mul(policy.probs, policy.log_probs));
  Tensor m({n, t_len});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t t = 0; t < std::min(tokens.lengths[b], t_len); ++t)
      m.at(b, t) = -coef * w[b];
  return ops::sum(ops::mul(neg_h, neg_h.graph().constant(std::move(m))));
}

double gumbel_temperature(const EstimatorConfig &config, std::size_t step,
                          std::size_t total) {
  if (total <= 1)
    return config.gumbel_start;
  const double frac = std::min(1.0, double(step) / double(total - 1));
  return config.gumbel_start * std::pow(config.gumbel_end / config.gumbel_start, frac);
}

GumbelStep gumbel_softmax_step(Graph &graph, Generator &gen, Discriminator &disc,
                               std::size_t count, std::size_t max_len, double tau,
                               double entropy_weight, std::mt19937_64 &rng) {
  if (!(tau > 0))
    throw std::invalid_argument("gumbel temperature must be positive");
  const GeneratorConfig &cfg = gen.config();
  const std::size_t v = cfg.vocab_size;
  if (disc.config().vocab_size != v)
    throw std::invalid_argument("generator and discriminator vocabularies differ");
  ops::GruWeights w = gen.gru_vars(graph);
  Var gen_table = graph.param(gen.embedding());
  Var h = gen.initial_state(graph, count);
  std::vector<TokenId> sos(count, cfg.sos);
  Var input = ops::one_hot_gather(gen_table, sos);

  GumbelStep out;
  out.hard.batch = count;
  out.hard.max_len = max_len;
  out.hard.ids.assign(count * max_len, Vocabulary::kPad);
  out.hard.lengths.assign(count, max_len);
  std::vector<bool> alive(count, true);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  std::vector<Var> soft_steps, logp_steps, prob_steps;
  for (std::size_t t = 0; t < max_len; ++t) {
    h = ops::gru_cell(input, h, w);
    Var logits = gen.logits_from_state(graph, h);
    Tensor noise({count, v});
    for (double &g : noise.data()) {
      double u = uniform(rng);
      while (u <= 0.0)
        u = uniform(rng);
      g = -std::log(-std::log(u));
    }
    Var perturbed = ops::add(logits, graph.constant(noise));
    Var y = ops::softmax(perturbed, tau, &cfg.candidates);
    soft_steps.push_back(y);
    logp_steps.push_back(ops::log_softmax(logits, 1.0, &cfg.candidates));
    prob_steps.push_back(ops::softmax(logits, 1.0, &cfg.candidates));
    input = ops::matmul(y, gen_table);

    const Tensor &pv = perturbed.value();
    for (std::size_t b = 0; b < count; ++b) {
      if (!alive[b])
        continue;
      std::size_t best = v;
      for (std::size_t j = 0; j < v; ++j)
        if (cfg.candidates[j] && (best == v || pv.at(b, j) > pv.at(b, best)))
          best = j;
      out.hard.at(b, t) = TokenId(best);
      if (cfg.eos && TokenId(best) == *cfg.eos) {
        alive[b] = false;
        out.hard.lengths[b] = t + 1;
      }
    }
  }
  Var soft = ops::reshape(ops::stack_steps(soft_steps), {count * max_len, v});
  Var emb = ops::reshape(ops::matmul(soft, graph.param(disc.embedding())),
                         {count, max_len, disc.config().embed_dim});
  Var r = disc.forward_from_embedding(graph, emb, out.hard.lengths);
  out.mean_reward = ops::mean(r).value().item();

  PolicyOutputs pol{ops::stack_steps(logp_steps), ops::stack_steps(prob_steps)};
  Var bonus = entropy_bonus(pol, out.hard, entropy_weight);
  out.loss = ops::sub(ops::scale(ops::mean(r), -1.0), bonus);
  return out;
}

} // namespace taylorgan
