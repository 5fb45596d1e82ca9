// SPDX-License-Identifier: Apache-2.0
#include "taylorgan/generator.hpp"

#include <cmath>

namespace taylorgan {

namespace {

Parameter uniform_param(std::string name, Shape shape, double limit,
                        std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t(std::move(shape));
  for (double &x : t.data())
    x = dist(rng);
  return Parameter{std::move(name), std::move(t)};
}

Parameter normal_param(std::string name, Shape shape, double stddev,
                       std::mt19937_64 &rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(std::move(shape));
  for (double &x : t.data())
    x = dist(rng);
  return Parameter{std::move(name), std::move(t)};
}

std::size_t sample_index(std::span<const double> probs, double u) {
  double cum = 0.0;
  std::size_t last = probs.size();
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (probs[j] <= 0)
      continue;
    last = j;
    cum += probs[j];
    if (u < cum)
      return j;
  }
  if (last == probs.size())
    throw NumericError("sampling from an all-zero distribution");
  return last;
}

} // namespace

GeneratorConfig GeneratorConfig::for_vocab(const Vocabulary &vocab,
                                           std::size_t embed_dim,
                                           std::size_t hidden_dim) {
  GeneratorConfig c;
  c.vocab_size = vocab.size();
  c.embed_dim = embed_dim;
  c.hidden_dim = hidden_dim;
  c.candidates = vocab.candidate_mask();
  return c;
}

Generator::Generator(GeneratorConfig config, std::uint64_t seed)
    : config_(std::move(config)) {
  const std::size_t v = config_.vocab_size, d = config_.embed_dim,
                    h = config_.hidden_dim;
  if (v == 0 || d == 0 || h == 0)
    throw std::invalid_argument("generator dimensions must be positive");
  if (config_.candidates.empty())
    config_.candidates.assign(v, true);
  if (config_.candidates.size() != v)
    throw std::invalid_argument("candidate mask size does not match vocabulary");
  if (config_.sos >= v || (config_.eos && *config_.eos >= v))
    throw std::invalid_argument("special token id out of range");

  std::mt19937_64 rng(seed);
  const double rec = 1.0 / std::sqrt(static_cast<double>(h));
  embedding_ = normal_param("gen/embedding", {v, d},
                            1.0 / std::sqrt(static_cast<double>(d)), rng);
  w_xz_ = uniform_param("gen/gru/w_xz", {d, h}, rec, rng);
  w_hz_ = uniform_param("gen/gru/w_hz", {h, h}, rec, rng);
  b_z_ = Parameter{"gen/gru/b_z", Tensor({h})};
  w_xr_ = uniform_param("gen/gru/w_xr", {d, h}, rec, rng);
  w_hr_ = uniform_param("gen/gru/w_hr", {h, h}, rec, rng);
  b_r_ = Parameter{"gen/gru/b_r", Tensor({h})};
  w_xn_ = uniform_param("gen/gru/w_xn", {d, h}, rec, rng);
  w_hn_ = uniform_param("gen/gru/w_hn", {h, h}, rec, rng);
  b_n_ = Parameter{"gen/gru/b_n", Tensor({h})};
  proj_w_ = uniform_param("gen/proj/w", {h, d},
                          std::sqrt(6.0 / static_cast<double>(h + d)), rng);
  proj_b_ = Parameter{"gen/proj/b", Tensor({d})};
}

std::vector<Parameter *> Generator::parameters() {
  return {&embedding_, &w_xz_, &w_hz_, &b_z_, &w_xr_, &w_hr_, &b_r_,
          &w_xn_,      &w_hn_, &b_n_,  &proj_w_, &proj_b_};
}

std::vector<const Parameter *> Generator::parameters() const {
  return {&embedding_, &w_xz_, &w_hz_, &b_z_, &w_xr_, &w_hr_, &b_r_,
          &w_xn_,      &w_hn_, &b_n_,  &proj_w_, &proj_b_};
}

void Generator::set_embedding(const Tensor &matrix) {
  if (matrix.shape() != embedding_.value.shape())
    throw ShapeError("generator embedding must be " +
                     shape_to_string(embedding_.value.shape()));
  embedding_.value = matrix;
}

ops::GruWeights Generator::gru_vars(Graph &g) {
  return ops::GruWeights{g.param(w_xz_), g.param(w_hz_), g.param(b_z_),
                         g.param(w_xr_), g.param(w_hr_), g.param(b_r_),
                         g.param(w_xn_), g.param(w_hn_), g.param(b_n_)};
}

Var Generator::initial_state(Graph &g, std::size_t batch) const {
  return g.constant(Tensor({batch, config_.hidden_dim}));
}

Var Generator::logits_from_state(Graph &g, Var hidden) {
  Var proj = ops::add_bias(ops::matmul(hidden, g.param(proj_w_)),
                           g.param(proj_b_));
  return ops::matmul(proj, g.param(embedding_), /*transpose_b=*/true);
}

PolicyOutputs Generator::teacher_force(Graph &g, const SequenceBatch &batch) {
  const std::size_t n = batch.batch, t_len = batch.max_len;
  if (n == 0 || t_len == 0)
    throw std::invalid_argument("teacher_force: empty batch");
  ops::GruWeights w = gru_vars(g);
  Var table = g.param(embedding_);
  Var h = initial_state(g, n);
  std::vector<Var> states;
  states.reserve(t_len);
  std::vector<TokenId> inputs(n, config_.sos);
  for (std::size_t t = 0; t < t_len; ++t) {
    if (t > 0)
      for (std::size_t b = 0; b < n; ++b)
        inputs[b] = batch.at(b, t - 1);
    h = ops::gru_cell(ops::one_hot_gather(table, inputs), h, w);
    states.push_back(h);
  }
  Var hs = ops::reshape(ops::stack_steps(states), {n * t_len, config_.hidden_dim});
  Var logits = logits_from_state(g, hs);
  const TokenMask *mask = &config_.candidates;
  Var logp = ops::reshape(ops::log_softmax(logits, 1.0, mask),
                          {n, t_len, config_.vocab_size});
  Var probs = ops::reshape(ops::softmax(logits, 1.0, mask),
                           {n, t_len, config_.vocab_size});
  return PolicyOutputs{logp, probs};
}

Var token_log_probs(const PolicyOutputs &policy, const SequenceBatch &batch) {
  const Shape s = policy.log_probs.shape();
  const std::size_t n = s[0], t_len = s[1], v = s[2];
  if (n != batch.batch || t_len != batch.max_len)
    throw ShapeError("token_log_probs: batch does not match policy outputs");
  Var flat = ops::reshape(policy.log_probs, {n * t_len, v});
  Var picked = ops::pick_last(flat, batch.ids);
  Tensor mask({n * t_len});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t t = 0; t < std::min(batch.lengths[b], t_len); ++t)
      mask[b * t_len + t] = 1.0;
  Graph &g = policy.log_probs.graph();
  return ops::reshape(ops::mul(picked, g.constant(std::move(mask))), {n, t_len});
}

PolicyRollout Generator::rollout(std::size_t count, std::size_t max_len,
                                 double temperature, std::mt19937_64 &rng) {
  if (!(temperature > 0))
    throw std::invalid_argument("rollout: temperature must be positive");
  if (count == 0 || max_len == 0)
    throw std::invalid_argument("rollout: empty request");
  const std::size_t v = config_.vocab_size;
  Graph g(GradMode::kDisabled);
  ops::GruWeights w = gru_vars(g);
  Var table = g.param(embedding_);
  Var h = initial_state(g, count);

  PolicyRollout out;
  out.temperature = temperature;
  out.tokens.batch = count;
  out.tokens.max_len = max_len;
  out.tokens.ids.assign(count * max_len, Vocabulary::kPad);
  out.tokens.lengths.assign(count, 0);
  out.step_dists = Tensor({count, max_len, v});
  out.step_logprobs = Tensor({count, max_len});
  out.step_entropies = Tensor({count, max_len});

  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<TokenId> inputs(count, config_.sos);
  std::vector<bool> alive(count, true);
  for (std::size_t t = 0; t < max_len; ++t) {
    h = ops::gru_cell(ops::one_hot_gather(table, inputs), h, w);
    Var logits = logits_from_state(g, h);
    Var logp = ops::log_softmax(logits, temperature, &config_.candidates);
    Var prob = ops::softmax(logits, temperature, &config_.candidates);
    const Tensor &pv = prob.value();
    const Tensor &lv = logp.value();
    for (std::size_t b = 0; b < count; ++b) {
      std::span<const double> row(pv.data().data() + b * v, v);
      std::copy(row.begin(), row.end(), &out.step_dists.at(b, t, 0));
      if (!alive[b]) {
        inputs[b] = Vocabulary::kPad;
        continue;
      }
      const TokenId tok = static_cast<TokenId>(sample_index(row, uniform(rng)));
      out.tokens.at(b, t) = tok;
      out.tokens.lengths[b] = t + 1;
      out.step_logprobs.at(b, t) = lv[b * v + tok];
      double ent = 0.0;
      for (std::size_t j = 0; j < v; ++j)
        if (row[j] > 0)
          ent -= row[j] * lv[b * v + j];
      out.step_entropies.at(b, t) = ent;
      inputs[b] = tok;
      if (config_.eos && tok == *config_.eos)
        alive[b] = false;
    }
  }
  return out;
}

std::vector<double> Generator::log_prob(const SequenceBatch &batch) {
  Graph g(GradMode::kDisabled);
  PolicyOutputs pol = teacher_force(g, batch);
  const Tensor &lp = token_log_probs(pol, batch).value();
  std::vector<double> out(batch.batch, 0.0);
  for (std::size_t b = 0; b < batch.batch; ++b)
    for (std::size_t t = 0; t < batch.max_len; ++t)
      out[b] += lp.at(b, t);
  return out;
}

double Generator::perplexity(const Corpus &corpus, std::size_t max_len,
                             std::size_t batch_size) {
  if (corpus.sentences.empty())
    throw std::invalid_argument("perplexity of an empty corpus");
  double total_lp = 0.0;
  std::size_t total_tokens = 0;
  for (std::size_t start = 0; start < corpus.sentences.size();
       start += batch_size) {
    const std::size_t end = std::min(corpus.sentences.size(), start + batch_size);
    std::vector<std::vector<TokenId>> seqs;
    for (std::size_t i = start; i < end; ++i) {
      const auto &s = corpus.sentences[i];
      std::vector<TokenId> ids(s.begin(),
                               s.begin() + std::min(s.size(), max_len - 1));
      ids.push_back(Vocabulary::kEos);
      seqs.push_back(std::move(ids));
    }
    SequenceBatch batch = make_batch(seqs, max_len);
    for (double lp : log_prob(batch))
      total_lp += lp;
    total_tokens += batch.total_tokens();
  }
  return std::exp(-total_lp / static_cast<double>(total_tokens));
}

Var Generator::nll_loss(Graph &g, const SequenceBatch &batch) {
  PolicyOutputs pol = teacher_force(g, batch);
  Var lp = token_log_probs(pol, batch);
  const double tokens = static_cast<double>(batch.total_tokens());
  if (tokens == 0)
    throw std::invalid_argument("nll_loss: batch has no tokens");
  return ops::scale(ops::sum(lp), -1.0 / tokens);
}

double Generator::mle_step(const SequenceBatch &batch, Adam &optimizer) {
  Graph g;
  Var loss = nll_loss(g, batch);
  GradientMap grads = g.backward(loss);
  optimizer.step(grads);
  return loss.value().item();
}

} // namespace taylorgan
