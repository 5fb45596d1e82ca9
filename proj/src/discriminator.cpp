// SPDX-License-Identifier: Apache-2.0
#include "taylorgan/discriminator.hpp"

#include <Eigen/Core>
#include <cmath>
#include <random>
#include <sstream>

namespace taylorgan {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Parameter uniform_param(std::string name, Shape shape, double limit,
                        std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t(std::move(shape));
  for (double &x : t.data())
    x = dist(rng);
  return Parameter{std::move(name), std::move(t)};
}

std::size_t parse_size(const std::string &s, const std::string &item) {
  std::size_t used = 0;
  unsigned long v = 0;
  try {
    v = std::stoul(s, &used);
  } catch (const std::exception &) {
    used = 0;
  }
  if (used == 0 || used != s.size() || v == 0)
    throw std::invalid_argument("bad discriminator layer '" + item + "'");
  return v;
}

} // namespace

std::vector<DiscLayer> DiscriminatorConfig::standard_body() {
  using K = DiscLayer::Kind;
  return {{K::kConv, 3, 512},    {K::kConv, 4, 512},  {K::kMeanPool, 0, 0},
          {K::kConv, 3, 1024},   {K::kConv, 4, 1024}};
}

std::vector<DiscLayer> DiscriminatorConfig::parse_body(const std::string &text) {
  std::vector<DiscLayer> body;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty())
      continue;
    if (item == "pool") {
      body.push_back({DiscLayer::Kind::kMeanPool, 0, 0});
      continue;
    }
    const auto x = item.find('x');
    if (item.rfind("conv", 0) != 0 || x == std::string::npos)
      throw std::invalid_argument("bad discriminator layer '" + item + "'");
    body.push_back({DiscLayer::Kind::kConv,
                    parse_size(item.substr(4, x - 4), item),
                    parse_size(item.substr(x + 1), item)});
  }
  return body;
}

std::string DiscriminatorConfig::format_body(const std::vector<DiscLayer> &body) {
  std::string out;
  for (const auto &l : body) {
    if (!out.empty())
      out += ',';
    if (l.kind == DiscLayer::Kind::kMeanPool)
      out += "pool";
    else
      out += "conv" + std::to_string(l.width) + "x" + std::to_string(l.channels);
  }
  return out;
}

Discriminator::Discriminator(DiscriminatorConfig config, std::uint64_t seed)
    : config_(std::move(config)) {
  const std::size_t v = config_.vocab_size, d = config_.embed_dim;
  if (v == 0 || d == 0)
    throw std::invalid_argument("discriminator dimensions must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(double(d)));
  embedding_ = Parameter{"disc/embedding", Tensor({v, d})};
  for (double &x : embedding_.value.data())
    x = normal(rng);

  std::size_t ch = d;
  for (const auto &layer : config_.body) {
    if (layer.kind == DiscLayer::Kind::kMeanPool)
      continue;
    if (layer.width == 0 || layer.channels == 0)
      throw std::invalid_argument("conv layer needs positive width and channels");
    const std::size_t i = convs_.size();
    const std::size_t fan_in = layer.width * ch;
    ConvParams c;
    c.kernel = uniform_param("disc/conv" + std::to_string(i) + "/kernel",
                             {layer.channels, fan_in},
                             std::sqrt(3.0 / double(fan_in)), rng);
    c.bias = Parameter{"disc/conv" + std::to_string(i) + "/bias",
                       Tensor({layer.channels})};
    c.width = layer.width;
    convs_.push_back(std::move(c));
    ch = layer.channels;
  }
  for (std::size_t units : config_.dense) {
    if (units == 0)
      throw std::invalid_argument("dense layer needs positive width");
    const std::size_t i = dense_.size();
    DenseParams p;
    p.weight = uniform_param("disc/dense" + std::to_string(i) + "/weight",
                             {ch, units}, std::sqrt(3.0 / double(ch)), rng);
    p.bias = Parameter{"disc/dense" + std::to_string(i) + "/bias", Tensor({units})};
    dense_.push_back(std::move(p));
    ch = units;
  }
  output_.weight = uniform_param("disc/output/weight", {ch, 1},
                                 std::sqrt(3.0 / double(ch)), rng);
  output_.bias = Parameter{"disc/output/bias", Tensor({1})};
  power_.resize(convs_.size() + dense_.size() + 1);
}

void Discriminator::set_embedding(const Tensor &matrix) {
  if (matrix.shape() != embedding_.value.shape())
    throw ShapeError("discriminator embedding must be " +
                     shape_to_string(embedding_.value.shape()));
  embedding_.value = matrix;
}

std::vector<Parameter *> Discriminator::parameters() {
  std::vector<Parameter *> out{&embedding_};
  for (auto &c : convs_) {
    out.push_back(&c.kernel);
    out.push_back(&c.bias);
  }
  for (auto &p : dense_) {
    out.push_back(&p.weight);
    out.push_back(&p.bias);
  }
  out.push_back(&output_.weight);
  out.push_back(&output_.bias);
  return out;
}

std::vector<const Parameter *> Discriminator::parameters() const {
  auto mut = const_cast<Discriminator *>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::vector<Parameter *> Discriminator::spectral_weights() {
  std::vector<Parameter *> out;
  for (auto &c : convs_)
    out.push_back(&c.kernel);
  for (auto &p : dense_)
    out.push_back(&p.weight);
  out.push_back(&output_.weight);
  return out;
}

std::vector<const Parameter *> Discriminator::spectral_weights() const {
  auto mut = const_cast<Discriminator *>(this)->spectral_weights();
  return {mut.begin(), mut.end()};
}

Var Discriminator::activate(Var x) const {
  return config_.activation == Activation::kElu ? ops::elu(x) : x;
}

Var Discriminator::embed(Graph &graph, const SequenceBatch &batch) {
  Var rows = ops::one_hot_gather(graph.param(embedding_), batch.ids);
  return ops::reshape(rows, {batch.batch, batch.max_len, config_.embed_dim});
}

Var Discriminator::forward_from_embedding(Graph &graph, Var emb,
                                          std::span<const std::size_t> lengths) {
  const Shape s = emb.shape();
  if (s.size() != 3 || s[2] != config_.embed_dim || lengths.size() != s[0])
    throw ShapeError("discriminator input must be [N, T, " +
                     std::to_string(config_.embed_dim) + "], got " +
                     shape_to_string(s));
  std::vector<std::size_t> lens(lengths.begin(), lengths.end());
  for (std::size_t l : lens)
    if (l == 0 || l > s[1])
      throw std::invalid_argument("discriminator: sequence length out of range");

  Var x = ops::mask_steps(emb, lens);
  std::size_t conv = 0;
  for (const auto &layer : config_.body) {
    if (layer.kind == DiscLayer::Kind::kMeanPool) {
      x = ops::mean_pool(x, lens);
      for (auto &l : lens)
        l = (l + 1) / 2;
      continue;
    }
    ConvParams &c = convs_[conv++];
    x = ops::conv1d_same(x, graph.param(c.kernel), graph.param(c.bias), c.width);
    x = ops::mask_steps(activate(x), lens);
  }
  Var h = ops::global_mean_pool(x, lens);
  for (auto &p : dense_)
    h = activate(ops::add_bias(ops::matmul(h, graph.param(p.weight)),
                               graph.param(p.bias)));
  Var out = ops::add_bias(ops::matmul(h, graph.param(output_.weight)),
                          graph.param(output_.bias));
  return ops::reshape(out, {s[0]});
}

Var Discriminator::logits(Graph &graph, const SequenceBatch &batch) {
  return forward_from_embedding(graph, embed(graph, batch), batch.lengths);
}

std::vector<double> Discriminator::reward(const SequenceBatch &batch) {
  Graph g(GradMode::kDisabled);
  const Tensor &r = logits(g, batch).value();
  return {r.data().begin(), r.data().end()};
}

RewardBundle Discriminator::reward_bundle(const SequenceBatch &batch,
                                          bool with_taylor) {
  Graph g;
  Var emb = g.leaf(embed(g, batch).value());
  Var r = forward_from_embedding(g, emb, batch.lengths);
  const Var taps[] = {emb};
  GradientMap grads = g.backward(ops::sum(r), taps);
  RewardBundle out;
  out.rewards.assign(r.value().data().begin(), r.value().data().end());
  out.delta_e = grads.tap(emb);
  if (with_taylor)
    out.taylor = taylor_matrix(out, embedding_.value, batch);
  return out;
}

Var Discriminator::reg_loss(Graph &graph, int iters) {
  if (iters < 1)
    iters = config_.power_iterations;
  std::vector<Parameter *> weights = spectral_weights();
  Var spectral = graph.constant(Tensor::scalar(0.0));
  for (std::size_t i = 0; i < weights.size(); ++i) {
    Var sigma = spectral_norm(graph.param(*weights[i]), power_[i], iters);
    spectral = ops::add(spectral, ops::mul(sigma, sigma));
  }
  spectral = ops::scale(spectral, config_.lambda_sn / 2.0);
  const double m2 = config_.norm_threshold * config_.norm_threshold;
  Var excess = ops::relu(
      ops::add_scalar(ops::row_sq_norms(graph.param(embedding_)), -m2));
  Var emb = ops::scale(ops::sum(excess),
                       config_.lambda_e / (2.0 * double(config_.vocab_size)));
  return ops::add(spectral, emb);
}

Var Discriminator::d_loss(Graph &graph, const SequenceBatch &real,
                          const SequenceBatch &fake, DiscLossParts *parts,
                          int iters) {
  if (real.batch == 0 || fake.batch == 0)
    throw std::invalid_argument("d_loss: empty batch");
  Var lr = logits(graph, real);
  Var lf = logits(graph, fake);
  Var cls = ops::sub(ops::scale(ops::mean(ops::log_sigmoid(lr)), -1.0),
                     ops::mean(ops::log_sigmoid(ops::scale(lf, -1.0))));
  Var reg = reg_loss(graph, iters);
  Var total = ops::add(cls, reg);
  if (parts) {
    parts->total = total.value().item();
    parts->classification = cls.value().item();
    const double mean_r = ops::mean(lr).value().item();
    const double mean_f = ops::mean(lf).value().item();
    parts->real_reward = mean_r;
    parts->fake_reward = mean_f;
    double sig2 = 0.0;
    for (double s : sigmas())
      sig2 += s * s;
    parts->spectral = config_.lambda_sn / 2.0 * sig2;
    parts->embedding = reg.value().item() - parts->spectral;
  }
  return total;
}

DiscLossParts Discriminator::train_step(const SequenceBatch &real,
                                        const SequenceBatch &fake,
                                        Adam &optimizer, StepStats *stats) {
  Graph g;
  DiscLossParts parts;
  Var loss = d_loss(g, real, fake, &parts);
  GradientMap grads = g.backward(loss);
  StepStats s = optimizer.step(grads);
  if (stats)
    *stats = s;
  return parts;
}

std::vector<double> Discriminator::sigmas() const {
  std::vector<const Parameter *> weights = spectral_weights();
  std::vector<double> out;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const PowerIterState &st = power_[i];
    const Tensor &w = weights[i]->value;
    if (!st.initialized()) {
      out.push_back(0.0);
      continue;
    }
    const std::size_t rows = w.dim(0), cols = w.dim(1);
    double s = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c)
        dot += w.at(r, c) * st.v[c];
      s += st.u[r] * dot;
    }
    out.push_back(s);
  }
  return out;
}

Tensor taylor_matrix(const RewardBundle &bundle, const Tensor &embedding,
                     const SequenceBatch &batch) {
  const Tensor &de = bundle.delta_e;
  if (de.rank() != 3 || de.dim(0) != batch.batch || de.dim(1) != batch.max_len ||
      embedding.rank() != 2 || embedding.dim(1) != de.dim(2) ||
      bundle.rewards.size() != batch.batch)
    throw ShapeError("taylor_matrix: bundle, embedding and batch disagree");
  const std::size_t n = batch.batch, t_len = batch.max_len, d = de.dim(2),
                    v = embedding.dim(0);
  // G[n*T + t, v] = e_v . dE_{n,t}
  Tensor out({n, t_len, v});
  Eigen::Map<RowMat> gm(out.data().data(), Eigen::Index(n * t_len), Eigen::Index(v));
  Eigen::Map<const RowMat> dm(de.data().data(), Eigen::Index(n * t_len), Eigen::Index(d));
  Eigen::Map<const RowMat> wm(embedding.data().data(), Eigen::Index(v), Eigen::Index(d));
  gm.noalias() = dm * wm.transpose();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t t = 0; t < t_len; ++t) {
      double *row = &out.at(b, t, 0);
      if (t >= batch.lengths[b]) {
        std::fill(row, row + v, 0.0);
        continue;
      }
      const TokenId x = batch.at(b, t);
      if (x >= v)
        throw std::out_of_range("taylor_matrix: token id out of range");
      const double shift = bundle.rewards[b] - row[x];
      for (std::size_t j = 0; j < v; ++j)
        row[j] += shift;
      row[x] = bundle.rewards[b];
    }
  return out;
}

} // namespace taylorgan
