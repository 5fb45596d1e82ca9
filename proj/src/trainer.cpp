// SPDX-License-Identifier: Apache-2.0
#include "taylorgan/trainer.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace taylorgan {

namespace {

using nlohmann::json;

std::vector<std::size_t> parse_dense(const std::string &text) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t comma = text.find(',', pos);
    if (comma == std::string::npos)
      comma = text.size();
    const std::string item = text.substr(pos, comma - pos);
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(item, &used);
    } catch (const std::exception &) {
      used = 0;
    }
    if (used == 0 || used != item.size() || v == 0)
      throw std::invalid_argument("disc_dense: bad layer width '" + item + "'");
    out.push_back(v);
    pos = comma + 1;
  }
  return out;
}

double mean(const std::vector<double> &v) {
  double s = 0.0;
  for (double x : v)
    s += x;
  return v.empty() ? 0.0 : s / double(v.size());
}

Vocabulary vocab_from(const RunConfig &c) {
  c.validate();
  return build_vocab(read_lines(c.train_path), c.vocab_size);
}

Corpus corpus_from(const std::string &path, const Vocabulary &vocab, Split split) {
  if (path.empty())
    return Corpus{{}, split};
  return encode_corpus(vocab, read_lines(path), split);
}

} // namespace

RunLog::RunLog(const std::string &path) {
  if (path.empty())
    return;
  out_ = std::make_unique<std::ofstream>(path, std::ios::trunc);
  if (!*out_)
    throw std::runtime_error("cannot open run log '" + path + "'");
}

void RunLog::header(const RunConfig &config) {
  json cfg = json::object();
  for (const auto &[k, v] : config.items())
    cfg[k] = v;
  write(json{{"type", "config"}, {"config", cfg}}.dump());
}

void RunLog::write(const std::string &json_line) {
  lines_.push_back(json_line);
  if (out_) {
    *out_ << json_line << '\n';
    out_->flush();
  }
}

GeneratorConfig generator_config(const RunConfig &config, const Vocabulary &vocab) {
  return GeneratorConfig::for_vocab(vocab, config.gen_embed_dim, config.gen_hidden_dim);
}

DiscriminatorConfig discriminator_config(const RunConfig &config,
                                         const Vocabulary &vocab) {
  DiscriminatorConfig d;
  d.vocab_size = vocab.size();
  d.embed_dim = config.disc_embed_dim;
  d.body = DiscriminatorConfig::parse_body(config.disc_body);
  d.dense = parse_dense(config.disc_dense);
  d.lambda_sn = config.lambda_sn;
  d.lambda_e = config.lambda_e;
  d.norm_threshold = config.norm_threshold;
  d.power_iterations = config.power_iterations;
  return d;
}

LmHyper lm_hyper(const RunConfig &config) {
  LmHyper h;
  h.steps = config.lm_steps;
  h.batch_size = config.batch_size;
  h.max_len = config.max_len;
  h.seed = config.seed + 17;
  return h;
}

Trainer::Trainer(RunConfig config)
    : config_(std::move(config)), est_(config_.estimator_config()),
      vocab_(vocab_from(config_)),
      train_(corpus_from(config_.train_path, vocab_, Split::kTrain)),
      valid_(corpus_from(config_.valid_path, vocab_, Split::kValidation)),
      gen_(generator_config(config_, vocab_), config_.seed),
      disc_(discriminator_config(config_, vocab_), config_.seed + 1),
      g_opt_(config_.adam_config(), gen_.parameters()),
      d_opt_(config_.adam_config(), disc_.parameters()),
      baseline_(config_.baseline_decay),
      real_stream_(train_, config_.batch_size, config_.max_len, config_.seed + 2),
      rng_(config_.seed + 3), log_(config_.log_path) {
  if (train_.sentences.empty())
    throw std::invalid_argument("training corpus '" + config_.train_path + "' is empty");
  if (!config_.vectors_path.empty()) {
    std::mt19937_64 vec_rng(config_.seed + 4);
    gen_.set_embedding(
        load_word_vectors(config_.vectors_path, vocab_, config_.gen_embed_dim, vec_rng)
            .matrix);
    disc_.set_embedding(
        load_word_vectors(config_.vectors_path, vocab_, config_.disc_embed_dim, vec_rng)
            .matrix);
  }
  log_.header(config_);
}

void Trainer::check_finite(const char *what, double value) {
  if (std::isfinite(value))
    return;
  log_.write(json{{"type", "error"}, {"step", step_}, {"what", what},
                  {"value", std::isnan(value) ? "nan" : (value > 0 ? "inf" : "-inf")}}
                 .dump());
  throw std::runtime_error("non-finite " + std::string(what) + " at step " +
                           std::to_string(step_));
}

double Trainer::generator_step(const SequenceBatch &real, const SequenceBatch &fake,
                               StepRecord &rec,
                               std::uint64_t gumbel_seed) {
  const double lambda_h = est_.entropy_weight;
  Graph g;
  Var loss;
  switch (est_.kind) {
  case EstimatorKind::kMle: {
    rec.g_reward = mean(disc_.reward(fake));
    rec.baseline = baseline_.value();
    loss = gen_.nll_loss(g, real);
    break;
  }
  case EstimatorKind::kReinforce: {
    const std::vector<double> r = disc_.reward(fake);
    rec.g_reward = mean(r);
    rec.baseline = baseline_.update(r);
    PolicyOutputs policy = gen_.teacher_force(g, fake);
    Var s = ops::add(reinforce_surrogate(policy, fake, r, rec.baseline),
                     entropy_bonus(policy, fake, lambda_h));
    loss = ops::scale(s, -1.0);
    break;
  }
  case EstimatorKind::kStraightThrough: {
    RewardBundle b = disc_.reward_bundle(fake, false);
    rec.g_reward = mean(b.rewards);
    rec.baseline = baseline_.update(b.rewards);
    PolicyOutputs policy = gen_.teacher_force(g, fake);
    Var s = ops::add(
        straight_through_surrogate(policy, fake, b.delta_e, disc_.embedding().value),
        entropy_bonus(policy, fake, lambda_h));
    loss = ops::scale(s, -1.0);
    break;
  }
  case EstimatorKind::kTaylor: {
    RewardBundle b = disc_.reward_bundle(fake, true);
    rec.g_reward = mean(b.rewards);
    rec.baseline = baseline_.update(b.rewards);
    PolicyOutputs policy = gen_.teacher_force(g, fake);
    const KernelMatrix k =
        hamming_kernel(disc_.embedding().value, est_.bandwidth, gen_.config().candidates);
    const Tensor adv = taylor_advantages(policy.log_probs.value(), policy.probs.value(),
                                         fake, b.taylor, k, rec.baseline);
    Var s = ops::add(taylor_surrogate(policy, adv), entropy_bonus(policy, fake, lambda_h));
    loss = ops::scale(s, -1.0);
    break;
  }
  case EstimatorKind::kGumbelSoftmax: {
    std::mt19937_64 noise(gumbel_seed);
    GumbelStep gs = gumbel_softmax_step(g, gen_, disc_, fake.batch, config_.max_len,
                                        rec.temperature, lambda_h, noise);
    rec.g_reward = gs.mean_reward;
    rec.baseline = baseline_.value();
    loss = gs.loss;
    break;
  }
  }
  rec.g_loss = loss.value().item();
  check_finite("generator loss", rec.g_loss);
  rec.g_stats = g_opt_.step(g.backward(loss));
  check_finite("generator gradient norm", rec.g_stats.grad_norm);
  return rec.g_loss;
}

StepRecord Trainer::step() {
  StepRecord rec;
  rec.step = step_;
  const std::size_t n = config_.batch_size;
  const std::size_t t_max = config_.max_len;

  SequenceBatch fake;
  std::uint64_t gumbel_seed = 0;
  if (est_.kind == EstimatorKind::kGumbelSoftmax) {
    rec.temperature = gumbel_temperature(est_, step_, config_.steps);
    gumbel_seed = rng_();
    std::mt19937_64 noise(gumbel_seed);
    Graph g(GradMode::kDisabled);
    fake = gumbel_softmax_step(g, gen_, disc_, n, t_max, rec.temperature, 0.0, noise)
               .hard;
  } else {
    fake = gen_.rollout(n, t_max, 1.0, rng_).tokens;
  }

  const SequenceBatch real = real_stream_.next();
  rec.d = disc_.train_step(real, fake, d_opt_, &rec.d_stats);
  rec.sigmas = disc_.sigmas();
  check_finite("discriminator loss", rec.d.total);
  check_finite("discriminator gradient norm", rec.d_stats.grad_norm);
  log_.write(json{{"type", "d"},
                  {"step", step_},
                  {"loss", rec.d.total},
                  {"classification", rec.d.classification},
                  {"spectral", rec.d.spectral},
                  {"embedding", rec.d.embedding},
                  {"real_reward", rec.d.real_reward},
                  {"fake_reward", rec.d.fake_reward},
                  {"grad_norm", rec.d_stats.grad_norm},
                  {"clipped_norm", rec.d_stats.clipped_norm},
                  {"sigmas", rec.sigmas}}
                 .dump());

  generator_step(real, fake, rec, gumbel_seed);
  log_.write(json{{"type", "g"},
                  {"step", step_},
                  {"estimator", estimator_name(est_.kind)},
                  {"loss", rec.g_loss},
                  {"reward", rec.g_reward},
                  {"baseline", rec.baseline},
                  {"temperature", rec.temperature},
                  {"grad_norm", rec.g_stats.grad_norm},
                  {"clipped_norm", rec.g_stats.clipped_norm}}
                 .dump());
  ++step_;
  return rec;
}

double Trainer::snapshot_metrics() {
  if (!real_lm_)
    real_lm_.emplace(train_language_model(train_, gen_.config(), lm_hyper(config_)));
  const std::uint64_t seed = config_.seed + 5;
  std::mt19937_64 rng(seed);
  const SequenceBatch samples = gen_.rollout(config_.eval_samples, config_.max_len, 1.0, rng).tokens;
  const double lm = lm_score(*real_lm_, samples);
  auto metric = [&](const char *name, double value) {
    log_.write(json{{"type", "metric"},
                    {"step", step_},
                    {"temperature", 1.0},
                    {"metric", name},
                    {"value", value},
                    {"sample_size", config_.eval_samples},
                    {"seed", seed}}
                   .dump());
  };
  metric("lm", lm);
  if (!valid_.sentences.empty())
    metric("perplexity", gen_.perplexity(valid_, config_.max_len));
  return lm;
}

void Trainer::save(const std::string &path) const {
  save_checkpoint(path, vocab_, gen_, disc_, step_, baseline_);
}

TrainSummary Trainer::run() {
  TrainSummary summary;
  while (step_ < config_.steps) {
    summary.steps.push_back(step());
    if (config_.checkpoint_every && step_ % config_.checkpoint_every == 0)
      save(config_.checkpoint_path);
    if (config_.eval_every && step_ % config_.eval_every == 0) {
      const double lm = snapshot_metrics();
      if (!summary.best_lm_score || lm < *summary.best_lm_score) {
        summary.best_lm_score = lm;
        save(config_.checkpoint_path + ".best");
      }
    }
  }
  save(config_.checkpoint_path);
  return summary;
}

} // namespace taylorgan
