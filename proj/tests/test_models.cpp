// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "taylorgan/discriminator.hpp"
#include "taylorgan/generator.hpp"
#include "taylorgan/verification.hpp"
#include "taylorgan/vocab.hpp"

using namespace taylorgan;

namespace {

std::filesystem::path temp_file(const std::string &name, const std::string &text) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << text;
  return path;
}

Vocabulary small_vocab() { return Vocabulary({"a", "b", "c", "d", "e"}); }

Generator uniform_generator(const Vocabulary &vocab) {
  Generator gen(GeneratorConfig::for_vocab(vocab, 4, 6), 1);
  gen.set_embedding(Tensor({vocab.size(), 4}, 0.0));
  return gen;
}

DiscriminatorConfig small_disc_config(std::size_t vocab) {
  DiscriminatorConfig c;
  c.vocab_size = vocab;
  c.embed_dim = 6;
  c.body = DiscriminatorConfig::parse_body("conv3x5,pool,conv2x4");
  c.dense = {5};
  return c;
}

SequenceBatch random_batch(std::size_t n, std::size_t max_len, std::size_t vocab,
                           std::mt19937_64 &rng) {
  std::uniform_int_distribution<TokenId> tok(Vocabulary::kReserved, TokenId(vocab - 1));
  std::uniform_int_distribution<std::size_t> len(1, max_len - 1);
  std::vector<std::vector<TokenId>> seqs;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<TokenId> s(len(rng));
    for (auto &t : s)
      t = tok(rng);
    s.push_back(Vocabulary::kEos);
    seqs.push_back(std::move(s));
  }
  return make_batch(seqs, max_len);
}

} // namespace

// vocabulary and corpus

TEST(Vocab, BuildCountsAndOrders) {
  const Vocabulary v = build_vocab({"a b", "a"}, 10);
  EXPECT_EQ(v.size(), 5u);
  EXPECT_EQ(v.token(Vocabulary::kPad), "<pad>");
  EXPECT_EQ(v.find("a"), 3);
  EXPECT_EQ(v.find("b"), 4);
}

TEST(Vocab, LowercasesAndBreaksTiesLexicographically) {
  const Vocabulary v = build_vocab({"B b z", "y"}, 5);
  EXPECT_EQ(v.size(), 5u);
  EXPECT_EQ(v.find("b"), 3);
  EXPECT_EQ(v.find("y"), 4);
  EXPECT_EQ(v.find("z"), -1);
}

TEST(Vocab, BuildErrors) {
  EXPECT_THROW(build_vocab({}, 10), std::invalid_argument);
  EXPECT_THROW(build_vocab({"a"}, 3), std::invalid_argument);
  EXPECT_THROW(Vocabulary({"a", "a"}), std::invalid_argument);
}

TEST(Vocab, EncodeDecode) {
  const Vocabulary v = build_vocab({"a b"}, 10);
  const auto ids = encode(v, "a b");
  ASSERT_EQ(ids.size(), 3u);
  EXPECT_EQ(ids.back(), Vocabulary::kEos);
  EXPECT_EQ(decode(v, ids), "a b");
  EXPECT_EQ(decode(v, std::vector<TokenId>{}), "");
  EXPECT_EQ(encode(v, "a zzz b"), ids);
  EXPECT_THROW(decode(v, std::vector<TokenId>{99}), std::out_of_range);
}

TEST(Vocab, RandomSentencesRoundTrip) {
  const Vocabulary v = small_vocab();
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> pick(Vocabulary::kReserved, v.size() - 1);
  for (int trial = 0; trial < 50; ++trial) {
    std::string s;
    for (int i = 0; i < 1 + trial % 9; ++i)
      s += (i ? " " : "") + v.token(TokenId(pick(rng)));
    EXPECT_EQ(decode(v, encode(v, s)), s);
  }
}

TEST(Vocab, BatchStreamSizesAndDeterminism) {
  const Vocabulary v = small_vocab();
  const Corpus c = encode_corpus(v, {"a", "b c", "d e a"}, Split::kTrain);
  BatchStream s1(c, 2, 10, 9), s2(c, 2, 10, 9);
  const SequenceBatch b1 = s1.next(), b2 = s1.next();
  EXPECT_EQ(b1.batch, 2u);
  EXPECT_EQ(b2.batch, 1u);
  EXPECT_EQ(s2.next().ids, b1.ids);
  EXPECT_EQ(s2.next().ids, b2.ids);
  for (std::size_t n = 0; n < b1.batch; ++n)
    for (std::size_t t = b1.lengths[n]; t < b1.max_len; ++t)
      EXPECT_EQ(b1.at(n, t), Vocabulary::kPad);
}

TEST(Vocab, LongSentencesAreTruncatedBeforeEos) {
  const Vocabulary v = small_vocab();
  std::string line;
  for (int i = 0; i < 60; ++i)
    line += "a ";
  const Corpus c = encode_corpus(v, {line}, Split::kTrain);
  BatchStream s(c, 1, 50, 0);
  const SequenceBatch b = s.next();
  EXPECT_EQ(b.lengths[0], 50u);
  EXPECT_EQ(b.at(0, 49), Vocabulary::kEos);
}

TEST(Vocab, WordVectors) {
  const Vocabulary v = small_vocab();
  std::mt19937_64 rng(0);
  const auto one = temp_file("tg_vec_one.txt", "c 0.1 0.2 0.3\n");
  const WordVectors w = load_word_vectors(one.string(), v, 3, rng);
  EXPECT_EQ(w.hits, 1u);
  const auto id = std::size_t(v.find("c"));
  EXPECT_EQ(w.matrix.at(id, 0), 0.1);
  EXPECT_EQ(w.matrix.at(id, 2), 0.3);

  const auto empty = temp_file("tg_vec_empty.txt", "");
  EXPECT_EQ(load_word_vectors(empty.string(), v, 3, rng).hits, 0u);

  std::string all;
  for (std::size_t i = Vocabulary::kReserved; i < v.size(); ++i)
    all += v.token(TokenId(i)) + " 1 2 3\n";
  const auto full = temp_file("tg_vec_all.txt", all);
  EXPECT_EQ(load_word_vectors(full.string(), v, 3, rng).hits, v.size() - 3);

  const auto bad = temp_file("tg_vec_bad.txt", "a 1 2\n");
  EXPECT_THROW(load_word_vectors(bad.string(), v, 3, rng), std::runtime_error);
  const auto junk = temp_file("tg_vec_junk.txt", "a 1 x 3\n");
  EXPECT_THROW(load_word_vectors(junk.string(), v, 3, rng), std::runtime_error);
}

// generator

TEST(Generator, UniformPolicyRolloutAndLogProb) {
  const Vocabulary v = small_vocab();
  Generator gen = uniform_generator(v);
  std::mt19937_64 rng(2);
  const PolicyRollout r = gen.rollout(16, 6, 1.0, rng);
  const double candidates = double(v.size() - 2);
  for (std::size_t n = 0; n < 16; ++n)
    for (std::size_t t = 0; t < 6; ++t) {
      EXPECT_EQ(r.step_dists.at(n, t, Vocabulary::kPad), 0.0);
      EXPECT_NEAR(r.step_dists.at(n, t, 3), 1.0 / candidates, 1e-9);
    }
  const auto lp = gen.log_prob(r.tokens);
  for (std::size_t n = 0; n < 16; ++n) {
    EXPECT_NEAR(lp[n], -double(r.tokens.lengths[n]) * std::log(candidates), 1e-9);
    double sum = 0;
    for (std::size_t t = 0; t < 6; ++t)
      sum += r.step_logprobs.at(n, t);
    EXPECT_NEAR(lp[n], sum, 1e-9);
  }
}

TEST(Generator, EosContract) {
  const Vocabulary v = small_vocab();
  Generator gen(GeneratorConfig::for_vocab(v, 4, 6), 3);
  std::mt19937_64 rng(5);
  const PolicyRollout r = gen.rollout(64, 8, 1.5, rng);
  for (std::size_t n = 0; n < 64; ++n) {
    const std::size_t len = r.tokens.lengths[n];
    ASSERT_GE(len, 1u);
    if (len < 8) {
      EXPECT_EQ(r.tokens.at(n, len - 1), Vocabulary::kEos);
    }
    for (std::size_t t = 0; t + 1 < len; ++t)
      EXPECT_NE(r.tokens.at(n, t), Vocabulary::kEos);
    for (std::size_t t = len; t < 8; ++t) {
      EXPECT_EQ(r.tokens.at(n, t), Vocabulary::kPad);
      EXPECT_EQ(r.step_logprobs.at(n, t), 0.0);
      EXPECT_EQ(r.step_entropies.at(n, t), 0.0);
    }
    for (std::size_t t = 0; t < 8; ++t) {
      double s = 0;
      for (std::size_t k = 0; k < v.size(); ++k)
        s += r.step_dists.at(n, t, k);
      EXPECT_NEAR(s, 1.0, 1e-9);
      EXPECT_GE(r.step_entropies.at(n, t), 0.0);
    }
  }
}

TEST(Generator, RolloutIsDeterministicForASeed) {
  const Vocabulary v = small_vocab();
  Generator gen(GeneratorConfig::for_vocab(v, 4, 6), 3);
  std::mt19937_64 r1(8), r2(8);
  const PolicyRollout a = gen.rollout(10, 7, 1.0, r1);
  const PolicyRollout b = gen.rollout(10, 7, 1.0, r2);
  EXPECT_EQ(a.tokens.ids, b.tokens.ids);
  EXPECT_EQ(a.step_dists.storage(), b.step_dists.storage());
}

TEST(Generator, LowTemperatureIsGreedy) {
  const Vocabulary v = small_vocab();
  Generator gen(GeneratorConfig::for_vocab(v, 4, 6), 4);
  for (auto &x : gen.embedding().value.storage())
    x *= 5.0;
  std::mt19937_64 rng(1);
  const PolicyRollout cold = gen.rollout(8, 6, 1e-4, rng);
  Graph g(GradMode::kDisabled);
  const PolicyOutputs p = gen.teacher_force(g, cold.tokens);
  const Tensor &lp = p.log_probs.value();
  for (std::size_t n = 0; n < 8; ++n)
    for (std::size_t t = 0; t < cold.tokens.lengths[n]; ++t) {
      TokenId best = Vocabulary::kEos;
      for (TokenId k = Vocabulary::kEos; k < v.size(); ++k)
        if (lp.at(n, t, k) > lp.at(n, t, best))
          best = k;
      EXPECT_EQ(cold.tokens.at(n, t), best);
    }
}

TEST(Generator, EntropyGrowsWithTemperature) {
  const Vocabulary v = small_vocab();
  Generator gen(GeneratorConfig::for_vocab(v, 4, 6), 4);
  double prev = -1.0;
  for (double tau : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    std::mt19937_64 rng(0);
    const PolicyRollout r = gen.rollout(1, 1, tau, rng);
    EXPECT_GE(r.step_entropies.at(0, 0), prev - 1e-12);
    prev = r.step_entropies.at(0, 0);
  }
}

TEST(Generator, EnumeratedProbabilitiesSumToOne) {
  GeneratorConfig c;
  c.vocab_size = 4;
  c.embed_dim = 3;
  c.hidden_dim = 4;
  c.eos.reset();
  c.candidates = {false, true, true, true};
  Generator gen(c, 6);
  std::vector<std::vector<TokenId>> all;
  for (TokenId a = 1; a < 4; ++a)
    for (TokenId b = 1; b < 4; ++b)
      for (TokenId d = 1; d < 4; ++d)
        all.push_back({a, b, d});
  double total = 0;
  for (double lp : gen.log_prob(make_batch(all, 3)))
    total += std::exp(lp);
  EXPECT_NEAR(total, 1.0, 1e-9);
}

TEST(Generator, TiedProjectionSharesTheEmbedding) {
  const Vocabulary v = small_vocab();
  Generator gen(GeneratorConfig::for_vocab(v, 4, 6), 2);
  const SequenceBatch b = make_batch({{3, 4, 2}}, 3);
  Graph g;
  Var loss = gen.nll_loss(g, b);
  const Tensor grad = g.backward(loss).param(gen.embedding());
  // token 5 never appears as an input, so its gradient comes only from logits
  double out_only = 0;
  for (std::size_t k = 0; k < 4; ++k)
    out_only += std::abs(grad.at(5, k));
  EXPECT_GT(out_only, 0.0);
  std::size_t token_indexed = 0;
  for (const Parameter *p : gen.parameters())
    token_indexed += p->value.rank() == 2 && p->value.dim(0) == v.size();
  EXPECT_EQ(token_indexed, 1u);
}

TEST(Generator, PerplexityOfUniformPolicyIsCandidateCount) {
  const Vocabulary v = small_vocab();
  Generator gen = uniform_generator(v);
  const Corpus c = encode_corpus(v, {"a b", "c", "d e a b"}, Split::kValidation);
  EXPECT_NEAR(gen.perplexity(c, 10), double(v.size() - 2), 1e-9);
}

TEST(Generator, MleLossAtUniformInitIsLogCandidates) {
  const Vocabulary v = small_vocab();
  Generator gen = uniform_generator(v);
  Graph g;
  const SequenceBatch b = make_batch({{3, 4, 5, 2}}, 4);
  EXPECT_NEAR(gen.nll_loss(g, b).value().item(), std::log(double(v.size() - 2)), 1e-12);
}

TEST(Generator, MleMemorizesASentence) {
  const Vocabulary v = small_vocab();
  Generator gen(GeneratorConfig::for_vocab(v, 4, 6), 1);
  const SequenceBatch b = make_batch({{3, 4, 5, 2}}, 4);
  AdamConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.beta1 = 0.9;
  Adam opt(cfg, gen.parameters());
  const double first = gen.mle_step(b, opt);
  double last = first;
  for (int i = 0; i < 300; ++i)
    last = gen.mle_step(b, opt);
  EXPECT_LT(last, 0.05);
}

TEST(Generator, NllGradientMatchesFiniteDifferences) {
  const Vocabulary v = small_vocab();
  Generator gen(GeneratorConfig::for_vocab(v, 3, 4), 9);
  const SequenceBatch b = make_batch({{3, 4, 2}, {5, 2}}, 4);
  const FdErrors e = finite_difference_params(
      [&](Graph &g) { return gen.nll_loss(g, b); }, gen.parameters());
  EXPECT_LT(e.max_rel, kFiniteDifferenceTol);
}

// discriminator

TEST(Discriminator, ParseBody) {
  const auto body = DiscriminatorConfig::parse_body("conv3x64,pool,conv4x8");
  ASSERT_EQ(body.size(), 3u);
  EXPECT_EQ(body[0].width, 3u);
  EXPECT_EQ(body[0].channels, 64u);
  EXPECT_EQ(body[1].kind, DiscLayer::Kind::kMeanPool);
  EXPECT_EQ(DiscriminatorConfig::format_body(body), "conv3x64,pool,conv4x8");
  EXPECT_TRUE(DiscriminatorConfig::parse_body("").empty());
  EXPECT_THROW(DiscriminatorConfig::parse_body("conv3"), std::invalid_argument);
  EXPECT_THROW(DiscriminatorConfig::parse_body("dense4"), std::invalid_argument);
}

TEST(Discriminator, ZeroWeightsGiveZeroRewardAndLogTwoLoss) {
  Discriminator d(small_disc_config(8), 1);
  for (Parameter *p : d.parameters())
    p->value.fill(0.0);
  std::mt19937_64 rng(0);
  const SequenceBatch b = random_batch(5, 7, 8, rng);
  for (double r : d.reward(b))
    EXPECT_EQ(r, 0.0);
  Graph g;
  DiscLossParts parts;
  d.d_loss(g, b, b, &parts);
  EXPECT_NEAR(parts.classification, 2.0 * std::log(2.0), 1e-12);
  EXPECT_EQ(parts.embedding, 0.0);
}

TEST(Discriminator, SaturatedLogitsGiveNearZeroClassificationLoss) {
  DiscriminatorConfig c = small_disc_config(8);
  c.body.clear();
  c.dense.clear();
  Discriminator d(c, 1);
  d.set_embedding(Tensor({8, 6}, 0.0));
  std::mt19937_64 rng(0);
  const SequenceBatch b = random_batch(4, 5, 8, rng);
  Parameter *bias = d.parameters().back();
  ASSERT_EQ(bias->name, "disc/output/bias");
  auto classification = [&](double real_logit, double fake_logit) {
    // real and fake are scored by separate graphs with different biases
    bias->value[0] = real_logit;
    Graph g1;
    const double lr = ops::mean(ops::log_sigmoid(d.logits(g1, b))).value().item();
    bias->value[0] = fake_logit;
    Graph g2;
    const double lf =
        ops::mean(ops::log_sigmoid(ops::scale(d.logits(g2, b), -1.0))).value().item();
    return -lr - lf;
  };
  EXPECT_LT(classification(20.0, -20.0), 1e-8);
  bias->value[0] = 20.0;
  for (double r : d.reward(b))
    EXPECT_DOUBLE_EQ(r, 20.0);
}

TEST(Discriminator, SpectralTermOfDiagonalWeight) {
  DiscriminatorConfig c;
  c.vocab_size = 5;
  c.embed_dim = 2;
  c.body.clear();
  c.dense = {2};
  c.lambda_sn = 0.07;
  Discriminator d(c, 0);
  d.set_embedding(Tensor({5, 2}, 0.1));
  auto weights = d.spectral_weights();
  ASSERT_EQ(weights.size(), 2u);
  weights[0]->value = Tensor({2, 2}, std::vector<double>{2, 0, 0, 1});
  weights[1]->value.fill(0.0);
  Graph g;
  EXPECT_NEAR(d.reg_loss(g, 100).value().item(), 0.14, 1e-9);
}

TEST(Discriminator, EmbeddingHingeInactiveInsideBall) {
  DiscriminatorConfig c = small_disc_config(6);
  c.lambda_sn = 0.0;
  Discriminator d(c, 2);
  Tensor e({6, 6}, 0.3);
  d.set_embedding(e);
  Graph g;
  Var reg = d.reg_loss(g);
  EXPECT_EQ(reg.value().item(), 0.0);
  EXPECT_EQ(g.backward(reg).param(d.embedding()).max_abs(), 0.0);

  e.fill(1.0); // |e_v|^2 = 6, excess 5 per row
  d.set_embedding(e);
  Graph g2;
  EXPECT_NEAR(d.reg_loss(g2).value().item(), 0.2 / 12.0 * 30.0, 1e-12);
}

TEST(Discriminator, LinearRewardHasConstantEmbeddingGradient) {
  DiscriminatorConfig c = small_disc_config(7);
  c.body.clear();
  c.dense.clear();
  Discriminator d(c, 3);
  std::mt19937_64 rng(1);
  const SequenceBatch b = random_batch(3, 6, 7, rng);
  const RewardBundle bundle = d.reward_bundle(b, false);
  const Tensor &w = d.spectral_weights().back()->value; // [d_E, 1]
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t t = 0; t < 6; ++t)
      for (std::size_t k = 0; k < 6; ++k) {
        const double expected = t < b.lengths[n] ? w[k] / double(b.lengths[n]) : 0.0;
        EXPECT_NEAR(bundle.delta_e.at(n, t, k), expected, 1e-12);
      }
}

TEST(Discriminator, TaylorMatrixIdentityRowAndMasking) {
  Discriminator d(small_disc_config(9), 4);
  std::mt19937_64 rng(2);
  const SequenceBatch b = random_batch(6, 8, 9, rng);
  const RewardBundle bundle = d.reward_bundle(b, true);
  for (std::size_t n = 0; n < 6; ++n)
    for (std::size_t t = 0; t < 8; ++t) {
      if (t < b.lengths[n]) {
        EXPECT_NEAR(bundle.taylor.at(n, t, b.at(n, t)), bundle.rewards[n], 1e-9);
      } else {
        for (std::size_t v = 0; v < 9; ++v)
          EXPECT_EQ(bundle.taylor.at(n, t, v), 0.0);
        for (std::size_t k = 0; k < 6; ++k)
          EXPECT_EQ(bundle.delta_e.at(n, t, k), 0.0);
      }
    }
}

TEST(Discriminator, PaddingDoesNotChangeRewardsOrGradients) {
  Discriminator d(small_disc_config(9), 5);
  std::mt19937_64 rng(3);
  const SequenceBatch narrow = random_batch(5, 8, 9, rng);
  const SequenceBatch wide = repad(narrow, 15);
  const RewardBundle a = d.reward_bundle(narrow, true);
  const RewardBundle b = d.reward_bundle(wide, true);
  for (std::size_t n = 0; n < 5; ++n) {
    EXPECT_NEAR(a.rewards[n], b.rewards[n], 1e-9);
    for (std::size_t t = 0; t < narrow.lengths[n]; ++t)
      for (std::size_t v = 0; v < 9; ++v)
        EXPECT_NEAR(a.taylor.at(n, t, v), b.taylor.at(n, t, v), 1e-9);
  }
}

TEST(Discriminator, LossGradientMatchesFiniteDifferences) {
  Discriminator d(small_disc_config(7), 6);
  std::mt19937_64 rng(4);
  const SequenceBatch real = random_batch(3, 6, 7, rng);
  const SequenceBatch fake = random_batch(3, 6, 7, rng);
  Graph warm;
  d.reg_loss(warm, 300); // converge the power iterations first
  const FdErrors e = finite_difference_params(
      [&](Graph &g) {
        Var lr = d.logits(g, real), lf = d.logits(g, fake);
        return ops::sub(ops::scale(ops::mean(ops::log_sigmoid(lr)), -1.0),
                        ops::mean(ops::log_sigmoid(ops::scale(lf, -1.0))));
      },
      d.parameters());
  EXPECT_LT(e.max_rel, kFiniteDifferenceTol);
}

TEST(Discriminator, SpectralPenaltySmoothsRewardsOverHammingNeighbors) {
  // Same data and seeds, three penalty strengths: the trained reward should
  // vary less between sequences one substitution apart as the penalty grows.
  const std::size_t vocab = 12, len = 8;
  std::mt19937_64 data_rng(10);
  std::vector<SequenceBatch> real, fake;
  for (int i = 0; i < 10; ++i) {
    real.push_back(random_batch(16, len, 7, data_rng)); // low token ids only
    fake.push_back(random_batch(16, len, vocab, data_rng));
  }
  const SequenceBatch probe = random_batch(32, len, vocab, data_rng);
  std::vector<std::vector<TokenId>> neighbors;
  std::uniform_int_distribution<TokenId> tok(Vocabulary::kReserved, TokenId(vocab - 1));
  for (std::size_t n = 0; n < probe.batch; ++n) {
    std::vector<TokenId> s(probe.row(n).begin(), probe.row(n).end());
    std::uniform_int_distribution<std::size_t> pos(0, s.size() - 2);
    const std::size_t p = pos(data_rng);
    TokenId t;
    do
      t = tok(data_rng);
    while (t == s[p]);
    s[p] = t;
    neighbors.push_back(std::move(s));
  }
  const SequenceBatch moved = make_batch(neighbors, len);

  std::vector<double> gaps;
  for (double lambda : {0.0, 0.5, 5.0}) {
    DiscriminatorConfig c = small_disc_config(vocab);
    c.lambda_sn = lambda;
    Discriminator d(c, 11);
    AdamConfig ac;
    ac.learning_rate = 3e-3;
    Adam opt(ac, d.parameters());
    for (int epoch = 0; epoch < 15; ++epoch)
      for (std::size_t i = 0; i < real.size(); ++i)
        d.train_step(real[i], fake[i], opt);
    const auto r1 = d.reward(probe), r2 = d.reward(moved);
    double gap = 0;
    for (std::size_t n = 0; n < r1.size(); ++n)
      gap += std::abs(r1[n] - r2[n]);
    gaps.push_back(gap / double(r1.size()));
  }
  EXPECT_GT(gaps[0], gaps[1]);
  EXPECT_GT(gaps[1], gaps[2]);
}
