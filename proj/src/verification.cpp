// SPDX-License-Identifier: Apache-2.0
#include "taylorgan/verification.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <sstream>

#include "taylorgan/metrics.hpp"

namespace taylorgan {

namespace {

class Stopwatch {
public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
        .count();
  }

private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

double norm2(std::span<const double> x) {
  double s = 0.0;
  for (double v : x)
    s += v * v;
  return std::sqrt(s);
}

void accumulate(FdErrors &e, std::span<const double> analytic,
                std::span<const double> numeric) {
  std::vector<double> diff(analytic.size());
  for (std::size_t i = 0; i < diff.size(); ++i) {
    diff[i] = analytic[i] - numeric[i];
    e.max_abs = std::max(e.max_abs, std::abs(diff[i]));
  }
  const double scale = std::max(norm2(analytic), norm2(numeric));
  if (scale > 0)
    e.max_rel = std::max(e.max_rel, norm2(diff) / scale);
}

Tensor random_tensor(Shape shape, std::mt19937_64 &rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double &x : t.data())
    x = u(rng);
  return t;
}

// Values bounded away from zero, for ops with a kink there.
Tensor away_from_zero(Shape shape, std::mt19937_64 &rng) {
  Tensor t = random_tensor(std::move(shape), rng);
  for (double &x : t.data())
    x = x < 0 ? x - 0.1 : x + 0.1;
  return t;
}

// sum(y * c) for a fixed pseudo-random c, turning any output into a scalar.
Var contract(Graph &g, Var y) {
  std::mt19937_64 rng(0xc0ffee);
  return ops::sum(ops::mul(y, g.constant(random_tensor(y.shape(), rng))));
}

OracleReport fd_report(std::string name, const FdErrors &e, const Stopwatch &sw,
                       std::string detail = {}) {
  OracleReport r;
  r.name = std::move(name);
  r.criterion = 6;
  r.max_abs_error = e.max_abs;
  r.max_rel_error = e.max_rel;
  r.tolerance = kFiniteDifferenceTol;
  r.relative = true;
  r.passed = e.max_rel < kFiniteDifferenceTol;
  r.seconds = sw.seconds();
  r.detail = std::move(detail);
  return r;
}

OracleReport failed_report(std::string name, int criterion, const std::exception &e) {
  OracleReport r;
  r.name = std::move(name);
  r.criterion = criterion;
  r.max_abs_error = std::numeric_limits<double>::infinity();
  r.max_rel_error = std::numeric_limits<double>::infinity();
  r.detail = std::string("exception: ") + e.what();
  return r;
}

Vocabulary small_vocab(std::size_t words) {
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < words; ++i)
    tokens.push_back("w" + std::to_string(i));
  return Vocabulary(tokens);
}

SequenceBatch random_sentences(std::size_t vocab_size, const std::vector<std::size_t> &lengths,
                               std::size_t max_len, std::mt19937_64 &rng) {
  std::uniform_int_distribution<TokenId> word(Vocabulary::kReserved,
                                              TokenId(vocab_size - 1));
  std::vector<std::vector<TokenId>> rows;
  for (std::size_t len : lengths) {
    std::vector<TokenId> s;
    for (std::size_t t = 0; t + 1 < len; ++t)
      s.push_back(word(rng));
    s.push_back(Vocabulary::kEos);
    rows.push_back(std::move(s));
  }
  return make_batch(rows, max_len);
}

struct PrimitiveCase {
  const char *name;
  std::vector<Tensor> inputs;
  FdFunction f;
};

std::vector<PrimitiveCase> primitive_cases(std::mt19937_64 &rng) {
  std::vector<PrimitiveCase> c;
  auto r = [&](Shape s) { return random_tensor(std::move(s), rng); };
  auto unary = [](Var (*op)(Var)) {
    return [op](Graph &g, std::span<const Var> x) { return contract(g, op(x[0])); };
  };
  static const TokenMask mask = {true, false, true, true, false, true};

  c.push_back({"matmul", {r({3, 4}), r({4, 5})}, [](Graph &g, std::span<const Var> x) {
                 return contract(g, ops::matmul(x[0], x[1]));
               }});
  c.push_back({"matmul_transposed", {r({3, 4}), r({5, 4})},
               [](Graph &g, std::span<const Var> x) {
                 return contract(g, ops::matmul(x[0], x[1], true));
               }});
  c.push_back({"add", {r({2, 3}), r({2, 3})}, [](Graph &g, std::span<const Var> x) {
                 return contract(g, ops::add(x[0], x[1]));
               }});
  c.push_back({"sub", {r({2, 3}), r({2, 3})}, [](Graph &g, std::span<const Var> x) {
                 return contract(g, ops::sub(x[0], x[1]));
               }});
  c.push_back({"mul", {r({2, 3}), r({2, 3})}, [](Graph &g, std::span<const Var> x) {
                 return contract(g, ops::mul(x[0], x[1]));
               }});
  c.push_back({"add_bias", {r({2, 3, 4}), r({4})}, [](Graph &g, std::span<const Var> x) {
                 return contract(g, ops::add_bias(x[0], x[1]));
               }});
  c.push_back({"scale", {r({3, 2})}, [](Graph &g, std::span<const Var> x) {
                 return contract(g, ops::scale(x[0], -1.7));
               }});
  c.push_back({"add_scalar", {r({3, 2})}, [](Graph &g, std::span<const Var> x) {
                 return contract(g, ops::mul(ops::add_scalar(x[0], 0.3), x[0]));
               }});
  c.push_back({"elu", {away_from_zero({4, 5}, rng)}, unary(ops::elu)});
  c.push_back({"relu", {away_from_zero({4, 5}, rng)}, unary(ops::relu)});
  c.push_back({"sigmoid", {r({4, 5})}, unary(ops::sigmoid)});
  c.push_back({"tanh", {r({4, 5})}, unary(ops::tanh)});
  c.push_back({"exp", {r({4, 5})}, unary(ops::exp)});
  c.push_back({"log", {random_tensor({4, 5}, rng, 0.2, 2.0)}, unary(ops::log)});
  {
    Tensor wide = random_tensor({3, 4}, rng, -30.0, 30.0);
    c.push_back({"log_sigmoid", {wide}, unary(ops::log_sigmoid)});
  }
  c.push_back({"sum", {r({2, 3, 4})}, [](Graph &, std::span<const Var> x) {
                 return ops::sum(ops::mul(x[0], x[0]));
               }});
  c.push_back({"mean", {r({2, 3, 4})}, [](Graph &, std::span<const Var> x) {
                 return ops::mean(ops::mul(x[0], x[0]));
               }});
  c.push_back({"sum_last", {r({2, 3, 4})}, [](Graph &g, std::span<const Var> x) {
                 return contract(g, ops::sum_last(x[0]));
               }});
  c.push_back({"softmax", {r({3, 6})}, [](Graph &g, std::span<const Var> x) {
                 return contract(g, ops::softmax(x[0], 0.7));
               }});
  c.push_back({"softmax_masked", {r({3, 6})}, [](Graph &g, std::span<const Var> x) {
                 return contract(g, ops::softmax(x[0], 1.3, &mask));
               }});
  c.push_back({"log_softmax_masked", {r({3, 6})}, [](Graph &g, std::span<const Var> x) {
                 return contract(g, ops::log_softmax(x[0], 0.8, &mask));
               }});
  c.push_back({"one_hot_gather", {r({6, 3})}, [](Graph &g, std::span<const Var> x) {
                 static const std::vector<TokenId> ids = {0, 2, 2, 5};
                 return contract(g, ops::one_hot_gather(x[0], ids));
               }});
  c.push_back({"pick_last", {r({2, 3, 4})}, [](Graph &g, std::span<const Var> x) {
                 static const std::vector<TokenId> ids = {0, 3, 1, 1, 2, 3};
                 return contract(g, ops::pick_last(x[0], ids));
               }});
  c.push_back({"reshape", {r({2, 6})}, [](Graph &g, std::span<const Var> x) {
                 return contract(g, ops::reshape(x[0], {3, 4}));
               }});
  c.push_back({"stack_steps", {r({2, 3}), r({2, 3}), r({2, 3})},
               [](Graph &g, std::span<const Var> x) {
                 return contract(g, ops::stack_steps(x));
               }});
  c.push_back({"mask_steps", {r({2, 4, 3})}, [](Graph &g, std::span<const Var> x) {
                 static const std::vector<std::size_t> len = {2, 4};
                 return contract(g, ops::mask_steps(x[0], len));
               }});
  c.push_back({"conv1d_same_w3", {r({2, 5, 3}), r({4, 9}), r({4})},
               [](Graph &g, std::span<const Var> x) {
                 return contract(g, ops::conv1d_same(x[0], x[1], x[2], 3));
               }});
  c.push_back({"conv1d_same_w4", {r({2, 6, 2}), r({3, 8}), r({3})},
               [](Graph &g, std::span<const Var> x) {
                 return contract(g, ops::conv1d_same(x[0], x[1], x[2], 4));
               }});
  c.push_back({"mean_pool", {r({2, 5, 3})}, [](Graph &g, std::span<const Var> x) {
                 static const std::vector<std::size_t> len = {5, 3};
                 return contract(g, ops::mean_pool(x[0], len));
               }});
  c.push_back({"global_mean_pool", {r({2, 5, 3})}, [](Graph &g, std::span<const Var> x) {
                 static const std::vector<std::size_t> len = {5, 2};
                 return contract(g, ops::global_mean_pool(x[0], len));
               }});
  c.push_back({"row_sq_norms", {r({4, 3})}, [](Graph &g, std::span<const Var> x) {
                 return contract(g, ops::row_sq_norms(x[0]));
               }});
  c.push_back({"gru_cell",
               {r({2, 3}), r({2, 4}), r({3, 4}), r({4, 4}), r({4}), r({3, 4}), r({4, 4}),
                r({4}), r({3, 4}), r({4, 4}), r({4})},
               [](Graph &g, std::span<const Var> x) {
                 ops::GruWeights w{x[2], x[3], x[4], x[5], x[6], x[7], x[8], x[9], x[10]};
                 return contract(g, ops::gru_cell(x[0], x[1], w));
               }});
  c.push_back({"spectral_norm", {r({5, 4})}, [](Graph &, std::span<const Var> x) {
                 PowerIterState state;
                 Var s = spectral_norm(x[0], state, 300);
                 return ops::mul(s, s);
               }});
  return c;
}

Discriminator small_discriminator(std::size_t vocab_size, const std::string &body,
                                  std::vector<std::size_t> dense, std::size_t embed_dim,
                                  std::uint64_t seed) {
  DiscriminatorConfig cfg;
  cfg.vocab_size = vocab_size;
  cfg.embed_dim = embed_dim;
  cfg.body = DiscriminatorConfig::parse_body(body);
  cfg.dense = std::move(dense);
  return Discriminator(cfg, seed);
}

} // namespace

FdErrors finite_difference_inputs(const FdFunction &f, std::vector<Tensor> inputs,
                                  double step) {
  Graph g;
  std::vector<Var> leaves;
  for (const auto &t : inputs)
    leaves.push_back(g.leaf(t));
  const GradientMap grads = g.backward(f(g, leaves), leaves);

  auto eval = [&]() {
    Graph h(GradMode::kDisabled);
    std::vector<Var> xs;
    for (const auto &t : inputs)
      xs.push_back(h.constant(t));
    return f(h, xs).value().item();
  };
  FdErrors e;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor &analytic = grads.tap(leaves[i]);
    std::vector<double> numeric(inputs[i].size());
    for (std::size_t j = 0; j < numeric.size(); ++j) {
      const double saved = inputs[i][j];
      inputs[i][j] = saved + step;
      const double up = eval();
      inputs[i][j] = saved - step;
      const double down = eval();
      inputs[i][j] = saved;
      numeric[j] = (up - down) / (2 * step);
    }
    accumulate(e, analytic.data(), numeric);
  }
  return e;
}

FdErrors finite_difference_params(const std::function<Var(Graph &)> &f,
                                  const std::vector<Parameter *> &params, double step) {
  GradientMap grads;
  {
    Graph g;
    grads = g.backward(f(g));
  }
  auto eval = [&]() {
    Graph h(GradMode::kDisabled);
    return f(h).value().item();
  };
  FdErrors e;
  for (Parameter *p : params) {
    const Tensor analytic = grads.param(*p);
    std::vector<double> numeric(p->value.size());
    for (std::size_t j = 0; j < numeric.size(); ++j) {
      const double saved = p->value[j];
      p->value[j] = saved + step;
      const double up = eval();
      p->value[j] = saved - step;
      const double down = eval();
      p->value[j] = saved;
      numeric[j] = (up - down) / (2 * step);
    }
    accumulate(e, analytic.data(), numeric);
  }
  return e;
}

std::vector<OracleReport> gradient_checks(std::uint64_t seed) {
  std::vector<OracleReport> out;
  std::mt19937_64 rng(seed + 100);
  for (auto &pc : primitive_cases(rng)) {
    Stopwatch sw;
    try {
      out.push_back(fd_report(std::string("fd_") + pc.name,
                              finite_difference_inputs(pc.f, pc.inputs), sw));
    } catch (const std::exception &e) {
      out.push_back(failed_report(std::string("fd_") + pc.name, 6, e));
    }
  }

  try {
    Stopwatch sw;
    const Vocabulary vocab = small_vocab(5);
    Generator gen(GeneratorConfig::for_vocab(vocab, 4, 5), seed + 101);
    const SequenceBatch batch = random_sentences(vocab.size(), {3, 2, 5, 1}, 5, rng);
    const FdErrors e = finite_difference_params(
        [&](Graph &g) { return gen.nll_loss(g, batch); }, gen.parameters());
    out.push_back(fd_report("fd_generator_nll", e, sw, "all generator parameters"));
  } catch (const std::exception &e) {
    out.push_back(failed_report("fd_generator_nll", 6, e));
  }

  try {
    Stopwatch sw;
    const Vocabulary vocab = small_vocab(5);
    Discriminator disc =
        small_discriminator(vocab.size(), "conv3x4,conv2x4,pool,conv2x5", {5}, 4, seed + 102);
    // Rows alternately inside and outside the norm ball, clear of the hinge.
    Tensor emb = disc.embedding().value;
    for (std::size_t v = 0; v < emb.dim(0); ++v) {
      double n2 = 0.0;
      for (std::size_t j = 0; j < emb.dim(1); ++j)
        n2 += emb.at(v, j) * emb.at(v, j);
      const double target = v % 2 ? 1.5 : 0.5;
      for (std::size_t j = 0; j < emb.dim(1); ++j)
        emb.at(v, j) *= target / std::sqrt(n2);
    }
    disc.set_embedding(emb);
    const SequenceBatch real = random_sentences(vocab.size(), {4, 6, 2}, 6, rng);
    const SequenceBatch fake = random_sentences(vocab.size(), {1, 5, 3}, 6, rng);
    const FdErrors e = finite_difference_params(
        [&](Graph &g) { return disc.d_loss(g, real, fake, nullptr, 300); },
        disc.parameters());
    out.push_back(fd_report("fd_discriminator_loss", e, sw,
                            "all discriminator parameters, 300 power iterations"));

    Stopwatch sw2;
    const Tensor e0 = [&] {
      Graph g(GradMode::kDisabled);
      return disc.embed(g, fake).value();
    }();
    const FdErrors et = finite_difference_inputs(
        [&](Graph &g, std::span<const Var> x) {
          return ops::sum(disc.forward_from_embedding(g, x[0], fake.lengths));
        },
        {e0});
    out.push_back(fd_report("fd_reward_embedding_tap", et, sw2, "dR/dE"));
  } catch (const std::exception &e) {
    out.push_back(failed_report("fd_discriminator_loss", 6, e));
  }
  return out;
}

OracleReport stop_gradient_check() {
  Stopwatch sw;
  OracleReport r;
  r.name = "stop_gradient";
  r.criterion = 6;
  r.tolerance = 0.0;
  Graph g;
  Var x = g.leaf(Tensor::scalar(2.0));
  Var y = ops::mul(ops::stop_gradient(x), x);
  const std::vector<Var> taps = {x};
  const double grad = g.backward(y, taps).tap(x).item();
  const double forward_err = std::abs(y.value().item() - 4.0);
  r.max_abs_error = std::max(forward_err, std::abs(grad - 2.0));
  r.passed = r.max_abs_error == 0.0;
  r.seconds = sw.seconds();
  r.detail = "stop_gradient(x) * x at x = 2";
  return r;
}

OracleReport spectral_norm_check(std::uint64_t seed) {
  Stopwatch sw;
  OracleReport r;
  r.name = "spectral_norm_vs_svd";
  r.criterion = 7;
  r.tolerance = 1e-3;
  r.relative = true;
  std::mt19937_64 rng(seed + 200);
  std::uniform_int_distribution<std::size_t> dim(2, 64);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    const std::size_t rows = i == 0 ? 64 : dim(rng);
    const std::size_t cols = i == 0 ? 64 : dim(rng);
    Tensor w({rows, cols});
    Eigen::MatrixXd m(rows, cols);
    for (std::size_t a = 0; a < rows; ++a)
      for (std::size_t b = 0; b < cols; ++b)
        m(a, b) = w.at(a, b) = normal(rng);
    PowerIterState state;
    const double sigma = spectral_norm_value(w, state, 100);
    const double truth = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
    r.max_abs_error = std::max(r.max_abs_error, std::abs(sigma - truth));
    r.max_rel_error = std::max(r.max_rel_error, std::abs(sigma - truth) / truth);
  }
  r.passed = r.max_rel_error < r.tolerance;
  r.space_size = 20;
  r.seconds = sw.seconds();
  r.detail = "20 random matrices up to 64x64, 100 iterations";
  return r;
}

std::vector<OracleReport> masking_checks(std::uint64_t seed) {
  std::vector<OracleReport> out;
  try {
    Stopwatch sw;
    std::mt19937_64 rng(seed + 300);
    const Vocabulary vocab = small_vocab(9);
    Discriminator disc = small_discriminator(
        vocab.size(), "conv3x6,conv4x6,pool,conv3x8,conv4x8", {8}, 6, seed + 301);
    const std::vector<std::size_t> lengths = {1, 2, 3, 5, 8};
    const SequenceBatch tight = random_sentences(vocab.size(), lengths, 8, rng);
    const SequenceBatch loose = repad(tight, 15);
    const RewardBundle a = disc.reward_bundle(tight, true);
    const RewardBundle b = disc.reward_bundle(loose, true);

    double reward_err = 0.0, delta_err = 0.0, taylor_err = 0.0;
    const std::size_t d = disc.config().embed_dim, v = vocab.size();
    for (std::size_t n = 0; n < tight.batch; ++n) {
      reward_err = std::max(reward_err, std::abs(a.rewards[n] - b.rewards[n]));
      // Each sentence alone, padded to its own length.
      const SequenceBatch single = make_batch(
          {std::vector<TokenId>(tight.row(n).begin(), tight.row(n).end())},
          tight.lengths[n]);
      reward_err = std::max(reward_err, std::abs(disc.reward(single)[0] - a.rewards[n]));
      for (std::size_t t = 0; t < loose.max_len; ++t) {
        const bool valid = t < tight.lengths[n];
        for (std::size_t j = 0; j < d; ++j) {
          const double ref = valid ? a.delta_e.at(n, t, j) : 0.0;
          delta_err = std::max(delta_err, std::abs(b.delta_e.at(n, t, j) - ref));
        }
        for (std::size_t k = 0; k < v; ++k) {
          const double ref = valid ? a.taylor.at(n, t, k) : 0.0;
          taylor_err = std::max(taylor_err, std::abs(b.taylor.at(n, t, k) - ref));
        }
      }
    }
    auto rep = [&](const char *name, double err) {
      OracleReport r;
      r.name = name;
      r.criterion = 8;
      r.max_abs_error = err;
      r.tolerance = 1e-9;
      r.passed = err < 1e-9;
      r.space_size = tight.batch;
      r.seconds = sw.seconds();
      r.detail = "padding 8 vs 15, and each sentence alone";
      return r;
    };
    out.push_back(rep("masking_reward", reward_err));
    out.back().detail = "padding 8 vs 15, and each sentence alone";
    out.push_back(rep("masking_delta_e", delta_err));
    out.back().detail = "padding 8 vs 15; zero past length";
    out.push_back(rep("masking_taylor_matrix", taylor_err));
    out.back().detail = "padding 8 vs 15; zero past length";
  } catch (const std::exception &e) {
    out.push_back(failed_report("masking", 8, e));
  }
  return out;
}

OracleReport bleu_fixture_check() {
  Stopwatch sw;
  // Words a..f map to ids 3..8.
  auto s = [](const std::string &text) {
    Sentence out;
    for (char ch : text)
      if (ch != ' ')
        out.push_back(TokenId(3 + (ch - 'a')));
    return out;
  };
  BleuConfig k1, k2, k3, k4;
  k1.max_order = 1;
  k2.max_order = 2;
  k3.max_order = 3;
  k4.max_order = 4;
  struct Fixture {
    const char *name;
    double got;
    double want;
  };
  const std::vector<Fixture> fx = {
      {"no unigram match, 5 tokens, k=2", bleu({s("a a a a a")}, {s("b c d e f")}, k2),
       0.0223606797749979},
      {"clipped unigram precision", smoothed_precision({s("a a a")}, {s("a b")}, 1, 0.1),
       1.0 / 3.0},
      {"identical corpus, k=4", bleu({s("a b c d e")}, {s("a b c d e")}, k4), 1.0},
      {"brevity penalty, k=2", bleu({s("a b c d")}, {s("a b f d e")}, k2),
       0.38940039153570244},
      {"corpus micro-average, k=2",
       bleu({s("a b c e"), s("b b")}, {s("a b c d"), s("b c")}, k2), 0.5773502691896258},
      {"corpus micro-average, k=3",
       bleu({s("a b c e"), s("b b")}, {s("a b c d"), s("b c")}, k3), 0.5503212081491045},
      {"forced 0.1/Count unigram", bleu({s("a b")}, {s("c d")}, k1), 0.05},
      {"forced 0.1/Count bigram",
       smoothed_precision({s("a b c d e")}, {s("f f")}, 2, 0.1), 0.025},
      {"self-BLEU repeated sentence", self_bleu({s("a b c"), s("a b c"), s("a b c")}, k3, 3),
       1.0},
      {"self-BLEU disjoint pair, k=1", self_bleu({s("a b"), s("c d")}, k1, 2), 0.05},
  };
  OracleReport r;
  r.name = "bleu_fixtures";
  r.criterion = 9;
  r.tolerance = 1e-12;
  for (const auto &f : fx) {
    const double err = std::abs(f.got - f.want);
    if (err > r.max_abs_error) {
      r.max_abs_error = err;
      r.detail = std::string("worst: ") + f.name;
    }
  }
  r.passed = r.max_abs_error < r.tolerance;
  r.space_size = fx.size();
  r.seconds = sw.seconds();
  if (r.detail.empty())
    r.detail = std::to_string(fx.size()) + " fixtures";
  return r;
}

std::vector<OracleReport> taylor_matrix_checks(std::uint64_t seed) {
  std::vector<OracleReport> out;
  const std::size_t c = 5;
  std::mt19937_64 rng(seed + 400);
  std::uniform_int_distribution<TokenId> tok(1, TokenId(c));
  std::vector<std::vector<TokenId>> rows;
  for (std::size_t len : {1, 2, 3, 3}) {
    std::vector<TokenId> s;
    for (std::size_t t = 0; t < len; ++t)
      s.push_back(tok(rng));
    rows.push_back(std::move(s));
  }
  const SequenceBatch batch = make_batch(rows, 3);

  try {
    Stopwatch sw;
    Discriminator disc = make_oracle_discriminator(c, seed + 401, true);
    const RewardBundle b = disc.reward_bundle(batch, true);
    double err = 0.0;
    std::size_t cases = 0;
    for (std::size_t n = 0; n < batch.batch; ++n)
      for (std::size_t t = 0; t < batch.lengths[n]; ++t)
        for (TokenId v = 0; v <= c; ++v) {
          std::vector<TokenId> y = rows[n];
          y[t] = v;
          const double direct = disc.reward(make_batch({y}, y.size()))[0];
          err = std::max(err, std::abs(b.taylor.at(n, t, v) - direct));
          ++cases;
        }
    OracleReport r;
    r.name = "taylor_matrix_linear_exact";
    r.criterion = 5;
    r.max_abs_error = err;
    r.tolerance = 1e-9;
    r.passed = err < 1e-9;
    r.space_size = cases;
    r.seconds = sw.seconds();
    r.detail = "linear reward network, every single-token substitution";
    out.push_back(r);
  } catch (const std::exception &e) {
    out.push_back(failed_report("taylor_matrix_linear_exact", 5, e));
  }

  try {
    Stopwatch sw;
    Discriminator disc = make_oracle_discriminator(c, seed + 402, false);
    const RewardBundle b = disc.reward_bundle(batch, false);
    const Tensor e0 = [&] {
      Graph g(GradMode::kDisabled);
      return disc.embed(g, batch).value();
    }();
    const Tensor &w = disc.embedding().value;
    const std::size_t d = disc.config().embed_dim;
    auto reward_at = [&](const Tensor &e, std::size_t n) {
      Graph g(GradMode::kDisabled);
      return disc.forward_from_embedding(g, g.constant(e), batch.lengths).value()[n];
    };
    // Aggregate over every substitution: single cases whose path crosses an
    // ELU kink do not scale quadratically on their own.
    double sum_full = 0.0, sum_half = 0.0;
    std::vector<double> ratios;
    for (std::size_t n = 0; n < batch.batch; ++n)
      for (std::size_t t = 0; t < batch.lengths[n]; ++t)
        for (TokenId v = 1; v <= c; ++v) {
          const TokenId x = batch.at(n, t);
          if (v == x)
            continue;
          double linear = 0.0;
          for (std::size_t j = 0; j < d; ++j)
            linear += (w.at(v, j) - w.at(x, j)) * b.delta_e.at(n, t, j);
          double rem[2];
          for (int k = 0; k < 2; ++k) {
            const double s = k == 0 ? 1.0 : 0.5;
            Tensor e = e0;
            for (std::size_t j = 0; j < d; ++j)
              e.at(n, t, j) += s * (w.at(v, j) - w.at(x, j));
            rem[k] = reward_at(e, n) - b.rewards[n] - s * linear;
          }
          sum_full += std::abs(rem[0]);
          sum_half += std::abs(rem[1]);
          ratios.push_back(rem[0] / rem[1]);
        }
    std::sort(ratios.begin(), ratios.end());
    const double ratio = sum_full / sum_half;
    OracleReport r;
    r.name = "taylor_remainder_quadratic";
    r.criterion = 5;
    r.max_abs_error = std::abs(ratio - 4.0);
    r.tolerance = 1.0;
    r.passed = ratio >= 3.0 && ratio <= 5.0;
    r.space_size = ratios.size();
    r.seconds = sw.seconds();
    char buf[128];
    std::snprintf(buf, sizeof buf,
                  "sum|rem(1)| / sum|rem(1/2)| = %.4f; per-case median %.4f", ratio,
                  ratios[ratios.size() / 2]);
    r.detail = buf;
    out.push_back(r);
  } catch (const std::exception &e) {
    out.push_back(failed_report("taylor_remainder_quadratic", 5, e));
  }
  return out;
}

std::vector<OracleReport> run_verification(const OracleOptions &options) {
  std::vector<OracleReport> out = run_suite(options);
  for (auto &r : taylor_matrix_checks(options.seed))
    out.push_back(std::move(r));
  for (auto &r : gradient_checks(options.seed))
    out.push_back(std::move(r));
  out.push_back(stop_gradient_check());
  try {
    out.push_back(spectral_norm_check(options.seed));
  } catch (const std::exception &e) {
    out.push_back(failed_report("spectral_norm_vs_svd", 7, e));
  }
  for (auto &r : masking_checks(options.seed))
    out.push_back(std::move(r));
  try {
    out.push_back(bleu_fixture_check());
  } catch (const std::exception &e) {
    out.push_back(failed_report("bleu_fixtures", 9, e));
  }
  return out;
}

bool all_passed(const std::vector<OracleReport> &reports) {
  for (const auto &r : reports)
    if (!r.passed)
      return false;
  return true;
}

std::string format_report_table(const std::vector<OracleReport> &reports) {
  std::ostringstream os;
  char line[512];
  std::snprintf(line, sizeof line, "%-4s %-46s %12s %12s %10s %-6s %8s  %s\n", "crit",
                "check", "max_abs_err", "max_rel_err", "tolerance", "status", "seconds",
                "detail");
  os << line;
  for (const auto &r : reports) {
    const std::string crit = r.criterion ? std::to_string(r.criterion) : "-";
    const char *status = r.informational ? "INFO" : (r.passed ? "PASS" : "FAIL");
    char tol[32];
    if (std::isinf(r.tolerance))
      std::snprintf(tol, sizeof tol, "%s", "-");
    else
      std::snprintf(tol, sizeof tol, "%s%.0e", r.relative ? "r" : "", r.tolerance);
    std::snprintf(line, sizeof line, "%-4s %-46s %12.3e %12.3e %10s %-6s %8.2f  %s\n",
                  crit.c_str(), r.name.c_str(), r.max_abs_error, r.max_rel_error, tol,
                  status, r.seconds, r.detail.c_str());
    os << line;
  }
  std::size_t failed = 0;
  for (const auto &r : reports)
    failed += !r.passed;
  os << reports.size() << " checks, " << failed << " failed\n";
  return os.str();
}

} // namespace taylorgan
