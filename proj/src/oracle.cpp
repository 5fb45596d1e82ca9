// SPDX-License-Identifier: Apache-2.0
#include "taylorgan/oracle.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

namespace taylorgan {

namespace {

constexpr double kEnumTol = 1e-9;
constexpr double kLimitTol = 1e-5;

class Stopwatch {
public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
        .count();
  }

private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

OracleReport abs_report(std::string name, double err, std::size_t space,
                        const Stopwatch &sw, std::string detail = {}) {
  OracleReport r;
  r.name = std::move(name);
  r.max_abs_error = err;
  r.tolerance = kEnumTol;
  r.passed = err < kEnumTol;
  r.space_size = space;
  r.seconds = sw.seconds();
  r.detail = std::move(detail);
  return r;
}

OracleReport rel_report(std::string name, double abs_err, double rel_err,
                        std::size_t space, const Stopwatch &sw,
                        std::string detail = {}) {
  OracleReport r;
  r.name = std::move(name);
  r.max_abs_error = abs_err;
  r.max_rel_error = rel_err;
  r.tolerance = kLimitTol;
  r.relative = true;
  r.passed = rel_err < kLimitTol;
  r.space_size = space;
  r.seconds = sw.seconds();
  r.detail = std::move(detail);
  return r;
}

Tensor to_tensor_values(Var v) { return v.value(); }

} // namespace

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("max_abs_diff: size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double rel_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("rel_diff: size mismatch");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

EnumerationSpace::EnumerationSpace(std::size_t candidates, std::size_t length)
    : candidates_(candidates), length_(length) {
  if (candidates < 1 || candidates > kMaxOracleCandidates || length < 1 ||
      length > kMaxOracleLength)
    throw std::invalid_argument("enumeration space " + std::to_string(candidates) +
                                "^" + std::to_string(length) +
                                " exceeds the caps (6 candidates, length 4)");
  std::size_t total = 1;
  for (std::size_t t = 0; t < length; ++t)
    total *= candidates;
  batch_.batch = total;
  batch_.max_len = length;
  batch_.ids.resize(total * length);
  batch_.lengths.assign(total, length);
  for (std::size_t s = 0; s < total; ++s) {
    std::size_t rest = s;
    for (std::size_t t = length; t-- > 0;) {
      batch_.at(s, t) = TokenId(1 + rest % candidates);
      rest /= candidates;
    }
  }
}

std::size_t EnumerationSpace::prefix_span(std::size_t t) const {
  std::size_t span = 1;
  for (std::size_t i = t + 1; i < length_; ++i)
    span *= candidates_;
  return span;
}

std::size_t EnumerationSpace::prefix_begin(std::size_t s, std::size_t t) const {
  const std::size_t span = prefix_span(t);
  return s / span * span;
}

Generator make_oracle_generator(std::size_t candidates, std::uint64_t seed) {
  GeneratorConfig cfg;
  cfg.vocab_size = candidates + 1;
  cfg.embed_dim = 8;
  cfg.hidden_dim = 8;
  cfg.sos = 0;
  cfg.eos = std::nullopt;
  cfg.candidates.assign(cfg.vocab_size, true);
  cfg.candidates[0] = false;
  Generator gen(cfg, seed);
  // Unit-scale embeddings give clearly non-uniform policies.
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor e = gen.embedding().value;
  for (double &x : e.data())
    x = normal(rng);
  gen.set_embedding(e);
  return gen;
}

Discriminator make_oracle_discriminator(std::size_t candidates, std::uint64_t seed,
                                        bool linear) {
  DiscriminatorConfig cfg;
  cfg.vocab_size = candidates + 1;
  cfg.embed_dim = 8;
  cfg.dense.clear();
  if (linear) {
    cfg.body.clear();
    cfg.activation = Activation::kIdentity;
  } else {
    cfg.body = {{DiscLayer::Kind::kConv, 2, 6}};
  }
  return Discriminator(cfg, seed);
}

std::vector<double> sequence_probs(Generator &gen, const EnumerationSpace &space) {
  std::vector<double> lp = gen.log_prob(space.batch());
  for (double &x : lp)
    x = std::exp(x);
  return lp;
}

std::vector<double> flatten(const GradientMap &grads, const Generator &gen) {
  std::vector<double> out;
  for (const Parameter *p : gen.parameters()) {
    const Tensor g = grads.param(*p);
    out.insert(out.end(), g.data().begin(), g.data().end());
  }
  return out;
}

std::vector<double> exact_objective_gradient(Generator &gen,
                                             const EnumerationSpace &space,
                                             std::span<const double> rewards) {
  if (rewards.size() != space.size())
    throw std::invalid_argument("exact_objective_gradient: one reward per sequence");
  Graph g;
  PolicyOutputs pol = gen.teacher_force(g, space.batch());
  Var seq_lp = ops::sum_last(token_log_probs(pol, space.batch()));
  Var probs = ops::exp(seq_lp);
  Tensor r({space.size()}, std::vector<double>(rewards.begin(), rewards.end()));
  Var objective = ops::sum(ops::mul(probs, g.constant(std::move(r))));
  return flatten(g.backward(objective), gen);
}

namespace {

Var estimator_surrogate(Graph &g, Generator &gen, Discriminator &disc,
                        const SequenceBatch &tokens,
                        std::span<const double> weights,
                        const ExpectationOptions &options) {
  PolicyOutputs pol = gen.teacher_force(g, tokens);
  switch (options.kind) {
  case EstimatorKind::kReinforce: {
    const std::vector<double> r = disc.reward(tokens);
    return reinforce_surrogate(pol, tokens, r, options.baseline, weights);
  }
  case EstimatorKind::kStraightThrough: {
    RewardBundle b = disc.reward_bundle(tokens, false);
    return straight_through_surrogate(pol, tokens, b.delta_e,
                                      disc.embedding().value, weights);
  }
  case EstimatorKind::kTaylor: {
    RewardBundle b = disc.reward_bundle(tokens, true);
    KernelMatrix k = hamming_kernel(disc.embedding().value, options.bandwidth,
                                    gen.config().candidates);
    Tensor adv = taylor_advantages(to_tensor_values(pol.log_probs),
                                   to_tensor_values(pol.probs), tokens, b.taylor,
                                   k, options.baseline);
    return taylor_surrogate(pol, adv, weights);
  }
  default:
    throw std::invalid_argument("oracle: unsupported estimator " +
                                estimator_name(options.kind));
  }
}

} // namespace

std::vector<double> estimator_expectation(Generator &gen, Discriminator &disc,
                                          const EnumerationSpace &space,
                                          const ExpectationOptions &options) {
  const std::vector<double> pi = sequence_probs(gen, space);
  Graph g;
  Var s = estimator_surrogate(g, gen, disc, space.batch(), pi, options);
  return flatten(g.backward(s), gen);
}

std::vector<double> sample_gradient(Generator &gen, Discriminator &disc,
                                    const SequenceBatch &tokens,
                                    const ExpectationOptions &options) {
  Graph g;
  Var s = estimator_surrogate(g, gen, disc, tokens, {}, options);
  return flatten(g.backward(s), gen);
}

namespace {

SequenceBatch single_row(const SequenceBatch &batch, std::size_t n) {
  std::vector<TokenId> ids(batch.row(n).begin(), batch.row(n).end());
  return make_batch({ids}, batch.max_len);
}

OracleReport check_normalization(const OracleOptions &opt) {
  Stopwatch sw;
  double worst = 0.0;
  std::size_t size = 0;
  for (auto [c, t] : {std::pair<std::size_t, std::size_t>{4, 3}, {3, 2}, {6, 4}}) {
    EnumerationSpace space(c, t);
    Generator gen = make_oracle_generator(c, opt.seed + 11);
    double total = 0.0;
    for (double p : sequence_probs(gen, space))
      total += p;
    worst = std::max(worst, std::abs(total - 1.0));
    size = std::max(size, space.size());
  }
  return abs_report("policy_normalization", worst, size, sw,
                    "|sum_x pi(x) - 1| over 4^3, 3^2, 6^4");
}

OracleReport check_kernel(const OracleOptions &opt) {
  Stopwatch sw;
  Discriminator disc = make_oracle_discriminator(4, opt.seed + 3);
  Generator gen = make_oracle_generator(4, opt.seed + 3);
  double worst = 0.0;
  for (double lambda : {1e-8, 0.5, 1e8}) {
    KernelMatrix k = hamming_kernel(disc.embedding().value, lambda,
                                    gen.config().candidates, opt.inject_fault);
    worst = std::max(worst, kernel_normalization_error(k));
  }
  return abs_report("kernel_normalization", worst, 0, sw,
                    opt.inject_fault ? "fault injected" : "lambda 1e-8, 0.5, 1e8");
}

OracleReport check_reinforce_unbiased(const OracleOptions &opt) {
  Stopwatch sw;
  EnumerationSpace space(4, 3);
  Generator gen = make_oracle_generator(4, opt.seed + 1);
  Discriminator disc = make_oracle_discriminator(4, opt.seed + 2);
  const std::vector<double> r = disc.reward(space.batch());
  const std::vector<double> exact = exact_objective_gradient(gen, space, r);
  const std::vector<double> est =
      estimator_expectation(gen, disc, space, {EstimatorKind::kReinforce, 0.0, 0.5});
  return abs_report("reinforce_unbiasedness", max_abs_diff(exact, est), space.size(),
                    sw);
}

OracleReport check_baseline(const OracleOptions &opt, EstimatorKind kind) {
  Stopwatch sw;
  EnumerationSpace space(4, 3);
  Generator gen = make_oracle_generator(4, opt.seed + 4);
  Discriminator disc = make_oracle_discriminator(4, opt.seed + 5);
  const std::vector<double> ref =
      estimator_expectation(gen, disc, space, {kind, 0.0, 0.5});
  double worst = 0.0;
  for (double b : {-3.0, 7.0})
    worst = std::max(worst,
                     max_abs_diff(ref, estimator_expectation(gen, disc, space,
                                                             {kind, b, 0.5})));
  return abs_report("baseline_invariance_" + estimator_name(kind), worst,
                    space.size(), sw, "b in {0, -3, 7}");
}

struct LimitErrors {
  double abs = 0.0, rel = 0.0;
};

template <class F> LimitErrors over_samples(const OracleOptions &opt, F compare) {
  Generator gen = make_oracle_generator(4, opt.seed + 6);
  Discriminator disc = make_oracle_discriminator(4, opt.seed + 7);
  std::mt19937_64 rng(opt.seed + 8);
  PolicyRollout roll = gen.rollout(20, 3, 1.0, rng);
  LimitErrors e;
  for (std::size_t n = 0; n < roll.tokens.batch; ++n) {
    const SequenceBatch x = single_row(roll.tokens, n);
    const auto [a, b] = compare(gen, disc, x);
    e.abs = std::max(e.abs, max_abs_diff(a, b));
    e.rel = std::max(e.rel, rel_diff(a, b));
  }
  return e;
}

OracleReport check_limit_reinforce(const OracleOptions &opt) {
  Stopwatch sw;
  const LimitErrors e = over_samples(opt, [](Generator &g, Discriminator &d,
                                             const SequenceBatch &x) {
    return std::pair{sample_gradient(g, d, x, {EstimatorKind::kTaylor, 0.25, 1e-8}),
                     sample_gradient(g, d, x, {EstimatorKind::kReinforce, 0.25, 0})};
  });
  return rel_report("taylor_to_reinforce_limit", e.abs, e.rel, 20, sw,
                    "lambda 1e-8, 20 samples");
}

OracleReport check_limit_st(const OracleOptions &opt) {
  Stopwatch sw;
  const LimitErrors e = over_samples(opt, [](Generator &g, Discriminator &d,
                                             const SequenceBatch &x) {
    return std::pair{
        sample_gradient(g, d, x, {EstimatorKind::kTaylor, 0.0, 1e8}),
        sample_gradient(g, d, x, {EstimatorKind::kStraightThrough, 0.0, 0})};
  });
  return rel_report("taylor_to_straight_through_limit", e.abs, e.rel, 20, sw,
                    "lambda 1e8, 20 samples");
}

OracleReport check_st_baseline(const OracleOptions &opt) {
  Stopwatch sw;
  const LimitErrors e = over_samples(opt, [](Generator &g, Discriminator &d,
                                             const SequenceBatch &x) {
    return std::pair{sample_gradient(g, d, x, {EstimatorKind::kTaylor, 0.0, 1e8}),
                     sample_gradient(g, d, x, {EstimatorKind::kTaylor, 7.0, 1e8})};
  });
  return rel_report("straight_through_limit_baseline_independence", e.abs, e.rel,
                    20, sw, "lambda 1e8, b = 0 vs 7");
}

OracleReport check_entropy(const OracleOptions &opt) {
  Stopwatch sw;
  EnumerationSpace space(3, 2);
  Generator gen = make_oracle_generator(3, opt.seed + 9);
  const std::vector<double> pi = sequence_probs(gen, space);
  const SequenceBatch &batch = space.batch();

  // E[sum_t grad log pi(x_t | x_<t) * r_t], r_t = -log pi(x_t | x_<t) held fixed
  Graph g1;
  PolicyOutputs p1 = gen.teacher_force(g1, batch);
  Var lp = token_log_probs(p1, batch);
  Tensor coef = lp.value();
  for (std::size_t s = 0; s < space.size(); ++s)
    for (std::size_t t = 0; t < batch.max_len; ++t)
      coef.at(s, t) = -coef.at(s, t) * pi[s];
  const std::vector<double> lhs =
      flatten(g1.backward(ops::sum(ops::mul(lp, g1.constant(coef)))), gen);

  // E[sum_t grad H(pi(. | x_<t))]
  Graph g2;
  PolicyOutputs p2 = gen.teacher_force(g2, batch);
  const std::vector<double> rhs =
      flatten(g2.backward(entropy_bonus(p2, batch, 1.0, pi)), gen);
  return abs_report("entropy_gradient_identity", max_abs_diff(lhs, rhs),
                    space.size(), sw);
}

OracleReport check_q_substitution(const OracleOptions &opt) {
  Stopwatch sw;
  EnumerationSpace space(4, 3);
  Generator gen = make_oracle_generator(4, opt.seed + 12);
  Discriminator disc = make_oracle_discriminator(4, opt.seed + 13);
  const SequenceBatch &batch = space.batch();
  const std::vector<double> pi = sequence_probs(gen, space);
  const std::vector<double> r = disc.reward(batch);
  const std::size_t c = space.candidates(), t_len = space.length(),
                    v = gen.config().vocab_size;

  // Q(x_<t, y) = E[R | prefix x_<t y], from the enumeration.
  auto q_value = [&](std::size_t s, std::size_t t, TokenId y) {
    const std::size_t span = space.prefix_span(t);
    const std::size_t begin = space.prefix_begin(s, t) +
                              (std::size_t(y) - std::size_t(batch.at(s, t))) * span;
    double num = 0.0, den = 0.0;
    for (std::size_t i = begin; i < begin + span; ++i) {
      num += pi[i] * r[i];
      den += pi[i];
    }
    return num / den;
  };
  Tensor q({space.size(), t_len, v});
  for (std::size_t s = 0; s < space.size(); ++s)
    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t y = 1; y <= c; ++y)
        q.at(s, t, y) = q_value(s, t, TokenId(y));

  Graph g;
  PolicyOutputs pol = gen.teacher_force(g, batch);
  KernelMatrix k = hamming_kernel(disc.embedding().value, 0.5, gen.config().candidates);
  Tensor adv = taylor_advantages(pol.log_probs.value(), pol.probs.value(), batch, q,
                                 k, 0.0);
  const std::vector<double> est = flatten(g.backward(taylor_surrogate(pol, adv, pi)), gen);
  const std::vector<double> exact = exact_objective_gradient(gen, space, r);
  return abs_report("q_substitution_unbiasedness", max_abs_diff(est, exact),
                    space.size(), sw, "lambda 0.5");
}

OracleReport check_linear_t1(const OracleOptions &opt) {
  Stopwatch sw;
  EnumerationSpace space(5, 1);
  Generator gen = make_oracle_generator(5, opt.seed + 14);
  Discriminator disc = make_oracle_discriminator(5, opt.seed + 15, true);
  const std::vector<double> r = disc.reward(space.batch());
  const std::vector<double> exact = exact_objective_gradient(gen, space, r);
  const std::vector<double> est =
      estimator_expectation(gen, disc, space, {EstimatorKind::kTaylor, 0.0, 0.5});
  return abs_report("taylor_exact_linear_length1", max_abs_diff(exact, est),
                    space.size(), sw, "linear reward, T = 1, lambda 0.5");
}

OracleReport measure_taylor_bias(const OracleOptions &opt) {
  Stopwatch sw;
  EnumerationSpace space(4, 3);
  Generator gen = make_oracle_generator(4, opt.seed + 16);
  Discriminator disc = make_oracle_discriminator(4, opt.seed + 17);
  const std::vector<double> r = disc.reward(space.batch());
  const std::vector<double> exact = exact_objective_gradient(gen, space, r);
  const std::vector<double> est =
      estimator_expectation(gen, disc, space, {EstimatorKind::kTaylor, 0.0, 0.5});
  OracleReport rep;
  rep.name = "taylor_bias_lambda_0.5";
  rep.max_abs_error = max_abs_diff(exact, est);
  rep.max_rel_error = rel_diff(exact, est);
  rep.informational = true;
  rep.passed = true;
  rep.tolerance = std::numeric_limits<double>::infinity();
  rep.space_size = space.size();
  rep.seconds = sw.seconds();
  rep.detail = "measured only";
  return rep;
}

} // namespace

std::vector<OracleReport> run_suite(const OracleOptions &options) {
  std::vector<OracleReport> out;
  auto guarded = [&](const char *name, auto fn, int criterion = 0) {
    try {
      out.push_back(fn(options));
    } catch (const std::exception &e) {
      OracleReport r;
      r.name = name;
      r.passed = false;
      r.max_abs_error = std::numeric_limits<double>::infinity();
      r.max_rel_error = std::numeric_limits<double>::infinity();
      r.detail = std::string("exception: ") + e.what();
      out.push_back(r);
    }
    out.back().criterion = criterion;
  };
  guarded("policy_normalization", check_normalization);
  guarded("kernel_normalization", check_kernel);
  guarded("reinforce_unbiasedness", check_reinforce_unbiased, 1);
  guarded(
      "baseline_invariance_reinforce",
      [](const OracleOptions &o) { return check_baseline(o, EstimatorKind::kReinforce); },
      2);
  guarded(
      "baseline_invariance_taylor",
      [](const OracleOptions &o) { return check_baseline(o, EstimatorKind::kTaylor); }, 2);
  guarded("taylor_to_reinforce_limit", check_limit_reinforce, 3);
  guarded("taylor_to_straight_through_limit", check_limit_st, 3);
  guarded("straight_through_limit_baseline_independence", check_st_baseline, 3);
  guarded("entropy_gradient_identity", check_entropy, 4);
  guarded("q_substitution_unbiasedness", check_q_substitution);
  guarded("taylor_exact_linear_length1", check_linear_t1);
  guarded("taylor_bias_lambda_0.5", measure_taylor_bias);
  return out;
}

} // namespace taylorgan
