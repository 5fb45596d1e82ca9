// SPDX-License-Identifier: Apache-2.0
#include "taylorgan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace taylorgan {

std::size_t NGramHash::operator()(const Sentence &g) const noexcept {
  std::size_t h = 1469598103934665603ULL;
  for (TokenId id : g) {
    h ^= id;
    h *= 1099511628211ULL;
  }
  return h;
}

NGramTable::NGramTable(const Sentence &sentence, std::size_t n) {
  if (n == 0)
    throw std::invalid_argument("n-gram order must be >= 1");
  if (sentence.size() < n)
    return;
  for (std::size_t i = 0; i + n <= sentence.size(); ++i) {
    ++counts_[Sentence(sentence.begin() + i, sentence.begin() + i + n)];
    ++total_;
  }
}

std::size_t NGramTable::count(const Sentence &gram) const {
  auto it = counts_.find(gram);
  return it == counts_.end() ? 0 : it->second;
}

namespace {

using MaxCounts = std::unordered_map<Sentence, std::size_t, NGramHash>;

MaxCounts max_reference_counts(const std::vector<Sentence> &references,
                               std::size_t n) {
  MaxCounts out;
  for (const auto &ref : references) {
    const NGramTable table(ref, n);
    for (const auto &[g, c] : table.counts()) {
      auto &slot = out[g];
      slot = std::max(slot, c);
    }
  }
  return out;
}

double smooth(PrecisionCounts pc, double epsilon) {
  if (pc.total == 0)
    return epsilon;
  const double t = double(pc.total);
  return std::max(double(pc.matched) / t, epsilon / t);
}

// Closest reference length to c; the shorter one on ties.
std::size_t closest_length(const std::map<std::size_t, std::size_t> &lengths,
                           std::size_t c) {
  auto hi = lengths.lower_bound(c);
  if (hi == lengths.end())
    return std::prev(hi)->first;
  if (hi->first == c || hi == lengths.begin())
    return hi->first;
  auto lo = std::prev(hi);
  return (c - lo->first) <= (hi->first - c) ? lo->first : hi->first;
}

double bp_from_lengths(std::size_t c, std::size_t r) {
  if (c >= r)
    return 1.0;
  if (c == 0)
    return 0.0;
  return std::exp(1.0 - double(r) / double(c));
}

} // namespace

PrecisionCounts precision_counts(const std::vector<Sentence> &candidates,
                                 const std::vector<Sentence> &references,
                                 std::size_t n) {
  const MaxCounts ref = max_reference_counts(references, n);
  PrecisionCounts pc;
  for (const auto &cand : candidates) {
    NGramTable table(cand, n);
    pc.total += table.total();
    for (const auto &[g, c] : table.counts()) {
      auto it = ref.find(g);
      if (it != ref.end())
        pc.matched += std::min(c, it->second);
    }
  }
  return pc;
}

double smoothed_precision(const std::vector<Sentence> &candidates,
                          const std::vector<Sentence> &references, std::size_t n,
                          double epsilon) {
  if (!(epsilon > 0))
    throw std::invalid_argument("smoothing epsilon must be positive");
  return smooth(precision_counts(candidates, references, n), epsilon);
}

double brevity_penalty(const std::vector<Sentence> &candidates,
                       const std::vector<Sentence> &references) {
  if (references.empty())
    throw std::invalid_argument("brevity_penalty: no references");
  std::map<std::size_t, std::size_t> lengths;
  for (const auto &r : references)
    ++lengths[r.size()];
  std::size_t c = 0, r = 0;
  for (const auto &cand : candidates) {
    c += cand.size();
    r += closest_length(lengths, cand.size());
  }
  return bp_from_lengths(c, r);
}

double bleu(const std::vector<Sentence> &candidates,
            const std::vector<Sentence> &references, const BleuConfig &config) {
  if (config.max_order == 0)
    throw std::invalid_argument("BLEU order must be >= 1");
  if (candidates.empty() || references.empty())
    throw std::invalid_argument("BLEU needs candidates and references");
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= config.max_order; ++n)
    log_sum += std::log(smoothed_precision(candidates, references, n, config.epsilon));
  const double bp =
      config.brevity_penalty ? brevity_penalty(candidates, references) : 1.0;
  return bp * std::exp(log_sum / double(config.max_order));
}

double self_bleu(const std::vector<Sentence> &corpus, const BleuConfig &config,
                 std::size_t sample_size) {
  if (sample_size < 2)
    throw std::invalid_argument("self_bleu needs at least two sentences");
  if (sample_size > corpus.size())
    throw std::invalid_argument("self_bleu sample larger than the corpus");
  if (config.max_order == 0)
    throw std::invalid_argument("BLEU order must be >= 1");

  // Per order: the two largest counts of each n-gram and the owner of the
  // largest, so "max over all other sentences" is O(1).
  struct Top2 {
    std::size_t first = 0, second = 0, owner = 0;
  };
  std::vector<std::unordered_map<Sentence, Top2, NGramHash>> tops(config.max_order);
  std::vector<std::vector<NGramTable>> tables(config.max_order);
  std::map<std::size_t, std::size_t> lengths;
  for (std::size_t i = 0; i < sample_size; ++i) {
    ++lengths[corpus[i].size()];
    for (std::size_t n = 1; n <= config.max_order; ++n) {
      tables[n - 1].emplace_back(corpus[i], n);
      for (const auto &[g, c] : tables[n - 1].back().counts()) {
        Top2 &t = tops[n - 1][g];
        if (c > t.first) {
          t.second = t.first;
          t.first = c;
          t.owner = i;
        } else if (c > t.second) {
          t.second = c;
        }
      }
    }
  }

  double total = 0.0;
  for (std::size_t i = 0; i < sample_size; ++i) {
    double log_sum = 0.0;
    for (std::size_t n = 1; n <= config.max_order; ++n) {
      const NGramTable &table = tables[n - 1][i];
      PrecisionCounts pc;
      pc.total = table.total();
      for (const auto &[g, c] : table.counts()) {
        const Top2 &t = tops[n - 1].at(g);
        const std::size_t other = t.owner == i ? t.second : t.first;
        pc.matched += std::min(c, other);
      }
      log_sum += std::log(smooth(pc, config.epsilon));
    }
    double bp = 1.0;
    if (config.brevity_penalty) {
      const std::size_t len = corpus[i].size();
      if (--lengths[len] == 0)
        lengths.erase(len);
      bp = bp_from_lengths(len, closest_length(lengths, len));
      ++lengths[len];
    }
    total += bp * std::exp(log_sum / double(config.max_order));
  }
  return total / double(sample_size);
}

std::vector<Sentence> strip_batch(const SequenceBatch &batch,
                                  std::optional<TokenId> eos) {
  std::vector<Sentence> out;
  out.reserve(batch.batch);
  for (std::size_t n = 0; n < batch.batch; ++n) {
    Sentence s;
    for (TokenId id : batch.row(n)) {
      if (eos && id == *eos)
        break;
      if (id != Vocabulary::kPad)
        s.push_back(id);
    }
    out.push_back(std::move(s));
  }
  return out;
}

double lm_score(Generator &lm, const SequenceBatch &samples, std::size_t batch_size) {
  if (samples.batch == 0)
    throw std::invalid_argument("lm_score of an empty sample");
  double total = 0.0;
  for (std::size_t start = 0; start < samples.batch; start += batch_size) {
    const std::size_t end = std::min(samples.batch, start + batch_size);
    std::vector<std::vector<TokenId>> rows;
    for (std::size_t n = start; n < end; ++n)
      rows.emplace_back(samples.row(n).begin(), samples.row(n).end());
    SequenceBatch part = make_batch(rows, samples.max_len);
    const std::vector<double> lp = lm.log_prob(part);
    for (std::size_t i = 0; i < lp.size(); ++i) {
      if (part.lengths[i] == 0)
        throw std::invalid_argument("lm_score: empty sequence");
      total += -lp[i] / double(part.lengths[i]);
    }
  }
  return total / double(samples.batch);
}

double lm_score(Generator &lm, const Corpus &corpus, std::size_t max_len) {
  std::vector<std::vector<TokenId>> rows;
  rows.reserve(corpus.sentences.size());
  for (const auto &s : corpus.sentences) {
    std::vector<TokenId> ids(s.begin(), s.begin() + std::min(s.size(), max_len - 1));
    ids.push_back(Vocabulary::kEos);
    rows.push_back(std::move(ids));
  }
  return lm_score(lm, make_batch(rows, max_len));
}

Generator train_language_model(const Corpus &corpus, const GeneratorConfig &shape,
                               const LmHyper &hyper) {
  GeneratorConfig cfg = shape;
  cfg.embed_dim = hyper.embed_dim;
  cfg.hidden_dim = hyper.hidden_dim;
  Generator lm(cfg, hyper.seed);
  AdamConfig adam;
  adam.learning_rate = hyper.learning_rate;
  adam.beta1 = 0.9;
  Adam opt(adam, lm.parameters());
  BatchStream stream(corpus, hyper.batch_size, hyper.max_len, hyper.seed + 1);
  for (std::size_t step = 0; step < hyper.steps; ++step)
    lm.mle_step(stream.next(), opt);
  return lm;
}

double rlm_score(const Corpus &generated, const Corpus &real_eval,
                 const GeneratorConfig &shape, const LmHyper &hyper) {
  if (generated.sentences.size() < hyper.min_samples)
    throw std::invalid_argument("rlm_score needs at least " +
                                std::to_string(hyper.min_samples) +
                                " generated sentences, got " +
                                std::to_string(generated.sentences.size()));
  Generator lm = train_language_model(generated, shape, hyper);
  return lm_score(lm, real_eval, hyper.max_len);
}

} // namespace taylorgan
