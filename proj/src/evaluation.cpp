// SPDX-License-Identifier: Apache-2.0
#include "taylorgan/evaluation.hpp"

#include <algorithm>
#include <random>
#include <sstream>
#include <stdexcept>

namespace taylorgan {

namespace {

bool wants(const EvalOptions &o, const std::string &m) {
  return std::find(o.metrics.begin(), o.metrics.end(), m) != o.metrics.end();
}

std::vector<std::string> columns(const EvalOptions &o) {
  std::vector<std::string> out;
  const std::string k = std::to_string(o.bleu_order);
  if (wants(o, "bleu"))
    out.push_back("neg_bleu" + k);
  if (wants(o, "self_bleu"))
    out.push_back("self_bleu" + k);
  for (const char *m : {"lm", "rlm", "perplexity"})
    if (wants(o, m))
      out.emplace_back(m);
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

} // namespace

SequenceBatch sample_batch(Generator &gen, std::size_t n, std::size_t max_len,
                           double temperature, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return gen.rollout(n, max_len, temperature, rng).tokens;
}

std::vector<std::string> sample_text(Generator &gen, const Vocabulary &vocab,
                                     std::size_t n, std::size_t max_len,
                                     double temperature, std::uint64_t seed) {
  if (gen.config().vocab_size != vocab.size())
    throw std::invalid_argument("vocabulary does not match the generator");
  const SequenceBatch batch = sample_batch(gen, n, max_len, temperature, seed);
  std::vector<std::string> lines;
  lines.reserve(n);
  for (std::size_t i = 0; i < batch.batch; ++i)
    lines.push_back(decode(vocab, batch.row(i)));
  return lines;
}

void check_metrics(const std::vector<std::string> &metrics) {
  for (const auto &m : metrics)
    if (std::find(kAllMetrics.begin(), kAllMetrics.end(), m) == kAllMetrics.end())
      throw std::invalid_argument("unknown metric '" + m +
                                  "' (choose from bleu, self_bleu, lm, rlm, perplexity)");
}

EvalRow evaluate(Generator &gen, double temperature, const EvalOptions &options,
                 EvalContext &context) {
  check_metrics(options.metrics);
  const bool needs_refs =
      wants(options, "bleu") || wants(options, "rlm") || wants(options, "perplexity");
  if (needs_refs && (!context.references || context.references->sentences.empty()))
    throw std::invalid_argument("evaluation needs a reference corpus");

  EvalRow row;
  row.temperature = temperature;
  const SequenceBatch batch =
      sample_batch(gen, options.samples, options.max_len, temperature, options.seed);
  const std::vector<Sentence> sentences = strip_batch(batch, gen.config().eos);
  BleuConfig bleu_cfg;
  bleu_cfg.max_order = options.bleu_order;
  const std::string k = std::to_string(options.bleu_order);

  if (wants(options, "bleu"))
    row.values["neg_bleu" + k] =
        -bleu(sentences, context.references->sentences, bleu_cfg);
  if (wants(options, "self_bleu")) {
    const std::size_t size =
        options.self_bleu_size ? std::min(options.self_bleu_size, sentences.size())
                               : sentences.size();
    row.values["self_bleu" + k] = self_bleu(sentences, bleu_cfg, size);
  }
  if (wants(options, "lm")) {
    if (!context.lm) {
      if (!context.lm_train || context.lm_train->sentences.empty())
        throw std::invalid_argument("lm score needs a real-data training corpus");
      context.lm.emplace(train_language_model(*context.lm_train, gen.config(), options.lm));
    }
    row.values["lm"] = lm_score(*context.lm, batch);
  }
  if (wants(options, "rlm")) {
    Corpus generated{sentences, Split::kTrain};
    row.values["rlm"] = rlm_score(generated, *context.references, gen.config(), options.lm);
  }
  if (wants(options, "perplexity"))
    row.values["perplexity"] = gen.perplexity(*context.references, options.max_len);
  return row;
}

std::vector<EvalRow> sweep(Generator &gen, const std::vector<double> &temperatures,
                           const EvalOptions &options, EvalContext &context) {
  if (temperatures.empty())
    throw std::invalid_argument("sweep needs at least one temperature");
  std::vector<EvalRow> rows;
  for (double t : temperatures)
    rows.push_back(evaluate(gen, t, options, context));
  return rows;
}

std::string sweep_csv(const std::vector<EvalRow> &rows, const EvalOptions &options) {
  const std::vector<std::string> cols = columns(options);
  std::ostringstream os;
  os << "temperature";
  for (const auto &c : cols)
    os << ',' << c;
  os << '\n';
  for (const auto &r : rows) {
    os << fmt(r.temperature);
    for (const auto &c : cols)
      os << ',' << fmt(r.values.at(c));
    os << '\n';
  }
  return os.str();
}

std::vector<double> parse_number_list(const std::string &text) {
  std::vector<double> out;
  for (const auto &item : parse_name_list(text)) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception &) {
      used = 0;
    }
    if (used == 0 || used != item.size())
      throw std::invalid_argument("not a number: '" + item + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> parse_name_list(const std::string &text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty())
      out.push_back(item);
  }
  return out;
}

} // namespace taylorgan
