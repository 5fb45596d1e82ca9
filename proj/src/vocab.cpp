// SPDX-License-Identifier: Apache-2.0
#include "taylorgan/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace taylorgan {

namespace {
const char *const kReservedTokens[] = {"<pad>", "<sos>", "<eos>"};
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string> &tokens) {
  for (const char *r : kReservedTokens) {
    token_to_id_[r] = static_cast<TokenId>(id_to_token_.size());
    id_to_token_.emplace_back(r);
  }
  for (const auto &tok : tokens) {
    if (!token_to_id_.emplace(tok, static_cast<TokenId>(id_to_token_.size()))
             .second)
      throw std::invalid_argument("duplicate vocabulary token '" + tok + "'");
    id_to_token_.push_back(tok);
  }
}

const std::string &Vocabulary::token(TokenId id) const {
  if (id >= id_to_token_.size())
    throw std::out_of_range("token id " + std::to_string(id) +
                            " out of range for vocabulary of size " +
                            std::to_string(id_to_token_.size()));
  return id_to_token_[id];
}

std::int64_t Vocabulary::find(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? -1 : static_cast<std::int64_t>(it->second);
}

std::vector<bool> Vocabulary::candidate_mask() const {
  std::vector<bool> mask(size(), true);
  mask[kPad] = false;
  mask[kSos] = false;
  return mask;
}

std::vector<std::string> tokenize(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty())
        out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(
          static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty())
    out.push_back(std::move(cur));
  return out;
}

Vocabulary build_vocab(const std::vector<std::string> &lines,
                       std::size_t max_size) {
  if (max_size < 4)
    throw std::invalid_argument("vocabulary cap must be at least 4");
  std::map<std::string, std::size_t> freq;
  for (const auto &line : lines)
    for (auto &tok : tokenize(line))
      if (std::find(std::begin(kReservedTokens), std::end(kReservedTokens),
                    tok) == std::end(kReservedTokens))
        ++freq[tok];
  if (freq.empty())
    throw std::invalid_argument("cannot build a vocabulary from an empty corpus");
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(),
                                                          freq.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto &a, const auto &b) {
    return a.second > b.second; // map order already lexicographic
  });
  const std::size_t keep =
      std::min(ranked.size(), max_size - Vocabulary::kReserved);
  std::vector<std::string> tokens;
  tokens.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i)
    tokens.push_back(ranked[i].first);
  return Vocabulary(tokens);
}

std::vector<TokenId> encode(const Vocabulary &vocab, std::string_view text) {
  std::vector<TokenId> ids;
  for (const auto &tok : tokenize(text)) {
    const std::int64_t id = vocab.find(tok);
    if (id >= static_cast<std::int64_t>(Vocabulary::kReserved))
      ids.push_back(static_cast<TokenId>(id));
  }
  ids.push_back(Vocabulary::kEos);
  return ids;
}

std::string decode(const Vocabulary &vocab, std::span<const TokenId> ids) {
  std::string out;
  for (TokenId id : ids) {
    const std::string &tok = vocab.token(id);
    if (id == Vocabulary::kEos)
      break;
    if (id == Vocabulary::kPad || id == Vocabulary::kSos)
      continue;
    if (!out.empty())
      out.push_back(' ');
    out += tok;
  }
  return out;
}

std::size_t SequenceBatch::total_tokens() const {
  std::size_t s = 0;
  for (std::size_t l : lengths)
    s += l;
  return s;
}

SequenceBatch make_batch(const std::vector<std::vector<TokenId>> &seqs,
                         std::size_t max_len) {
  SequenceBatch b;
  b.batch = seqs.size();
  b.max_len = max_len;
  b.ids.assign(b.batch * max_len, Vocabulary::kPad);
  b.lengths.resize(b.batch);
  for (std::size_t n = 0; n < seqs.size(); ++n) {
    const std::size_t len = std::min(seqs[n].size(), max_len);
    std::copy_n(seqs[n].begin(), len, b.ids.begin() + n * max_len);
    b.lengths[n] = len;
  }
  return b;
}

SequenceBatch repad(const SequenceBatch &batch, std::size_t max_len) {
  SequenceBatch b;
  b.batch = batch.batch;
  b.max_len = max_len;
  b.lengths = batch.lengths;
  b.ids.assign(b.batch * max_len, Vocabulary::kPad);
  for (std::size_t n = 0; n < b.batch; ++n) {
    if (batch.lengths[n] > max_len)
      throw std::invalid_argument("repad: sequence longer than new width");
    for (std::size_t t = 0; t < batch.lengths[n]; ++t)
      b.at(n, t) = batch.at(n, t);
  }
  return b;
}

std::vector<std::string> read_lines(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line))
    if (!tokenize(line).empty())
      lines.push_back(line);
  return lines;
}

Corpus encode_corpus(const Vocabulary &vocab,
                     const std::vector<std::string> &lines, Split split) {
  Corpus c;
  c.split = split;
  c.sentences.reserve(lines.size());
  for (const auto &line : lines) {
    auto ids = encode(vocab, line);
    ids.pop_back(); // EOS is re-appended at batching time
    c.sentences.push_back(std::move(ids));
  }
  return c;
}

BatchStream::BatchStream(const Corpus &corpus, std::size_t batch_size,
                         std::size_t max_len, std::uint64_t seed)
    : corpus_(&corpus), batch_size_(batch_size), max_len_(max_len), rng_(seed) {
  if (batch_size_ == 0)
    throw std::invalid_argument("batch size must be >= 1");
  if (max_len_ < 1)
    throw std::invalid_argument("max_len must be >= 1");
  if (corpus.sentences.empty())
    throw std::invalid_argument("cannot batch an empty corpus");
  order_.resize(corpus.sentences.size());
  reshuffle();
}

void BatchStream::reshuffle() {
  for (std::size_t i = 0; i < order_.size(); ++i)
    order_[i] = i;
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

SequenceBatch BatchStream::next() {
  if (cursor_ >= order_.size()) {
    ++epoch_;
    reshuffle();
  }
  const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
  std::vector<std::vector<TokenId>> seqs;
  seqs.reserve(end - cursor_);
  for (; cursor_ < end; ++cursor_) {
    const auto &s = corpus_->sentences[order_[cursor_]];
    std::vector<TokenId> ids(s.begin(),
                             s.begin() + std::min(s.size(), max_len_ - 1));
    ids.push_back(Vocabulary::kEos);
    seqs.push_back(std::move(ids));
  }
  return make_batch(seqs, max_len_);
}

WordVectors load_word_vectors(const std::string &path, const Vocabulary &vocab,
                              std::size_t dim, std::mt19937_64 &rng) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot open word vectors '" + path + "'");
  WordVectors out{Tensor({vocab.size(), dim}), 0};
  std::normal_distribution<double> normal(0.0, 0.01);
  for (double &x : out.matrix.data())
    x = normal(rng);

  std::vector<bool> seen(vocab.size(), false);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word))
      continue;
    std::vector<double> values;
    std::string field;
    while (ls >> field) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(field, &used));
        if (used != field.size())
          throw std::invalid_argument(field);
      } catch (const std::exception &) {
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": malformed value '" + field + "'");
      }
    }
    if (values.size() != dim)
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected " + std::to_string(dim) +
                               " values, found " +
                               std::to_string(values.size()));
    const std::int64_t id = vocab.find(word);
    if (id < static_cast<std::int64_t>(Vocabulary::kReserved) || seen[id])
      continue;
    seen[id] = true;
    ++out.hits;
    std::copy(values.begin(), values.end(),
              out.matrix.data().begin() + static_cast<std::ptrdiff_t>(id * dim));
  }
  return out;
}

} // namespace taylorgan
