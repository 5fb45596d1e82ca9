// SPDX-License-Identifier: Apache-2.0
/**
 * @file   vocab.hpp
 * @brief  Tokenization, vocabulary, padded batches and word-vector loading.
 */
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "taylorgan/tensor.hpp"

namespace taylorgan {

class Vocabulary {
public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kSos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr std::size_t kReserved = 3;

  Vocabulary();
  /// Reserved tokens are prepended; `tokens` must not repeat.
  explicit Vocabulary(const std::vector<std::string> &tokens);

  std::size_t size() const { return id_to_token_.size(); }
  const std::string &token(TokenId id) const;
  /// Id of a token, or -1 when absent.
  std::int64_t find(std::string_view token) const;
  const std::vector<std::string> &tokens() const { return id_to_token_; }

  /// Generation candidates: everything except PAD and SOS.
  std::vector<bool> candidate_mask() const;

private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, TokenId> token_to_id_;
};

/// Lowercased whitespace tokens of one line.
std::vector<std::string> tokenize(std::string_view line);

/// Frequency-ranked vocabulary (ties broken lexicographically) holding at
/// most `max_size` entries including the three reserved tokens.
Vocabulary build_vocab(const std::vector<std::string> &lines,
                       std::size_t max_size);

/// Token ids of `text` followed by EOS; out-of-vocabulary tokens are dropped.
std::vector<TokenId> encode(const Vocabulary &vocab, std::string_view text);
/// Space-joined tokens up to the first EOS, skipping PAD and SOS.
std::string decode(const Vocabulary &vocab, std::span<const TokenId> ids);

/// Padded id matrix. `lengths[n]` counts valid tokens (EOS included);
/// entries past that are PAD.
struct SequenceBatch {
  std::size_t batch = 0;
  std::size_t max_len = 0;
  std::vector<TokenId> ids; // batch * max_len, row-major
  std::vector<std::size_t> lengths;

  TokenId at(std::size_t n, std::size_t t) const { return ids[n * max_len + t]; }
  TokenId &at(std::size_t n, std::size_t t) { return ids[n * max_len + t]; }
  std::span<const TokenId> row(std::size_t n) const {
    return std::span<const TokenId>(ids).subspan(n * max_len, lengths[n]);
  }
  std::size_t total_tokens() const;
};

/// Packs sequences (already EOS-terminated, no SOS) into a batch, padding or
/// cutting columns to `max_len`.
SequenceBatch make_batch(const std::vector<std::vector<TokenId>> &seqs,
                         std::size_t max_len);
/// Same batch with a different column count (lengths unchanged, must fit).
SequenceBatch repad(const SequenceBatch &batch, std::size_t max_len);

enum class Split { kTrain, kValidation };

struct Corpus {
  std::vector<std::vector<TokenId>> sentences; // without EOS
  Split split = Split::kTrain;
};

std::vector<std::string> read_lines(const std::string &path);
Corpus encode_corpus(const Vocabulary &vocab,
                     const std::vector<std::string> &lines, Split split);

/// Shuffled mini-batches, reshuffled every epoch from a seeded RNG. Sentences
/// are truncated to max_len - 1 tokens before EOS is appended. The final batch
/// of an epoch may be smaller than `batch_size`.
class BatchStream {
public:
  BatchStream(const Corpus &corpus, std::size_t batch_size, std::size_t max_len,
              std::uint64_t seed);
  SequenceBatch next();
  std::size_t epoch() const { return epoch_; }

private:
  void reshuffle();

  const Corpus *corpus_;
  std::size_t batch_size_;
  std::size_t max_len_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

/// Result of reading a textual word-vector file.
struct WordVectors {
  Tensor matrix; // [|V|, d]
  std::size_t hits = 0;
};

/// Rows of tokens found in the file are copied verbatim; reserved tokens and
/// missing tokens are drawn from N(0, 0.01^2).
WordVectors load_word_vectors(const std::string &path, const Vocabulary &vocab,
                              std::size_t dim, std::mt19937_64 &rng);

} // namespace taylorgan
