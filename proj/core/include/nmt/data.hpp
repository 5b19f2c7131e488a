// SPDX-License-Identifier: Apache-2.0
//
// Vocabularies, corpora, padded batches and early-stopping bookkeeping.
#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nmt/ops.hpp"
#include "nmt/special.hpp"

namespace nmt {

using Sentence = std::vector<std::string>;

// Vocabulary ---------------------------------------------------------------------

/// Token↔id bijection. Ids 0-3 are always <pad>, <unk>, <s>, </s>.
class Vocab {
 public:
  Vocab();

  /// Appends a token if new; returns its id.
  int add(const std::string& token);

  /// Id of `token`, or the unknown id.
  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  /// All tokens in id order, including the reserved ones.
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(const Sentence& words) const;
  /// Drops pad, bos and eos tokens.
  Sentence decode(const std::vector<int>& ids) const;

  /// FNV-1a hash over the token list; equal vocabularies hash equal.
  std::uint64_t fingerprint() const;

  /// "#vocab-v1" header, then one non-reserved token per line.
  void save(std::ostream& out) const;
  static Vocab load(std::istream& in);
  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

  /// Rebuilds from a full token list as returned by tokens().
  static Vocab from_tokens(const std::vector<std::string>& tokens);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

/// Keeps the limit − 4 most frequent tokens; ties go to the earlier first occurrence.
Vocab build_vocab(const std::vector<Sentence>& corpus, std::size_t limit);

// Corpus I/O ------------------------------------------------------------------------

std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::string& path, const std::vector<std::string>& lines);
Sentence tokenize(std::string_view line);
std::string join(const Sentence& words, std::string_view sep = " ");
std::vector<Sentence> read_corpus(const std::string& path);

/// Word alignment links (target position, source position), 0-based.
using Alignment = std::vector<std::pair<int, int>>;

/// Parses "s-t" pairs (source-target, 0-based) as written by common aligners.
Alignment parse_alignment(std::string_view line);

// Pairs and batches --------------------------------------------------------------------

struct SentencePair {
  std::vector<int> source;
  std::vector<int> target;
  Alignment alignment;
};

/// BOS ids EOS
std::vector<int> wrap_source(const std::vector<int>& ids);
/// ids EOS
std::vector<int> wrap_target(const std::vector<int>& ids);

/// Padded id matrices with 0/1 masks. Rows hold sequences exactly as given
/// (model-ready pairs are wrapped with the helpers above).
struct Batch {
  std::size_t size = 0;
  std::size_t source_len = 0;
  std::size_t target_len = 0;
  std::vector<int> source;         ///< [size × source_len]
  std::vector<float> source_mask;  ///< same layout
  std::vector<int> target;         ///< [size × target_len]
  std::vector<float> target_mask;
  /// Positions of the rows in the corpus the batch was cut from.
  std::vector<std::size_t> indices;
  std::vector<Alignment> alignments;

  std::vector<int> source_column(std::size_t j) const;
  std::vector<float> source_mask_column(std::size_t j) const;
  std::vector<int> target_column(std::size_t i) const;
  std::vector<float> target_mask_column(std::size_t i) const;
  /// Row b with padding removed.
  std::vector<int> source_row(std::size_t b) const;
  std::vector<int> target_row(std::size_t b) const;
  std::size_t pad_count() const;
};

/// Pads the selected pairs into one batch. Throws DataError on empty sequences.
Batch make_batch(const std::vector<SentencePair>& pairs, std::span<const std::size_t> indices);

struct TrainPlan {
  std::size_t epochs = 10;
  /// Sentences per maxi-batch; sorting by length happens within one.
  std::size_t maxi_batch = 1000;
  std::size_t mini_batch = 32;
  std::uint64_t seed = 1;
  /// Validate every this many updates; 0 validates once per epoch.
  std::size_t validate_every = 0;
};

/// Shuffle, cut into maxi-batches, sort each by (target, source) length,
/// slice into mini-batches and pad.
std::vector<Batch> make_batches(const std::vector<SentencePair>& pairs, const TrainPlan& plan, Rng& rng);

/// True when the best value in `history` is at least `patience` evaluations old.
bool should_stop(const std::vector<double>& history, std::size_t patience);

/// Drops pairs whose source or target exceeds `cap` tokens; returns the count.
std::size_t drop_long(std::vector<SentencePair>& pairs, std::size_t cap);

/// Equal shares of genuine and synthetic pairs, repeating the smaller side cyclically.
std::vector<SentencePair> mix_synthetic(const std::vector<SentencePair>& genuine,
                                        const std::vector<SentencePair>& synthetic);

}  // namespace nmt
