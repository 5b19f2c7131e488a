// SPDX-License-Identifier: Apache-2.0
//
// Byte-pair-encoding subword segmentation. Words are split into Unicode code
// points and the most frequent adjacent symbol pair is merged repeatedly.
// Segmented words mark every subword but the last with a trailing "@@".
#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nmt/data.hpp"

namespace nmt {

inline constexpr std::string_view kBpeMarker = "@@";

using SymbolPair = std::pair<std::string, std::string>;
using WordCounts = std::map<std::string, std::int64_t>;

struct MergeTable {
  /// In learning order.
  std::vector<SymbolPair> merges;
  /// Hash of the word-frequency table the merges were learned on (0 when loaded from file).
  std::uint64_t corpus_fingerprint = 0;

  /// "#bpe-v1 <n>" followed by one "left right" line per merge.
  void save(std::ostream& out) const;
  static MergeTable load(std::istream& in);
  void save(const std::string& path) const;
  static MergeTable load(const std::string& path);
};

/// Splits UTF-8 text into code points. Throws DataError on malformed input.
std::vector<std::string> split_code_points(std::string_view word);

WordCounts word_counts(const std::vector<Sentence>& corpus);
std::uint64_t fingerprint(const WordCounts& counts);

/// Frequency of each adjacent symbol pair over the weighted corpus.
std::map<SymbolPair, std::int64_t> pair_counts(const std::vector<std::pair<std::vector<std::string>, std::int64_t>>& words);

/// Greedy merge learning; frequency ties go to the lexicographically smallest pair.
/// Stops early when no pair occurs.
MergeTable bpe_learn(const WordCounts& counts, std::size_t num_merges);

/// Merges every non-overlapping occurrence of `pair`, scanning left to right.
std::vector<std::string> merge_pair(const std::vector<std::string>& symbols, const SymbolPair& pair);

/// Applies merges in table order and caches segmented words.
class BpeSegmenter {
 public:
  explicit BpeSegmenter(MergeTable table);

  /// Subwords without markers.
  const std::vector<std::string>& symbols(const std::string& word);
  /// Subwords with "@@" on all but the last.
  std::vector<std::string> apply(const std::string& word);
  Sentence apply(const Sentence& words);

  const MergeTable& table() const { return table_; }

 private:
  MergeTable table_;
  std::map<SymbolPair, std::size_t, std::less<>> rank_;
  std::unordered_map<std::string, std::vector<std::string>> cache_;
};

std::vector<std::string> bpe_apply(const MergeTable& table, const std::string& word);

struct BpeDecoded {
  Sentence words;
  /// The final token carried a continuation marker.
  bool dangling_marker = false;
};

/// Joins each "@@"-suffixed token with its successor.
BpeDecoded bpe_decode(const Sentence& tokens);

}  // namespace nmt
