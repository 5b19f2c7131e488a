// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nmt/bpe.hpp"

namespace nmt {
namespace {

const std::string kFixture = std::string(NMT_FIXTURE_DIR) + "/bpe_corpus.txt";

using Weighted = std::vector<std::pair<std::vector<std::string>, std::int64_t>>;

Weighted split_words(const WordCounts& counts) {
  Weighted out;
  for (const auto& [w, n] : counts) out.emplace_back(split_code_points(w), n);
  return out;
}

// Independent pair counting and merging for the replay oracle.
std::map<SymbolPair, std::int64_t> count_by_hand(const Weighted& words) {
  std::map<SymbolPair, std::int64_t> out;
  for (const auto& [syms, n] : words)
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) out[{syms[i], syms[i + 1]}] += n;
  return out;
}

std::vector<std::string> merge_by_hand(const std::vector<std::string>& syms, const SymbolPair& p) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < syms.size(); ++i) {
    if (i + 1 < syms.size() && syms[i] == p.first && syms[i + 1] == p.second) {
      out.push_back(p.first + p.second);
      ++i;
    } else {
      out.push_back(syms[i]);
    }
  }
  return out;
}

TEST(Bpe, CraftedCorpusFirstMerge) {
  WordCounts counts{{"abab", 3}, {"ab", 2}};
  auto pairs = pair_counts(split_words(counts));
  EXPECT_EQ((pairs[{"a", "b"}]), 3 * 2 + 2 * 1);
  EXPECT_EQ((pairs[{"b", "a"}]), 3);
  MergeTable t = bpe_learn(counts, 3);
  ASSERT_EQ(t.merges.size(), 2u);
  EXPECT_EQ(t.merges[0], (SymbolPair{"a", "b"}));
  EXPECT_EQ(t.merges[1], (SymbolPair{"ab", "ab"}));
  EXPECT_EQ(bpe_apply(t, "abab"), (std::vector<std::string>{"abab"}));
  EXPECT_EQ(bpe_apply(t, "aba"), (std::vector<std::string>{"ab@@", "a"}));
}

TEST(Bpe, TiesGoToSmallestPair) {
  MergeTable t = bpe_learn({{"xy", 1}, {"ba", 1}}, 1);
  ASSERT_EQ(t.merges.size(), 1u);
  EXPECT_EQ(t.merges[0], (SymbolPair{"b", "a"}));
}

TEST(Bpe, EmptyTableSplitsCharacters) {
  MergeTable t = bpe_learn({{"cat", 4}}, 0);
  EXPECT_TRUE(t.merges.empty());
  EXPECT_EQ(bpe_apply(t, "cat"), (std::vector<std::string>{"c@@", "a@@", "t"}));
  EXPECT_EQ(bpe_apply(t, "x"), (std::vector<std::string>{"x"}));
}

TEST(Bpe, FullyMergedWordIsOneUnmarkedToken) {
  MergeTable t = bpe_learn({{"lower", 10}}, 10);
  EXPECT_EQ(t.merges.size(), 4u);
  EXPECT_EQ(bpe_apply(t, "lower"), (std::vector<std::string>{"lower"}));
}

TEST(Bpe, MergePairIsLeftToRightNonOverlapping) {
  EXPECT_EQ(merge_pair({"a", "a", "a"}, {"a", "a"}), (std::vector<std::string>{"aa", "a"}));
  EXPECT_EQ(merge_pair({"a", "b", "a", "b"}, {"a", "b"}), (std::vector<std::string>{"ab", "ab"}));
  EXPECT_EQ(merge_pair({"a"}, {"a", "a"}), (std::vector<std::string>{"a"}));
}

TEST(Bpe, CodePointsAndMalformedUtf8) {
  EXPECT_EQ(split_code_points("grüß"), (std::vector<std::string>{"g", "r", "ü", "ß"}));
  EXPECT_EQ(split_code_points("€𝄞"), (std::vector<std::string>{"€", "𝄞"}));
  EXPECT_THROW(split_code_points(std::string("a\xff")), DataError);
  EXPECT_THROW(split_code_points(std::string("\xc3")), DataError);
  EXPECT_THROW(split_code_points(std::string("\xe2\x82")), DataError);
}

class FixtureCorpus : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    corpus_ = read_corpus(kFixture);
    counts_ = word_counts(corpus_);
    table_ = bpe_learn(counts_, 300);
  }
  static std::vector<Sentence> corpus_;
  static WordCounts counts_;
  static MergeTable table_;
};

std::vector<Sentence> FixtureCorpus::corpus_;
WordCounts FixtureCorpus::counts_;
MergeTable FixtureCorpus::table_;

TEST_F(FixtureCorpus, HasAThousandLines) {
  EXPECT_EQ(corpus_.size(), 1000u);
  EXPECT_EQ(table_.merges.size(), 300u);
  EXPECT_EQ(table_.corpus_fingerprint, fingerprint(counts_));
}

TEST_F(FixtureCorpus, RoundTripIsIdentity) {
  BpeSegmenter seg(table_);
  std::size_t split_words = 0;
  for (const auto& line : corpus_) {
    Sentence pieces = seg.apply(line);
    BpeDecoded back = bpe_decode(pieces);
    EXPECT_FALSE(back.dangling_marker);
    ASSERT_EQ(back.words, line);
    split_words += pieces.size() - line.size();
  }
  EXPECT_GT(split_words, 0u);
}

TEST_F(FixtureCorpus, ReplayReproducesPairCounts) {
  Weighted words = split_words(counts_);
  std::int64_t previous = std::numeric_limits<std::int64_t>::max();
  std::set<SymbolPair> seen;
  for (const auto& merge : table_.merges) {
    auto counts = count_by_hand(words);
    EXPECT_EQ(counts, pair_counts(words));
    auto best = std::max_element(counts.begin(), counts.end(), [](const auto& a, const auto& b) {
      return a.second < b.second || (a.second == b.second && a.first > b.first);
    });
    ASSERT_EQ(merge, best->first);
    EXPECT_LE(best->second, previous);
    previous = best->second;
    EXPECT_TRUE(seen.insert(merge).second);
    for (auto& [syms, n] : words) syms = merge_by_hand(syms, merge);
  }
}

TEST_F(FixtureCorpus, InventoryGrowsByOnePerMerge) {
  std::set<std::string> chars, inventory;
  for (const auto& [w, n] : counts_)
    for (auto& c : split_code_points(w)) chars.insert(c);
  inventory = chars;
  for (const auto& [l, r] : table_.merges) inventory.insert(l + r);
  EXPECT_EQ(inventory.size(), chars.size() + table_.merges.size());
}

TEST_F(FixtureCorpus, ShorterTablesArePrefixes) {
  MergeTable shorter = bpe_learn(counts_, 120);
  ASSERT_EQ(shorter.merges.size(), 120u);
  EXPECT_TRUE(std::equal(shorter.merges.begin(), shorter.merges.end(), table_.merges.begin()));
  EXPECT_TRUE(bpe_learn(counts_, 0).merges.empty());
}

TEST_F(FixtureCorpus, MarkerCountOverRandomWords) {
  std::mt19937_64 rng(3);
  std::vector<std::string> alphabet;
  for (const auto& [w, n] : counts_)
    for (auto& c : split_code_points(w)) alphabet.push_back(c);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1), len(1, 12);
  BpeSegmenter seg(table_);
  for (int trial = 0; trial < 500; ++trial) {
    std::string word;
    for (std::size_t k = len(rng); k > 0; --k) word += alphabet[pick(rng)];
    auto pieces = seg.apply(word);
    std::size_t markers = 0;
    std::string joined;
    for (const auto& p : pieces) {
      const bool marked = p.size() > kBpeMarker.size() && p.ends_with(kBpeMarker);
      markers += marked;
      joined += marked ? p.substr(0, p.size() - kBpeMarker.size()) : p;
    }
    EXPECT_EQ(markers, pieces.size() - 1) << word;
    EXPECT_FALSE(pieces.back().ends_with(kBpeMarker));
    EXPECT_EQ(joined, word);
    EXPECT_EQ(pieces, bpe_apply(table_, word));
  }
}

TEST_F(FixtureCorpus, SaveLoadRoundTrip) {
  std::stringstream io;
  table_.save(io);
  std::string header;
  std::getline(io, header);
  EXPECT_EQ(header, "#bpe-v1 300");
  io.seekg(0);
  MergeTable back = MergeTable::load(io);
  EXPECT_EQ(back.merges, table_.merges);

  const auto path = std::filesystem::temp_directory_path() / "nmt_test_merges.bpe";
  table_.save(path.string());
  EXPECT_EQ(MergeTable::load(path.string()).merges, table_.merges);
  std::filesystem::remove(path);
}

TEST(Bpe, LoadRejectsMalformedFiles) {
  auto load = [](const std::string& text) {
    std::istringstream in(text);
    return MergeTable::load(in);
  };
  EXPECT_THROW(load(""), DataError);
  EXPECT_THROW(load("#bpe-v2 1\na b\n"), DataError);
  EXPECT_THROW(load("#bpe-v1 2\na b\n"), DataError);
  EXPECT_THROW(load("#bpe-v1 1\nab\n"), DataError);
  EXPECT_THROW(load("#bpe-v1 2\na b\na b\n"), DataError);
  EXPECT_EQ(load("#bpe-v1 1\nx y\n").merges, (std::vector<SymbolPair>{{"x", "y"}}));
  EXPECT_THROW(MergeTable::load("/nonexistent/merges.bpe"), DataError);
}

TEST(BpeDecode, IdentityWithoutMarkersAndDanglingFlag) {
  Sentence plain{"the", "cat", "."};
  EXPECT_EQ(bpe_decode(plain).words, plain);
  EXPECT_FALSE(bpe_decode(plain).dangling_marker);
  BpeDecoded d = bpe_decode({"critic@@", "ises", "the@@"});
  EXPECT_EQ(d.words, (Sentence{"criticises", "the"}));
  EXPECT_TRUE(d.dangling_marker);
  EXPECT_TRUE(bpe_decode({}).words.empty());
}

}  // namespace
}  // namespace nmt
