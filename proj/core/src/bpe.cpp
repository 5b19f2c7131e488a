// SPDX-License-Identifier: Apache-2.0
#include "nmt/bpe.hpp"

#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "nmt/errors.hpp"

namespace nmt {
namespace {

constexpr std::string_view kHeader = "#bpe-v1";

std::size_t sequence_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 0;
}

void fnv(std::uint64_t& h, std::string_view s) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
}

bool ends_with_marker(std::string_view token) {
  return token.size() >= kBpeMarker.size() && token.substr(token.size() - kBpeMarker.size()) == kBpeMarker;
}

}  // namespace

std::vector<std::string> split_code_points(std::string_view word) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < word.size()) {
    const std::size_t n = sequence_length(static_cast<unsigned char>(word[i]));
    if (n == 0 || i + n > word.size()) throw DataError("malformed UTF-8 in \"" + std::string(word) + "\"");
    for (std::size_t k = 1; k < n; ++k) {
      if ((static_cast<unsigned char>(word[i + k]) >> 6) != 0x2) {
        throw DataError("malformed UTF-8 in \"" + std::string(word) + "\"");
      }
    }
    out.emplace_back(word.substr(i, n));
    i += n;
  }
  return out;
}

WordCounts word_counts(const std::vector<Sentence>& corpus) {
  WordCounts counts;
  for (const auto& sentence : corpus) {
    for (const auto& w : sentence) ++counts[w];
  }
  return counts;
}

std::uint64_t fingerprint(const WordCounts& counts) {
  std::uint64_t h = 14695981039346656037ULL;
  for (const auto& [word, count] : counts) {
    fnv(h, word);
    fnv(h, "\t" + std::to_string(count) + "\n");
  }
  return h;
}

std::map<SymbolPair, std::int64_t> pair_counts(
    const std::vector<std::pair<std::vector<std::string>, std::int64_t>>& words) {
  std::map<SymbolPair, std::int64_t> counts;
  for (const auto& [symbols, count] : words) {
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) counts[{symbols[i], symbols[i + 1]}] += count;
  }
  return counts;
}

std::vector<std::string> merge_pair(const std::vector<std::string>& symbols, const SymbolPair& pair) {
  std::vector<std::string> out;
  out.reserve(symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (i + 1 < symbols.size() && symbols[i] == pair.first && symbols[i + 1] == pair.second) {
      out.push_back(symbols[i] + symbols[i + 1]);
      ++i;
    } else {
      out.push_back(symbols[i]);
    }
  }
  return out;
}

MergeTable bpe_learn(const WordCounts& counts, std::size_t num_merges) {
  MergeTable table;
  table.corpus_fingerprint = fingerprint(counts);

  std::vector<std::pair<std::vector<std::string>, std::int64_t>> words;
  for (const auto& [word, count] : counts) {
    if (count > 0 && !word.empty()) words.emplace_back(split_code_points(word), count);
  }
  std::map<SymbolPair, std::int64_t> freq;
  std::map<SymbolPair, std::set<std::size_t>> where;
  auto account = [&](std::size_t w, std::int64_t sign) {
    const auto& [symbols, count] = words[w];
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      SymbolPair p{symbols[i], symbols[i + 1]};
      auto& f = freq[p];
      f += sign * count;
      if (sign > 0) {
        where[p].insert(w);
      } else if (f == 0) {
        freq.erase(p);
      }
    }
  };
  for (std::size_t w = 0; w < words.size(); ++w) account(w, +1);

  while (table.merges.size() < num_merges) {
    const SymbolPair* best = nullptr;
    std::int64_t best_count = 0;
    for (const auto& [p, f] : freq) {
      if (f > best_count) {
        best = &p;
        best_count = f;
      }
    }
    if (best == nullptr) break;
    const SymbolPair chosen = *best;
    table.merges.push_back(chosen);
    const std::set<std::size_t> affected = where[chosen];
    for (std::size_t w : affected) {
      account(w, -1);
      for (std::size_t i = 0; i + 1 < words[w].first.size(); ++i) {
        auto it = where.find({words[w].first[i], words[w].first[i + 1]});
        if (it != where.end()) it->second.erase(w);
      }
      words[w].first = merge_pair(words[w].first, chosen);
      account(w, +1);
    }
  }
  return table;
}

void MergeTable::save(std::ostream& out) const {
  out << kHeader << ' ' << merges.size() << '\n';
  for (const auto& [l, r] : merges) out << l << ' ' << r << '\n';
}

MergeTable MergeTable::load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty merges file");
  std::istringstream header(line);
  std::string magic;
  std::size_t n = 0;
  if (!(header >> magic >> n) || magic != kHeader) throw DataError("merges file lacks the " + std::string(kHeader) + " header");
  MergeTable table;
  std::set<SymbolPair> seen;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto space = line.find(' ');
    if (space == std::string::npos || space == 0 || space + 1 == line.size() ||
        line.find(' ', space + 1) != std::string::npos) {
      throw DataError("malformed merge line: " + line);
    }
    SymbolPair pair(line.substr(0, space), line.substr(space + 1));
    if (!seen.insert(pair).second) throw DataError("duplicate merge: " + line);
    table.merges.push_back(std::move(pair));
  }
  if (table.merges.size() != n) {
    throw DataError("merges file declares " + std::to_string(n) + " merges but holds " +
                    std::to_string(table.merges.size()));
  }
  return table;
}

void MergeTable::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  save(out);
}

MergeTable MergeTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  return load(in);
}

BpeSegmenter::BpeSegmenter(MergeTable table) : table_(std::move(table)) {
  for (std::size_t i = 0; i < table_.merges.size(); ++i) rank_.emplace(table_.merges[i], i);
}

const std::vector<std::string>& BpeSegmenter::symbols(const std::string& word) {
  if (auto it = cache_.find(word); it != cache_.end()) return it->second;
  std::vector<std::string> syms = split_code_points(word);
  // Lowest applicable rank first; ranks only increase, which is table order.
  std::size_t floor = 0;
  while (syms.size() > 1) {
    std::size_t best = std::numeric_limits<std::size_t>::max();
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
      auto it = rank_.find(SymbolPair{syms[i], syms[i + 1]});
      if (it != rank_.end() && it->second >= floor && it->second < best) best = it->second;
    }
    if (best == std::numeric_limits<std::size_t>::max()) break;
    syms = merge_pair(syms, table_.merges[best]);
    floor = best + 1;
  }
  return cache_.emplace(word, std::move(syms)).first->second;
}

std::vector<std::string> BpeSegmenter::apply(const std::string& word) {
  std::vector<std::string> out = symbols(word);
  for (std::size_t i = 0; i + 1 < out.size(); ++i) out[i] += kBpeMarker;
  return out;
}

Sentence BpeSegmenter::apply(const Sentence& words) {
  Sentence out;
  for (const auto& w : words) {
    for (auto& s : apply(w)) out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::string> bpe_apply(const MergeTable& table, const std::string& word) {
  BpeSegmenter seg(table);
  return seg.apply(word);
}

BpeDecoded bpe_decode(const Sentence& tokens) {
  BpeDecoded out;
  std::string pending;
  bool open = false;
  for (const auto& t : tokens) {
    if (ends_with_marker(t)) {
      pending += t.substr(0, t.size() - kBpeMarker.size());
      open = true;
    } else {
      pending += t;
      out.words.push_back(std::move(pending));
      pending.clear();
      open = false;
    }
  }
  if (open) {
    out.dangling_marker = true;
    out.words.push_back(std::move(pending));
  }
  return out;
}

}  // namespace nmt
