// SPDX-License-Identifier: Apache-2.0
#include "nmt/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace nmt {

namespace {

const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> tokens{"<pad>", "<unk>", "<s>", "</s>"};
  return tokens;
}

constexpr std::string_view kVocabHeader = "#vocab-v1";

}  // namespace

// Vocabulary ---------------------------------------------------------------------

Vocab::Vocab() {
  for (const auto& t : reserved_tokens()) add(t);
}

int Vocab::add(const std::string& token) {
  if (auto it = ids_.find(token); it != ids_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  ids_.emplace(token, id);
  return id;
}

int Vocab::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnkId : it->second;
}

bool Vocab::contains(std::string_view token) const { return ids_.count(std::string(token)) > 0; }

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw RangeError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(tokens_.size()));
  }
  return tokens_[id];
}

std::vector<int> Vocab::encode(const Sentence& words) const {
  std::vector<int> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(id(w));
  return ids;
}

Sentence Vocab::decode(const std::vector<int>& ids) const {
  Sentence words;
  for (int i : ids) {
    if (i == kPadId || i == kBosId || i == kEosId) continue;
    words.push_back(token(i));
  }
  return words;
}

std::uint64_t Vocab::fingerprint() const {
  std::uint64_t h = 14695981039346656037ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ULL;
  };
  for (const auto& t : tokens_) {
    for (unsigned char c : t) mix(c);
    mix('\n');
  }
  return h;
}

void Vocab::save(std::ostream& out) const {
  out << kVocabHeader << '\n';
  for (std::size_t i = kReservedIds; i < tokens_.size(); ++i) out << tokens_[i] << '\n';
}

Vocab Vocab::load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kVocabHeader) throw DataError("vocabulary file lacks the #vocab-v1 header");
  Vocab v;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) throw DataError("empty token on vocabulary line " + std::to_string(line_no));
    if (v.contains(line)) throw DataError("duplicate token '" + line + "' on vocabulary line " + std::to_string(line_no));
    v.add(line);
  }
  return v;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  save(out);
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  return load(in);
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < static_cast<std::size_t>(kReservedIds) ||
      !std::equal(reserved_tokens().begin(), reserved_tokens().end(), tokens.begin())) {
    throw DataError("token list does not start with the reserved tokens");
  }
  Vocab v;
  for (std::size_t i = kReservedIds; i < tokens.size(); ++i) {
    if (v.contains(tokens[i])) throw DataError("duplicate token '" + tokens[i] + "'");
    v.add(tokens[i]);
  }
  return v;
}

Vocab build_vocab(const std::vector<Sentence>& corpus, std::size_t limit) {
  if (limit <= static_cast<std::size_t>(kReservedIds)) throw ConfigError("vocabulary limit must exceed 4");
  struct Entry {
    std::size_t count = 0;
    std::size_t first = 0;
  };
  std::unordered_map<std::string, Entry> counts;
  std::vector<std::string> order;
  bool any = false;
  for (const auto& s : corpus) {
    for (const auto& w : s) {
      any = true;
      auto [it, inserted] = counts.try_emplace(w, Entry{0, order.size()});
      if (inserted) order.push_back(w);
      ++it->second.count;
    }
  }
  if (!any) throw DataError("cannot build a vocabulary from an empty corpus");
  std::vector<std::string> ranked;
  for (const auto& w : order) {
    if (std::find(reserved_tokens().begin(), reserved_tokens().end(), w) == reserved_tokens().end()) ranked.push_back(w);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [&](const std::string& a, const std::string& b) {
    return counts[a].count > counts[b].count;
  });
  Vocab v;
  const std::size_t keep = std::min(ranked.size(), limit - kReservedIds);
  for (std::size_t i = 0; i < keep; ++i) v.add(ranked[i]);
  return v;
}

// Corpus I/O ------------------------------------------------------------------------

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& l : lines) out << l << '\n';
}

Sentence tokenize(std::string_view line) {
  Sentence words;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) words.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return words;
}

std::string join(const Sentence& words, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += sep;
    out += words[i];
  }
  return out;
}

std::vector<Sentence> read_corpus(const std::string& path) {
  std::vector<Sentence> corpus;
  for (const auto& l : read_lines(path)) corpus.push_back(tokenize(l));
  return corpus;
}

Alignment parse_alignment(std::string_view line) {
  Alignment links;
  for (const auto& item : tokenize(line)) {
    const auto dash = item.find('-');
    if (dash == std::string::npos) throw DataError("malformed alignment link '" + item + "'");
    try {
      std::size_t used = 0;
      const int s = std::stoi(item.substr(0, dash), &used);
      if (used != dash) throw std::invalid_argument(item);
      const int t = std::stoi(item.substr(dash + 1), &used);
      if (used != item.size() - dash - 1 || s < 0 || t < 0) throw std::invalid_argument(item);
      links.emplace_back(t, s);
    } catch (const std::logic_error&) {
      throw DataError("malformed alignment link '" + item + "'");
    }
  }
  return links;
}

// Pairs and batches --------------------------------------------------------------------

std::vector<int> wrap_source(const std::vector<int>& ids) {
  std::vector<int> out{kBosId};
  out.insert(out.end(), ids.begin(), ids.end());
  out.push_back(kEosId);
  return out;
}

std::vector<int> wrap_target(const std::vector<int>& ids) {
  std::vector<int> out = ids;
  out.push_back(kEosId);
  return out;
}

namespace {

template <typename T>
std::vector<T> column_of(const std::vector<T>& m, std::size_t rows, std::size_t cols, std::size_t j) {
  if (j >= cols) throw RangeError("batch column " + std::to_string(j) + " out of range");
  std::vector<T> out(rows);
  for (std::size_t b = 0; b < rows; ++b) out[b] = m[b * cols + j];
  return out;
}

std::vector<int> strip(const std::vector<int>& ids, const std::vector<float>& mask, std::size_t cols, std::size_t b) {
  std::vector<int> out;
  for (std::size_t j = 0; j < cols; ++j)
    if (mask[b * cols + j] != 0.0f) out.push_back(ids[b * cols + j]);
  return out;
}

}  // namespace

std::vector<int> Batch::source_column(std::size_t j) const { return column_of(source, size, source_len, j); }
std::vector<float> Batch::source_mask_column(std::size_t j) const { return column_of(source_mask, size, source_len, j); }
std::vector<int> Batch::target_column(std::size_t i) const { return column_of(target, size, target_len, i); }
std::vector<float> Batch::target_mask_column(std::size_t i) const { return column_of(target_mask, size, target_len, i); }
std::vector<int> Batch::source_row(std::size_t b) const { return strip(source, source_mask, source_len, b); }
std::vector<int> Batch::target_row(std::size_t b) const { return strip(target, target_mask, target_len, b); }

std::size_t Batch::pad_count() const {
  auto zeros = [](const std::vector<float>& m) {
    return static_cast<std::size_t>(std::count(m.begin(), m.end(), 0.0f));
  };
  return zeros(source_mask) + zeros(target_mask);
}

Batch make_batch(const std::vector<SentencePair>& pairs, std::span<const std::size_t> indices) {
  if (indices.empty()) throw DataError("cannot build an empty batch");
  Batch b;
  b.size = indices.size();
  for (auto i : indices) {
    const auto& p = pairs.at(i);
    if (p.source.empty() || p.target.empty()) throw DataError("sentence pair " + std::to_string(i) + " has an empty side");
    b.source_len = std::max(b.source_len, p.source.size());
    b.target_len = std::max(b.target_len, p.target.size());
  }
  b.source.assign(b.size * b.source_len, kPadId);
  b.source_mask.assign(b.size * b.source_len, 0.0f);
  b.target.assign(b.size * b.target_len, kPadId);
  b.target_mask.assign(b.size * b.target_len, 0.0f);
  for (std::size_t r = 0; r < b.size; ++r) {
    const auto& p = pairs[indices[r]];
    for (std::size_t j = 0; j < p.source.size(); ++j) {
      b.source[r * b.source_len + j] = p.source[j];
      b.source_mask[r * b.source_len + j] = 1.0f;
    }
    for (std::size_t i = 0; i < p.target.size(); ++i) {
      b.target[r * b.target_len + i] = p.target[i];
      b.target_mask[r * b.target_len + i] = 1.0f;
    }
    b.indices.push_back(indices[r]);
    b.alignments.push_back(p.alignment);
  }
  return b;
}

std::vector<Batch> make_batches(const std::vector<SentencePair>& pairs, const TrainPlan& plan, Rng& rng) {
  if (plan.mini_batch == 0 || plan.maxi_batch == 0) throw ConfigError("batch sizes must be positive");
  if (plan.mini_batch > plan.maxi_batch) throw ConfigError("mini-batch larger than maxi-batch");
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += plan.maxi_batch) {
    const std::size_t end = std::min(order.size(), start + plan.maxi_batch);
    std::vector<std::size_t> maxi(order.begin() + static_cast<std::ptrdiff_t>(start),
                                  order.begin() + static_cast<std::ptrdiff_t>(end));
    std::stable_sort(maxi.begin(), maxi.end(), [&](std::size_t a, std::size_t b) {
      const auto& pa = pairs[a];
      const auto& pb = pairs[b];
      if (pa.target.size() != pb.target.size()) return pa.target.size() < pb.target.size();
      return pa.source.size() < pb.source.size();
    });
    for (std::size_t m = 0; m < maxi.size(); m += plan.mini_batch) {
      const std::size_t n = std::min(plan.mini_batch, maxi.size() - m);
      batches.push_back(make_batch(pairs, std::span<const std::size_t>(maxi.data() + m, n)));
    }
  }
  return batches;
}

bool should_stop(const std::vector<double>& history, std::size_t patience) {
  if (history.empty()) throw std::invalid_argument("should_stop needs a nonempty history");
  const auto best = std::min_element(history.begin(), history.end());
  const auto since_best = static_cast<std::size_t>(history.end() - best) - 1;
  return since_best >= patience;
}

std::size_t drop_long(std::vector<SentencePair>& pairs, std::size_t cap) {
  const std::size_t before = pairs.size();
  std::erase_if(pairs, [cap](const SentencePair& p) { return p.source.size() > cap || p.target.size() > cap; });
  return before - pairs.size();
}

std::vector<SentencePair> mix_synthetic(const std::vector<SentencePair>& genuine,
                                        const std::vector<SentencePair>& synthetic) {
  if (genuine.empty() || synthetic.empty()) {
    std::vector<SentencePair> out = genuine;
    out.insert(out.end(), synthetic.begin(), synthetic.end());
    return out;
  }
  const std::size_t n = std::max(genuine.size(), synthetic.size());
  std::vector<SentencePair> out;
  out.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(genuine[i % genuine.size()]);
  for (std::size_t i = 0; i < n; ++i) out.push_back(synthetic[i % synthetic.size()]);
  return out;
}

}  // namespace nmt
