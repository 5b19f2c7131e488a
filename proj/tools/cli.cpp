// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <algorithm>
#include <deque>
#include <exception>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "CLI11.hpp"
#include "nmt/bpe.hpp"
#include "nmt/checkpoint.hpp"
#include "nmt/config.hpp"
#include "nmt/data.hpp"
#include "nmt/decode.hpp"
#include "nmt/errors.hpp"
#include "nmt/trainer.hpp"

namespace nmt::cli {
namespace {

/// A string flag that, when given, overrides one configuration key.
struct Binding {
  CLI::Option* option = nullptr;
  std::string key;
  std::string value;
  bool is_flag = false;
  bool flag = false;
};

class Bindings {
 public:
  void value(CLI::App* app, const std::string& name, const std::string& key, const std::string& help) {
    Binding& b = items_.emplace_back();
    b.key = key;
    b.option = app->add_option(name, b.value, help);
  }
  void flag(CLI::App* app, const std::string& name, const std::string& key, const std::string& help) {
    Binding& b = items_.emplace_back();
    b.key = key;
    b.is_flag = true;
    b.option = app->add_flag(name, b.flag, help);
  }
  void apply(Config& config) const {
    for (const auto& b : items_) {
      if (b.option->count() == 0) continue;
      config.set(b.key, b.is_flag ? std::string(b.flag ? "true" : "false") : b.value);
    }
  }

 private:
  std::deque<Binding> items_;
};

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
  Bindings bindings;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "key=value configuration file");
    app->add_option("--set", overrides, "configuration override key=value (repeatable)");
  }
  Config build() const {
    Config c;
    if (!config_file.empty()) c.merge_file(config_file);
    c.merge_overrides(overrides);
    bindings.apply(c);
    return c;
  }
};

/// Output file or the provided stream.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : out_(&fallback) {
    if (!path.empty() && path != "-") {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw DataError("cannot write " + path);
      out_ = file_.get();
    }
  }
  std::ostream& stream() { return *out_; }
  void finish() {
    out_->flush();
    if (!*out_) throw DataError("failed writing output");
  }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* out_;
};

std::vector<std::string> read_input(const std::string& path, std::istream& in) {
  if (!path.empty() && path != "-") return read_lines(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

const std::string& required(const Config& c, const std::string& key) {
  const std::string& v = c.get(key);
  if (v.empty()) throw ConfigError("missing required setting " + key);
  return v;
}

std::optional<BpeSegmenter> segmenter(const Config& c) {
  if (!c.is_set("decode.merges")) return std::nullopt;
  return BpeSegmenter(MergeTable::load(c.get("decode.merges")));
}

Sentence prepare(const std::string& line, std::optional<BpeSegmenter>& bpe) {
  Sentence words = tokenize(line);
  return bpe ? bpe->apply(words) : words;
}

std::string surface(const Vocab& vocab, const std::vector<int>& ids, bool unsplit) {
  Sentence words = vocab.decode(ids);
  if (unsplit) words = bpe_decode(words).words;
  return join(words);
}

// Training ---------------------------------------------------------------------------

std::vector<SentencePair> load_pairs(const std::string& src_path, const std::string& tgt_path,
                                     const std::string& align_path, const Vocab& sv, const Vocab& tv,
                                     std::ostream& err) {
  const auto src = read_lines(src_path);
  const auto tgt = read_lines(tgt_path);
  if (src.size() != tgt.size()) {
    throw DataError(src_path + " and " + tgt_path + " differ in line count (" + std::to_string(src.size()) + " vs " +
                    std::to_string(tgt.size()) + ")");
  }
  std::vector<std::string> align;
  if (!align_path.empty()) {
    align = read_lines(align_path);
    if (align.size() != src.size()) throw DataError(align_path + " does not match the corpus line count");
  }
  std::vector<SentencePair> pairs;
  std::size_t empty = 0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    SentencePair p{sv.encode(tokenize(src[i])), tv.encode(tokenize(tgt[i])), {}};
    if (p.source.empty() || p.target.empty()) {
      ++empty;
      continue;
    }
    if (!align.empty()) p.alignment = parse_alignment(align[i]);
    pairs.push_back(std::move(p));
  }
  if (empty) err << "skipped-empty\t" << src_path << '\t' << empty << '\n';
  return pairs;
}

int cmd_train(const Config& c, std::ostream& err) {
  const Vocab sv = Vocab::load(required(c, "train.src-vocab"));
  const Vocab tv = Vocab::load(required(c, "train.tgt-vocab"));
  auto pairs = load_pairs(required(c, "train.src"), required(c, "train.tgt"), c.get("train.guided-alignment"), sv, tv,
                          err);
  const std::size_t dropped = drop_long(pairs, c.get_size("train.max-length"));
  err << "dropped-long\t" << dropped << '\n';
  if (c.is_set("train.synthetic-src") != c.is_set("train.synthetic-tgt")) {
    throw ConfigError("train.synthetic-src and train.synthetic-tgt must be given together");
  }
  if (c.is_set("train.synthetic-src")) {
    auto synthetic = load_pairs(c.get("train.synthetic-src"), c.get("train.synthetic-tgt"), "", sv, tv, err);
    drop_long(synthetic, c.get_size("train.max-length"));
    pairs = mix_synthetic(pairs, synthetic);
  }
  std::vector<SentencePair> valid;
  if (c.is_set("train.valid-src") != c.is_set("train.valid-tgt")) {
    throw ConfigError("train.valid-src and train.valid-tgt must be given together");
  }
  if (c.is_set("train.valid-src")) valid = load_pairs(c.get("train.valid-src"), c.get("train.valid-tgt"), "", sv, tv, err);

  TrainerOptions options;
  options.plan = train_plan(c);
  options.optimizer = optimizer_config(c);
  options.patience = c.get_size("train.patience");
  options.checkpoint_every = c.get_size("train.checkpoint-every");
  options.average = c.get_bool("train.average");
  if (c.is_set("train.guided-alignment")) options.align_weight = static_cast<float>(c.get_double("train.align-weight"));
  options.align_cost = parse_align_cost(c.get("train.align-cost"));

  std::unique_ptr<Seq2Seq> model;
  std::optional<OptimizerState> restored;
  if (c.is_set("train.init-checkpoint")) {
    LoadedModel init = load_model(c.get("train.init-checkpoint"));
    if (init.source_vocab.fingerprint() != sv.fingerprint() || init.target_vocab.fingerprint() != tv.fingerprint()) {
      throw DataError("vocabularies do not match the initial checkpoint");
    }
    model = std::move(init.model);
    auto kind = init.metadata.find("train.optimizer");
    if (init.optimizer && kind != init.metadata.end() && kind->second == c.get("train.optimizer")) {
      restored = std::move(init.optimizer);
    }
  } else {
    Rng rng(options.plan.seed);
    model = std::make_unique<Seq2Seq>(model_config(c, sv.size(), tv.size()), rng);
  }

  Trainer trainer(*model, options, &err);
  if (restored) trainer.optimizer().restore(std::move(*restored));
  const std::string prefix = c.get("train.output");
  auto save = [&](const std::string& path) {
    std::map<std::string, std::string> extra{{"train.optimizer", c.get("train.optimizer")},
                                             {"train.updates", std::to_string(trainer.updates())}};
    save_model(path, *model, sv, tv, &trainer.optimizer().state(), extra);
    err << "saved\t" << path << '\n';
  };
  trainer.on_checkpoint([&](Trainer::Event event, std::size_t, std::size_t updates) {
    switch (event) {
      case Trainer::Event::kPeriodic: save(prefix + ".iter" + std::to_string(updates) + ".nmt"); break;
      case Trainer::Event::kBest: save(prefix + ".best.nmt"); break;
      case Trainer::Event::kEpoch: break;
    }
  });
  const TrainSummary summary = trainer.fit(pairs, valid);
  if (summary.stopped_early) err << "early-stop\t" << summary.epochs << '\t' << summary.updates << '\n';
  save(prefix + ".nmt");
  return kOk;
}

// Translation -------------------------------------------------------------------------

struct Ensemble {
  std::vector<LoadedModel> members;
  std::vector<const Seq2Seq*> models;

  const Vocab& source_vocab() const { return members.front().source_vocab; }
  const Vocab& target_vocab() const { return members.front().target_vocab; }
};

std::size_t updates_of(const LoadedModel& m) {
  auto it = m.metadata.find("train.updates");
  return it == m.metadata.end() ? 0 : std::stoull(it->second);
}

Ensemble load_ensemble(const std::vector<std::string>& paths, std::size_t last) {
  if (paths.empty()) throw ConfigError("at least one checkpoint is required");
  Ensemble e;
  for (const auto& p : paths) e.members.push_back(load_model(p));
  if (last > 0 && last < e.members.size()) {
    std::stable_sort(e.members.begin(), e.members.end(),
                     [](const LoadedModel& a, const LoadedModel& b) { return updates_of(a) < updates_of(b); });
    e.members.erase(e.members.begin(), e.members.end() - static_cast<std::ptrdiff_t>(last));
  }
  for (const auto& m : e.members) {
    if (m.source_vocab.fingerprint() != e.source_vocab().fingerprint() ||
        m.target_vocab.fingerprint() != e.target_vocab().fingerprint()) {
      throw DataError("ensemble members use different vocabularies");
    }
    e.models.push_back(m.model.get());
  }
  check_ensemble(e.models);
  return e;
}

/// Translates every line, optionally on several threads; results keep input order.
std::vector<std::vector<Hypothesis>> translate_lines(const Ensemble& e, const std::vector<std::string>& lines,
                                                     const Config& c, std::size_t threads) {
  const BeamOptions options = beam_options(c);
  const bool use_greedy = c.get_bool("decode.greedy");
  std::vector<std::vector<Hypothesis>> results(lines.size());
  std::vector<std::vector<int>> sources;
  {
    auto bpe = segmenter(c);
    for (const auto& line : lines) sources.push_back(e.source_vocab().encode(prepare(line, bpe)));
  }
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < lines.size(); i += stride) {
      if (sources[i].empty()) continue;
      if (use_greedy) {
        results[i].push_back(greedy(e.models, sources[i], options));
      } else {
        results[i] = beam_search(e.models, sources[i], options);
      }
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, lines.size()));
  if (threads == 1) {
    work(0, 1);
    return results;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        work(t, threads);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& ex : errors) {
    if (ex) std::rethrow_exception(ex);
  }
  return results;
}

std::string best_translation(const Ensemble& e, const std::vector<Hypothesis>& hyps, bool unsplit) {
  return hyps.empty() ? std::string() : surface(e.target_vocab(), hyps.front().tokens, unsplit);
}

int cmd_translate(const Config& c, const std::vector<std::string>& checkpoints, std::size_t last,
                  std::size_t threads, const std::string& input, const std::string& output, std::istream& in,
                  std::ostream& out, std::ostream& err) {
  const Ensemble e = load_ensemble(checkpoints, last);
  const auto lines = read_input(input, in);
  const auto results = translate_lines(e, lines, c, threads);
  const std::size_t nbest = c.get_size("decode.nbest");
  const bool unsplit = c.is_set("decode.merges");
  Sink sink(output, out);
  std::size_t truncated = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& hyps = results[i];
    if (!hyps.empty() && hyps.front().truncated) ++truncated;
    if (nbest == 0) {
      sink.stream() << best_translation(e, hyps, unsplit) << '\n';
      continue;
    }
    for (std::size_t k = 0; k < std::min(nbest, hyps.size()); ++k) {
      sink.stream() << format_nbest(i, surface(e.target_vocab(), hyps[k].tokens, unsplit), hyps[k].final_score)
                    << '\n';
    }
  }
  sink.finish();
  if (truncated) err << "truncated\t" << truncated << '\n';
  return kOk;
}

int cmd_backtranslate(const Config& c, const std::vector<std::string>& checkpoints, const std::string& mono,
                      const std::string& out_src, const std::string& out_tgt, std::size_t threads) {
  const Ensemble e = load_ensemble(checkpoints, 0);
  const auto lines = read_lines(mono);
  const auto results = translate_lines(e, lines, c, threads);
  const bool unsplit = c.is_set("decode.merges");
  std::vector<std::string> synthetic;
  for (const auto& hyps : results) synthetic.push_back(best_translation(e, hyps, unsplit));
  write_lines(out_src, synthetic);
  write_lines(out_tgt, lines);
  return kOk;
}

int cmd_score(const Config& c, const std::string& checkpoint, const std::string& src_path,
              const std::string& tgt_path, const std::string& output, std::ostream& out) {
  const LoadedModel m = load_model(checkpoint);
  const auto src = read_lines(src_path);
  const auto tgt = read_lines(tgt_path);
  if (src.size() != tgt.size()) throw DataError("source and target differ in line count");
  auto bpe = segmenter(c);
  Sink sink(output, out);
  char buf[64];
  for (std::size_t i = 0; i < src.size(); ++i) {
    const auto s = m.source_vocab.encode(prepare(src[i], bpe));
    const auto t = m.target_vocab.encode(prepare(tgt[i], bpe));
    if (s.empty()) throw DataError("line " + std::to_string(i) + ": empty source sentence");
    const ForcedScore fs = force_score(*m.model, s, t);
    std::snprintf(buf, sizeof buf, "%.6f", fs.total);
    sink.stream() << i << '\t' << buf << '\t' << fs.token_log_probs.size() << '\n';
  }
  sink.finish();
  return kOk;
}

// Reranking ---------------------------------------------------------------------------

struct ScorerSpec {
  std::string path;
  bool right_to_left = false;
  double weight = 1.0;
};

/// "path[:r2l][:w=weight]"
ScorerSpec parse_scorer(const std::string& spec) {
  ScorerSpec s;
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ':')) parts.push_back(part);
  if (parts.empty() || parts[0].empty()) throw ConfigError("empty scorer specification");
  s.path = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) {
    if (parts[i] == "r2l") {
      s.right_to_left = true;
    } else if (parts[i] == "l2r") {
      s.right_to_left = false;
    } else if (parts[i].rfind("w=", 0) == 0) {
      try {
        s.weight = std::stod(parts[i].substr(2));
      } catch (const std::exception&) {
        throw ConfigError("bad scorer weight in '" + spec + "'");
      }
    } else {
      throw ConfigError("unknown scorer attribute '" + parts[i] + "'");
    }
  }
  return s;
}

int cmd_rerank(const Config& c, const std::vector<std::string>& scorer_specs, const std::string& nbest_path,
               const std::string& src_path, const std::string& output, std::ostream& out) {
  if (scorer_specs.empty()) throw ConfigError("at least one --scorer is required");
  std::vector<LoadedModel> models;
  std::vector<RerankScorer> scorers;
  for (const auto& spec : scorer_specs) {
    const ScorerSpec s = parse_scorer(spec);
    models.push_back(load_model(s.path));
  }
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (models[i].source_vocab.fingerprint() != models[0].source_vocab.fingerprint() ||
        models[i].target_vocab.fingerprint() != models[0].target_vocab.fingerprint()) {
      throw DataError("rerank scorers use different vocabularies");
    }
    const ScorerSpec s = parse_scorer(scorer_specs[i]);
    scorers.push_back(model_scorer(*models[i].model, s.right_to_left, s.weight));
  }
  const Vocab& sv = models[0].source_vocab;
  const Vocab& tv = models[0].target_vocab;
  const auto src = read_lines(src_path);
  const auto lines = read_lines(nbest_path);
  auto bpe = segmenter(c);

  std::vector<NbestEntry> entries;
  for (const auto& l : lines) {
    if (!l.empty()) entries.push_back(parse_nbest(l));
  }
  Sink sink(output, out);
  std::size_t start = 0;
  while (start < entries.size()) {
    std::size_t end = start;
    while (end < entries.size() && entries[end].sentence_id == entries[start].sentence_id) ++end;
    const std::size_t id = entries[start].sentence_id;
    if (id >= src.size()) throw DataError("n-best sentence id " + std::to_string(id) + " has no source line");
    const auto source = sv.encode(prepare(src[id], bpe));
    std::vector<std::vector<int>> candidates;
    for (std::size_t k = start; k < end; ++k) candidates.push_back(tv.encode(prepare(entries[k].tokens, bpe)));
    const auto order = rerank(source, candidates, scorers);
    for (std::size_t k : order) {
      sink.stream() << format_nbest(id, entries[start + k].tokens, rerank_score(source, candidates[k], scorers))
                    << '\n';
    }
    start = end;
  }
  sink.finish();
  return kOk;
}

// Preprocessing -------------------------------------------------------------------------

int cmd_bpe_learn(const std::vector<std::string>& inputs, std::size_t merges, const std::string& output,
                  std::istream& in, std::ostream& out) {
  std::vector<Sentence> corpus;
  if (inputs.empty()) {
    for (const auto& l : read_input("", in)) corpus.push_back(tokenize(l));
  }
  for (const auto& path : inputs) {
    for (auto& s : read_corpus(path)) corpus.push_back(std::move(s));
  }
  const MergeTable table = bpe_learn(word_counts(corpus), merges);
  Sink sink(output, out);
  table.save(sink.stream());
  sink.finish();
  return kOk;
}

int cmd_bpe_apply(const std::string& merges, const std::string& input, const std::string& output, std::istream& in,
                  std::ostream& out) {
  BpeSegmenter seg(MergeTable::load(merges));
  Sink sink(output, out);
  for (const auto& line : read_input(input, in)) sink.stream() << join(seg.apply(tokenize(line))) << '\n';
  sink.finish();
  return kOk;
}

int cmd_vocab(const std::string& input, std::size_t limit, const std::string& output, std::istream& in,
              std::ostream& out) {
  std::vector<Sentence> corpus;
  for (const auto& l : read_input(input, in)) corpus.push_back(tokenize(l));
  if (corpus.empty()) throw DataError("empty corpus");
  const Vocab v = build_vocab(corpus, limit);
  Sink sink(output, out);
  v.save(sink.stream());
  sink.finish();
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Neural machine translation toolkit", "nmt"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "train a translation model");
  Common train_common;
  train_common.attach(train);
  auto& tb = train_common.bindings;
  tb.value(train, "--src", "train.src", "training source corpus");
  tb.value(train, "--tgt", "train.tgt", "training target corpus");
  tb.value(train, "--src-vocab", "train.src-vocab", "source vocabulary");
  tb.value(train, "--tgt-vocab", "train.tgt-vocab", "target vocabulary");
  tb.value(train, "--valid-src", "train.valid-src", "validation source corpus");
  tb.value(train, "--valid-tgt", "train.valid-tgt", "validation target corpus");
  tb.value(train, "--output", "train.output", "checkpoint path prefix");
  tb.value(train, "--epochs", "train.epochs", "passes over the data");
  tb.value(train, "--mini-batch", "train.mini-batch", "sentences per update");
  tb.value(train, "--init-checkpoint", "train.init-checkpoint", "start from this checkpoint");
  tb.value(train, "--checkpoint-every", "train.checkpoint-every", "updates between checkpoints");
  tb.value(train, "--optimizer", "train.optimizer", "sgd, momentum, adagrad or adam");
  tb.value(train, "--lr", "train.lr", "learning rate");
  tb.value(train, "--clip", "train.clip", "gradient-norm clipping threshold");
  tb.value(train, "--dropout", "model.dropout", "dropout rate");
  tb.value(train, "--depth-enc", "model.enc-depth", "encoder depth");
  tb.value(train, "--depth-dec", "model.dec-depth", "decoder depth");
  tb.value(train, "--arch", "model.arch", "rnn, lstm, gru or selfattn");
  tb.value(train, "--guided-alignment", "train.guided-alignment", "word alignment file");
  tb.value(train, "--align-weight", "train.align-weight", "guided alignment weight");
  tb.value(train, "--seed", "train.seed", "random seed");

  // translate / backtranslate share decoding flags
  auto decode_flags = [](CLI::App* sub, Bindings& b) {
    b.value(sub, "--beam", "decode.beam", "beam size");
    b.value(sub, "--nbest", "decode.nbest", "print this many candidates per sentence");
    b.flag(sub, "--normalize", "decode.normalize", "length-normalise final scores");
    b.value(sub, "--max-len-factor", "decode.max-len-factor", "output length limit per source word");
    b.flag(sub, "--greedy", "decode.greedy", "greedy decoding");
    b.value(sub, "--merges", "decode.merges", "BPE merges for input and output");
  };
  auto* translate = app.add_subcommand("translate", "translate text with one or more checkpoints");
  Common translate_common;
  translate_common.attach(translate);
  decode_flags(translate, translate_common.bindings);
  std::vector<std::string> translate_ckpts;
  std::string translate_input, translate_output;
  std::size_t last = 0, threads = 1;
  translate->add_option("checkpoints", translate_ckpts, "model files; several form an ensemble")->required();
  translate->add_option("--input", translate_input, "source text (default stdin)");
  translate->add_option("--output", translate_output, "output file (default stdout)");
  translate->add_option("--last", last, "ensemble only the k checkpoints with the most updates");
  translate->add_option("--threads", threads, "decoding threads")->check(CLI::PositiveNumber);

  auto* back = app.add_subcommand("backtranslate", "translate monolingual target text into synthetic sources");
  Common back_common;
  back_common.attach(back);
  decode_flags(back, back_common.bindings);
  std::vector<std::string> back_ckpts;
  std::string mono, out_src, out_tgt;
  std::size_t back_threads = 1;
  back->add_option("checkpoints", back_ckpts, "reverse-direction model files")->required();
  back->add_option("--mono", mono, "monolingual target-language text")->required();
  back->add_option("--out-src", out_src, "synthetic source output")->required();
  back->add_option("--out-tgt", out_tgt, "copied target output")->required();
  back->add_option("--threads", back_threads, "decoding threads")->check(CLI::PositiveNumber);

  auto* score = app.add_subcommand("score", "forced-decoding log-probabilities of sentence pairs");
  Common score_common;
  score_common.attach(score);
  score_common.bindings.value(score, "--merges", "decode.merges", "BPE merges for both sides");
  std::string score_ckpt, score_src, score_tgt, score_output;
  score->add_option("checkpoint", score_ckpt, "model file")->required();
  score->add_option("--src", score_src, "source text")->required();
  score->add_option("--tgt", score_tgt, "target text")->required();
  score->add_option("--output", score_output, "output file (default stdout)");

  auto* rr = app.add_subcommand("rerank", "rerank an n-best list with forced-decoding scorers");
  Common rr_common;
  rr_common.attach(rr);
  rr_common.bindings.value(rr, "--merges", "decode.merges", "BPE merges for both sides");
  std::vector<std::string> scorers;
  std::string rr_nbest, rr_src, rr_output;
  rr->add_option("--scorer", scorers, "path[:r2l][:w=weight] (repeatable)")->required();
  rr->add_option("--nbest", rr_nbest, "n-best list")->required();
  rr->add_option("--src", rr_src, "source text")->required();
  rr->add_option("--output", rr_output, "output file (default stdout)");

  auto* learn = app.add_subcommand("bpe-learn", "learn BPE merges");
  std::vector<std::string> learn_inputs;
  std::size_t num_merges = 0;
  std::string learn_output;
  learn->add_option("--input", learn_inputs, "training text (repeatable; default stdin)");
  learn->add_option("--merges", num_merges, "number of merges")->required();
  learn->add_option("--output", learn_output, "merges file (default stdout)");

  auto* apply = app.add_subcommand("bpe-apply", "segment text with BPE merges");
  std::string apply_merges, apply_input, apply_output;
  apply->add_option("--merges", apply_merges, "merges file")->required();
  apply->add_option("--input", apply_input, "text (default stdin)");
  apply->add_option("--output", apply_output, "output (default stdout)");

  auto* vocab = app.add_subcommand("vocab", "build a vocabulary file");
  std::string vocab_input, vocab_output;
  std::size_t limit = 20000;
  vocab->add_option("--input", vocab_input, "corpus (default stdin)");
  vocab->add_option("--limit", limit, "vocabulary size including the four reserved tokens");
  vocab->add_option("--output", vocab_output, "vocabulary file (default stdout)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\nrun 'nmt --help' for usage\n";
    return kUsageError;
  }

  try {
    if (train->parsed()) return cmd_train(train_common.build(), err);
    if (translate->parsed()) {
      return cmd_translate(translate_common.build(), translate_ckpts, last, threads, translate_input,
                           translate_output, in, out, err);
    }
    if (back->parsed()) return cmd_backtranslate(back_common.build(), back_ckpts, mono, out_src, out_tgt, back_threads);
    if (score->parsed()) return cmd_score(score_common.build(), score_ckpt, score_src, score_tgt, score_output, out);
    if (rr->parsed()) return cmd_rerank(rr_common.build(), scorers, rr_nbest, rr_src, rr_output, out);
    if (learn->parsed()) return cmd_bpe_learn(learn_inputs, num_merges, learn_output, in, out);
    if (apply->parsed()) return cmd_bpe_apply(apply_merges, apply_input, apply_output, in, out);
    if (vocab->parsed()) return cmd_vocab(vocab_input, limit, vocab_output, in, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsageError;
}

}  // namespace nmt::cli
