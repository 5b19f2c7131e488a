// SPDX-License-Identifier: Apache-2.0
#include "nmt/config.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>

#include "nmt/errors.hpp"

namespace nmt {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"model.arch", "gru", "rnn, lstm, gru or selfattn"},
      {"model.embed", "16", "word embedding width (model width for selfattn)"},
      {"model.hidden", "32", "recurrent state width"},
      {"model.attention", "32", "hidden width of the attention scorer"},
      {"model.enc-depth", "1", "encoder layers"},
      {"model.dec-depth", "1", "decoder layers"},
      {"model.enc-mode", "stacked", "stacked, transition or alternating"},
      {"model.dec-mode", "stacked", "stacked or transition"},
      {"model.attention-on", "true", "attend over annotations; false uses a fixed summary"},
      {"model.coverage", "false", "coverage-aware attention"},
      {"model.fertility", "false", "learned fertility normalising coverage"},
      {"model.fertility-cap", "3", "maximum fertility"},
      {"model.init-state", "backward", "decoder start state: backward or zeros"},
      {"model.gru-fold-bias", "false", "single GRU candidate bias"},
      {"model.dropout", "0", "dropout rate on embeddings and recurrent outputs"},
      {"train.src", "", "training source corpus"},
      {"train.tgt", "", "training target corpus"},
      {"train.src-vocab", "", "source vocabulary file"},
      {"train.tgt-vocab", "", "target vocabulary file"},
      {"train.valid-src", "", "validation source corpus"},
      {"train.valid-tgt", "", "validation target corpus"},
      {"train.synthetic-src", "", "back-translated source corpus"},
      {"train.synthetic-tgt", "", "target side of the back-translated corpus"},
      {"train.output", "model", "checkpoint path prefix"},
      {"train.epochs", "10", "passes over the training data"},
      {"train.maxi-batch", "1000", "sentences per length-sorting window"},
      {"train.mini-batch", "32", "sentences per update"},
      {"train.seed", "1", "random seed"},
      {"train.validate-every", "0", "updates between validations; 0 means once per epoch"},
      {"train.patience", "5", "validations without improvement before stopping; 0 disables"},
      {"train.max-length", "100", "drop training pairs longer than this"},
      {"train.optimizer", "adam", "sgd, momentum, adagrad or adam"},
      {"train.lr", "", "learning rate; empty selects the optimizer default"},
      {"train.clip", "1", "global gradient-norm threshold; 0 disables"},
      {"train.average", "true", "average gradients over the sentences of a batch instead of summing"},
      {"train.checkpoint-every", "0", "updates between checkpoint dumps; 0 only at epoch ends"},
      {"train.init-checkpoint", "", "start from this checkpoint's parameters"},
      {"train.guided-alignment", "", "word alignments for the training corpus"},
      {"train.align-weight", "0.5", "weight of the guided alignment cost (used with train.guided-alignment)"},
      {"train.align-cost", "ce", "ce or mse"},
      {"decode.beam", "5", "beam size"},
      {"decode.nbest", "0", "emit this many candidates per sentence; 0 prints the best only"},
      {"decode.normalize", "false", "divide final scores by output length"},
      {"decode.max-len-factor", "2", "output length limit per source word (plus 5)"},
      {"decode.greedy", "false", "greedy decoding instead of beam search"},
      {"decode.over-weight", "0", "over-generation penalty weight"},
      {"decode.under-weight", "0", "under-generation penalty weight"},
      {"decode.coverage-in-search", "false", "apply coverage penalties during pruning"},
      {"decode.merges", "", "BPE merges applied to source input and undone on output"},
  };
  return keys;
}

Config::Config() {
  for (const auto& k : config_keys()) values_.emplace(k.name, k.default_value);
}

void Config::set(std::string_view key, std::string value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown configuration key '" + std::string(key) + "'");
  it->second = std::move(value);
}

void Config::merge(std::istream& in, std::string_view origin) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::string_view view = line;
    if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(std::string(origin) + ":" + std::to_string(number) + ": expected key = value");
    }
    set(trim(view.substr(0, eq)), std::string(trim(view.substr(eq + 1))));
  }
}

void Config::merge_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read configuration file " + path);
  merge(in, path);
}

void Config::merge_overrides(const std::vector<std::string>& assignments) {
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + a + "' is not key=value");
    set(trim(std::string_view(a).substr(0, eq)), std::string(trim(std::string_view(a).substr(eq + 1))));
  }
}

const std::string& Config::get(std::string_view key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown configuration key '" + std::string(key) + "'");
  return it->second;
}

std::int64_t Config::get_int(std::string_view key) const {
  const std::string& v = get(key);
  std::int64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError(std::string(key) + ": '" + v + "' is not an integer");
  }
  return out;
}

std::size_t Config::get_size(std::string_view key) const {
  const std::int64_t v = get_int(key);
  if (v < 0) throw ConfigError(std::string(key) + " must not be negative");
  return static_cast<std::size_t>(v);
}

double Config::get_double(std::string_view key) const {
  const std::string& v = get(key);
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw ConfigError(std::string(key) + ": '" + v + "' is not a number");
}

bool Config::get_bool(std::string_view key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(std::string(key) + ": '" + v + "' is not a boolean");
}

std::string Config::dump() const {
  std::ostringstream out;
  for (const auto& [k, v] : values_) out << k << '=' << v << '\n';
  return out.str();
}

ModelConfig model_config(const Config& c, std::size_t src_vocab, std::size_t tgt_vocab) {
  ModelConfig m;
  m.arch = parse_arch(c.get("model.arch"));
  m.src_vocab = src_vocab;
  m.tgt_vocab = tgt_vocab;
  m.embed = c.get_size("model.embed");
  m.hidden = c.get_size("model.hidden");
  m.attention = c.get_size("model.attention");
  m.enc_depth = c.get_size("model.enc-depth");
  m.dec_depth = c.get_size("model.dec-depth");
  m.enc_mode = parse_encoder_mode(c.get("model.enc-mode"));
  m.dec_mode = parse_deep_mode(c.get("model.dec-mode"));
  m.use_attention = c.get_bool("model.attention-on");
  m.coverage = c.get_bool("model.coverage");
  m.fertility = c.get_bool("model.fertility");
  m.fertility_cap = static_cast<float>(c.get_double("model.fertility-cap"));
  m.init_state = parse_init_state(c.get("model.init-state"));
  m.gru_fold_bias = c.get_bool("model.gru-fold-bias");
  m.dropout = static_cast<float>(c.get_double("model.dropout"));
  m.validate();
  return m;
}

void store_model_config(Config& c, const ModelConfig& m) {
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  std::ostringstream cap;
  cap << m.fertility_cap;
  std::ostringstream drop;
  drop << m.dropout;
  c.set("model.arch", std::string(to_string(m.arch)));
  c.set("model.embed", std::to_string(m.embed));
  c.set("model.hidden", std::to_string(m.hidden));
  c.set("model.attention", std::to_string(m.attention));
  c.set("model.enc-depth", std::to_string(m.enc_depth));
  c.set("model.dec-depth", std::to_string(m.dec_depth));
  c.set("model.enc-mode", std::string(to_string(m.enc_mode)));
  c.set("model.dec-mode", std::string(to_string(m.dec_mode)));
  c.set("model.attention-on", b(m.use_attention));
  c.set("model.coverage", b(m.coverage));
  c.set("model.fertility", b(m.fertility));
  c.set("model.fertility-cap", cap.str());
  c.set("model.init-state", std::string(to_string(m.init_state)));
  c.set("model.gru-fold-bias", b(m.gru_fold_bias));
  c.set("model.dropout", drop.str());
}

OptimizerConfig optimizer_config(const Config& c) {
  OptimizerConfig o = OptimizerConfig::defaults(parse_optimizer(c.get("train.optimizer")));
  if (c.is_set("train.lr")) o.learning_rate = static_cast<float>(c.get_double("train.lr"));
  o.clip = static_cast<float>(c.get_double("train.clip"));
  if (o.learning_rate < 0.0f) throw ConfigError("learning rate must not be negative");
  if (o.clip < 0.0f) throw ConfigError("clipping threshold must not be negative");
  return o;
}

TrainPlan train_plan(const Config& c) {
  TrainPlan p;
  p.epochs = c.get_size("train.epochs");
  p.maxi_batch = c.get_size("train.maxi-batch");
  p.mini_batch = c.get_size("train.mini-batch");
  p.seed = static_cast<std::uint64_t>(c.get_int("train.seed"));
  p.validate_every = c.get_size("train.validate-every");
  if (p.mini_batch == 0) throw ConfigError("train.mini-batch must be positive");
  if (p.mini_batch > p.maxi_batch) throw ConfigError("train.mini-batch must not exceed train.maxi-batch");
  return p;
}

BeamOptions beam_options(const Config& c) {
  BeamOptions o;
  o.beam = c.get_size("decode.beam");
  if (o.beam == 0) throw ConfigError("decode.beam must be at least 1");
  o.normalize = c.get_bool("decode.normalize");
  o.max_len_factor = c.get_double("decode.max-len-factor");
  o.over_weight = c.get_double("decode.over-weight");
  o.under_weight = c.get_double("decode.under-weight");
  o.coverage_in_search = c.get_bool("decode.coverage-in-search");
  return o;
}

}  // namespace nmt
