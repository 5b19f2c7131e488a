// SPDX-License-Identifier: Apache-2.0
#include "nmt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "nmt/config.hpp"
#include "nmt/errors.hpp"

namespace nmt {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");
static_assert(sizeof(float) == 4, "checkpoint I/O assumes 32-bit floats");

namespace {

constexpr char kMagic[4] = {'N', 'M', 'T', 'F'};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <typename T>
  void pod(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void bytes(std::string_view s) {
    pod(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void tensor(const Tensor& t) {
    pod(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) pod(static_cast<std::uint64_t>(e));
    out_.write(reinterpret_cast<const char*>(t.begin()), static_cast<std::streamsize>(t.size() * sizeof(float)));
  }
  void tensors(const std::vector<Tensor>& ts) {
    pod(static_cast<std::uint32_t>(ts.size()));
    for (const auto& t : ts) tensor(t);
  }
  void vocab(const Vocab& v) {
    pod(static_cast<std::uint32_t>(v.size()));
    for (const auto& tok : v.tokens()) bytes(tok);
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}

  template <typename T>
  T pod() {
    T v{};
    read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  }
  std::string bytes() {
    const auto n = pod<std::uint32_t>();
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  Tensor tensor() {
    const auto rank = pod<std::uint32_t>();
    if (rank == 0 || rank > 8) fail("implausible tensor rank " + std::to_string(rank));
    Shape shape;
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const auto e = pod<std::uint64_t>();
      if (e == 0 || e > (1ULL << 32)) fail("implausible tensor extent");
      count *= e;
      if (count > (1ULL << 34)) fail("tensor too large");
      shape.push_back(static_cast<std::size_t>(e));
    }
    std::vector<float> values(static_cast<std::size_t>(count));
    read(reinterpret_cast<char*>(values.data()), values.size() * sizeof(float));
    return Tensor(std::move(shape), std::move(values));
  }
  std::vector<Tensor> tensors() {
    const auto n = pod<std::uint32_t>();
    std::vector<Tensor> out;
    for (std::uint32_t i = 0; i < n; ++i) out.push_back(tensor());
    return out;
  }
  Vocab vocab() {
    const auto n = pod<std::uint32_t>();
    std::vector<std::string> tokens;
    for (std::uint32_t i = 0; i < n; ++i) tokens.push_back(bytes());
    try {
      return Vocab::from_tokens(tokens);
    } catch (const std::exception& e) {
      fail(std::string("bad vocabulary: ") + e.what());
    }
  }
  void read(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) fail("truncated file");
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }
  [[noreturn]] void fail(const std::string& what) const { throw DataError(path_ + ": " + what); }

 private:
  std::istream& in_;
  std::string path_;
};

std::string fingerprint_text(std::uint64_t f) {
  std::ostringstream s;
  s << std::hex << f;
  return s.str();
}

}  // namespace

void write_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  Writer w(out);
  out.write(kMagic, sizeof kMagic);
  w.pod(kCheckpointVersion);
  std::string header;
  for (const auto& [k, v] : ck.metadata) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw DataError("metadata entry '" + k + "' cannot be stored");
    }
    header += k + "=" + v + "\n";
  }
  w.bytes(header);
  w.pod(static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, t] : ck.tensors) {
    w.bytes(name);
    w.tensor(t);
  }
  w.vocab(ck.source_vocab);
  w.vocab(ck.target_vocab);
  w.pod(static_cast<std::uint8_t>(ck.optimizer ? 1 : 0));
  if (ck.optimizer) {
    w.pod(static_cast<std::int64_t>(ck.optimizer->t));
    w.tensors(ck.optimizer->m);
    w.tensors(ck.optimizer->v);
  }
  out.flush();
  if (!out) throw DataError("failed writing " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  Reader r(in, path);
  char magic[4];
  r.read(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) r.fail("not a model file");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) r.fail("unsupported format version " + std::to_string(version));
  Checkpoint ck;
  std::istringstream header(r.bytes());
  std::string line;
  while (std::getline(header, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) r.fail("malformed metadata line '" + line + "'");
    ck.metadata[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto count = r.pod<std::uint32_t>();
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.bytes();
    if (!seen.insert(name).second) r.fail("duplicate tensor record '" + name + "'");
    ck.tensors.emplace_back(std::move(name), r.tensor());
  }
  ck.source_vocab = r.vocab();
  ck.target_vocab = r.vocab();
  const auto has_optimizer = r.pod<std::uint8_t>();
  if (has_optimizer > 1) r.fail("bad optimizer flag");
  if (has_optimizer) {
    OptimizerState st;
    st.t = r.pod<std::int64_t>();
    st.m = r.tensors();
    st.v = r.tensors();
    ck.optimizer = std::move(st);
  }
  if (!r.at_end()) r.fail("trailing bytes");
  for (const auto& [key, vocab] : {std::pair{"source.fingerprint", &ck.source_vocab},
                                   std::pair{"target.fingerprint", &ck.target_vocab}}) {
    auto it = ck.metadata.find(key);
    if (it != ck.metadata.end() && it->second != fingerprint_text(vocab->fingerprint())) {
      r.fail(std::string("embedded vocabulary does not match ") + key);
    }
  }
  return ck;
}

Checkpoint make_checkpoint(const Seq2Seq& model, const Vocab& source, const Vocab& target,
                           const OptimizerState* optimizer, const std::map<std::string, std::string>& extra) {
  if (source.size() != model.config().src_vocab || target.size() != model.config().tgt_vocab) {
    throw ConfigError("vocabulary sizes do not match the model");
  }
  Checkpoint ck;
  ck.metadata = extra;
  Config config;
  store_model_config(config, model.config());
  for (const auto& [k, v] : config.values()) {
    if (k.rfind("model.", 0) == 0) ck.metadata[k] = v;
  }
  ck.metadata["source.size"] = std::to_string(source.size());
  ck.metadata["target.size"] = std::to_string(target.size());
  ck.metadata["source.fingerprint"] = fingerprint_text(source.fingerprint());
  ck.metadata["target.fingerprint"] = fingerprint_text(target.fingerprint());
  std::string names;
  const ParameterSet& params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (i) names += ",";
    names += params[i].name;
    ck.tensors.emplace_back(params[i].name, params[i].value);
  }
  ck.metadata["parameters"] = names;
  ck.source_vocab = source;
  ck.target_vocab = target;
  if (optimizer) ck.optimizer = *optimizer;
  return ck;
}

ModelConfig checkpoint_model_config(const Checkpoint& ck) {
  Config config;
  for (const auto& [k, v] : ck.metadata) {
    if (k.rfind("model.", 0) == 0) config.set(k, v);
  }
  return model_config(config, ck.source_vocab.size(), ck.target_vocab.size());
}

LoadedModel instantiate(const Checkpoint& ck) {
  LoadedModel out;
  const ModelConfig config = checkpoint_model_config(ck);
  Rng rng(0);
  out.model = std::make_unique<Seq2Seq>(config, rng);
  ParameterSet& params = out.model->params();
  std::set<std::string> assigned;
  for (const auto& [name, t] : ck.tensors) {
    Parameter* p = params.find(name);
    if (!p) throw DataError("tensor record '" + name + "' names no model parameter");
    if (p->value.shape() != t.shape()) throw DataError("tensor record '" + name + "' has the wrong shape");
    p->value = t;
    assigned.insert(name);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!assigned.count(params[i].name)) throw DataError("no tensor record for parameter '" + params[i].name + "'");
  }
  if (ck.optimizer) {
    const auto& st = *ck.optimizer;
    if (st.m.size() != params.size() || st.v.size() != params.size()) {
      throw DataError("optimizer state does not match the parameter count");
    }
  }
  out.source_vocab = ck.source_vocab;
  out.target_vocab = ck.target_vocab;
  out.optimizer = ck.optimizer;
  out.metadata = ck.metadata;
  return out;
}

void save_model(const std::string& path, const Seq2Seq& model, const Vocab& source, const Vocab& target,
                const OptimizerState* optimizer, const std::map<std::string, std::string>& extra) {
  write_checkpoint(path, make_checkpoint(model, source, target, optimizer, extra));
}

LoadedModel load_model(const std::string& path) { return instantiate(read_checkpoint(path)); }

}  // namespace nmt
