// SPDX-License-Identifier: Apache-2.0
//
// Flat key=value configuration with namespaced keys (model.*, train.*,
// decode.*). Every key has a registered default; unknown keys are errors.
#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "nmt/data.hpp"
#include "nmt/decode.hpp"
#include "nmt/optim.hpp"
#include "nmt/seq2seq.hpp"

namespace nmt {

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

/// All recognised keys in registration order.
const std::vector<ConfigKey>& config_keys();

class Config {
 public:
  /// Every key at its default.
  Config();

  /// Throws ConfigError for unknown keys.
  void set(std::string_view key, std::string value);
  /// Reads "key = value" lines; '#' starts a comment. Later lines win.
  void merge(std::istream& in, std::string_view origin = "config");
  void merge_file(const std::string& path);
  /// "key=value" strings as given on a command line.
  void merge_overrides(const std::vector<std::string>& assignments);

  const std::string& get(std::string_view key) const;
  bool is_set(std::string_view key) const { return !get(key).empty(); }
  std::int64_t get_int(std::string_view key) const;
  std::size_t get_size(std::string_view key) const;
  double get_double(std::string_view key) const;
  bool get_bool(std::string_view key) const;

  /// Sorted "key=value" lines.
  std::string dump() const;
  const std::map<std::string, std::string, std::less<>>& values() const { return values_; }

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

/// model.* keys plus vocabulary sizes.
ModelConfig model_config(const Config& config, std::size_t src_vocab, std::size_t tgt_vocab);
/// Inverse of model_config for the model.* keys.
void store_model_config(Config& config, const ModelConfig& model);

OptimizerConfig optimizer_config(const Config& config);
TrainPlan train_plan(const Config& config);
BeamOptions beam_options(const Config& config);

}  // namespace nmt
