// SPDX-License-Identifier: Apache-2.0
//
// Binary model files. Layout, all integers little-endian:
//   "NMTF"  uint32 version  uint32 n  n bytes of "key=value\n" metadata
//   uint32 tensor count, then per tensor:
//     uint32 name length, name, uint32 rank, uint64 extents..., float32 values
//   source and target vocabularies: uint32 count, then (uint32 length, bytes) per token
//   uint8 optimizer flag; if set: int64 step count, then m and v tensor lists
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nmt/data.hpp"
#include "nmt/optim.hpp"
#include "nmt/seq2seq.hpp"

namespace nmt {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  /// Hyperparameters (model.* keys), vocabulary fingerprints and free-form training info.
  std::map<std::string, std::string> metadata;
  std::vector<std::pair<std::string, Tensor>> tensors;
  Vocab source_vocab;
  Vocab target_vocab;
  std::optional<OptimizerState> optimizer;
};

void write_checkpoint(const std::string& path, const Checkpoint& checkpoint);
/// Throws DataError on malformed or truncated files.
Checkpoint read_checkpoint(const std::string& path);

/// Collects parameters, configuration and vocabularies of a model.
Checkpoint make_checkpoint(const Seq2Seq& model, const Vocab& source, const Vocab& target,
                           const OptimizerState* optimizer = nullptr,
                           const std::map<std::string, std::string>& extra = {});

struct LoadedModel {
  std::unique_ptr<Seq2Seq> model;
  Vocab source_vocab;
  Vocab target_vocab;
  std::optional<OptimizerState> optimizer;
  std::map<std::string, std::string> metadata;
};

/// Rebuilds the model and copies every parameter from its single tensor record.
LoadedModel instantiate(const Checkpoint& checkpoint);

void save_model(const std::string& path, const Seq2Seq& model, const Vocab& source, const Vocab& target,
                const OptimizerState* optimizer = nullptr, const std::map<std::string, std::string>& extra = {});
LoadedModel load_model(const std::string& path);

/// Model configuration stored in checkpoint metadata.
ModelConfig checkpoint_model_config(const Checkpoint& checkpoint);

}  // namespace nmt
