// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "nmt/config.hpp"

namespace nmt {
namespace {

TEST(Config, DefaultsAndTypedAccess) {
  Config c;
  EXPECT_EQ(c.get("model.arch"), "gru");
  EXPECT_EQ(c.get_size("decode.beam"), 5u);
  EXPECT_TRUE(c.get_bool("model.attention-on"));
  EXPECT_DOUBLE_EQ(c.get_double("train.clip"), 1.0);
  EXPECT_FALSE(c.is_set("train.lr"));
  EXPECT_THROW(c.get("model.colour"), ConfigError);
  EXPECT_THROW(c.set("model.colour", "red"), ConfigError);
  std::set<std::string> names;
  for (const auto& k : config_keys()) {
    EXPECT_TRUE(names.insert(k.name).second) << k.name;
    EXPECT_FALSE(k.help.empty()) << k.name;
  }
  EXPECT_EQ(names.size(), c.values().size());
}

TEST(Config, MalformedValuesAreConfigErrors) {
  Config c;
  c.set("decode.beam", "five");
  EXPECT_THROW(c.get_size("decode.beam"), ConfigError);
  c.set("decode.beam", "-2");
  EXPECT_THROW(c.get_size("decode.beam"), ConfigError);
  c.set("train.clip", "1.5x");
  EXPECT_THROW(c.get_double("train.clip"), ConfigError);
  c.set("model.coverage", "maybe");
  EXPECT_THROW(c.get_bool("model.coverage"), ConfigError);
}

TEST(Config, FileMergeWithCommentsAndOverrides) {
  std::istringstream in("# training run\nmodel.arch = lstm   # recurrent\n\n train.epochs=3\nmodel.arch=rnn\n");
  Config c;
  c.merge(in);
  EXPECT_EQ(c.get("model.arch"), "rnn");
  EXPECT_EQ(c.get_size("train.epochs"), 3u);
  c.merge_overrides({"train.epochs = 7", "decode.normalize=true"});
  EXPECT_EQ(c.get_size("train.epochs"), 7u);
  EXPECT_TRUE(c.get_bool("decode.normalize"));
  EXPECT_THROW(c.merge_overrides({"train.epochs"}), ConfigError);
  std::istringstream bad("model.arch lstm\n");
  EXPECT_THROW(c.merge(bad), ConfigError);
  std::istringstream unknown("model.wings = 2\n");
  EXPECT_THROW(c.merge(unknown), ConfigError);
  EXPECT_THROW(c.merge_file("/nonexistent/run.cfg"), DataError);

  const auto path = std::filesystem::temp_directory_path() / "nmt_test_run.cfg";
  std::ofstream(path) << "decode.beam = 12\n";
  c.merge_file(path.string());
  EXPECT_EQ(c.get_size("decode.beam"), 12u);
  std::filesystem::remove(path);
}

TEST(Config, DumpIsSortedKeyValueLines) {
  Config c;
  std::istringstream lines(c.dump());
  std::string line, previous;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    const auto eq = line.find('=');
    ASSERT_NE(eq, std::string::npos);
    const std::string key = line.substr(0, eq);
    EXPECT_LT(previous, key);
    previous = key;
    ++n;
  }
  EXPECT_EQ(n, config_keys().size());
}

TEST(Config, ModelConfigRoundTrip) {
  ModelConfig m;
  m.arch = Arch::kLstm;
  m.src_vocab = 11;
  m.tgt_vocab = 13;
  m.embed = 5;
  m.hidden = 6;
  m.attention = 7;
  m.enc_depth = 3;
  m.enc_mode = EncoderMode::kAlternating;
  m.dec_depth = 2;
  m.dec_mode = DeepMode::kTransition;
  m.coverage = m.fertility = true;
  m.fertility_cap = 2.5f;
  m.init_state = InitState::kZeros;
  m.gru_fold_bias = true;
  m.dropout = 0.25f;
  Config c;
  store_model_config(c, m);
  ModelConfig back = model_config(c, 11, 13);
  EXPECT_EQ(back.arch, m.arch);
  EXPECT_EQ(back.embed, 5u);
  EXPECT_EQ(back.hidden, 6u);
  EXPECT_EQ(back.attention, 7u);
  EXPECT_EQ(back.enc_depth, 3u);
  EXPECT_EQ(back.enc_mode, m.enc_mode);
  EXPECT_EQ(back.dec_depth, 2u);
  EXPECT_EQ(back.dec_mode, m.dec_mode);
  EXPECT_TRUE(back.coverage && back.fertility && back.gru_fold_bias);
  EXPECT_FLOAT_EQ(back.fertility_cap, 2.5f);
  EXPECT_EQ(back.init_state, InitState::kZeros);
  EXPECT_FLOAT_EQ(back.dropout, 0.25f);

  c.set("model.fertility", "true");
  c.set("model.coverage", "false");
  EXPECT_THROW(model_config(c, 11, 13), ConfigError);
}

TEST(Config, TrainingAndDecodingSections) {
  Config c;
  EXPECT_FLOAT_EQ(optimizer_config(c).learning_rate, 0.001f);
  c.set("train.optimizer", "sgd");
  EXPECT_FLOAT_EQ(optimizer_config(c).learning_rate, 0.1f);
  c.set("train.lr", "0.5");
  EXPECT_FLOAT_EQ(optimizer_config(c).learning_rate, 0.5f);
  c.set("train.lr", "-1");
  EXPECT_THROW(optimizer_config(c), ConfigError);

  c.set("train.mini-batch", "16");
  c.set("train.maxi-batch", "8");
  EXPECT_THROW(train_plan(c), ConfigError);
  c.set("train.maxi-batch", "64");
  EXPECT_EQ(train_plan(c).mini_batch, 16u);

  c.set("decode.beam", "0");
  EXPECT_THROW(beam_options(c), ConfigError);
  c.set("decode.beam", "7");
  c.set("decode.over-weight", "0.3");
  BeamOptions o = beam_options(c);
  EXPECT_EQ(o.beam, 7u);
  EXPECT_DOUBLE_EQ(o.over_weight, 0.3);
}

}  // namespace
}  // namespace nmt
