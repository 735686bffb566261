// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "chvt/config.hpp"

using namespace chvt;

TEST(Config, DefaultsAreValidOnceVocabIsKnown) {
  RunConfig c;
  c.model.vocab_size = 100;
  EXPECT_NO_THROW(c.model.validate());
  EXPECT_NO_THROW(c.train.validate());
  EXPECT_NO_THROW(c.gen.validate());
  EXPECT_NO_THROW(c.data.validate_ratios());
}

TEST(Config, ParsesKeysCommentsAndEnums) {
  const RunConfig c = parse_config_text(
      "# a comment\n"
      "K = 6\n"
      "d_model=48   # trailing\n"
      "kl_mode = relaxed\n"
      "latent_source = cls_token\n"
      "use_dlv = false\n"
      "lr = 2.5e-4\n"
      "data_dir = /tmp/x y\n");
  EXPECT_EQ(c.model.K, 6);
  EXPECT_EQ(c.model.d_model, 48);
  EXPECT_EQ(c.train.kl_mode, KlMode::relaxed);
  EXPECT_EQ(c.model.latent_source, LatentSource::cls_token);
  EXPECT_FALSE(c.model.use_dlv);
  EXPECT_DOUBLE_EQ(c.train.lr, 2.5e-4);
  EXPECT_EQ(c.data.data_dir, "/tmp/x y");
}

TEST(Config, SerializeRoundTripsExactly) {
  RunConfig c;
  c.model.vocab_size = 321;
  c.train.lr = 0.1 + 0.2;
  c.train.kl_mode = KlMode::relaxed;
  c.gen.decode_mode = DecodeMode::top_k_sampling;
  c.study.variant = "cls_token";
  c.seed = 123456789012345ULL;
  const std::string text = serialize_config(c);
  const RunConfig back = parse_config_text(text);
  EXPECT_EQ(serialize_config(back), text);
  EXPECT_EQ(back.train.lr, c.train.lr);
  EXPECT_EQ(back.seed, c.seed);
}

TEST(Config, BadInputIsAConfigError) {
  EXPECT_THROW(parse_config_text("nonsense_key = 1\n"), ConfigError);
  EXPECT_THROW(parse_config_text("K = four\n"), ConfigError);
  EXPECT_THROW(parse_config_text("K = 4.5\n"), ConfigError);
  EXPECT_THROW(parse_config_text("use_clv = maybe\n"), ConfigError);
  EXPECT_THROW(parse_config_text("kl_mode = fancy\n"), ConfigError);
  EXPECT_THROW(parse_config_text("seed = -3\n"), ConfigError);
  EXPECT_THROW(parse_config_text("just words\n"), ConfigError);
  EXPECT_THROW(load_config_file("/nonexistent/chvt.cfg"), ConfigError);
}

TEST(Config, ValidationRejectsInconsistentSettings) {
  ModelConfig m;
  m.vocab_size = 50;
  m.n_heads = 3;
  EXPECT_THROW(m.validate(), ContractError);
  m.n_heads = 2;
  m.use_clv = m.use_dlv = false;
  EXPECT_THROW(m.validate(), ContractError);
  m.use_clv = true;
  EXPECT_EQ(m.branches(), 1);
  TrainConfig t;
  t.kl_mode = KlMode::relaxed;
  t.batch_size = 1;
  EXPECT_THROW(t.validate(), ContractError);
  DataConfig d;
  d.train_ratio = 0.9;
  EXPECT_THROW(d.validate_ratios(), ContractError);
}
