#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "headprune/checkpoint.hpp"
#include "headprune/errors.hpp"
#include "headprune/model.hpp"
#include "oracles.hpp"

using namespace headprune;

namespace {

EncoderConfig small_config(std::size_t layers = 2, std::size_t heads = 2) {
  EncoderConfig cfg;
  cfg.num_layers = layers;
  cfg.heads_per_layer = heads;
  cfg.head_dim = 4;
  cfg.model_dim = 4 * heads;
  cfg.vocab_size = 10;
  cfg.num_classes = 3;
  cfg.max_seq_len = 8;
  return cfg;
}

TokenSequence seq(std::vector<std::size_t> tokens) { return TokenSequence{std::move(tokens), 0}; }

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("headprune_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Config, ValidateRejectsInconsistentDims) {
  EncoderConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.head_dim = 7;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = EncoderConfig{};
  cfg.num_layers = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Embed, SingleTokenIsEmbeddingRow) {
  const auto model = EncoderModel::initialize(small_config(), 1);
  const Matrix x = embed(model, seq({3}));
  ASSERT_EQ(x.rows(), 1u);
  for (std::size_t j = 0; j < x.cols(); ++j) EXPECT_EQ(x(0, j), model.params().embedding(3, j));
}

TEST(Embed, RepeatedTokenGivesIdenticalRows) {
  const auto model = EncoderModel::initialize(small_config(), 1);
  const Matrix x = embed(model, seq({5, 5, 5}));
  for (std::size_t j = 0; j < x.cols(); ++j) {
    EXPECT_EQ(x(0, j), x(1, j));
    EXPECT_EQ(x(1, j), x(2, j));
  }
}

TEST(Embed, OutOfRangeTokenNamesPosition) {
  const auto model = EncoderModel::initialize(small_config(), 1);
  try {
    embed(model, seq({1, 2, 99}));
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("position 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(embed(model, seq({})), InputError);
}

TEST(HeadAttention, SingleTokenAttendsToItself) {
  const auto model = EncoderModel::initialize(small_config(), 2);
  const auto out = head_attention(model, 1, 1, embed(model, seq({4})));
  ASSERT_EQ(out.attention.rows(), 1u);
  EXPECT_EQ(out.attention(0, 0), 1.0);
}

TEST(HeadAttention, ZeroQueryGivesUniformRows) {
  auto model = EncoderModel::initialize(small_config(), 3);
  model.layer(0).heads[0].w_q = Matrix(8, 4);
  const auto out = head_attention(model, 0, 0, embed(model, seq({1, 2, 3, 4})));
  for (double v : out.attention.values()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(HeadAttention, MatchesScalarOracle) {
  const auto model = EncoderModel::initialize(small_config(), 4);
  const TokenSequence x = seq({0, 7, 3, 3, 9});
  const Matrix input = embed(model, x);
  for (std::size_t h = 0; h < 2; ++h) {
    const auto got = head_attention(model, 1, h, input);
    const auto expect = oracle::attention(oracle::to_grid(input), model.layer(1).heads[h]);
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(got.attention(i, j), expect.attention[i][j], 1e-12);
      for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(got.output(i, c), expect.output[i][c], 1e-12);
    }
  }
}

TEST(HeadAttention, AbsentHeadIsLookupError) {
  auto model = EncoderModel::initialize(small_config(), 4);
  model.prune_head(0, 1);
  EXPECT_THROW(head_attention(model, 0, 1, embed(model, seq({1}))), LookupError);
}

TEST(Forward, MatchesScalarOracleAndIsDeterministic) {
  std::mt19937_64 rng(5);
  const auto model = EncoderModel::initialize(small_config(3, 2), 5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = oracle::random_sequence(rng, 10, 1 + trial % 8, 3);
    const auto got = forward(model, x);
    const auto expect = oracle::forward(model, x);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(got[k], expect[k], 1e-10);
    EXPECT_EQ(got, forward(model, x));
  }
}

TEST(Forward, EmptyLayerActsAsIdentity) {
  auto model = EncoderModel::initialize(small_config(), 6);
  const auto x = seq({1, 4, 2});
  model.prune_head(1, 0);
  model.prune_head(1, 1);
  EXPECT_EQ(model.layer(1).w_o.rows(), 0u);
  HeadMask gate = HeadMask::ones(2, 2);
  gate.set(1, 0, false);
  gate.set(1, 1, false);
  auto unpruned = EncoderModel::initialize(small_config(), 6);
  const auto got = forward(model, x);
  const auto expect = oracle::forward(unpruned, x, gate);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(got[k], expect[k], 1e-12);
}

TEST(Forward, AllHeadsPrunedLeavesClassifierOnPooledEmbeddings) {
  auto model = EncoderModel::initialize(small_config(), 7);
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t h = 0; h < 2; ++h) model.prune_head(l, h);
  const auto x = seq({2, 3});
  const auto& p = model.params();
  const auto got = forward(model, x);
  for (std::size_t k = 0; k < 3; ++k) {
    double expect = p.classifier_bias(0, k);
    for (std::size_t j = 0; j < 8; ++j)
      expect += 0.5 * (p.embedding(2, j) + p.embedding(3, j)) * p.classifier_weight(j, k);
    EXPECT_NEAR(got[k], expect, 1e-12);
  }
}

TEST(Forward, ArgmaxTieGoesToSmallestIndex) {
  EXPECT_EQ(argmax({1.0, 3.0, 3.0}), 1u);
  EXPECT_EQ(argmax({0.0, 0.0, 0.0}), 0u);
}

TEST(PruneHead, ParameterCountDropsByFourBlocks) {
  auto model = EncoderModel::initialize(small_config(), 8);
  const std::size_t before = model.parameter_count();
  model.prune_head(0, 1);
  EXPECT_EQ(before - model.parameter_count(), 3 * 8 * 4 + 4 * 8);
  EXPECT_EQ(model.params_per_head(), 3u * 8 * 4 + 4 * 8);
  EXPECT_FALSE(model.has_head(0, 1));
  EXPECT_EQ(model.layer(0).head_ids, std::vector<std::size_t>{0});
  EXPECT_FALSE(model.mask().live(0, 1));
}

TEST(PruneHead, AlreadyPrunedIsStateError) {
  auto model = EncoderModel::initialize(small_config(), 8);
  model.prune_head(1, 0);
  EXPECT_THROW(model.prune_head(1, 0), StateError);
}

TEST(PruneHead, MatchesZeroGatedForward) {
  std::mt19937_64 rng(9);
  const auto model = EncoderModel::initialize(small_config(2, 3), 9);
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t h = 0; h < 3; ++h) {
      const auto pruned = prune_head(model, l, h);
      HeadMask gate = HeadMask::ones(2, 3);
      gate.set(l, h, false);
      const auto x = oracle::random_sequence(rng, 10, 6, 3);
      const auto got = forward(pruned, x);
      const auto expect = oracle::forward(model, x, gate);
      const auto gated = forward_gated(model, x, gate);
      for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_NEAR(got[k], expect[k], 1e-9);
        EXPECT_NEAR(gated[k], expect[k], 1e-9);
      }
    }
}

TEST(PruneHead, TiedModeRemovesHeadFromEveryLayer) {
  auto cfg = small_config(3, 2);
  cfg.tied_layers = true;
  auto model = EncoderModel::initialize(cfg, 10);
  EXPECT_EQ(model.params().blocks.size(), 1u);
  model.prune_head(0, 1);
  EXPECT_TRUE(model.mask().column_zero(1));
  EXPECT_FALSE(model.mask().column_zero(0));
  EXPECT_THROW(model.prune_head(2, 1), StateError);
}

TEST(Initialize, DeterministicGivenSeed) {
  EXPECT_EQ(EncoderModel::initialize(small_config(), 11).params(),
            EncoderModel::initialize(small_config(), 11).params());
  EXPECT_FALSE(EncoderModel::initialize(small_config(), 11).params() ==
               EncoderModel::initialize(small_config(), 12).params());
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  auto model = EncoderModel::initialize(small_config(), 13);
  model.prune_head(1, 0);
  const auto dir = temp_dir("ckpt");
  save_checkpoint(model, dir / "a.json");
  const auto loaded = load_checkpoint(dir / "a.json");
  EXPECT_EQ(loaded.params(), model.params());
  EXPECT_EQ(loaded.config(), model.config());
  save_checkpoint(loaded, dir / "b.json");
  std::ifstream a(dir / "a.json"), b(dir / "b.json");
  const std::string sa((std::istreambuf_iterator<char>(a)), {});
  const std::string sb((std::istreambuf_iterator<char>(b)), {});
  EXPECT_EQ(sa, sb);
}

TEST(Checkpoint, TiedRoundTrip) {
  auto cfg = small_config(3, 2);
  cfg.tied_layers = true;
  auto model = EncoderModel::initialize(cfg, 14);
  model.prune_head(0, 0);
  const auto loaded = checkpoint_from_string(checkpoint_to_string(model));
  EXPECT_EQ(loaded.params(), model.params());
  EXPECT_TRUE(loaded.mask().column_zero(0));
}

TEST(Checkpoint, TruncatedTextIsParseErrorWithOffset) {
  const auto text = checkpoint_to_string(EncoderModel::initialize(small_config(), 15));
  try {
    checkpoint_from_string(text.substr(0, text.size() / 2));
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("byte"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, SchemaErrorNamesFieldPath) {
  try {
    checkpoint_from_string(R"({"config": {"num_layers": "two"}})");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("num_layers"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, MissingFileIsIoError) {
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/checkpoint.json"), IoError);
}
