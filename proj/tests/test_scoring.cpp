#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "headprune/errors.hpp"
#include "headprune/grad.hpp"
#include "headprune/scoring.hpp"
#include "oracles.hpp"

using namespace headprune;

namespace {

EncoderConfig small_config(std::size_t layers, std::size_t heads) {
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

double direct_c(const std::vector<double>& a, double eps) {
  double acc = 0.0;
  for (double v : a) acc -= (v + eps) * std::log(v + eps);
  return acc;
}

}  // namespace

TEST(Calibration, ValidateAndSplit) {
  CalibrationSet empty;
  EXPECT_THROW(empty.validate(), InputError);
  CalibrationSet c{{{{1}, 0}, {{2}, 0}, {{3}, 0}, {{4}, 0}, {{5}, 0}}, 2};
  const auto parts = c.split();
  ASSERT_EQ(parts.size(), 2u);
  EXPECT_EQ(parts[0].size() + parts[1].size(), 5u);
  c.batches = 6;
  EXPECT_THROW(c.validate(), InputError);
}

TEST(Gnorm, SingleExampleEqualsBlockNorm) {
  const auto model = EncoderModel::initialize(small_config(1, 1), 1);
  const TokenSequence x{{1, 2, 3}, 0};
  const CalibrationSet calib{{x}, 1};
  const auto g = compute_gnorm(model, calib, model.mask());
  const auto grads = backward(model, x, Scalarization::logit_l2_norm).grads;
  EXPECT_NEAR(g.g_q(0, 0), oracle::l2(grads.blocks[0].heads[0].w_q), 1e-12);
  EXPECT_NEAR(g.g_k(0, 0), oracle::l2(grads.blocks[0].heads[0].w_k), 1e-12);
  EXPECT_NEAR(g.g_v(0, 0), oracle::l2(grads.blocks[0].heads[0].w_v), 1e-12);
}

TEST(Gnorm, DuplicatedExampleMatchesSingle) {
  const auto model = EncoderModel::initialize(small_config(2, 2), 2);
  const TokenSequence x{{4, 5, 6}, 1};
  const auto once = compute_gnorm(model, {{x}, 1}, model.mask());
  const auto twice = compute_gnorm(model, {{x, x}, 2}, model.mask());
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t h = 0; h < 2; ++h) EXPECT_NEAR(once.g_k(l, h), twice.g_k(l, h), 1e-15);
}

TEST(Gnorm, TwoExamplesAreMeanOfPerExampleNorms) {
  const auto model = EncoderModel::initialize(small_config(1, 2), 3);
  const TokenSequence x1{{1, 2, 3}, 0}, x2{{7, 7}, 2};
  const auto g = compute_gnorm(model, {{x1, x2}, 1}, model.mask());
  const auto g1 = backward(model, x1, Scalarization::logit_l2_norm).grads;
  const auto g2 = backward(model, x2, Scalarization::logit_l2_norm).grads;
  for (std::size_t h = 0; h < 2; ++h) {
    const auto& b1 = g1.blocks[0].heads[h];
    const auto& b2 = g2.blocks[0].heads[h];
    EXPECT_NEAR(g.g_q(0, h), 0.5 * (oracle::l2(b1.w_q) + oracle::l2(b2.w_q)), 1e-12);
    EXPECT_NEAR(g.g_k(0, h), 0.5 * (oracle::l2(b1.w_k) + oracle::l2(b2.w_k)), 1e-12);
    EXPECT_NEAR(g.g_v(0, h), 0.5 * (oracle::l2(b1.w_v) + oracle::l2(b2.w_v)), 1e-12);
  }
}

TEST(Gnorm, PrunedPositionsAreZeroAndBatchesCounted) {
  auto model = EncoderModel::initialize(small_config(2, 2), 4);
  model.prune_head(0, 1);
  std::size_t passes = 0;
  const CalibrationSet calib{{{{1, 2}, 0}, {{3, 4}, 1}, {{5}, 2}}, 3};
  const auto g = compute_gnorm(model, calib, model.mask(), Scalarization::logit_l2_norm, &passes);
  EXPECT_EQ(passes, 3u);
  EXPECT_EQ(g.g_q(0, 1), 0.0);
  EXPECT_GT(g.g_q(0, 0), 0.0);
  EXPECT_THROW(compute_gnorm(model, calib, HeadMask::ones(2, 2)), StateError);
  EXPECT_THROW(compute_gnorm(model, CalibrationSet{}, model.mask()), InputError);
}

TEST(ExpandGradient, Examples) {
  const std::vector<double> four = {1, 2, 3, 4};
  EXPECT_EQ(expand_gradient(four, HeadMask::ones(2, 2)), Matrix::from_rows({{1, 2}, {3, 4}}));
  EXPECT_EQ(expand_gradient({}, HeadMask::zeros(2, 2)), Matrix(2, 2));
  HeadMask diag = HeadMask::zeros(2, 2);
  diag.set(0, 0, true);
  diag.set(1, 1, true);
  const std::vector<double> ab = {5, 7};
  EXPECT_EQ(expand_gradient(ab, diag), Matrix::from_rows({{5, 0}, {0, 7}}));
  EXPECT_THROW(expand_gradient(four, diag), ShapeError);
}

TEST(ExpandGradient, RestrictionRoundTripProperty) {
  std::mt19937_64 rng(5);
  std::bernoulli_distribution bit(0.6);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 100; ++trial) {
    HeadMask mask = HeadMask::zeros(3, 4);
    std::vector<double> live;
    for (std::size_t l = 0; l < 3; ++l)
      for (std::size_t h = 0; h < 4; ++h)
        if (bit(rng)) {
          mask.set(l, h, true);
          live.push_back(n(rng));
        }
    EXPECT_EQ(restrict_to_live(expand_gradient(live, mask), mask), live);
  }
}

TEST(GnormScore, Examples) {
  const Matrix ones(2, 3, 1.0);
  EXPECT_EQ(gnorm_score({ones, ones, ones}).s, ones);
  const Matrix k = Matrix::from_rows({{1, 2, 3}, {0, 0, 0}});
  const Matrix q = Matrix::from_rows({{4, 5, 6}, {7, 8, 9}});
  const auto s = gnorm_score({q, k, q});
  for (std::size_t h = 0; h < 3; ++h) EXPECT_EQ(s.s(1, h), 0.0);
  EXPECT_EQ(s.s, hadamard3(q, k, q));
  EXPECT_EQ(s.provenance, ScoreProvenance::gnorm_step);
  EXPECT_THROW(gnorm_score({q, Matrix(1, 3), q}), ShapeError);
}

TEST(Entropy, ClosedFormCases) {
  const std::vector<double> onehot = {1.0, 0.0};
  EXPECT_EQ(entropy_A(onehot), 0.0);
  for (std::size_t n : {2u, 5u, 64u}) {
    const std::vector<double> uniform(n, 1.0 / static_cast<double>(n));
    EXPECT_NEAR(entropy_A(uniform), std::log(static_cast<double>(n)), 1e-12);
  }
  EXPECT_THROW(entropy_C(onehot, 1e-6), InputError);
  EXPECT_THROW(entropy_B(onehot, 1e-6), InputError);
  const std::vector<double> a = {0.9, 0.1};
  EXPECT_NEAR(entropy_C(a, 1e-6), direct_c(a, 1e-6), 1e-15);
  EXPECT_NEAR(entropy_B(a, 1e-6), -(0.9 * std::log(0.9 + 1e-6) + 0.1 * std::log(0.1 + 1e-6)), 1e-15);
}

TEST(Entropy, RejectsInvalidVectors) {
  const std::vector<double> bad_sum = {0.5, 0.4};
  const std::vector<double> negative = {1.5, -0.5};
  const std::vector<double> ok = {0.5, 0.5};
  EXPECT_THROW(entropy_A(bad_sum), InputError);
  EXPECT_THROW(entropy_A(negative), InputError);
  EXPECT_THROW(entropy_C(ok, 0.0), InputError);
  EXPECT_THROW(entropy_B(ok, -1e-6), InputError);
}

TEST(Entropy, RectifiedInequalitiesProperty) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::size_t> len(2, 64);
  for (int trial = 0; trial < 500; ++trial) {
    const auto a = oracle::random_probability_vector(rng, len(rng), 0.2);
    if (*std::max_element(a.begin(), a.end()) + 1e-4 >= 1.0) continue;
    for (double eps : {1e-4, 1e-8}) {
      EXPECT_GT(entropy_C(a, eps), entropy_B(a, eps));
      EXPECT_GT(entropy_A(a), entropy_B(a, eps));
    }
  }
}

TEST(Entropy, VariantNames) {
  EXPECT_EQ(parse_entropy_variant("A"), EntropyVariant::A);
  EXPECT_EQ(parse_entropy_variant("C"), EntropyVariant::C);
  EXPECT_THROW(parse_entropy_variant("D"), ConfigError);
}

TEST(ExpectedAe, SingleTokenExamplesScoreZeroUnderA) {
  const auto model = EncoderModel::initialize(small_config(2, 2), 7);
  const CalibrationSet calib{{{{1}, 0}, {{4}, 1}}, 1};
  const auto s = expected_ae(model, calib, 1e-6, EntropyVariant::A);
  EXPECT_EQ(s.s, Matrix(2, 2));
  EXPECT_EQ(s.provenance, ScoreProvenance::attention_entropy_static);
}

TEST(ExpectedAe, UniformRowsGiveMeanLogLength) {
  auto model = EncoderModel::initialize(small_config(1, 2), 8);
  for (auto& head : model.layer(0).heads) head.w_q = Matrix(8, 4);
  const CalibrationSet calib{{{{1, 2}, 0}, {{3, 4, 5, 6}, 1}}, 1};
  const auto s = expected_ae(model, calib, 1e-6, EntropyVariant::A);
  const double expect = 0.5 * (std::log(2.0) + std::log(4.0));
  EXPECT_NEAR(s.s(0, 0), expect, 1e-12);
  EXPECT_NEAR(s.s(0, 1), expect, 1e-12);
}

TEST(ExpectedAe, MatchesDirectSummationOracle) {
  auto model = EncoderModel::initialize(small_config(2, 2), 9);
  model.prune_head(1, 0);
  std::mt19937_64 rng(9);
  CalibrationSet calib;
  for (int i = 0; i < 6; ++i) calib.examples.push_back(oracle::random_sequence(rng, 10, 2 + i, 3));
  const double eps = 1e-6;
  const auto s = expected_ae(model, calib, eps, EntropyVariant::C);
  EXPECT_EQ(s.s(1, 0), 0.0);
  for (const auto& c : model.mask().live_coords()) {
    double total = 0.0;
    for (const auto& x : calib.examples) {
      const auto trace = forward_trace(model, x);
      const auto hr = oracle::attention(oracle::to_grid(trace.layers[c.layer].input),
                                        model.layer(c.layer).heads[model.slot_of(c.layer, c.head)]);
      double per_example = 0.0;
      for (const auto& row : hr.attention) per_example += direct_c(row, eps);
      total += per_example / static_cast<double>(x.tokens.size());
    }
    EXPECT_NEAR(s.s(c.layer, c.head), total / static_cast<double>(calib.examples.size()), 1e-10);
  }
}

TEST(SelectExtreme, Examples) {
  const ScoreMatrix s{Matrix::from_rows({{1, 2}, {3, 0}}), ScoreProvenance::gnorm_step};
  HeadMask mask = HeadMask::ones(2, 2);
  mask.set(1, 1, false);
  const auto lo = select_extreme(s, mask, Direction::min);
  EXPECT_EQ(lo.coord, (HeadCoord{0, 0}));
  EXPECT_EQ(lo.value, 1.0);
  const auto hi = select_extreme(s, mask, Direction::max);
  EXPECT_EQ(hi.coord, (HeadCoord{1, 0}));
  EXPECT_EQ(hi.value, 3.0);
  const ScoreMatrix flat{Matrix(2, 2, 0.5), ScoreProvenance::gnorm_step};
  EXPECT_EQ(select_extreme(flat, HeadMask::ones(2, 2), Direction::min).coord, (HeadCoord{0, 0}));
  EXPECT_EQ(select_extreme(flat, HeadMask::ones(2, 2), Direction::max).coord, (HeadCoord{0, 0}));
  EXPECT_THROW(select_extreme(s, HeadMask::zeros(2, 2), Direction::min), StateError);
}

TEST(SelectExtreme, NeverReturnsPrunedCoordinate) {
  std::mt19937_64 rng(10);
  auto model = EncoderModel::initialize(small_config(2, 3), 10);
  model.prune_head(0, 2);
  model.prune_head(1, 1);
  const CalibrationSet calib{{oracle::random_sequence(rng, 10, 5, 3), oracle::random_sequence(rng, 10, 3, 3)}, 2};
  const auto score = gnorm_score(compute_gnorm(model, calib, model.mask()));
  const auto pick = select_extreme(score, model.mask(), Direction::min);
  EXPECT_TRUE(model.mask().live(pick.coord));
  EXPECT_EQ(score.s(0, 2), 0.0);
}
