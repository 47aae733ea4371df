#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "headprune/model.hpp"

namespace headprune {

// Marker-majority classification task. Tokens [0, num_classes) are markers; a
// sequence's label is the marker that occurs most often. Other tokens are filler.
struct DatasetConfig {
  std::size_t vocab_size = 24;
  std::size_t num_classes = 3;
  std::size_t train_size = 600;
  std::size_t calib_size = 64;
  std::size_t eval_size = 300;
  std::size_t min_len = 4;
  std::size_t max_len = 12;
  std::uint64_t seed = 1;
  // Probability that a position holds a marker rather than filler.
  double marker_prob = 0.3;

  void validate() const;
};

struct SyntheticDataset {
  std::vector<TokenSequence> train;
  std::vector<TokenSequence> calib;
  std::vector<TokenSequence> eval;
};

// The unique most frequent marker, or nullopt when the top count is shared (including
// sequences with no marker at all).
std::optional<std::size_t> majority_marker(std::span<const std::size_t> tokens,
                                           std::size_t num_classes);

// Deterministic given cfg.seed. Partitions never share a token sequence.
// ConfigError when vocab_size <= num_classes or lengths are inconsistent.
SyntheticDataset gen_dataset(const DatasetConfig& cfg);

}  // namespace headprune
