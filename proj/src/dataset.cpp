#include "headprune/dataset.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "headprune/errors.hpp"

namespace headprune {

void DatasetConfig::validate() const {
  if (vocab_size <= num_classes) {
    throw ConfigError("dataset: vocab_size (" + std::to_string(vocab_size) +
                      ") must exceed num_classes (" + std::to_string(num_classes) + ")");
  }
  if (num_classes == 0) throw ConfigError("dataset: num_classes must be >= 1");
  if (train_size == 0 || calib_size == 0 || eval_size == 0) {
    throw ConfigError("dataset: partition sizes must be >= 1");
  }
  if (min_len == 0 || min_len > max_len) throw ConfigError("dataset: need 1 <= min_len <= max_len");
  if (!(marker_prob > 0.0 && marker_prob <= 1.0)) {
    throw ConfigError("dataset: marker_prob must be in (0, 1]");
  }
}

std::optional<std::size_t> majority_marker(std::span<const std::size_t> tokens,
                                           std::size_t num_classes) {
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t tok : tokens)
    if (tok < num_classes) ++counts[tok];
  const auto top = std::max_element(counts.begin(), counts.end());
  if (*top == 0 || std::count(counts.begin(), counts.end(), *top) != 1) return std::nullopt;
  return static_cast<std::size_t>(top - counts.begin());
}

SyntheticDataset gen_dataset(const DatasetConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> length(cfg.min_len, cfg.max_len);
  std::uniform_int_distribution<std::size_t> marker(0, cfg.num_classes - 1);
  std::uniform_int_distribution<std::size_t> filler(cfg.num_classes, cfg.vocab_size - 1);
  std::bernoulli_distribution is_marker(cfg.marker_prob);

  std::set<std::vector<std::size_t>> seen;
  const std::size_t max_attempts = 1000;
  auto draw = [&]() {
    for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
      TokenSequence x;
      x.tokens.resize(length(rng));
      for (auto& tok : x.tokens) tok = is_marker(rng) ? marker(rng) : filler(rng);
      const auto label = majority_marker(x.tokens, cfg.num_classes);
      if (!label || seen.contains(x.tokens)) continue;
      x.label = *label;
      seen.insert(x.tokens);
      return x;
    }
    throw ConfigError("dataset: cannot draw enough distinct labelled sequences");
  };
  auto fill = [&](std::size_t n) {
    std::vector<TokenSequence> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(draw());
    return out;
  };

  SyntheticDataset ds;
  ds.train = fill(cfg.train_size);
  ds.calib = fill(cfg.calib_size);
  ds.eval = fill(cfg.eval_size);
  return ds;
}

}  // namespace headprune
