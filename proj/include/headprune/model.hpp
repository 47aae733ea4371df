#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "headprune/tensor.hpp"

namespace headprune {

// Shape of a toy transformer encoder classifier. head_dim * heads_per_layer must
// equal model_dim.
struct EncoderConfig {
  std::size_t num_layers = 2;
  std::size_t heads_per_layer = 4;
  std::size_t model_dim = 32;
  std::size_t head_dim = 8;
  std::size_t vocab_size = 24;
  std::size_t num_classes = 3;
  // ALBERT-style sharing: every layer reuses one parameter set.
  bool tied_layers = false;
  std::size_t max_seq_len = 16;

  // Throws ConfigError when a dimension is zero or head_dim * H != model_dim.
  void validate() const;
  std::size_t total_heads() const { return num_layers * heads_per_layer; }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

// Original (pre-pruning) coordinates of a head, 0-based internally. Files and
// reports print them 1-based.
struct HeadCoord {
  std::size_t layer = 0;
  std::size_t head = 0;
  friend bool operator==(const HeadCoord&, const HeadCoord&) = default;
  friend auto operator<=>(const HeadCoord&, const HeadCoord&) = default;
};

struct HeadBlock {
  Matrix w_q;  // d_M x d_h
  Matrix w_k;
  Matrix w_v;
  friend bool operator==(const HeadBlock&, const HeadBlock&) = default;
};

// One layer's attention parameters in compacted form. heads[i] is the original
// head head_ids[i]; rows [i*d_h, (i+1)*d_h) of w_o belong to it.
struct LayerParams {
  std::vector<HeadBlock> heads;
  Matrix w_o;  // (H' * d_h) x d_M
  std::vector<std::size_t> head_ids;
  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

enum class ParamKind { embedding, w_q, w_k, w_v, w_o, classifier_weight, classifier_bias };

// Addresses one scalar parameter. For per-head kinds (w_q, w_k, w_v, w_o) `head`
// is the original head index and (row, col) index into that head's block; for w_o
// the block is the head's d_h rows. Other kinds ignore layer/head.
struct ParamCoord {
  ParamKind kind = ParamKind::embedding;
  std::size_t layer = 0;
  std::size_t head = 0;
  std::size_t row = 0;
  std::size_t col = 0;
};

std::string to_string(const ParamCoord& coord);

// Full trainable state. Gradients reuse the same layout.
struct Parameters {
  Matrix embedding;                // V x d_M
  std::vector<LayerParams> blocks; // L entries, or 1 entry when layers are tied
  Matrix classifier_weight;        // d_M x C
  Matrix classifier_bias;          // 1 x C

  // Same structure, all zeros.
  Parameters zeros_like() const;
  // this += alpha * other; structures must match.
  void add_scaled(const Parameters& other, double alpha);
  std::size_t count() const;
  bool all_finite() const;

  // Throws LookupError when the coordinate does not address a live parameter.
  double& at(const ParamCoord& coord, bool tied);
  double at(const ParamCoord& coord, bool tied) const;

  friend bool operator==(const Parameters&, const Parameters&) = default;
};

// L x H keep/prune matrix over original coordinates (1 = keep).
class HeadMask {
 public:
  HeadMask() = default;
  HeadMask(std::size_t layers, std::size_t heads, bool value);

  static HeadMask ones(std::size_t layers, std::size_t heads) { return {layers, heads, true}; }
  static HeadMask zeros(std::size_t layers, std::size_t heads) { return {layers, heads, false}; }

  std::size_t layers() const { return layers_; }
  std::size_t heads() const { return heads_; }
  bool live(std::size_t layer, std::size_t head) const { return bits_[layer * heads_ + head] != 0; }
  bool live(HeadCoord c) const { return live(c.layer, c.head); }
  void set(std::size_t layer, std::size_t head, bool value) {
    bits_[layer * heads_ + head] = value ? 1 : 0;
  }
  std::size_t count_live() const;
  bool all_zero() const { return count_live() == 0; }
  bool column_zero(std::size_t head) const;
  std::vector<HeadCoord> live_coords() const;

  friend bool operator==(const HeadMask&, const HeadMask&) = default;

 private:
  std::size_t layers_ = 0;
  std::size_t heads_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct TokenSequence {
  std::vector<std::size_t> tokens;  // vocabulary indices in [0, V)
  std::size_t label = 0;
  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

class EncoderModel {
 public:
  // All-zero parameters with every head present.
  explicit EncoderModel(EncoderConfig config);
  EncoderModel(EncoderConfig config, Parameters params);

  // Gaussian initialization, deterministic given seed.
  static EncoderModel initialize(const EncoderConfig& config, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }
  const Parameters& params() const { return params_; }
  Parameters& params() { return params_; }

  // Parameter set used by layer `layer` (the shared set when tied).
  const LayerParams& layer(std::size_t layer) const;
  LayerParams& layer(std::size_t layer);

  bool has_head(std::size_t layer, std::size_t head) const;
  // Position of an original head inside the compacted layer; LookupError if absent.
  std::size_t slot_of(std::size_t layer, std::size_t head) const;

  HeadMask mask() const;
  std::size_t parameter_count() const { return params_.count(); }
  // Parameters removed by pruning one head: Q, K, V blocks plus its W_O rows.
  std::size_t params_per_head() const { return 4 * config_.model_dim * config_.head_dim; }

  // Removes the head's Q/K/V blocks and W_O rows. Under tied layers the shared set
  // loses the head, so the head index disappears from every layer at once.
  // Throws StateError if the head is already gone.
  void prune_head(std::size_t layer, std::size_t head);

  // Throws StateError on any broken invariant (shapes, head_ids order, tied sharing).
  void check_invariants() const;

 private:
  EncoderConfig config_;
  Parameters params_;
};

// Functional form of EncoderModel::prune_head.
EncoderModel prune_head(EncoderModel model, std::size_t layer, std::size_t head);

struct AttentionOutput {
  Matrix attention;  // t x t, rows sum to 1
  Matrix output;     // t x d_h
};

// Intermediate values of one forward pass, kept for reverse-mode differentiation.
struct HeadTrace {
  Matrix q, k, v;
  Matrix attention;
  Matrix output;
};

struct LayerTrace {
  Matrix input;              // t x d_M
  std::vector<HeadTrace> heads;
  Matrix concat;             // t x (H' d_h), gated heads contribute zeros
};

struct ForwardTrace {
  std::vector<LayerTrace> layers;
  Matrix final_hidden;  // t x d_M
  Matrix pooled;        // 1 x d_M
  std::vector<double> logits;
};

// t x d_M matrix of embedding rows; InputError naming the position of a bad token.
Matrix embed(const EncoderModel& model, const TokenSequence& x);

// Attention matrix and output of one live head for layer input X.
AttentionOutput head_attention(const EncoderModel& model, std::size_t layer, std::size_t head,
                               const Matrix& x);

// Logits for one sequence. Every layer adds Concat(Z) W_O to its input, then rows
// are mean-pooled and fed to the linear classifier.
std::vector<double> forward(const EncoderModel& model, const TokenSequence& x);

// As forward, but heads whose gate bit is 0 have their output forced to zero.
std::vector<double> forward_gated(const EncoderModel& model, const TokenSequence& x,
                                  const HeadMask& gate);

ForwardTrace forward_trace(const EncoderModel& model, const TokenSequence& x,
                           const HeadMask* gate = nullptr);

// Index of the largest logit; ties go to the smallest class index.
std::size_t argmax(const std::vector<double>& logits);

}  // namespace headprune
