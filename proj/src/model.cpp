#include "headprune/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "headprune/errors.hpp"

namespace headprune {

void EncoderConfig::validate() const {
  if (num_layers == 0 || heads_per_layer == 0 || model_dim == 0 || head_dim == 0 ||
      vocab_size == 0 || num_classes == 0 || max_seq_len == 0) {
    throw ConfigError("EncoderConfig: every dimension must be >= 1");
  }
  if (head_dim * heads_per_layer != model_dim) {
    throw ConfigError("EncoderConfig: head_dim * heads_per_layer (" +
                      std::to_string(head_dim * heads_per_layer) + ") != model_dim (" +
                      std::to_string(model_dim) + ")");
  }
}

std::string to_string(const ParamCoord& coord) {
  static const char* kNames[] = {"embedding", "w_q", "w_k", "w_v", "w_o", "classifier_weight",
                                 "classifier_bias"};
  std::ostringstream os;
  os << kNames[static_cast<int>(coord.kind)];
  if (coord.kind == ParamKind::w_q || coord.kind == ParamKind::w_k ||
      coord.kind == ParamKind::w_v || coord.kind == ParamKind::w_o) {
    os << "[layer " << coord.layer + 1 << ", head " << coord.head + 1 << "]";
  }
  os << "(" << coord.row << "," << coord.col << ")";
  return os.str();
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

template <typename Fn>
void for_each_matrix_pair(Parameters& a, const Parameters& b, Fn&& fn) {
  if (a.blocks.size() != b.blocks.size()) throw ShapeError("Parameters: block count mismatch");
  fn(a.embedding, b.embedding);
  for (std::size_t l = 0; l < a.blocks.size(); ++l) {
    auto& la = a.blocks[l];
    const auto& lb = b.blocks[l];
    if (la.heads.size() != lb.heads.size()) throw ShapeError("Parameters: head count mismatch");
    for (std::size_t h = 0; h < la.heads.size(); ++h) {
      fn(la.heads[h].w_q, lb.heads[h].w_q);
      fn(la.heads[h].w_k, lb.heads[h].w_k);
      fn(la.heads[h].w_v, lb.heads[h].w_v);
    }
    fn(la.w_o, lb.w_o);
  }
  fn(a.classifier_weight, b.classifier_weight);
  fn(a.classifier_bias, b.classifier_bias);
}

template <typename P, typename Fn>
void for_each_matrix(P& p, Fn&& fn) {
  fn(p.embedding);
  for (auto& block : p.blocks) {
    for (auto& head : block.heads) {
      fn(head.w_q);
      fn(head.w_k);
      fn(head.w_v);
    }
    fn(block.w_o);
  }
  fn(p.classifier_weight);
  fn(p.classifier_bias);
}

std::size_t slot_in(const LayerParams& layer, std::size_t head) {
  auto it = std::lower_bound(layer.head_ids.begin(), layer.head_ids.end(), head);
  if (it == layer.head_ids.end() || *it != head) {
    throw LookupError("head " + std::to_string(head + 1) + " is not present");
  }
  return static_cast<std::size_t>(it - layer.head_ids.begin());
}

double& param_ref(Parameters& p, const ParamCoord& c, bool tied) {
  auto check = [&](const Matrix& m) {
    if (c.row >= m.rows() || c.col >= m.cols()) {
      throw LookupError("parameter coordinate out of range: " + to_string(c));
    }
  };
  auto block_for = [&]() -> LayerParams& {
    const std::size_t idx = tied ? 0 : c.layer;
    if (idx >= p.blocks.size()) throw LookupError("no such layer: " + to_string(c));
    return p.blocks[idx];
  };
  switch (c.kind) {
    case ParamKind::embedding:
      check(p.embedding);
      return p.embedding(c.row, c.col);
    case ParamKind::classifier_weight:
      check(p.classifier_weight);
      return p.classifier_weight(c.row, c.col);
    case ParamKind::classifier_bias:
      check(p.classifier_bias);
      return p.classifier_bias(c.row, c.col);
    default:
      break;
  }
  auto& block = block_for();
  std::size_t slot = 0;
  try {
    slot = slot_in(block, c.head);
  } catch (const LookupError&) {
    throw LookupError("head not present: " + to_string(c));
  }
  auto& head = block.heads[slot];
  switch (c.kind) {
    case ParamKind::w_q:
      check(head.w_q);
      return head.w_q(c.row, c.col);
    case ParamKind::w_k:
      check(head.w_k);
      return head.w_k(c.row, c.col);
    case ParamKind::w_v:
      check(head.w_v);
      return head.w_v(c.row, c.col);
    default: {
      const std::size_t dh = head.w_q.cols();
      if (c.row >= dh || c.col >= block.w_o.cols()) {
        throw LookupError("parameter coordinate out of range: " + to_string(c));
      }
      return block.w_o(slot * dh + c.row, c.col);
    }
  }
}

}  // namespace

Parameters Parameters::zeros_like() const {
  Parameters out = *this;
  for_each_matrix(out, [](Matrix& m) { m = Matrix(m.rows(), m.cols()); });
  return out;
}

void Parameters::add_scaled(const Parameters& other, double alpha) {
  for_each_matrix_pair(*this, other, [alpha](Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("add_scaled: shape mismatch");
    auto dst = a.values();
    auto src = b.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += alpha * src[i];
  });
}

std::size_t Parameters::count() const {
  std::size_t n = 0;
  for_each_matrix(*this, [&n](const Matrix& m) { n += m.size(); });
  return n;
}

bool Parameters::all_finite() const {
  bool ok = true;
  for_each_matrix(*this, [&ok](const Matrix& m) { ok = ok && m.all_finite(); });
  return ok;
}

double& Parameters::at(const ParamCoord& coord, bool tied) { return param_ref(*this, coord, tied); }

double Parameters::at(const ParamCoord& coord, bool tied) const {
  return param_ref(const_cast<Parameters&>(*this), coord, tied);
}

// ---------------------------------------------------------------------------
// HeadMask

HeadMask::HeadMask(std::size_t layers, std::size_t heads, bool value)
    : layers_(layers), heads_(heads), bits_(layers * heads, value ? 1 : 0) {}

std::size_t HeadMask::count_live() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

bool HeadMask::column_zero(std::size_t head) const {
  for (std::size_t l = 0; l < layers_; ++l)
    if (live(l, head)) return false;
  return true;
}

std::vector<HeadCoord> HeadMask::live_coords() const {
  std::vector<HeadCoord> out;
  for (std::size_t l = 0; l < layers_; ++l)
    for (std::size_t h = 0; h < heads_; ++h)
      if (live(l, h)) out.push_back({l, h});
  return out;
}

// ---------------------------------------------------------------------------
// EncoderModel

namespace {

Parameters zero_parameters(const EncoderConfig& cfg) {
  Parameters p;
  p.embedding = Matrix(cfg.vocab_size, cfg.model_dim);
  const std::size_t blocks = cfg.tied_layers ? 1 : cfg.num_layers;
  for (std::size_t l = 0; l < blocks; ++l) {
    LayerParams layer;
    for (std::size_t h = 0; h < cfg.heads_per_layer; ++h) {
      layer.heads.push_back({Matrix(cfg.model_dim, cfg.head_dim), Matrix(cfg.model_dim, cfg.head_dim),
                             Matrix(cfg.model_dim, cfg.head_dim)});
      layer.head_ids.push_back(h);
    }
    layer.w_o = Matrix(cfg.heads_per_layer * cfg.head_dim, cfg.model_dim);
    p.blocks.push_back(std::move(layer));
  }
  p.classifier_weight = Matrix(cfg.model_dim, cfg.num_classes);
  p.classifier_bias = Matrix(1, cfg.num_classes);
  return p;
}

}  // namespace

EncoderModel::EncoderModel(EncoderConfig config) : config_(config) {
  config_.validate();
  params_ = zero_parameters(config_);
}

EncoderModel::EncoderModel(EncoderConfig config, Parameters params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  check_invariants();
}

EncoderModel EncoderModel::initialize(const EncoderConfig& config, std::uint64_t seed) {
  EncoderModel model(config);
  std::mt19937_64 rng(seed);
  auto fill = [&rng](Matrix& m, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : m.values()) v = dist(rng);
  };
  const double proj_scale = 1.0 / std::sqrt(static_cast<double>(config.model_dim));
  auto& p = model.params_;
  fill(p.embedding, 1.0);
  for (auto& block : p.blocks) {
    for (auto& head : block.heads) {
      fill(head.w_q, proj_scale);
      fill(head.w_k, proj_scale);
      fill(head.w_v, proj_scale);
    }
    fill(block.w_o, proj_scale);
  }
  fill(p.classifier_weight, proj_scale);
  return model;
}

const LayerParams& EncoderModel::layer(std::size_t layer) const {
  if (layer >= config_.num_layers) throw LookupError("no layer " + std::to_string(layer + 1));
  return params_.blocks[config_.tied_layers ? 0 : layer];
}

LayerParams& EncoderModel::layer(std::size_t layer) {
  if (layer >= config_.num_layers) throw LookupError("no layer " + std::to_string(layer + 1));
  return params_.blocks[config_.tied_layers ? 0 : layer];
}

bool EncoderModel::has_head(std::size_t layer_index, std::size_t head) const {
  const auto& ids = layer(layer_index).head_ids;
  return std::binary_search(ids.begin(), ids.end(), head);
}

std::size_t EncoderModel::slot_of(std::size_t layer_index, std::size_t head) const {
  try {
    return slot_in(layer(layer_index), head);
  } catch (const LookupError&) {
    throw LookupError("head (" + std::to_string(layer_index + 1) + "," + std::to_string(head + 1) +
                      ") is not present");
  }
}

HeadMask EncoderModel::mask() const {
  HeadMask m = HeadMask::zeros(config_.num_layers, config_.heads_per_layer);
  for (std::size_t l = 0; l < config_.num_layers; ++l)
    for (std::size_t h : layer(l).head_ids) m.set(l, h, true);
  return m;
}

void EncoderModel::prune_head(std::size_t layer_index, std::size_t head) {
  if (layer_index >= config_.num_layers || head >= config_.heads_per_layer) {
    throw LookupError("prune_head: coordinate out of range");
  }
  if (!has_head(layer_index, head)) {
    throw StateError("prune_head: head (" + std::to_string(layer_index + 1) + "," +
                     std::to_string(head + 1) + ") is already pruned");
  }
  auto& block = layer(layer_index);
  const std::size_t slot = slot_in(block, head);
  block.heads.erase(block.heads.begin() + static_cast<std::ptrdiff_t>(slot));
  block.head_ids.erase(block.head_ids.begin() + static_cast<std::ptrdiff_t>(slot));
  block.w_o = erase_rows(block.w_o, slot * config_.head_dim, config_.head_dim);
}

void EncoderModel::check_invariants() const {
  const auto& cfg = config_;
  auto fail = [](const std::string& what) { throw StateError("EncoderModel: " + what); };
  const std::size_t expected_blocks = cfg.tied_layers ? 1 : cfg.num_layers;
  if (params_.blocks.size() != expected_blocks) fail("wrong number of layer parameter sets");
  if (params_.embedding.rows() != cfg.vocab_size || params_.embedding.cols() != cfg.model_dim)
    fail("embedding shape");
  if (params_.classifier_weight.rows() != cfg.model_dim ||
      params_.classifier_weight.cols() != cfg.num_classes)
    fail("classifier weight shape");
  if (params_.classifier_bias.rows() != 1 || params_.classifier_bias.cols() != cfg.num_classes)
    fail("classifier bias shape");
  for (const auto& block : params_.blocks) {
    if (block.heads.size() != block.head_ids.size()) fail("head_ids size != head count");
    for (std::size_t i = 0; i < block.head_ids.size(); ++i) {
      if (block.head_ids[i] >= cfg.heads_per_layer) fail("head id out of range");
      if (i > 0 && block.head_ids[i] <= block.head_ids[i - 1]) fail("head ids not increasing");
    }
    for (const auto& head : block.heads) {
      for (const Matrix* m : {&head.w_q, &head.w_k, &head.w_v}) {
        if (m->rows() != cfg.model_dim || m->cols() != cfg.head_dim) fail("head block shape");
      }
    }
    if (block.w_o.rows() != block.heads.size() * cfg.head_dim || block.w_o.cols() != cfg.model_dim)
      fail("w_o shape does not match live heads");
  }
}

EncoderModel prune_head(EncoderModel model, std::size_t layer, std::size_t head) {
  model.prune_head(layer, head);
  return model;
}

// ---------------------------------------------------------------------------
// Forward evaluation

Matrix embed(const EncoderModel& model, const TokenSequence& x) {
  const auto& cfg = model.config();
  if (x.tokens.empty()) throw InputError("embed: empty token sequence");
  if (x.tokens.size() > cfg.max_seq_len) {
    throw InputError("embed: sequence length " + std::to_string(x.tokens.size()) +
                     " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  }
  Matrix out(x.tokens.size(), cfg.model_dim);
  const auto& table = model.params().embedding;
  for (std::size_t i = 0; i < x.tokens.size(); ++i) {
    const std::size_t tok = x.tokens[i];
    if (tok >= cfg.vocab_size) {
      throw InputError("embed: token " + std::to_string(tok) + " at position " + std::to_string(i) +
                       " is outside the vocabulary of size " + std::to_string(cfg.vocab_size));
    }
    std::copy(table.row(tok).begin(), table.row(tok).end(), out.row(i).begin());
  }
  return out;
}

namespace {

HeadTrace run_head(const HeadBlock& block, const Matrix& x, std::size_t head_dim) {
  HeadTrace t;
  t.q = matmul(x, block.w_q);
  t.k = matmul(x, block.w_k);
  t.v = matmul(x, block.w_v);
  Matrix scores = matmul_nt(t.q, t.k);
  scores *= 1.0 / std::sqrt(static_cast<double>(head_dim));
  t.attention = softmax_rows(scores);
  t.output = matmul(t.attention, t.v);
  return t;
}

}  // namespace

AttentionOutput head_attention(const EncoderModel& model, std::size_t layer, std::size_t head,
                               const Matrix& x) {
  const auto& cfg = model.config();
  if (x.cols() != cfg.model_dim) throw ShapeError("head_attention: input width != model_dim");
  const std::size_t slot = model.slot_of(layer, head);
  HeadTrace t = run_head(model.layer(layer).heads[slot], x, cfg.head_dim);
  return {std::move(t.attention), std::move(t.output)};
}

ForwardTrace forward_trace(const EncoderModel& model, const TokenSequence& x, const HeadMask* gate) {
  const auto& cfg = model.config();
  ForwardTrace trace;
  Matrix hidden = embed(model, x);
  const std::size_t t = hidden.rows();
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const auto& block = model.layer(l);
    LayerTrace lt;
    lt.input = hidden;
    std::vector<Matrix> outputs;
    outputs.reserve(block.heads.size());
    for (std::size_t slot = 0; slot < block.heads.size(); ++slot) {
      HeadTrace ht = run_head(block.heads[slot], hidden, cfg.head_dim);
      if (!ht.attention.all_finite() || !ht.output.all_finite()) {
        throw NumericalError("non-finite attention in layer " + std::to_string(l + 1) + ", head " +
                             std::to_string(block.head_ids[slot] + 1));
      }
      const bool gated_off = gate != nullptr && !gate->live(l, block.head_ids[slot]);
      outputs.push_back(gated_off ? Matrix(t, cfg.head_dim) : ht.output);
      lt.heads.push_back(std::move(ht));
    }
    lt.concat = hconcat(outputs, t);
    hidden += matmul(lt.concat, block.w_o);
    trace.layers.push_back(std::move(lt));
  }
  trace.final_hidden = hidden;
  trace.pooled = Matrix(1, cfg.model_dim);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < cfg.model_dim; ++j) trace.pooled(0, j) += hidden(i, j);
  trace.pooled *= 1.0 / static_cast<double>(t);
  Matrix logits = matmul(trace.pooled, model.params().classifier_weight);
  logits += model.params().classifier_bias;
  if (!logits.all_finite()) throw NumericalError("non-finite logits");
  trace.logits.assign(logits.values().begin(), logits.values().end());
  return trace;
}

std::vector<double> forward(const EncoderModel& model, const TokenSequence& x) {
  return forward_trace(model, x).logits;
}

std::vector<double> forward_gated(const EncoderModel& model, const TokenSequence& x,
                                  const HeadMask& gate) {
  if (gate.layers() != model.config().num_layers || gate.heads() != model.config().heads_per_layer) {
    throw ShapeError("forward_gated: gate shape does not match model");
  }
  return forward_trace(model, x, &gate).logits;
}

std::size_t argmax(const std::vector<double>& logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return best;
}

}  // namespace headprune
