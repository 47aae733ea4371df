#include "headprune/scoring.hpp"

#include <cmath>

#include "headprune/errors.hpp"

namespace headprune {

void CalibrationSet::validate() const {
  if (examples.empty()) throw InputError("calibration set is empty");
  if (batches == 0 || batches > examples.size()) {
    throw InputError("calibration set: batches must be in [1, " + std::to_string(examples.size()) +
                     "], got " + std::to_string(batches));
  }
}

std::vector<std::span<const TokenSequence>> CalibrationSet::split() const {
  validate();
  std::vector<std::span<const TokenSequence>> out;
  const std::size_t base = examples.size() / batches;
  const std::size_t extra = examples.size() % batches;
  std::size_t offset = 0;
  for (std::size_t b = 0; b < batches; ++b) {
    const std::size_t n = base + (b < extra ? 1 : 0);
    out.emplace_back(examples.data() + offset, n);
    offset += n;
  }
  return out;
}

GradNormMatrices compute_gnorm(const EncoderModel& model, const CalibrationSet& calib,
                               const HeadMask& mask, Scalarization s, std::size_t* batch_passes) {
  calib.validate();
  if (!(mask == model.mask())) {
    throw StateError("compute_gnorm: mask is inconsistent with the model's surviving heads");
  }
  const std::size_t live = mask.count_live();
  std::vector<double> sum_q(live, 0.0), sum_k(live, 0.0), sum_v(live, 0.0);

  for (auto batch : calib.split()) {
    for (const auto& x : batch) {
      const BackwardResult r = backward(model, x, s);
      const auto blocks = head_grad_blocks(model, r.grads);
      for (std::size_t i = 0; i < blocks.size(); ++i) {
        sum_q[i] += l2_norm(blocks[i].g_q);
        sum_k[i] += l2_norm(blocks[i].g_k);
        sum_v[i] += l2_norm(blocks[i].g_v);
      }
    }
    if (batch_passes != nullptr) ++*batch_passes;
  }

  const double inv_n = 1.0 / static_cast<double>(calib.examples.size());
  for (std::size_t i = 0; i < live; ++i) {
    sum_q[i] *= inv_n;
    sum_k[i] *= inv_n;
    sum_v[i] *= inv_n;
  }
  return {expand_gradient(sum_q, mask), expand_gradient(sum_k, mask), expand_gradient(sum_v, mask)};
}

Matrix expand_gradient(std::span<const double> live_values, const HeadMask& mask) {
  if (live_values.size() != mask.count_live()) {
    throw ShapeError("expand_gradient: " + std::to_string(live_values.size()) + " values for " +
                     std::to_string(mask.count_live()) + " live heads");
  }
  Matrix out(mask.layers(), mask.heads());
  std::size_t next = 0;
  for (std::size_t l = 0; l < mask.layers(); ++l)
    for (std::size_t h = 0; h < mask.heads(); ++h)
      if (mask.live(l, h)) out(l, h) = live_values[next++];
  return out;
}

std::vector<double> restrict_to_live(const Matrix& full, const HeadMask& mask) {
  if (full.rows() != mask.layers() || full.cols() != mask.heads()) {
    throw ShapeError("restrict_to_live: matrix shape does not match mask");
  }
  std::vector<double> out;
  for (std::size_t l = 0; l < mask.layers(); ++l)
    for (std::size_t h = 0; h < mask.heads(); ++h)
      if (mask.live(l, h)) out.push_back(full(l, h));
  return out;
}

ScoreMatrix gnorm_score(const GradNormMatrices& g) {
  return {hadamard3(g.g_q, g.g_k, g.g_v), ScoreProvenance::gnorm_step};
}

// ---------------------------------------------------------------------------
// Entropies

namespace {

void require_probability_vector(std::span<const double> a) {
  if (a.empty()) throw InputError("entropy: empty probability vector");
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i]) || a[i] < 0.0) {
      throw InputError("entropy: entry " + std::to_string(i) + " is not a probability");
    }
    total += a[i];
  }
  if (std::abs(total - 1.0) > 1e-9) throw InputError("entropy: entries do not sum to 1");
}

void require_epsilon(std::span<const double> a, double eps) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw InputError("entropy: eps must be > 0");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a[i] + eps < 1.0)) {
      throw InputError("entropy: a[" + std::to_string(i) + "] + eps >= 1");
    }
  }
}

double raw_entropy_A(std::span<const double> a) {
  double acc = 0.0;
  for (double v : a)
    if (v > 0.0) acc -= v * std::log(v);
  return acc;
}

double raw_entropy_B(std::span<const double> a, double eps) {
  double acc = 0.0;
  for (double v : a) acc -= v * std::log(v + eps);
  return acc;
}

double raw_entropy_C(std::span<const double> a, double eps) {
  double acc = 0.0;
  for (double v : a) acc -= (v + eps) * std::log(v + eps);
  return acc;
}

}  // namespace

double entropy_A(std::span<const double> a) {
  require_probability_vector(a);
  return raw_entropy_A(a);
}

double entropy_B(std::span<const double> a, double eps) {
  require_probability_vector(a);
  require_epsilon(a, eps);
  return raw_entropy_B(a, eps);
}

double entropy_C(std::span<const double> a, double eps) {
  require_probability_vector(a);
  require_epsilon(a, eps);
  return raw_entropy_C(a, eps);
}

EntropyVariant parse_entropy_variant(const std::string& name) {
  if (name == "A") return EntropyVariant::A;
  if (name == "B") return EntropyVariant::B;
  if (name == "C") return EntropyVariant::C;
  throw ConfigError("unknown entropy variant '" + name + "'");
}

ScoreMatrix expected_ae(const EncoderModel& model, const CalibrationSet& calib, double eps,
                        EntropyVariant variant, std::size_t* zero_entries) {
  calib.validate();
  if (variant != EntropyVariant::A && (!(eps > 0.0) || !std::isfinite(eps))) {
    throw InputError("expected_ae: eps must be > 0");
  }
  const auto& cfg = model.config();
  Matrix sum(cfg.num_layers, cfg.heads_per_layer);
  std::size_t zeros = 0;
  for (const auto& x : calib.examples) {
    const ForwardTrace trace = forward_trace(model, x);
    const double inv_t = 1.0 / static_cast<double>(x.tokens.size());
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
      const auto& block = model.layer(l);
      for (std::size_t slot = 0; slot < block.heads.size(); ++slot) {
        const Matrix& att = trace.layers[l].heads[slot].attention;
        double rows = 0.0;
        for (std::size_t i = 0; i < att.rows(); ++i) {
          auto row = att.row(i);
          for (double v : row) zeros += v == 0.0 ? 1 : 0;
          switch (variant) {
            case EntropyVariant::A: rows += raw_entropy_A(row); break;
            case EntropyVariant::B: rows += raw_entropy_B(row, eps); break;
            case EntropyVariant::C: rows += raw_entropy_C(row, eps); break;
          }
        }
        sum(l, block.head_ids[slot]) += rows * inv_t;
      }
    }
  }
  sum *= 1.0 / static_cast<double>(calib.examples.size());
  if (!sum.all_finite()) throw NumericalError("expected_ae: non-finite entropy");
  if (zero_entries != nullptr) *zero_entries = zeros;
  return {std::move(sum), ScoreProvenance::attention_entropy_static};
}

Selection select_extreme(const ScoreMatrix& scores, const HeadMask& mask, Direction direction) {
  if (scores.s.rows() != mask.layers() || scores.s.cols() != mask.heads()) {
    throw ShapeError("select_extreme: score matrix shape does not match mask");
  }
  bool found = false;
  Selection best;
  for (std::size_t l = 0; l < mask.layers(); ++l) {
    for (std::size_t h = 0; h < mask.heads(); ++h) {
      if (!mask.live(l, h)) continue;
      const double v = scores.s(l, h);
      const bool better = direction == Direction::min ? v < best.value : v > best.value;
      if (!found || better) {
        best = {{l, h}, v};
        found = true;
      }
    }
  }
  if (!found) throw StateError("select_extreme: no live head to select");
  return best;
}

}  // namespace headprune
