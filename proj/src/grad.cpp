#include "headprune/grad.hpp"

#include <atomic>
#include <cmath>

#include "headprune/errors.hpp"

namespace headprune {

namespace {

std::atomic<std::uint64_t> g_backward_calls{0};

// Returns the scalar and writes dF/dlogits into `grad`.
double scalarize(const std::vector<double>& logits, const TokenSequence& x, Scalarization s,
                 std::vector<double>& grad) {
  grad.assign(logits.size(), 0.0);
  if (s == Scalarization::logit_l2_norm) {
    double sq = 0.0;
    for (double v : logits) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm == 0.0) return 0.0;  // subgradient 0 at the kink
    for (std::size_t i = 0; i < logits.size(); ++i) grad[i] = logits[i] / norm;
    return norm;
  }
  if (x.label >= logits.size()) {
    throw InputError("cross-entropy: label " + std::to_string(x.label) + " outside " +
                     std::to_string(logits.size()) + " classes");
  }
  double peak = logits[0];
  for (double v : logits) peak = std::max(peak, v);
  double total = 0.0;
  for (double v : logits) total += std::exp(v - peak);
  const double log_sum = peak + std::log(total);
  for (std::size_t i = 0; i < logits.size(); ++i) grad[i] = std::exp(logits[i] - log_sum);
  grad[x.label] -= 1.0;
  return log_sum - logits[x.label];
}

void require_finite(const Matrix& m, std::size_t layer, std::size_t head, const char* what) {
  if (!m.all_finite()) {
    throw NumericalError(std::string("backward: non-finite ") + what + " in layer " +
                         std::to_string(layer + 1) + ", head " + std::to_string(head + 1));
  }
}

}  // namespace

Scalarization parse_scalarization(const std::string& name) {
  if (name == "logit_l2_norm") return Scalarization::logit_l2_norm;
  if (name == "cross_entropy_loss") return Scalarization::cross_entropy_loss;
  throw ConfigError("unknown scalarization '" + name + "'");
}

std::string to_string(Scalarization s) {
  return s == Scalarization::logit_l2_norm ? "logit_l2_norm" : "cross_entropy_loss";
}

double objective(const EncoderModel& model, const TokenSequence& x, Scalarization s) {
  std::vector<double> unused;
  return scalarize(forward(model, x), x, s, unused);
}

std::uint64_t backward_call_count() { return g_backward_calls.load(); }

BackwardResult backward(const EncoderModel& model, const TokenSequence& x, Scalarization s) {
  g_backward_calls.fetch_add(1);
  const auto& cfg = model.config();
  const ForwardTrace trace = forward_trace(model, x);
  const std::size_t t = x.tokens.size();
  const std::size_t dh = cfg.head_dim;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  BackwardResult result;
  std::vector<double> dlogits;
  result.value = scalarize(trace.logits, x, s, dlogits);
  result.grads = model.params().zeros_like();
  auto& grads = result.grads;
  const auto& params = model.params();

  // Classifier and mean pooling.
  Matrix dpooled(1, cfg.model_dim);
  for (std::size_t j = 0; j < cfg.model_dim; ++j) {
    double acc = 0.0;
    for (std::size_t c = 0; c < cfg.num_classes; ++c) {
      grads.classifier_weight(j, c) = trace.pooled(0, j) * dlogits[c];
      acc += params.classifier_weight(j, c) * dlogits[c];
    }
    dpooled(0, j) = acc;
  }
  for (std::size_t c = 0; c < cfg.num_classes; ++c) grads.classifier_bias(0, c) = dlogits[c];

  Matrix dhidden(t, cfg.model_dim);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < cfg.model_dim; ++j)
      dhidden(i, j) = dpooled(0, j) / static_cast<double>(t);

  for (std::size_t l = cfg.num_layers; l-- > 0;) {
    const auto& block = model.layer(l);
    auto& gblock = grads.blocks[cfg.tied_layers ? 0 : l];
    const auto& lt = trace.layers[l];

    // hidden_out = hidden_in + concat * W_O
    gblock.w_o += matmul_tn(lt.concat, dhidden);
    const Matrix dconcat = matmul_nt(dhidden, block.w_o);
    Matrix dinput = dhidden;

    for (std::size_t slot = 0; slot < block.heads.size(); ++slot) {
      const std::size_t head_id = block.head_ids[slot];
      const auto& ht = lt.heads[slot];
      const auto& w = block.heads[slot];
      const Matrix dz = column_block(dconcat, slot * dh, dh);

      // Z = A V
      const Matrix da = matmul_nt(dz, ht.v);
      const Matrix dv = matmul_tn(ht.attention, dz);

      // A = softmax_rows(S / sqrt(d_h))
      Matrix dscores(t, t);
      for (std::size_t i = 0; i < t; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < t; ++j) dot += ht.attention(i, j) * da(i, j);
        for (std::size_t j = 0; j < t; ++j)
          dscores(i, j) = ht.attention(i, j) * (da(i, j) - dot) * inv_sqrt_dh;
      }

      // S = Q K^T
      const Matrix dq = matmul(dscores, ht.k);
      const Matrix dk = matmul_tn(dscores, ht.q);

      auto& g = gblock.heads[slot];
      g.w_q += matmul_tn(lt.input, dq);
      g.w_k += matmul_tn(lt.input, dk);
      g.w_v += matmul_tn(lt.input, dv);
      require_finite(g.w_q, l, head_id, "query gradient");
      require_finite(g.w_k, l, head_id, "key gradient");
      require_finite(g.w_v, l, head_id, "value gradient");

      dinput += matmul_nt(dq, w.w_q);
      dinput += matmul_nt(dk, w.w_k);
      dinput += matmul_nt(dv, w.w_v);
    }
    dhidden = std::move(dinput);
  }

  for (std::size_t i = 0; i < t; ++i) {
    auto dst = grads.embedding.row(x.tokens[i]);
    auto src = dhidden.row(i);
    for (std::size_t j = 0; j < cfg.model_dim; ++j) dst[j] += src[j];
  }
  if (!grads.all_finite()) throw NumericalError("backward: non-finite gradient");
  return result;
}

std::vector<HeadGrad> head_grad_blocks(const EncoderModel& model, const Parameters& grads) {
  const auto& cfg = model.config();
  std::vector<HeadGrad> out;
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const auto& block = model.layer(l);
    const auto& gblock = grads.blocks.at(cfg.tied_layers ? 0 : l);
    if (gblock.heads.size() != block.heads.size()) {
      throw ShapeError("head_grad_blocks: gradients do not mirror live heads");
    }
    for (std::size_t slot = 0; slot < block.heads.size(); ++slot) {
      const auto& g = gblock.heads[slot];
      out.push_back({{l, block.head_ids[slot]}, g.w_q, g.w_k, g.w_v});
    }
  }
  return out;
}

double finite_diff_grad(const EncoderModel& model, const TokenSequence& x, Scalarization s,
                        const ParamCoord& coord, double step) {
  if (!(step > 0.0)) throw InputError("finite_diff_grad: step must be > 0");
  EncoderModel probe = model;
  const bool tied = model.config().tied_layers;
  double& theta = probe.params().at(coord, tied);
  const double original = theta;
  theta = original + step;
  const double plus = objective(probe, x, s);
  theta = original - step;
  const double minus = objective(probe, x, s);
  return (plus - minus) / (2.0 * step);
}

std::vector<ParamCoord> head_param_coords(const EncoderModel& model) {
  const auto& cfg = model.config();
  std::vector<ParamCoord> out;
  const std::size_t blocks = cfg.tied_layers ? 1 : cfg.num_layers;
  for (std::size_t l = 0; l < blocks; ++l) {
    for (std::size_t head : model.layer(l).head_ids) {
      for (ParamKind kind : {ParamKind::w_q, ParamKind::w_k, ParamKind::w_v}) {
        for (std::size_t r = 0; r < cfg.model_dim; ++r)
          for (std::size_t c = 0; c < cfg.head_dim; ++c) out.push_back({kind, l, head, r, c});
      }
    }
  }
  return out;
}

}  // namespace headprune
