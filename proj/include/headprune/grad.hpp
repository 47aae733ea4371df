#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "headprune/model.hpp"

namespace headprune {

// Scalar function of the model output whose parameter gradients are differentiated.
enum class Scalarization {
  logit_l2_norm,       // ||logits||_2, the default
  cross_entropy_loss,  // -log softmax(logits)[label]
};

Scalarization parse_scalarization(const std::string& name);
std::string to_string(Scalarization s);

// Value of the scalarization for one sequence.
double objective(const EncoderModel& model, const TokenSequence& x, Scalarization s);

struct BackwardResult {
  double value = 0.0;
  Parameters grads;  // same layout as the model's parameters
};

// Exact reverse-mode gradients of the scalarization w.r.t. every live parameter.
// At zero logits the l2-norm gradient is defined as zero. Under tied layers the
// shared blocks receive the sum of every layer's contribution.
BackwardResult backward(const EncoderModel& model, const TokenSequence& x, Scalarization s);

// Number of backward() calls made by this process (instrumentation for complexity counters).
std::uint64_t backward_call_count();

// Gradient blocks of one live head in original coordinates.
struct HeadGrad {
  HeadCoord coord;
  Matrix g_q, g_k, g_v;
};

// One entry per live (layer, head), ordered by layer then head. Under tied layers every
// layer reports the shared block's gradient.
std::vector<HeadGrad> head_grad_blocks(const EncoderModel& model, const Parameters& grads);

// Central difference (F(theta + step e) - F(theta - step e)) / (2 step) for one parameter.
// InputError for step <= 0, LookupError for a coordinate that is not live.
double finite_diff_grad(const EncoderModel& model, const TokenSequence& x, Scalarization s,
                        const ParamCoord& coord, double step);

// Every per-head Q/K/V coordinate of the live model, in layer/head/kind/row/col order.
// Under tied layers only the shared block (layer 0) is listed.
std::vector<ParamCoord> head_param_coords(const EncoderModel& model);

// Plain SGD on cross-entropy.
struct TrainOptions {
  std::size_t epochs = 30;
  double lr = 0.05;
  std::size_t batch = 16;
  std::uint64_t seed = 0;
};

struct TrainResult {
  EncoderModel model;
  std::vector<double> epoch_loss;  // mean per-example loss during each epoch
};

// Deterministic given options.seed. Throws TrainingError naming the epoch on divergence.
TrainResult train(EncoderModel model, std::span<const TokenSequence> dataset, const TrainOptions& opts);

double mean_loss(const EncoderModel& model, std::span<const TokenSequence> dataset);

}  // namespace headprune
