#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "headprune/grad.hpp"
#include "headprune/model.hpp"
#include "headprune/tensor.hpp"

namespace headprune {

// Held-out examples over which head scores are averaged. The examples are split into
// `batches` contiguous mini-batches; each batch counts as one backward pass in the
// complexity bookkeeping.
struct CalibrationSet {
  std::vector<TokenSequence> examples;
  std::size_t batches = 1;

  // InputError when empty or when batches is 0 or exceeds the example count.
  void validate() const;
  // Contiguous batches whose sizes differ by at most one.
  std::vector<std::span<const TokenSequence>> split() const;
};

// Expected per-head gradient block norms in original L x H coordinates, 0 at pruned heads.
struct GradNormMatrices {
  Matrix g_q;
  Matrix g_k;
  Matrix g_v;
};

enum class ScoreProvenance { gnorm_step, attention_entropy_static };

struct ScoreMatrix {
  Matrix s;  // L x H
  ScoreProvenance provenance = ScoreProvenance::gnorm_step;
};

// For each live head: the l2 norm of each example's Q/K/V gradient block, then the mean
// over examples (norm first, then mean). `batch_passes`, when given, is incremented once
// per calibration batch.
GradNormMatrices compute_gnorm(const EncoderModel& model, const CalibrationSet& calib,
                               const HeadMask& mask, Scalarization s = Scalarization::logit_l2_norm,
                               std::size_t* batch_passes = nullptr);

// Places one value per live head (row-major over the mask) into an L x H matrix with
// zeros at pruned positions. ShapeError when the count does not match the mask.
Matrix expand_gradient(std::span<const double> live_values, const HeadMask& mask);

// Inverse of expand_gradient: the live entries of `full`, row-major.
std::vector<double> restrict_to_live(const Matrix& full, const HeadMask& mask);

// Elementwise product G_Q * G_K * G_V.
ScoreMatrix gnorm_score(const GradNormMatrices& g);

// Natural-log entropies of a probability vector. entropy_A uses 0 log 0 = 0. B and C are
// the eps-rectified forms -sum a log(a + eps) and -sum (a + eps) log(a + eps); they
// require eps > 0 and a_i + eps < 1. All three throw InputError on an invalid vector.
double entropy_A(std::span<const double> a);
double entropy_B(std::span<const double> a, double eps);
double entropy_C(std::span<const double> a, double eps);

enum class EntropyVariant { A, B, C };

EntropyVariant parse_entropy_variant(const std::string& name);

// Default rectification constant.
inline constexpr double kDefaultEpsilon = 1e-6;

// Expected attention entropy of every live head: the mean over examples of the mean
// row entropy of the head's attention matrix. Pruned heads hold 0 and must be excluded
// by mask. Rows are evaluated with the variant's formula as-is (no a_i + eps < 1 check,
// since saturated attention rows are legitimate). `zero_entries`, when given, receives
// the number of attention entries that were exactly 0, the sites where a naive
// a * log(a) evaluation would produce NaN.
ScoreMatrix expected_ae(const EncoderModel& model, const CalibrationSet& calib, double eps,
                        EntropyVariant variant = EntropyVariant::C,
                        std::size_t* zero_entries = nullptr);

enum class Direction { min, max };

struct Selection {
  HeadCoord coord;
  double value = 0.0;
};

// Extreme score among live positions; ties go to the smallest (layer, head).
// StateError when the mask has no live bit.
Selection select_extreme(const ScoreMatrix& scores, const HeadMask& mask, Direction direction);

}  // namespace headprune
