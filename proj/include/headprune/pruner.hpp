#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "headprune/grad.hpp"
#include "headprune/model.hpp"
#include "headprune/scoring.hpp"

namespace headprune {

enum class StrategyKind { greedy_gnorm, inverse_gnorm, ae_static, inverse_ae_static, random };

struct Strategy {
  StrategyKind kind = StrategyKind::greedy_gnorm;
  double epsilon = kDefaultEpsilon;                          // entropy strategies
  EntropyVariant variant = EntropyVariant::C;                // entropy strategies
  Scalarization scalarization = Scalarization::logit_l2_norm;  // gnorm strategies
  std::uint64_t seed = 0;                                    // random strategy
};

// CLI names: gnorm, inverse-gnorm, ae, inverse-ae, random.
StrategyKind parse_strategy_kind(const std::string& name);
std::string strategy_name(StrategyKind kind);
bool is_gnorm(StrategyKind kind);

struct PruneStep {
  std::size_t step = 0;  // 0-based
  HeadCoord pruned;      // original coordinates
  double score = 0.0;    // score of the pruned head when selected (0 for random)
  double accuracy = 0.0;
  std::size_t params_remaining = 0;
  std::size_t backward_passes = 0;
};

struct PruneTrajectory {
  Strategy strategy;
  double baseline_accuracy = 0.0;
  std::size_t baseline_params = 0;
  // Prunable units when the run started: live heads, or live head columns when tied.
  std::size_t total_units = 0;
  std::vector<PruneStep> steps;
  HeadMask final_mask;
  // Score matrix consumed at each greedy step (gnorm strategies only).
  std::vector<Matrix> score_history;
};

// Fraction of eval examples whose argmax logit equals the label (ties -> smallest class).
double evaluate_accuracy(const EncoderModel& model, std::span<const TokenSequence> eval_set);

// Runs the prune-recompute loop until `budget` prunes (default: every unit) are done.
// Gnorm strategies rescore the current model every step; entropy strategies rank once on
// the starting model; random draws uniformly among live units. Under tied layers each
// step removes one head index from every layer. After each prune, accuracy is measured
// on eval_set. InputError when budget exceeds the prunable units; a failing step aborts
// the run with an error naming the step. `final_model`, when given, receives the
// pruned model.
PruneTrajectory run_pruning(const EncoderModel& model, const CalibrationSet& calib,
                            std::span<const TokenSequence> eval_set, const Strategy& strategy,
                            std::optional<std::size_t> budget = std::nullopt,
                            EncoderModel* final_model = nullptr);

// Static entropy ranking used by ae_static (highest entropy first); inverse_ae_static
// consumes the exact reverse.
std::vector<HeadCoord> entropy_ranking(const ScoreMatrix& scores, const HeadMask& mask, bool tied);

struct ComplexityCounters {
  std::size_t total_backward_passes = 0;
  std::vector<std::size_t> per_step_passes;
};

ComplexityCounters complexity_counters(const PruneTrajectory& trajectory);

// Trapezoid area under accuracy vs. fraction-of-units-pruned, starting at (0, baseline).
double trajectory_auc(const PruneTrajectory& trajectory);

// Step index of the knee: the point with the largest height above the chord joining the
// baseline and the last point. nullopt for fewer than two steps.
std::optional<std::size_t> find_knee(const PruneTrajectory& trajectory);

}  // namespace headprune
