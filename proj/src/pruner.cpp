#include "headprune/pruner.hpp"

#include <algorithm>
#include <random>

#include "headprune/errors.hpp"

namespace headprune {

StrategyKind parse_strategy_kind(const std::string& name) {
  if (name == "gnorm") return StrategyKind::greedy_gnorm;
  if (name == "inverse-gnorm") return StrategyKind::inverse_gnorm;
  if (name == "ae") return StrategyKind::ae_static;
  if (name == "inverse-ae") return StrategyKind::inverse_ae_static;
  if (name == "random") return StrategyKind::random;
  throw ConfigError("unknown strategy '" + name + "'");
}

std::string strategy_name(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::greedy_gnorm: return "gnorm";
    case StrategyKind::inverse_gnorm: return "inverse-gnorm";
    case StrategyKind::ae_static: return "ae";
    case StrategyKind::inverse_ae_static: return "inverse-ae";
    case StrategyKind::random: return "random";
  }
  return "unknown";
}

bool is_gnorm(StrategyKind kind) {
  return kind == StrategyKind::greedy_gnorm || kind == StrategyKind::inverse_gnorm;
}

double evaluate_accuracy(const EncoderModel& model, std::span<const TokenSequence> eval_set) {
  if (eval_set.empty()) throw InputError("evaluate_accuracy: empty eval set");
  std::size_t correct = 0;
  for (const auto& x : eval_set) correct += argmax(forward(model, x)) == x.label ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(eval_set.size());
}

namespace {

// Under tied layers every layer shares one head set, so a head index is the unit of
// pruning and scores are averaged down each column.
Matrix tie_columns(const Matrix& s) {
  Matrix out(s.rows(), s.cols());
  for (std::size_t h = 0; h < s.cols(); ++h) {
    double acc = 0.0;
    for (std::size_t l = 0; l < s.rows(); ++l) acc += s(l, h);
    acc /= static_cast<double>(s.rows());
    for (std::size_t l = 0; l < s.rows(); ++l) out(l, h) = acc;
  }
  return out;
}

std::vector<HeadCoord> candidates(const HeadMask& mask, bool tied) {
  std::vector<HeadCoord> out;
  for (const auto& c : mask.live_coords())
    if (!tied || c.layer == 0) out.push_back(c);
  return out;
}

// Rows other than the first are hidden from selection under tied layers.
HeadMask selection_mask(const HeadMask& mask, bool tied) {
  if (!tied) return mask;
  HeadMask out = mask;
  for (std::size_t l = 1; l < out.layers(); ++l)
    for (std::size_t h = 0; h < out.heads(); ++h) out.set(l, h, false);
  return out;
}

}  // namespace

std::vector<HeadCoord> entropy_ranking(const ScoreMatrix& scores, const HeadMask& mask, bool tied) {
  std::vector<HeadCoord> order = candidates(mask, tied);
  std::stable_sort(order.begin(), order.end(), [&](const HeadCoord& a, const HeadCoord& b) {
    return scores.s(a.layer, a.head) > scores.s(b.layer, b.head);
  });
  return order;
}

PruneTrajectory run_pruning(const EncoderModel& model, const CalibrationSet& calib,
                            std::span<const TokenSequence> eval_set, const Strategy& strategy,
                            std::optional<std::size_t> budget, EncoderModel* final_model) {
  const bool tied = model.config().tied_layers;
  EncoderModel current = model;
  HeadMask mask = current.mask();

  PruneTrajectory traj;
  traj.strategy = strategy;
  traj.total_units = candidates(mask, tied).size();
  const std::size_t steps = budget.value_or(traj.total_units);
  if (steps > traj.total_units) {
    throw InputError("run_pruning: budget " + std::to_string(steps) + " exceeds the " +
                     std::to_string(traj.total_units) + " prunable heads");
  }
  if ((strategy.kind == StrategyKind::ae_static || strategy.kind == StrategyKind::inverse_ae_static) &&
      !(strategy.epsilon > 0.0)) {
    throw InputError("run_pruning: entropy strategies need eps > 0");
  }
  traj.baseline_accuracy = evaluate_accuracy(current, eval_set);
  traj.baseline_params = current.parameter_count();

  std::vector<HeadCoord> static_order;
  std::vector<double> static_scores;
  if (steps > 0 && (strategy.kind == StrategyKind::ae_static ||
                    strategy.kind == StrategyKind::inverse_ae_static)) {
    ScoreMatrix ae = expected_ae(current, calib, strategy.epsilon, strategy.variant);
    if (tied) ae.s = tie_columns(ae.s);
    static_order = entropy_ranking(ae, mask, tied);
    if (strategy.kind == StrategyKind::inverse_ae_static) {
      std::reverse(static_order.begin(), static_order.end());
    }
    for (const auto& c : static_order) static_scores.push_back(ae.s(c.layer, c.head));
  }
  std::mt19937_64 rng(strategy.seed);

  for (std::size_t n = 0; n < steps; ++n) {
    PruneStep step;
    step.step = n;
    try {
      switch (strategy.kind) {
        case StrategyKind::greedy_gnorm:
        case StrategyKind::inverse_gnorm: {
          std::size_t passes = 0;
          const GradNormMatrices g =
              compute_gnorm(current, calib, mask, strategy.scalarization, &passes);
          ScoreMatrix s = gnorm_score(g);
          if (tied) s.s = tie_columns(s.s);
          traj.score_history.push_back(s.s);
          const auto dir =
              strategy.kind == StrategyKind::greedy_gnorm ? Direction::min : Direction::max;
          const Selection sel = select_extreme(s, selection_mask(mask, tied), dir);
          step.pruned = sel.coord;
          step.score = sel.value;
          step.backward_passes = passes;
          break;
        }
        case StrategyKind::ae_static:
        case StrategyKind::inverse_ae_static:
          step.pruned = static_order[n];
          step.score = static_scores[n];
          break;
        case StrategyKind::random: {
          const auto live = candidates(mask, tied);
          std::uniform_int_distribution<std::size_t> pick(0, live.size() - 1);
          step.pruned = live[pick(rng)];
          break;
        }
      }
      if (!mask.live(step.pruned)) {
        throw StateError("selected head (" + std::to_string(step.pruned.layer + 1) + "," +
                         std::to_string(step.pruned.head + 1) + ") is already pruned");
      }
      current.prune_head(step.pruned.layer, step.pruned.head);
      mask = current.mask();
      step.accuracy = evaluate_accuracy(current, eval_set);
      step.params_remaining = current.parameter_count();
    } catch (const NumericalError& e) {
      throw NumericalError("pruning step " + std::to_string(n) + ": " + e.what());
    } catch (const Error& e) {
      throw StateError("pruning step " + std::to_string(n) + ": " + e.what());
    }
    traj.steps.push_back(step);
  }
  traj.final_mask = mask;
  if (final_model != nullptr) *final_model = std::move(current);
  return traj;
}

ComplexityCounters complexity_counters(const PruneTrajectory& trajectory) {
  ComplexityCounters out;
  for (const auto& s : trajectory.steps) {
    out.per_step_passes.push_back(s.backward_passes);
    out.total_backward_passes += s.backward_passes;
  }
  return out;
}

double trajectory_auc(const PruneTrajectory& trajectory) {
  if (trajectory.total_units == 0) return 0.0;
  const double dx = 1.0 / static_cast<double>(trajectory.total_units);
  double area = 0.0;
  double prev = trajectory.baseline_accuracy;
  for (const auto& s : trajectory.steps) {
    area += 0.5 * (prev + s.accuracy) * dx;
    prev = s.accuracy;
  }
  return area;
}

std::optional<std::size_t> find_knee(const PruneTrajectory& trajectory) {
  const auto& steps = trajectory.steps;
  if (steps.size() < 2 || trajectory.total_units == 0) return std::nullopt;
  const double n = static_cast<double>(trajectory.total_units);
  const double x1 = static_cast<double>(steps.size()) / n;
  const double y0 = trajectory.baseline_accuracy;
  const double y1 = steps.back().accuracy;
  std::optional<std::size_t> best;
  double best_gap = 0.0;
  for (std::size_t i = 0; i + 1 < steps.size(); ++i) {
    const double x = static_cast<double>(i + 1) / n;
    const double chord = y0 + (y1 - y0) * (x / x1);
    const double gap = steps[i].accuracy - chord;
    if (!best || gap > best_gap) {
      best = i;
      best_gap = gap;
    }
  }
  return best;
}

}  // namespace headprune
