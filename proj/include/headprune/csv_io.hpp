#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "headprune/pruner.hpp"
#include "headprune/tensor.hpp"

namespace headprune {

// One trajectory file. The first line is a `#` comment carrying the run metadata
// (strategy, seed, baseline accuracy, prunable units); then the header
// `step,layer,head,score,accuracy,params_remaining,backward_passes` and one row per step
// with 1-based layer/head.
struct TrajectoryCsv {
  std::string strategy;
  std::optional<std::uint64_t> seed;
  double baseline_accuracy = 0.0;
  std::size_t total_units = 0;
  std::vector<PruneStep> steps;
};

TrajectoryCsv to_csv_record(const PruneTrajectory& trajectory);
std::string write_trajectory_csv(const TrajectoryCsv& record);
// ParseError naming the line number on malformed input.
TrajectoryCsv parse_trajectory_csv(const std::string& text);

// L rows of H comma-separated values.
std::string write_score_csv(const Matrix& scores);
// `epoch,mean_loss` with 1-based epochs.
std::string write_loss_csv(const std::vector<double>& epoch_loss);

}  // namespace headprune
