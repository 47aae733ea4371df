#pragma once

#include <string>
#include <vector>

#include "headprune/csv_io.hpp"

namespace headprune {

// Self-contained SVG of accuracy (y) against fraction of heads pruned (x), both on
// [0, 1] with ticks every 0.25. Each non-random trajectory is one polyline starting at
// its baseline; random trajectories are pooled into a min/median/max band per pruning
// rate. Baseline accuracies are drawn as dashed horizontal lines.
std::string render_plot_svg(const std::vector<TrajectoryCsv>& trajectories);

}  // namespace headprune
