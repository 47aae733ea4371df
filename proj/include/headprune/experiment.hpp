#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "headprune/dataset.hpp"
#include "headprune/grad.hpp"
#include "headprune/model.hpp"
#include "headprune/pruner.hpp"
#include "headprune/scoring.hpp"

namespace headprune {

struct TrainingConfig {
  std::size_t epochs = 30;
  double lr = 0.05;
  std::size_t batch = 16;
  std::uint64_t seed = 7;  // initialization and shuffling
};

struct PruningConfig {
  std::vector<std::string> strategies = {"gnorm", "inverse-gnorm", "ae", "inverse-ae", "random"};
  double epsilon = kDefaultEpsilon;
  std::optional<std::size_t> budget;
  std::vector<std::uint64_t> random_seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::size_t calib_batches = 4;
  Scalarization scalarization = Scalarization::logit_l2_norm;
  EntropyVariant entropy_variant = EntropyVariant::C;
};

// One JSON file drives every command; all randomness comes from the seeds in it.
struct ExperimentConfig {
  EncoderConfig encoder;
  DatasetConfig dataset;
  TrainingConfig training;
  PruningConfig pruning;
  std::filesystem::path output_dir = "out";

  // ConfigError on inconsistent sizes (lengths, vocabulary, classes).
  void validate() const;

  std::filesystem::path checkpoint_path() const { return output_dir / "checkpoint.json"; }
};

// Missing keys take the defaults above. ParseError / ConfigError on bad input.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
std::string experiment_config_to_json(const ExperimentConfig& cfg);

CalibrationSet calibration_set(const ExperimentConfig& cfg, const SyntheticDataset& data);

struct TrainReport {
  EncoderModel model;
  std::vector<double> epoch_loss;
  double eval_accuracy = 0.0;
};

// Generates the dataset, initializes with training.seed and runs SGD. No file output.
TrainReport train_experiment(const ExperimentConfig& cfg);

// `train`: writes checkpoint.json and loss.csv under output_dir.
TrainReport cmd_train(const std::filesystem::path& config_path, std::ostream& log);

// `prune`: writes trajectory_<strategy>.csv (random: trajectory_random_<seed>.csv, one per
// configured seed unless `seed` is given). Returns the written paths.
std::vector<std::filesystem::path> cmd_prune(const std::filesystem::path& config_path,
                                             const std::string& strategy,
                                             std::optional<std::uint64_t> seed,
                                             std::optional<std::size_t> budget, std::ostream& log);

struct GradcheckGroup {
  std::size_t layer = 0;  // 0-based original coordinates
  std::size_t head = 0;
  char kind = 'Q';
  double max_rel_error = 0.0;  // over entries above the absolute floor
  std::size_t entries = 0;
  std::size_t failures = 0;
};

struct GradcheckReport {
  double tol = 0.0;
  double abs_floor = 0.0;
  std::vector<GradcheckGroup> groups;
  bool passed = true;
};

inline constexpr double kFiniteDiffStep = 1e-5;

// Finite-difference check of every per-head Q/K/V entry, both scalarizations, 5 seeded
// models of the configured shape. An entry passes when its relative error is <= tol or
// its absolute error is <= abs_floor (default tol * 1e-4).
GradcheckReport run_gradcheck(const EncoderConfig& encoder, std::uint64_t base_seed, double tol,
                              std::optional<double> abs_floor = std::nullopt,
                              std::size_t seeds = 5);

// `gradcheck`: prints the report; the caller turns !passed into exit status 2.
GradcheckReport cmd_gradcheck(const std::filesystem::path& config_path, double tol, std::ostream& log);

// `plot`: reads trajectory CSVs and writes an SVG.
void cmd_plot(const std::vector<std::filesystem::path>& csvs, const std::filesystem::path& out_path);

// `score`: writes scores_<method>.csv (method gnorm or ae) for the trained checkpoint.
std::filesystem::path cmd_score(const std::filesystem::path& config_path, const std::string& method,
                                std::ostream& log);

std::string read_text_file(const std::filesystem::path& path);
// Creates parent directories. IoError on failure.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace headprune
