// headprune: train a toy encoder, score and prune its attention heads, plot trajectories.
//
// Exit codes: 0 success, 1 usage/config error, 2 numerical or gradcheck failure, 3 I/O error.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "headprune/errors.hpp"
#include "headprune/experiment.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitIo = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient-norm attention-head pruning on a toy transformer encoder"};
  app.require_subcommand(1);

  std::string config;
  std::string strategy;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> budget;
  double tol = 1e-4;
  std::string out;
  std::vector<std::string> csvs;
  std::string method;

  auto* train = app.add_subcommand("train", "Train on the synthetic task; writes checkpoint.json and loss.csv");
  train->add_option("--config", config, "Experiment config JSON")->required();

  auto* prune = app.add_subcommand(
      "prune",
      "Run one pruning strategy; writes trajectory CSVs. ae prunes the highest-entropy head first, "
      "inverse-ae the lowest-entropy head first");
  prune->add_option("--config", config, "Experiment config JSON")->required();
  prune->add_option("--strategy", strategy, "gnorm | inverse-gnorm | ae | inverse-ae | random")
      ->required()
      ->check(CLI::IsMember({"gnorm", "inverse-gnorm", "ae", "inverse-ae", "random"}));
  prune->add_option("--seed", seed, "Seed for the random strategy (default: every configured seed)");
  prune->add_option("--budget", budget, "Number of heads to prune (default: all)");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of per-head Q/K/V gradients");
  gradcheck->add_option("--config", config, "Experiment config JSON")->required();
  gradcheck->add_option("--tol", tol, "Relative tolerance")->capture_default_str();

  auto* plot = app.add_subcommand("plot", "Plot accuracy against fraction of heads pruned (SVG)");
  plot->add_option("--out", out, "Output SVG path")->required();
  plot->add_option("csvs", csvs, "Trajectory CSV files")->required();

  auto* score = app.add_subcommand("score", "Dump the head score matrix as CSV");
  score->add_option("--config", config, "Experiment config JSON")->required();
  score->add_option("--method", method, "gnorm | ae")->required()->check(CLI::IsMember({"gnorm", "ae"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (train->parsed()) {
      headprune::cmd_train(config, std::cout);
    } else if (prune->parsed()) {
      headprune::cmd_prune(config, strategy, seed, budget, std::cout);
    } else if (gradcheck->parsed()) {
      if (!(tol > 0.0)) throw headprune::ConfigError("--tol must be > 0");
      const auto report = headprune::cmd_gradcheck(config, tol, std::cout);
      if (!report.passed) return kExitNumerical;
    } else if (plot->parsed()) {
      std::vector<std::filesystem::path> paths(csvs.begin(), csvs.end());
      headprune::cmd_plot(paths, out);
      std::cout << "wrote " << out << "\n";
    } else if (score->parsed()) {
      headprune::cmd_score(config, method, std::cout);
    }
  } catch (const headprune::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const headprune::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const headprune::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return 0;
}
