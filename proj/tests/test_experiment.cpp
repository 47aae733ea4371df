#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <sstream>

#include "headprune/checkpoint.hpp"
#include "headprune/csv_io.hpp"
#include "headprune/dataset.hpp"
#include "headprune/errors.hpp"
#include "headprune/experiment.hpp"
#include "headprune/plot.hpp"

using namespace headprune;
namespace fs = std::filesystem;

namespace {

const char* kSmallConfig = R"({
  "encoder": {"num_layers": 2, "heads_per_layer": 2, "model_dim": 8, "head_dim": 4,
              "vocab_size": 12, "num_classes": 3, "max_seq_len": 10},
  "dataset": {"vocab_size": 12, "num_classes": 3, "train_size": 60, "calib_size": 8,
              "eval_size": 30, "min_len": 3, "max_len": 8, "seed": 5},
  "training": {"epochs": 2, "lr": 0.05, "batch": 8, "seed": 3},
  "pruning": {"calib_batches": 2, "random_seeds": [1, 2, 3]},
  "output_dir": "out"
})";

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("headprune_exp_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const fs::path& dir, const std::string& text = kSmallConfig) {
  write_text_file(dir / "config.json", text);
  return dir / "config.json";
}

std::vector<std::string> data_rows(const std::string& csv) {
  std::vector<std::string> rows;
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#' && line.rfind("step,", 0) != 0) rows.push_back(line);
  return rows;
}

std::string layer_head(const std::string& row) {
  const auto a = row.find(',');
  const auto b = row.find(',', a + 1);
  const auto c = row.find(',', b + 1);
  return row.substr(a + 1, c - a - 1);
}

}  // namespace

TEST(Dataset, MajorityMarker) {
  const std::vector<std::size_t> only_two = {2, 2, 2};
  EXPECT_EQ(majority_marker(only_two, 3), std::optional<std::size_t>(2));
  const std::vector<std::size_t> tie = {0, 1, 5};
  EXPECT_EQ(majority_marker(tie, 3), std::nullopt);
  const std::vector<std::size_t> none = {5, 6};
  EXPECT_EQ(majority_marker(none, 3), std::nullopt);
}

TEST(Dataset, LabelsAreMajorityMarkersAndDeterministic) {
  DatasetConfig cfg;
  const auto a = gen_dataset(cfg);
  const auto b = gen_dataset(cfg);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.eval, b.eval);
  EXPECT_EQ(a.train.size(), cfg.train_size);
  EXPECT_EQ(a.calib.size(), cfg.calib_size);
  for (const auto& x : a.train) {
    EXPECT_EQ(majority_marker(x.tokens, cfg.num_classes), std::optional<std::size_t>(x.label));
    EXPECT_GE(x.tokens.size(), cfg.min_len);
    EXPECT_LE(x.tokens.size(), cfg.max_len);
  }
}

TEST(Dataset, LabelBalanceOverThreeThousandSamples) {
  DatasetConfig cfg;
  cfg.train_size = 3000;
  const auto data = gen_dataset(cfg);
  std::map<std::size_t, std::size_t> counts;
  for (const auto& x : data.train) ++counts[x.label];
  for (std::size_t k = 0; k < 3; ++k) {
    const double freq = static_cast<double>(counts[k]) / 3000.0;
    EXPECT_GE(freq, 0.30) << "class " << k;
    EXPECT_LE(freq, 0.37) << "class " << k;
  }
}

TEST(Dataset, PartitionsAreDisjoint) {
  const auto data = gen_dataset(DatasetConfig{});
  std::set<std::vector<std::size_t>> seen;
  for (const auto* part : {&data.train, &data.calib, &data.eval})
    for (const auto& x : *part) EXPECT_TRUE(seen.insert(x.tokens).second);
}

TEST(Dataset, VocabularyMustExceedClasses) {
  DatasetConfig cfg;
  cfg.vocab_size = 3;
  EXPECT_THROW(gen_dataset(cfg), ConfigError);
}

TEST(Config, DefaultsAndRoundTrip) {
  const auto cfg = parse_experiment_config("{}");
  EXPECT_EQ(cfg.encoder, EncoderConfig{});
  EXPECT_EQ(cfg.pruning.random_seeds.size(), 10u);
  const auto again = parse_experiment_config(experiment_config_to_json(cfg));
  EXPECT_EQ(experiment_config_to_json(again), experiment_config_to_json(cfg));
}

TEST(Config, BadInput) {
  EXPECT_THROW(parse_experiment_config("{\"encoder\": "), ParseError);
  EXPECT_THROW(parse_experiment_config(R"({"encoder": {"head_dim": 5}})"), ConfigError);
  EXPECT_THROW(parse_experiment_config(R"({"training": {"lr": "fast"}})"), ConfigError);
}

TEST(Csv, TrajectoryRoundTrip) {
  TrajectoryCsv rec;
  rec.strategy = "random";
  rec.seed = 4;
  rec.baseline_accuracy = 0.9;
  rec.total_units = 2;
  rec.steps.push_back(PruneStep{0, {1, 0}, 0.0, 0.8, 100, 0});
  rec.steps.push_back(PruneStep{1, {0, 1}, 0.0, 0.1234567890123, 50, 0});
  const auto text = write_trajectory_csv(rec);
  EXPECT_NE(text.find("step,layer,head,score,accuracy,params_remaining,backward_passes"), std::string::npos);
  EXPECT_NE(text.find("\n0,2,1,"), std::string::npos);
  const auto back = parse_trajectory_csv(text);
  EXPECT_EQ(back.strategy, "random");
  EXPECT_EQ(back.seed, std::optional<std::uint64_t>(4));
  ASSERT_EQ(back.steps.size(), 2u);
  EXPECT_EQ(back.steps[1].pruned, (HeadCoord{0, 1}));
  EXPECT_EQ(back.steps[1].accuracy, 0.1234567890123);
  EXPECT_EQ(write_trajectory_csv(back), text);
}

TEST(Csv, MalformedLineNamesLineNumber) {
  const std::string text =
      "# strategy=gnorm baseline_accuracy=1 total_heads=4\n"
      "step,layer,head,score,accuracy,params_remaining,backward_passes\n"
      "0,1,1,0.5,0.9,10,2\n"
      "1,x,1,0.5,0.9,10,2\n";
  try {
    parse_trajectory_csv(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
  }
}

TEST(Plot, SingleTrajectoryHasOnePolylineAndBaseline) {
  TrajectoryCsv rec{"gnorm", std::nullopt, 0.9, 2, {PruneStep{0, {0, 0}, 0.1, 0.8, 10, 1}}};
  const auto svg = render_plot_svg({rec});
  EXPECT_EQ(svg.rfind("<svg", 0) == 0 || svg.rfind("<?xml", 0) == 0, true);
  std::size_t polylines = 0;
  for (auto p = svg.find("class=\"trajectory\""); p != std::string::npos; p = svg.find("class=\"trajectory\"", p + 1))
    ++polylines;
  EXPECT_EQ(polylines, 1u);
  EXPECT_NE(svg.find("class=\"baseline\""), std::string::npos);
}

TEST(Plot, EmptyTrajectoryDrawsBaselineOnly) {
  TrajectoryCsv rec{"gnorm", std::nullopt, 0.7, 4, {}};
  const auto svg = render_plot_svg({rec});
  EXPECT_EQ(svg.find("class=\"trajectory\""), std::string::npos);
  EXPECT_NE(svg.find("class=\"baseline\""), std::string::npos);
}

TEST(Plot, RandomRunsBecomeBand) {
  std::vector<TrajectoryCsv> recs;
  for (std::uint64_t s = 1; s <= 3; ++s)
    recs.push_back({"random", s, 0.9, 1, {PruneStep{0, {0, 0}, 0.0, 0.2 * s, 0, 0}}});
  const auto svg = render_plot_svg(recs);
  EXPECT_NE(svg.find("random-band"), std::string::npos);
  EXPECT_NE(svg.find("random-median"), std::string::npos);
}

TEST(Commands, TrainPruneScoreAndPlot) {
  const auto dir = fresh_dir("cmds");
  const auto config = write_config(dir);
  std::ostringstream log;
  cmd_train(config, log);
  ASSERT_TRUE(fs::exists(dir / "out" / "checkpoint.json"));
  ASSERT_TRUE(fs::exists(dir / "out" / "loss.csv"));
  const auto first_ckpt = read_text_file(dir / "out" / "checkpoint.json");
  cmd_train(config, log);
  EXPECT_EQ(read_text_file(dir / "out" / "checkpoint.json"), first_ckpt);

  const auto budgeted = cmd_prune(config, "gnorm", std::nullopt, 3, log);
  ASSERT_EQ(budgeted.size(), 1u);
  EXPECT_EQ(data_rows(read_text_file(budgeted[0])).size(), 3u);

  const auto randoms = cmd_prune(config, "random", std::nullopt, std::nullopt, log);
  EXPECT_EQ(randoms.size(), 3u);
  EXPECT_TRUE(fs::exists(dir / "out" / "trajectory_random_2.csv"));
  EXPECT_EQ(cmd_prune(config, "random", 7, std::nullopt, log).size(), 1u);

  const auto ae = data_rows(read_text_file(cmd_prune(config, "ae", std::nullopt, std::nullopt, log)[0]));
  const auto inv = data_rows(read_text_file(cmd_prune(config, "inverse-ae", std::nullopt, std::nullopt, log)[0]));
  ASSERT_EQ(ae.size(), 4u);
  ASSERT_EQ(inv.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(layer_head(ae[i]), layer_head(inv[3 - i]));

  const auto scores = cmd_score(config, "gnorm", log);
  EXPECT_TRUE(fs::exists(scores));
  EXPECT_TRUE(fs::exists(cmd_score(config, "ae", log)));

  cmd_plot({dir / "out" / "trajectory_ae.csv", randoms[0], randoms[1]}, dir / "out" / "plot.svg");
  EXPECT_NE(read_text_file(dir / "out" / "plot.svg").find("</svg>"), std::string::npos);
}

TEST(Commands, ZeroEpochCheckpointEqualsInitialization) {
  const auto dir = fresh_dir("epochs0");
  auto cfg = parse_experiment_config(kSmallConfig);
  cfg.training.epochs = 0;
  cfg.output_dir = "out";
  const auto config = write_config(dir, experiment_config_to_json(cfg));
  std::ostringstream log;
  cmd_train(config, log);
  const auto loaded = load_checkpoint(dir / "out" / "checkpoint.json");
  EXPECT_EQ(loaded.params(), EncoderModel::initialize(cfg.encoder, cfg.training.seed).params());
}

TEST(Commands, PruneWithoutCheckpointIsIoError) {
  const auto dir = fresh_dir("nockpt");
  const auto config = write_config(dir);
  std::ostringstream log;
  EXPECT_THROW(cmd_prune(config, "gnorm", std::nullopt, std::nullopt, log), IoError);
}

TEST(Commands, PlotRejectsMalformedCsv) {
  const auto dir = fresh_dir("badcsv");
  write_text_file(dir / "bad.csv", "garbage\n");
  EXPECT_THROW(cmd_plot({dir / "bad.csv"}, dir / "plot.svg"), ParseError);
}

TEST(Gradcheck, PassesAtDefaultToleranceAndFailsAtRoundOff) {
  EncoderConfig enc;
  enc.num_layers = 1;
  enc.heads_per_layer = 2;
  enc.model_dim = 8;
  enc.head_dim = 4;
  const auto ok = run_gradcheck(enc, 1, 1e-4, std::nullopt, 1);
  EXPECT_TRUE(ok.passed);
  EXPECT_EQ(ok.groups.size(), 2u * 3u);
  EXPECT_FALSE(run_gradcheck(enc, 1, 1e-16, std::nullopt, 1).passed);
}
