#include "headprune/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "headprune/checkpoint.hpp"
#include "headprune/csv_io.hpp"
#include "headprune/errors.hpp"
#include "headprune/format.hpp"
#include "headprune/plot.hpp"

namespace headprune {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

void ExperimentConfig::validate() const {
  encoder.validate();
  dataset.validate();
  if (dataset.vocab_size != encoder.vocab_size) {
    throw ConfigError("config: dataset.vocab_size must equal encoder.vocab_size");
  }
  if (dataset.num_classes != encoder.num_classes) {
    throw ConfigError("config: dataset.num_classes must equal encoder.num_classes");
  }
  if (dataset.max_len > encoder.max_seq_len) {
    throw ConfigError("config: dataset.max_len exceeds encoder.max_seq_len");
  }
  if (training.batch == 0) throw ConfigError("config: training.batch must be >= 1");
  if (!(training.lr >= 0.0)) throw ConfigError("config: training.lr must be >= 0");
  if (!(pruning.epsilon > 0.0)) throw ConfigError("config: pruning.epsilon must be > 0");
  if (pruning.calib_batches == 0 || pruning.calib_batches > dataset.calib_size) {
    throw ConfigError("config: pruning.calib_batches must be in [1, dataset.calib_size]");
  }
  for (const auto& s : pruning.strategies) parse_strategy_kind(s);
}

namespace {

template <typename T>
void read_opt(const json& obj, const char* key, T& dst, const std::string& section) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return;
  try {
    dst = it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config: " + section + "." + key + ": " + e.what());
  }
}

const json& section(const json& root, const char* key) {
  static const json kEmpty = json::object();
  auto it = root.find(key);
  if (it == root.end()) return kEmpty;
  if (!it->is_object()) throw ConfigError(std::string("config: ") + key + " must be an object");
  return *it;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError("config: syntax error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  if (!root.is_object()) throw ConfigError("config: top level must be an object");
  ExperimentConfig cfg;

  const json& enc = section(root, "encoder");
  read_opt(enc, "num_layers", cfg.encoder.num_layers, "encoder");
  read_opt(enc, "heads_per_layer", cfg.encoder.heads_per_layer, "encoder");
  read_opt(enc, "model_dim", cfg.encoder.model_dim, "encoder");
  read_opt(enc, "head_dim", cfg.encoder.head_dim, "encoder");
  read_opt(enc, "vocab_size", cfg.encoder.vocab_size, "encoder");
  read_opt(enc, "num_classes", cfg.encoder.num_classes, "encoder");
  read_opt(enc, "tied_layers", cfg.encoder.tied_layers, "encoder");
  read_opt(enc, "max_seq_len", cfg.encoder.max_seq_len, "encoder");

  const json& ds = section(root, "dataset");
  cfg.dataset.vocab_size = cfg.encoder.vocab_size;
  cfg.dataset.num_classes = cfg.encoder.num_classes;
  read_opt(ds, "vocab_size", cfg.dataset.vocab_size, "dataset");
  read_opt(ds, "num_classes", cfg.dataset.num_classes, "dataset");
  read_opt(ds, "train_size", cfg.dataset.train_size, "dataset");
  read_opt(ds, "calib_size", cfg.dataset.calib_size, "dataset");
  read_opt(ds, "eval_size", cfg.dataset.eval_size, "dataset");
  read_opt(ds, "min_len", cfg.dataset.min_len, "dataset");
  read_opt(ds, "max_len", cfg.dataset.max_len, "dataset");
  read_opt(ds, "seed", cfg.dataset.seed, "dataset");
  read_opt(ds, "marker_prob", cfg.dataset.marker_prob, "dataset");

  const json& tr = section(root, "training");
  read_opt(tr, "epochs", cfg.training.epochs, "training");
  read_opt(tr, "lr", cfg.training.lr, "training");
  read_opt(tr, "batch", cfg.training.batch, "training");
  read_opt(tr, "seed", cfg.training.seed, "training");

  const json& pr = section(root, "pruning");
  read_opt(pr, "strategies", cfg.pruning.strategies, "pruning");
  read_opt(pr, "epsilon", cfg.pruning.epsilon, "pruning");
  std::optional<std::size_t> budget;
  if (pr.contains("budget") && !pr["budget"].is_null()) {
    std::size_t b = 0;
    read_opt(pr, "budget", b, "pruning");
    budget = b;
  }
  cfg.pruning.budget = budget;
  read_opt(pr, "random_seeds", cfg.pruning.random_seeds, "pruning");
  read_opt(pr, "calib_batches", cfg.pruning.calib_batches, "pruning");
  std::string scal = to_string(cfg.pruning.scalarization);
  read_opt(pr, "scalarization", scal, "pruning");
  cfg.pruning.scalarization = parse_scalarization(scal);
  std::string variant = "C";
  read_opt(pr, "entropy_variant", variant, "pruning");
  cfg.pruning.entropy_variant = parse_entropy_variant(variant);

  std::string out = cfg.output_dir.string();
  read_opt(root, "output_dir", out, "root");
  cfg.output_dir = out;

  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  ExperimentConfig cfg = parse_experiment_config(read_text_file(path));
  if (cfg.output_dir.is_relative()) cfg.output_dir = path.parent_path() / cfg.output_dir;
  return cfg;
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["encoder"] = {{"num_layers", cfg.encoder.num_layers},
                  {"heads_per_layer", cfg.encoder.heads_per_layer},
                  {"model_dim", cfg.encoder.model_dim},
                  {"head_dim", cfg.encoder.head_dim},
                  {"vocab_size", cfg.encoder.vocab_size},
                  {"num_classes", cfg.encoder.num_classes},
                  {"tied_layers", cfg.encoder.tied_layers},
                  {"max_seq_len", cfg.encoder.max_seq_len}};
  j["dataset"] = {{"vocab_size", cfg.dataset.vocab_size}, {"num_classes", cfg.dataset.num_classes},
                  {"train_size", cfg.dataset.train_size}, {"calib_size", cfg.dataset.calib_size},
                  {"eval_size", cfg.dataset.eval_size},   {"min_len", cfg.dataset.min_len},
                  {"max_len", cfg.dataset.max_len},       {"seed", cfg.dataset.seed},
                  {"marker_prob", cfg.dataset.marker_prob}};
  j["training"] = {{"epochs", cfg.training.epochs},
                   {"lr", cfg.training.lr},
                   {"batch", cfg.training.batch},
                   {"seed", cfg.training.seed}};
  j["pruning"] = {{"strategies", cfg.pruning.strategies},
                  {"epsilon", cfg.pruning.epsilon},
                  {"budget", cfg.pruning.budget ? json(*cfg.pruning.budget) : json(nullptr)},
                  {"random_seeds", cfg.pruning.random_seeds},
                  {"calib_batches", cfg.pruning.calib_batches},
                  {"scalarization", to_string(cfg.pruning.scalarization)},
                  {"entropy_variant", cfg.pruning.entropy_variant == EntropyVariant::A   ? "A"
                                      : cfg.pruning.entropy_variant == EntropyVariant::B ? "B"
                                                                                         : "C"}};
  j["output_dir"] = cfg.output_dir.string();
  return j.dump(2) + "\n";
}

CalibrationSet calibration_set(const ExperimentConfig& cfg, const SyntheticDataset& data) {
  return CalibrationSet{data.calib, cfg.pruning.calib_batches};
}

// ---------------------------------------------------------------------------
// File helpers

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Commands

TrainReport train_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const SyntheticDataset data = gen_dataset(cfg.dataset);
  EncoderModel init = EncoderModel::initialize(cfg.encoder, cfg.training.seed);
  TrainOptions opts{cfg.training.epochs, cfg.training.lr, cfg.training.batch, cfg.training.seed};
  TrainResult trained = train(std::move(init), data.train, opts);
  const double acc = evaluate_accuracy(trained.model, data.eval);
  return {std::move(trained.model), std::move(trained.epoch_loss), acc};
}

TrainReport cmd_train(const std::filesystem::path& config_path, std::ostream& log) {
  const ExperimentConfig cfg = load_experiment_config(config_path);
  TrainReport report = train_experiment(cfg);
  std::filesystem::create_directories(cfg.output_dir);
  save_checkpoint(report.model, cfg.checkpoint_path());
  write_text_file(cfg.output_dir / "loss.csv", write_loss_csv(report.epoch_loss));
  log << "trained " << report.epoch_loss.size() << " epochs";
  if (!report.epoch_loss.empty()) log << ", final loss " << format_real(report.epoch_loss.back());
  log << ", eval accuracy " << format_real(report.eval_accuracy) << "\n";
  log << "wrote " << cfg.checkpoint_path().string() << "\n";
  return report;
}

namespace {

EncoderModel load_trained(const ExperimentConfig& cfg) {
  if (!std::filesystem::exists(cfg.checkpoint_path())) {
    throw IoError("checkpoint " + cfg.checkpoint_path().string() + " not found; run `train` first");
  }
  EncoderModel model = load_checkpoint(cfg.checkpoint_path());
  if (!(model.config() == cfg.encoder)) {
    throw ConfigError("checkpoint encoder shape does not match the config");
  }
  return model;
}

}  // namespace

std::vector<std::filesystem::path> cmd_prune(const std::filesystem::path& config_path,
                                             const std::string& strategy_name_arg,
                                             std::optional<std::uint64_t> seed,
                                             std::optional<std::size_t> budget, std::ostream& log) {
  const ExperimentConfig cfg = load_experiment_config(config_path);
  const StrategyKind kind = parse_strategy_kind(strategy_name_arg);
  const EncoderModel model = load_trained(cfg);
  const SyntheticDataset data = gen_dataset(cfg.dataset);
  const CalibrationSet calib = calibration_set(cfg, data);
  if (!budget) budget = cfg.pruning.budget;

  std::vector<std::uint64_t> seeds;
  if (kind == StrategyKind::random) {
    seeds = seed ? std::vector<std::uint64_t>{*seed} : cfg.pruning.random_seeds;
    if (seeds.empty()) throw ConfigError("random strategy needs at least one seed");
  } else {
    seeds = {seed.value_or(0)};
  }

  std::vector<std::filesystem::path> written;
  for (std::uint64_t s : seeds) {
    Strategy strategy;
    strategy.kind = kind;
    strategy.epsilon = cfg.pruning.epsilon;
    strategy.variant = cfg.pruning.entropy_variant;
    strategy.scalarization = cfg.pruning.scalarization;
    strategy.seed = s;
    const PruneTrajectory traj = run_pruning(model, calib, data.eval, strategy, budget);
    std::string name = "trajectory_" + strategy_name(kind);
    if (kind == StrategyKind::random) name += "_" + std::to_string(s);
    const auto path = cfg.output_dir / (name + ".csv");
    write_text_file(path, write_trajectory_csv(to_csv_record(traj)));
    written.push_back(path);

    log << strategy_name(kind);
    if (kind == StrategyKind::random) log << " seed " << s;
    log << ": baseline accuracy " << format_real(traj.baseline_accuracy) << ", " << traj.steps.size()
        << " steps\n";
    if (is_gnorm(kind)) {
      const auto counters = complexity_counters(traj);
      for (std::size_t i = 0; i < counters.per_step_passes.size(); ++i) {
        log << "  step " << i << ": backward passes " << counters.per_step_passes[i] << "\n";
      }
      log << "  total backward passes " << counters.total_backward_passes << " (steps x "
          << calib.batches << " batches)\n";
    }
    if (const auto knee = find_knee(traj)) {
      log << "  knee after step " << *knee << " (fraction pruned "
          << format_real(static_cast<double>(*knee + 1) / static_cast<double>(traj.total_units)) << ")\n";
    }
    log << "  wrote " << path.string() << "\n";
  }
  return written;
}

GradcheckReport run_gradcheck(const EncoderConfig& encoder, std::uint64_t base_seed, double tol,
                              std::optional<double> abs_floor, std::size_t seeds) {
  if (!(tol > 0.0)) throw InputError("gradcheck: tol must be > 0");
  GradcheckReport report;
  report.tol = tol;
  report.abs_floor = abs_floor.value_or(tol * 1e-4);

  // Groups keyed by (layer, head, kind) in listing order.
  auto group_index = [&](std::size_t layer, std::size_t head, char kind) -> GradcheckGroup& {
    for (auto& g : report.groups)
      if (g.layer == layer && g.head == head && g.kind == kind) return g;
    report.groups.push_back({layer, head, kind, 0.0, 0, 0});
    return report.groups.back();
  };

  for (std::size_t i = 0; i < seeds; ++i) {
    const std::uint64_t seed = base_seed + i;
    const EncoderModel model = EncoderModel::initialize(encoder, seed);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_int_distribution<std::size_t> tok(0, encoder.vocab_size - 1);
    std::uniform_int_distribution<std::size_t> cls(0, encoder.num_classes - 1);
    TokenSequence x;
    x.tokens.resize(std::min<std::size_t>(5, encoder.max_seq_len));
    for (auto& t : x.tokens) t = tok(rng);
    x.label = cls(rng);

    for (Scalarization s : {Scalarization::logit_l2_norm, Scalarization::cross_entropy_loss}) {
      const BackwardResult r = backward(model, x, s);
      for (const ParamCoord& c : head_param_coords(model)) {
        const double analytic = r.grads.at(c, encoder.tied_layers);
        const double numeric = finite_diff_grad(model, x, s, c, kFiniteDiffStep);
        const double diff = std::abs(analytic - numeric);
        const double scale = std::max(std::abs(analytic), std::abs(numeric));
        const double rel = scale > 0.0 ? diff / scale : 0.0;
        const char kind = c.kind == ParamKind::w_q ? 'Q' : c.kind == ParamKind::w_k ? 'K' : 'V';
        auto& g = group_index(c.layer, c.head, kind);
        ++g.entries;
        if (diff > report.abs_floor) g.max_rel_error = std::max(g.max_rel_error, rel);
        if (diff > report.abs_floor && rel > tol) {
          ++g.failures;
          report.passed = false;
        }
      }
    }
  }
  return report;
}

GradcheckReport cmd_gradcheck(const std::filesystem::path& config_path, double tol, std::ostream& log) {
  const ExperimentConfig cfg = load_experiment_config(config_path);
  const GradcheckReport report = run_gradcheck(cfg.encoder, cfg.training.seed, tol);
  log << "gradcheck: step " << format_real(kFiniteDiffStep) << ", tol " << format_real(report.tol)
      << ", abs floor " << format_real(report.abs_floor) << "\n";
  log << "layer,head,group,entries,max_rel_error,failures\n";
  for (const auto& g : report.groups) {
    log << g.layer + 1 << "," << g.head + 1 << "," << g.kind << "," << g.entries << ","
        << format_real(g.max_rel_error) << "," << g.failures << "\n";
  }
  log << (report.passed ? "PASS" : "FAIL") << "\n";
  return report;
}

void cmd_plot(const std::vector<std::filesystem::path>& csvs, const std::filesystem::path& out_path) {
  if (csvs.empty()) throw InputError("plot: need at least one CSV");
  std::vector<TrajectoryCsv> records;
  for (const auto& p : csvs) {
    try {
      records.push_back(parse_trajectory_csv(read_text_file(p)));
    } catch (const ParseError& e) {
      throw ParseError(p.string() + ": " + e.what());
    }
  }
  write_text_file(out_path, render_plot_svg(records));
}

std::filesystem::path cmd_score(const std::filesystem::path& config_path, const std::string& method,
                                std::ostream& log) {
  const ExperimentConfig cfg = load_experiment_config(config_path);
  if (method != "gnorm" && method != "ae") throw ConfigError("score: method must be gnorm or ae");
  const EncoderModel model = load_trained(cfg);
  const SyntheticDataset data = gen_dataset(cfg.dataset);
  const CalibrationSet calib = calibration_set(cfg, data);
  ScoreMatrix scores;
  if (method == "gnorm") {
    scores = gnorm_score(compute_gnorm(model, calib, model.mask(), cfg.pruning.scalarization));
  } else {
    std::size_t zeros = 0;
    scores = expected_ae(model, calib, cfg.pruning.epsilon, cfg.pruning.entropy_variant, &zeros);
    if (zeros > 0 && cfg.pruning.entropy_variant == EntropyVariant::A) {
      log << "warning: " << zeros << " attention entries are exactly 0; unrectified entropy "
          << "relies on 0*log(0) = 0 there\n";
    }
  }
  const auto path = cfg.output_dir / ("scores_" + method + ".csv");
  write_text_file(path, write_score_csv(scores.s));
  log << "wrote " << path.string() << "\n";
  return path;
}

}  // namespace headprune
