#include "headprune/csv_io.hpp"

#include <cstdio>
#include <sstream>

#include "headprune/errors.hpp"
#include "headprune/format.hpp"

namespace headprune {

std::string format_real(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

namespace {

constexpr const char* kTrajectoryHeader =
    "step,layer,head,score,accuracy,params_remaining,backward_passes";

[[noreturn]] void fail_at(std::size_t line, const std::string& what) {
  throw ParseError("trajectory csv line " + std::to_string(line) + ": " + what);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::uint64_t parse_uint(const std::string& s, std::size_t line) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    if (s.empty() || s[0] == '-') throw std::invalid_argument("sign");
    v = std::stoull(s, &used);
  } catch (const std::exception&) {
    fail_at(line, "expected a non-negative integer, got '" + s + "'");
  }
  if (used != s.size()) fail_at(line, "trailing characters in '" + s + "'");
  return v;
}

double parse_real(const std::string& s, std::size_t line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    fail_at(line, "expected a number, got '" + s + "'");
  }
  if (used != s.size()) fail_at(line, "trailing characters in '" + s + "'");
  return v;
}

}  // namespace

TrajectoryCsv to_csv_record(const PruneTrajectory& trajectory) {
  TrajectoryCsv out;
  out.strategy = strategy_name(trajectory.strategy.kind);
  if (trajectory.strategy.kind == StrategyKind::random) out.seed = trajectory.strategy.seed;
  out.baseline_accuracy = trajectory.baseline_accuracy;
  out.total_units = trajectory.total_units;
  out.steps = trajectory.steps;
  return out;
}

std::string write_trajectory_csv(const TrajectoryCsv& record) {
  std::ostringstream os;
  os << "# strategy=" << record.strategy;
  if (record.seed) os << " seed=" << *record.seed;
  os << " baseline_accuracy=" << format_real(record.baseline_accuracy)
     << " total_heads=" << record.total_units << "\n";
  os << kTrajectoryHeader << "\n";
  for (const auto& s : record.steps) {
    os << s.step << "," << s.pruned.layer + 1 << "," << s.pruned.head + 1 << ","
       << format_real(s.score) << "," << format_real(s.accuracy) << "," << s.params_remaining << ","
       << s.backward_passes << "\n";
  }
  return os.str();
}

TrajectoryCsv parse_trajectory_csv(const std::string& text) {
  TrajectoryCsv out;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  bool have_meta = false;
  bool have_header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream meta(line.substr(1));
      std::string kv;
      bool have_baseline = false, have_total = false;
      while (meta >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) fail_at(lineno, "metadata entry without '=': " + kv);
        const std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
        if (key == "strategy") {
          out.strategy = value;
        } else if (key == "seed") {
          out.seed = parse_uint(value, lineno);
        } else if (key == "baseline_accuracy") {
          out.baseline_accuracy = parse_real(value, lineno);
          have_baseline = true;
        } else if (key == "total_heads") {
          out.total_units = parse_uint(value, lineno);
          have_total = true;
        }
      }
      if (out.strategy.empty() || !have_baseline || !have_total) {
        fail_at(lineno, "metadata needs strategy, baseline_accuracy and total_heads");
      }
      have_meta = true;
      continue;
    }
    if (!have_header) {
      if (line != kTrajectoryHeader) fail_at(lineno, "unexpected header '" + line + "'");
      have_header = true;
      continue;
    }
    const auto cells = split(line, ',');
    if (cells.size() != 7) fail_at(lineno, "expected 7 columns, got " + std::to_string(cells.size()));
    PruneStep s;
    s.step = parse_uint(cells[0], lineno);
    const auto layer = parse_uint(cells[1], lineno);
    const auto head = parse_uint(cells[2], lineno);
    if (layer == 0 || head == 0) fail_at(lineno, "layer and head are 1-based");
    s.pruned = {layer - 1, head - 1};
    s.score = parse_real(cells[3], lineno);
    s.accuracy = parse_real(cells[4], lineno);
    s.params_remaining = parse_uint(cells[5], lineno);
    s.backward_passes = parse_uint(cells[6], lineno);
    if (s.step != out.steps.size()) fail_at(lineno, "steps must be consecutive from 0");
    out.steps.push_back(s);
  }
  if (!have_meta) fail_at(lineno == 0 ? 1 : lineno, "missing '#' metadata line");
  if (!have_header) fail_at(lineno, "missing header row");
  return out;
}

std::string write_score_csv(const Matrix& scores) {
  std::ostringstream os;
  for (std::size_t l = 0; l < scores.rows(); ++l) {
    for (std::size_t h = 0; h < scores.cols(); ++h) os << (h ? "," : "") << format_real(scores(l, h));
    os << "\n";
  }
  return os.str();
}

std::string write_loss_csv(const std::vector<double>& epoch_loss) {
  std::ostringstream os;
  os << "epoch,mean_loss\n";
  for (std::size_t e = 0; e < epoch_loss.size(); ++e) os << e + 1 << "," << format_real(epoch_loss[e]) << "\n";
  return os.str();
}

}  // namespace headprune
