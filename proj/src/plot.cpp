#include "headprune/plot.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "headprune/errors.hpp"

namespace headprune {

namespace {

constexpr double kWidth = 640, kHeight = 480;
constexpr double kLeft = 70, kRight = 160, kTop = 30, kBottom = 60;
constexpr double kPlotW = kWidth - kLeft - kRight;
constexpr double kPlotH = kHeight - kTop - kBottom;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

double px(double x) { return kLeft + std::clamp(x, 0.0, 1.0) * kPlotW; }
double py(double y) { return kTop + (1.0 - std::clamp(y, 0.0, 1.0)) * kPlotH; }

std::string color_for(const std::string& strategy) {
  static const std::map<std::string, std::string> kColors = {
      {"gnorm", "#2ca02c"},     {"inverse-gnorm", "#d62728"}, {"ae", "#1f77b4"},
      {"inverse-ae", "#9467bd"}, {"random", "#7f7f7f"}};
  auto it = kColors.find(strategy);
  return it == kColors.end() ? "#000000" : it->second;
}

struct Point {
  double x, y;
};

std::vector<Point> curve(const TrajectoryCsv& t) {
  std::vector<Point> pts;
  if (t.steps.empty() || t.total_units == 0) return pts;
  pts.push_back({0.0, t.baseline_accuracy});
  for (const auto& s : t.steps) {
    pts.push_back({static_cast<double>(s.step + 1) / static_cast<double>(t.total_units), s.accuracy});
  }
  return pts;
}

std::string points_attr(const std::vector<Point>& pts) {
  std::string out;
  for (const auto& p : pts) {
    if (!out.empty()) out += ' ';
    out += num(px(p.x)) + "," + num(py(p.y));
  }
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::string render_plot_svg(const std::vector<TrajectoryCsv>& trajectories) {
  if (trajectories.empty()) throw InputError("plot: need at least one trajectory");
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";

  // Axes and ticks.
  os << "<g id=\"axes\" stroke=\"black\" stroke-width=\"1\">\n";
  os << "<line x1=\"" << num(px(0)) << "\" y1=\"" << num(py(0)) << "\" x2=\"" << num(px(1))
     << "\" y2=\"" << num(py(0)) << "\"/>\n";
  os << "<line x1=\"" << num(px(0)) << "\" y1=\"" << num(py(0)) << "\" x2=\"" << num(px(0))
     << "\" y2=\"" << num(py(1)) << "\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = 0.25 * i;
    os << "<line class=\"xtick\" x1=\"" << num(px(v)) << "\" y1=\"" << num(py(0)) << "\" x2=\""
       << num(px(v)) << "\" y2=\"" << num(py(0) + 5) << "\"/>\n";
    os << "<line class=\"ytick\" x1=\"" << num(px(0) - 5) << "\" y1=\"" << num(py(v)) << "\" x2=\""
       << num(px(0)) << "\" y2=\"" << num(py(v)) << "\"/>\n";
  }
  os << "</g>\n<g id=\"tick-labels\" stroke=\"none\" fill=\"black\">\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = 0.25 * i;
    os << "<text x=\"" << num(px(v)) << "\" y=\"" << num(py(0) + 20) << "\" text-anchor=\"middle\">"
       << num(v).substr(0, 4) << "</text>\n";
    os << "<text x=\"" << num(px(0) - 8) << "\" y=\"" << num(py(v) + 4) << "\" text-anchor=\"end\">"
       << num(v).substr(0, 4) << "</text>\n";
  }
  os << "<text x=\"" << num(px(0.5)) << "\" y=\"" << num(kHeight - 15)
     << "\" text-anchor=\"middle\">fraction of heads pruned</text>\n";
  os << "<text x=\"18\" y=\"" << num(py(0.5)) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
     << num(py(0.5)) << ")\">accuracy</text>\n</g>\n";

  // Baselines, one per distinct value.
  std::set<double> baselines;
  for (const auto& t : trajectories) baselines.insert(t.baseline_accuracy);
  for (double b : baselines) {
    os << "<line class=\"baseline\" x1=\"" << num(px(0)) << "\" y1=\"" << num(py(b)) << "\" x2=\""
       << num(px(1)) << "\" y2=\"" << num(py(b))
       << "\" stroke=\"#e6b800\" stroke-width=\"1.5\" stroke-dasharray=\"6,4\"/>\n";
  }

  // Random families become bands.
  std::vector<const TrajectoryCsv*> randoms;
  std::vector<std::string> legend;
  for (const auto& t : trajectories)
    if (t.strategy == "random") randoms.push_back(&t);
  if (!randoms.empty()) {
    std::map<std::size_t, std::vector<double>> by_step;
    std::size_t total = 0;
    for (const auto* t : randoms) {
      total = std::max(total, t->total_units);
      for (const auto& s : t->steps) by_step[s.step + 1].push_back(s.accuracy);
      if (!t->steps.empty()) by_step[0].push_back(t->baseline_accuracy);
    }
    if (total > 0 && !by_step.empty()) {
      std::vector<Point> lo, mid, hi;
      for (const auto& [k, accs] : by_step) {
        const double x = static_cast<double>(k) / static_cast<double>(total);
        lo.push_back({x, *std::min_element(accs.begin(), accs.end())});
        hi.push_back({x, *std::max_element(accs.begin(), accs.end())});
        mid.push_back({x, median(accs)});
      }
      std::vector<Point> band = hi;
      band.insert(band.end(), lo.rbegin(), lo.rend());
      const std::string c = color_for("random");
      os << "<polygon class=\"random-band\" points=\"" << points_attr(band) << "\" fill=\"" << c
         << "\" fill-opacity=\"0.25\" stroke=\"none\"/>\n";
      os << "<polyline class=\"random-median\" points=\"" << points_attr(mid) << "\" fill=\"none\" stroke=\""
         << c << "\" stroke-width=\"1.5\"/>\n";
      legend.push_back("random");
    }
  }

  for (const auto& t : trajectories) {
    if (t.strategy == "random") continue;
    const auto pts = curve(t);
    if (pts.empty()) continue;
    os << "<polyline class=\"trajectory\" data-strategy=\"" << t.strategy << "\" points=\""
       << points_attr(pts) << "\" fill=\"none\" stroke=\"" << color_for(t.strategy)
       << "\" stroke-width=\"2\"/>\n";
    if (std::find(legend.begin(), legend.end(), t.strategy) == legend.end()) legend.push_back(t.strategy);
  }

  os << "<g id=\"legend\">\n";
  for (std::size_t i = 0; i < legend.size(); ++i) {
    const double y = kTop + 10 + 20 * static_cast<double>(i);
    const double x = kWidth - kRight + 15;
    os << "<line x1=\"" << num(x) << "\" y1=\"" << num(y) << "\" x2=\"" << num(x + 20) << "\" y2=\""
       << num(y) << "\" stroke=\"" << color_for(legend[i]) << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << num(x + 26) << "\" y=\"" << num(y + 4) << "\">" << legend[i]
       << (legend[i] == "random" ? " (min/median/max)" : "") << "</text>\n";
  }
  os << "</g>\n</svg>\n";
  return os.str();
}

}  // namespace headprune
