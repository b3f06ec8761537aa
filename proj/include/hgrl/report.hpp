#pragma once

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hgrl/eval.hpp"
#include "hgrl/metrics.hpp"

namespace hgrl {

namespace svg {

// Minimal static line chart: fixed viewport, light grid, one polyline per
// series. No scripts, no external assets — the files open anywhere.
struct Series {
  std::string label;
  std::string color;
  std::vector<double> x;
  std::vector<double> y;
};

inline std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                              const std::vector<Series>& series) {
  check_contract(!series.empty(), "svg: no series to plot");
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = std::numeric_limits<double>::infinity(), ymax = -ymin;
  for (const auto& s : series) {
    check_contract(s.x.size() == s.y.size() && !s.x.empty(), "svg: series arrays disagree");
    for (double v : s.x) xmin = std::min(xmin, v), xmax = std::max(xmax, v);
    for (double v : s.y) ymin = std::min(ymin, v), ymax = std::max(ymax, v);
  }
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) ymax = ymin + 1.0;
  const double W = 640, H = 400, L = 60, R = 20, T = 36, B = 46;
  auto px = [&](double v) { return L + (v - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double v) { return H - B - (v - ymin) / (ymax - ymin) * (H - T - B); };
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << W << " " << H << "\">\n"
     << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n"
     << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
     << title << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = xmin + (xmax - xmin) * i / 4.0, fy = ymin + (ymax - ymin) * i / 4.0;
    os << "<line x1=\"" << px(fx) << "\" y1=\"" << T << "\" x2=\"" << px(fx) << "\" y2=\"" << H - B
       << "\" stroke=\"#ddd\"/>\n"
       << "<line x1=\"" << L << "\" y1=\"" << py(fy) << "\" x2=\"" << W - R << "\" y2=\"" << py(fy)
       << "\" stroke=\"#ddd\"/>\n"
       << "<text x=\"" << px(fx) << "\" y=\"" << H - B + 16
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << fx << "</text>\n"
       << "<text x=\"" << L - 6 << "\" y=\"" << py(fy) + 3
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << fy << "</text>\n";
  }
  os << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
     << "\" fill=\"none\" stroke=\"#888\"/>\n"
     << "<text x=\"" << W / 2 << "\" y=\"" << H - 10
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << x_label << "</text>\n"
     << "<text x=\"14\" y=\"" << H / 2 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\""
     << " transform=\"rotate(-90 14 " << H / 2 << ")\">" << y_label << "</text>\n";
  double legend_y = T + 14;
  for (const auto& s : series) {
    os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) os << px(s.x[i]) << "," << py(s.y[i]) << " ";
    os << "\"/>\n";
    os << "<line x1=\"" << W - R - 130 << "\" y1=\"" << legend_y << "\" x2=\"" << W - R - 110 << "\" y2=\"" << legend_y
       << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n"
       << "<text x=\"" << W - R - 104 << "\" y=\"" << legend_y + 4
       << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.label << "</text>\n";
    legend_y += 16;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace svg

inline EvalCurve read_curve_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open curve file '" + path.string() + "'");
  std::string line;
  if (!std::getline(f, line) || line != "bias,seen_acc,unseen_acc")
    throw ParseError("curve file header mismatch in '" + path.string() + "'");
  EvalCurve c;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string a, b, u;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, u))
      throw ParseError("curve file row malformed: " + line);
    c.bias.push_back(std::stod(a));
    c.seen_acc.push_back(std::stod(b));
    c.unseen_acc.push_back(std::stod(u));
  }
  c.validate();
  return c;
}

struct LossPoint {
  double step_index = 0;  // global step counter across epochs
  double total = 0;
};

inline std::vector<LossPoint> read_loss_log(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open loss log '" + path.string() + "'");
  std::vector<LossPoint> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    out.push_back({static_cast<double>(out.size() + 1), j.at("total").get<double>()});
  }
  if (out.empty()) throw ValidationError("loss log '" + path.string() + "' holds no records");
  return out;
}

// Curve image: the seen/unseen trade-off the AUC integrates.
inline std::string render_curve_svg(const EvalCurve& curve, const std::string& world) {
  svg::Series tradeoff{"unseen vs seen", "#0b62a4", curve.seen_acc, curve.unseen_acc};
  return svg::line_chart("Calibration sweep (" + world + " world)", "seen accuracy", "unseen accuracy", {tradeoff});
}

// Loss image: per-step total loss, downsampled to keep files small.
inline std::string render_loss_svg(const std::vector<LossPoint>& points) {
  const std::size_t stride = std::max<std::size_t>(1, points.size() / 1000);
  svg::Series s{"total loss", "#a43a0b", {}, {}};
  for (std::size_t i = 0; i < points.size(); i += stride) {
    s.x.push_back(points[i].step_index);
    s.y.push_back(points[i].total);
  }
  return svg::line_chart("Training loss", "step", "total loss", {s});
}

// Interpretability summary: which vocabulary words each learned group token
// sits closest to. On the synthetic benchmark this makes router mistakes
// visible at a glance; on real vocabularies it names the discovered groups.
inline std::string group_word_report(const Mat& group_tokens, const Mat& class_words,
                                     const std::vector<std::string>& names, const std::string& branch, int top_n = 3) {
  check_shape(group_tokens.cols() == class_words.cols(), "group report: token widths disagree");
  check_shape(static_cast<std::size_t>(class_words.rows()) == names.size(), "group report: names/vectors disagree");
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(3);
  for (Eigen::Index g = 0; g < group_tokens.rows(); ++g) {
    std::vector<std::pair<double, std::size_t>> sims;
    const double gn = group_tokens.row(g).norm();
    for (Eigen::Index w = 0; w < class_words.rows(); ++w) {
      const double wn = class_words.row(w).norm();
      const double cos = (gn > 0 && wn > 0) ? group_tokens.row(g).dot(class_words.row(w)) / (gn * wn) : 0.0;
      sims.emplace_back(cos, static_cast<std::size_t>(w));
    }
    std::sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    os << branch << " group " << g << ":";
    for (int i = 0; i < top_n && i < static_cast<int>(sims.size()); ++i)
      os << (i ? "," : "") << " " << names[sims[static_cast<std::size_t>(i)].second] << " (" << sims[static_cast<std::size_t>(i)].first
         << ")";
    os << "\n";
  }
  return os.str();
}

}  // namespace hgrl
