#include "scdm/errors.hpp"
#include "scdm/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>

namespace scdm::pipeline {

namespace {

constexpr int kCanvas = 800;
constexpr int kMargin = 50;

constexpr std::array<const char*, 10> kPalette = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
constexpr const char* kUnlabelled = "#404040";

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Frame {
  double x0, x1, y0, y1;

  double px(double x) const { return kMargin + (x - x0) / (x1 - x0) * (kCanvas - 2 * kMargin); }
  double py(double y) const { return kCanvas - kMargin - (y - y0) / (y1 - y0) * (kCanvas - 2 * kMargin); }
};

Frame padded(double x0, double x1, double y0, double y1) {
  if (!(x1 > x0)) {
    x0 -= 1.0;
    x1 += 1.0;
  }
  if (!(y1 > y0)) {
    y0 -= 1.0;
    y1 += 1.0;
  }
  const double px = 0.05 * (x1 - x0);
  const double py = 0.05 * (y1 - y0);
  return {x0 - px, x1 + px, y0 - py, y1 + py};
}

std::string header(const std::string& title) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"800\" viewBox=\"0 0 800 800\">\n";
  s += "<rect width=\"800\" height=\"800\" fill=\"#ffffff\"/>\n";
  s += "<text x=\"400\" y=\"30\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" +
       escape(title) + "</text>\n";
  return s;
}

std::string axes(const Frame& f, const std::string& xlabel, const std::string& ylabel) {
  const std::string lo = std::to_string(kMargin);
  const std::string hi = std::to_string(kCanvas - kMargin);
  std::string s = "<g stroke=\"#000000\" stroke-width=\"1\">\n";
  s += "<line x1=\"" + lo + "\" y1=\"" + hi + "\" x2=\"" + hi + "\" y2=\"" + hi + "\"/>\n";
  s += "<line x1=\"" + lo + "\" y1=\"" + hi + "\" x2=\"" + lo + "\" y2=\"" + lo + "\"/>\n";
  s += "</g>\n";
  s += "<g font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<text x=\"" + lo + "\" y=\"" + std::to_string(kCanvas - kMargin + 18) + "\">" + fmt(f.x0) + "</text>\n";
  s += "<text x=\"" + hi + "\" y=\"" + std::to_string(kCanvas - kMargin + 18) + "\" text-anchor=\"end\">" + fmt(f.x1) +
       "</text>\n";
  s += "<text x=\"" + std::to_string(kMargin - 4) + "\" y=\"" + hi + "\" text-anchor=\"end\">" + fmt(f.y0) + "</text>\n";
  s += "<text x=\"" + std::to_string(kMargin - 4) + "\" y=\"" + std::to_string(kMargin + 10) + "\" text-anchor=\"end\">" +
       fmt(f.y1) + "</text>\n";
  s += "<text x=\"400\" y=\"" + std::to_string(kCanvas - 12) + "\" text-anchor=\"middle\">" + escape(xlabel) + "</text>\n";
  s += "<text x=\"16\" y=\"400\" text-anchor=\"middle\" transform=\"rotate(-90 16 400)\">" + escape(ylabel) +
       "</text>\n";
  s += "</g>\n";
  return s;
}

}  // namespace

std::string scatter_svg(const numkit::ConstMatrixRef& x, const std::vector<int>& labels, std::size_t d_informative,
                        const std::string& title) {
  if (d_informative != 2) {
    throw UnsupportedDim("scatter_svg: plots need d_informative = 2, got " + std::to_string(d_informative));
  }
  if (x.rows() > 0 && x.cols() < 2) throw UnsupportedDim("scatter_svg: need at least two columns");
  if (!labels.empty() && labels.size() != static_cast<std::size_t>(x.rows())) {
    throw DimensionMismatch("scatter_svg: one label per row");
  }
  Frame f = padded(-1.0, 1.0, -1.0, 1.0);
  if (x.rows() > 0) f = padded(x.col(0).minCoeff(), x.col(0).maxCoeff(), x.col(1).minCoeff(), x.col(1).maxCoeff());
  std::string s = header(title) + axes(f, "dim_0", "dim_1");
  s += "<g stroke=\"none\" fill-opacity=\"0.6\">\n";
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int l = labels.empty() ? -1 : labels[static_cast<std::size_t>(i)];
    const char* colour = l < 0 ? kUnlabelled : kPalette[static_cast<std::size_t>(l) % kPalette.size()];
    s += "<circle cx=\"" + fmt(f.px(x(i, 0))) + "\" cy=\"" + fmt(f.py(x(i, 1))) + "\" r=\"2\" fill=\"" + colour + "\"/>\n";
  }
  s += "</g>\n</svg>\n";
  return s;
}

std::string ablation_svg(const std::vector<AblationRow>& rows, const std::string& metric) {
  std::vector<std::string> values;
  std::map<std::string, std::vector<double>> by_value;
  std::string axis;
  for (const auto& r : rows) {
    if (r.metric != metric) continue;
    axis = r.axis;
    if (!by_value.count(r.value)) values.push_back(r.value);
    by_value[r.value].push_back(r.metric_value);
  }
  double lo = 0.0;
  double hi = 1.0;
  bool first = true;
  for (const auto& [v, ys] : by_value) {
    for (double y : ys) {
      if (!std::isfinite(y)) continue;
      lo = first ? y : std::min(lo, y);
      hi = first ? y : std::max(hi, y);
      first = false;
    }
  }
  const Frame f = padded(-0.5, static_cast<double>(std::max<std::size_t>(values.size(), 1)) - 0.5, std::min(lo, 0.0), hi);
  std::string s = header(metric + " by " + axis) + axes(f, axis, metric);
  s += "<g font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    s += "<text x=\"" + fmt(f.px(static_cast<double>(i))) + "\" y=\"" + std::to_string(kCanvas - kMargin + 34) + "\">" +
         escape(values[i]) + "</text>\n";
  }
  s += "</g>\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto& ys = by_value[values[i]];
    const char* colour = kPalette[i % kPalette.size()];
    double sum = 0.0;
    std::size_t n = 0;
    for (double y : ys) {
      if (!std::isfinite(y)) continue;
      s += "<circle cx=\"" + fmt(f.px(static_cast<double>(i))) + "\" cy=\"" + fmt(f.py(y)) + "\" r=\"2\" fill=\"" +
           colour + "\"/>\n";
      sum += y;
      ++n;
    }
    if (n > 0) {
      const double mean = sum / static_cast<double>(n);
      s += "<line x1=\"" + fmt(f.px(static_cast<double>(i) - 0.2)) + "\" y1=\"" + fmt(f.py(mean)) + "\" x2=\"" +
           fmt(f.px(static_cast<double>(i) + 0.2)) + "\" y2=\"" + fmt(f.py(mean)) + "\" stroke=\"" + colour +
           "\" stroke-width=\"2\"/>\n";
    }
  }
  s += "</svg>\n";
  return s;
}

PlotInput read_plot_input(const fs::path& csv_path) {
  const io::CsvTable t = io::read_csv(csv_path);
  if (t.header.empty() || (t.header.back() != "label" && t.header.back() != "condition")) {
    throw IoError(csv_path.string() + ": expected a trailing label or condition column");
  }
  const std::size_t d = t.header.size() - 1;
  PlotInput in;
  in.x = numkit::Matrix(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) in.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = io::parse_double(t.rows[i][j]);
    in.labels.push_back(static_cast<int>(io::parse_int(t.rows[i][d])));
  }
  in.d_informative = d;
  const fs::path meta = synth::sidecar_path(csv_path);
  if (fs::exists(meta)) in.d_informative = io::read_json(meta).value("d_informative", d);
  return in;
}

}  // namespace scdm::pipeline
