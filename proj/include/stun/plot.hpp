#ifndef STUN_PLOT_HPP_
#define STUN_PLOT_HPP_

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "stun/errors.hpp"
#include "stun/file_io.hpp"

namespace stun {

// Plots are rendered straight from arrays stored in the metrics report; no
// metric is recomputed here. Output is SVG with the source arrays embedded
// verbatim in a <desc> element so consumers (and tests) can recover exactly
// what was drawn.
namespace plot {

struct Series {
  std::vector<double> x, y;
  std::string color = "#1f77b4";
  bool dashed = false;
  std::string label;
};

inline std::string render_chart(const std::string& title,
                                const std::string& x_label,
                                const std::string& y_label,
                                const std::vector<Series>& series,
                                const nlohmann::ordered_json& source_data) {
  const double width = 640, height = 480;
  const double ml = 70, mr = 20, mt = 40, mb = 50;
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool first = true;
  for (const Series& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (first) {
        xmin = xmax = s.x[i];
        ymin = ymax = s.y[i];
        first = false;
      }
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (xmax <= xmin) xmax = xmin + 1.0;
  if (ymax <= ymin) ymax = ymin + 1.0;
  const auto sx = [&](double v) {
    return ml + (v - xmin) / (xmax - xmin) * (width - ml - mr);
  };
  const auto sy = [&](double v) {
    return height - mb - (v - ymin) / (ymax - ymin) * (height - mt - mb);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
      << height << "\">\n";
  svg << "<desc id=\"source-data\">" << source_data.dump() << "</desc>\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
      << "font-size=\"16\">" << title << "</text>\n";
  // axes
  svg << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\""
      << width - mr << "\" y2=\"" << height - mb
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
      << "\" y2=\"" << height - mb << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << (ml + width - mr) / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label
      << "</text>\n";
  svg << "<text x=\"16\" y=\"" << (mt + height - mb) / 2
      << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 "
         "16 "
      << (mt + height - mb) / 2 << ")\">" << y_label << "</text>\n";
  // min/max tick labels
  svg << "<text x=\"" << ml << "\" y=\"" << height - mb + 16
      << "\" font-size=\"10\" text-anchor=\"middle\">" << xmin << "</text>\n";
  svg << "<text x=\"" << width - mr << "\" y=\"" << height - mb + 16
      << "\" font-size=\"10\" text-anchor=\"middle\">" << xmax << "</text>\n";
  svg << "<text x=\"" << ml - 8 << "\" y=\"" << height - mb
      << "\" font-size=\"10\" text-anchor=\"end\">" << ymin << "</text>\n";
  svg << "<text x=\"" << ml - 8 << "\" y=\"" << mt + 4
      << "\" font-size=\"10\" text-anchor=\"end\">" << ymax << "</text>\n";

  double legend_y = mt + 8;
  for (const Series& s : series) {
    if (s.x.empty()) continue;
    svg << "<polyline fill=\"none\" stroke=\"" << s.color << "\" ";
    if (s.dashed) svg << "stroke-dasharray=\"6 4\" ";
    svg << "stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (i) svg << " ";
      svg << sx(s.x[i]) << "," << sy(s.y[i]);
    }
    svg << "\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      svg << "<circle cx=\"" << sx(s.x[i]) << "\" cy=\"" << sy(s.y[i])
          << "\" r=\"2.5\" fill=\"" << s.color << "\"/>\n";
    if (!s.label.empty()) {
      svg << "<text x=\"" << width - mr - 8 << "\" y=\"" << legend_y
          << "\" font-size=\"11\" text-anchor=\"end\" fill=\"" << s.color
          << "\">" << s.label << "</text>\n";
      legend_y += 14;
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

inline nlohmann::ordered_json require_field(const nlohmann::ordered_json& j,
                                            const std::string& key) {
  if (!j.contains(key) || j.at(key).is_null())
    throw DataError("metrics report is missing '" + key + "'");
  return j.at(key);
}

}  // namespace plot

// Reliability diagram: per-bin metric value against bin confidence, with the
// perfect-calibration identity line.
inline void write_reliability_svg(const nlohmann::ordered_json& report,
                                  const std::string& path) {
  const auto unc = plot::require_field(report, "uncertainty");
  if (!unc.value("available", false))
    throw DataError("report carries no uncertainty; no reliability diagram");
  const auto calib = plot::require_field(unc, "calibration");
  const std::string metric = calib.contains("r@1") ? "r@1" : "AP";
  const auto cr = calib.at(metric);

  plot::Series line;
  line.label = metric;
  for (const auto& b : cr.at("bins")) {
    line.x.push_back(b.at("confidence").get<double>());
    line.y.push_back(b.at("metric_value").get<double>());
  }
  plot::Series ident;
  ident.x = {0.0, 1.0};
  ident.y = {0.0, 1.0};
  ident.color = "#888888";
  ident.dashed = true;
  ident.label = "perfect calibration";

  nlohmann::ordered_json source;
  source["kind"] = "reliability_diagram";
  source["metric"] = metric;
  source["calibration"] = cr;
  write_file_atomic(path,
                    plot::render_chart("Reliability diagram (" + metric + ")",
                                       "confidence", metric, {ident, line},
                                       source));
}

inline void write_pr_svg(const nlohmann::ordered_json& report,
                         const std::string& path) {
  const auto pr = plot::require_field(report, "pr_curve");
  plot::Series line;
  line.x = pr.at("recall").get<std::vector<double>>();
  line.y = pr.at("precision").get<std::vector<double>>();
  line.label = "precision";
  nlohmann::ordered_json source;
  source["kind"] = "pr_curve";
  source["pr_curve"] = pr;
  write_file_atomic(path, plot::render_chart("Precision-recall curve",
                                             "recall", "precision", {line},
                                             source));
}

inline void write_removal_svg(const nlohmann::ordered_json& report,
                              const std::string& path) {
  const auto unc = plot::require_field(report, "uncertainty");
  if (!unc.value("available", false))
    throw DataError("report carries no uncertainty; no removal curve");
  const auto rm = plot::require_field(unc, "removal_curve");
  plot::Series line;
  line.x = rm.at("fractions").get<std::vector<double>>();
  line.y = rm.at("correctness").get<std::vector<double>>();
  line.label = "top-1 correctness";
  nlohmann::ordered_json source;
  source["kind"] = "removal_curve";
  source["removal_curve"] = rm;
  write_file_atomic(
      path, plot::render_chart("Uncertain-query removal",
                               "fraction of most uncertain queries removed",
                               "correctness ratio", {line}, source));
}

// Extracts the JSON blob a plot embedded in its <desc> element.
inline nlohmann::ordered_json read_svg_source_data(const std::string& path) {
  const std::string svg = read_file(path);
  const std::string open = "<desc id=\"source-data\">";
  const auto begin = svg.find(open);
  const auto end = svg.find("</desc>");
  if (begin == std::string::npos || end == std::string::npos)
    throw DataError("'" + path + "' has no embedded source data");
  return nlohmann::ordered_json::parse(
      svg.substr(begin + open.size(), end - begin - open.size()));
}

}  // namespace stun

#endif  // STUN_PLOT_HPP_
