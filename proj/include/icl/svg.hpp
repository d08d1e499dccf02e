#pragma once

// Deterministic single-chart SVG line plots from CSV columns. Identical input
// produces identical bytes.

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "icl/csv.hpp"

namespace icl {

struct PlotSpec {
  std::string x_column;
  std::string y_column;
  std::string series_column;  // empty -> single series
};

inline std::string emit_plot_svg(const CsvData& data, const PlotSpec& spec) {
  const std::size_t xi = data.column_index(spec.x_column);
  const std::size_t yi = data.column_index(spec.y_column);
  const bool has_series = !spec.series_column.empty();
  const std::size_t si = has_series ? data.column_index(spec.series_column) : 0;

  std::map<std::string, std::vector<std::pair<double, double>>> series;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& row : data.rows) {
    const double x = std::stod(row.at(xi));
    const double y = std::stod(row.at(yi));
    series[has_series ? row.at(si) : ""].push_back({x, y});
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  if (xmax <= xmin) xmax = xmin + 1.0;
  if (ymax <= ymin) ymax = ymin + 1.0;
  for (auto& [_, pts] : series) std::sort(pts.begin(), pts.end());

  const double W = 640, H = 480, ml = 70, mr = 20, mt = 20, mb = 50;
  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
  auto py = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" "
         "viewBox=\"0 0 640 480\">\n";
  out << "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
  out << "<line x1=\"" << format_double(ml) << "\" y1=\"" << format_double(H - mb)
      << "\" x2=\"" << format_double(W - mr) << "\" y2=\"" << format_double(H - mb)
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << format_double(ml) << "\" y1=\"" << format_double(mt)
      << "\" x2=\"" << format_double(ml) << "\" y2=\"" << format_double(H - mb)
      << "\" stroke=\"black\"/>\n";
  auto label = [&](double vx, double vy, const std::string& text, const char* anchor) {
    out << "<text x=\"" << format_double(vx) << "\" y=\"" << format_double(vy)
        << "\" font-size=\"12\" font-family=\"monospace\" text-anchor=\"" << anchor
        << "\">" << text << "</text>\n";
  };
  label(px(xmin), H - mb + 16, format_double(xmin), "middle");
  label(px(xmax), H - mb + 16, format_double(xmax), "middle");
  label((ml + W - mr) / 2, H - 12, spec.x_column, "middle");
  label(ml - 6, py(ymin) + 4, format_double(ymin), "end");
  label(ml - 6, py(ymax) + 4, format_double(ymax), "end");
  label(ml + 4, mt + 12, spec.y_column, "start");

  int color = 0;
  double legend_y = mt + 14;
  for (const auto& [name, pts] : series) {
    const char* stroke = palette[color % 8];
    out << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i) out << ' ';
      out << format_double(px(pts[i].first)) << ',' << format_double(py(pts[i].second));
    }
    out << "\"/>\n";
    if (has_series) {
      out << "<rect x=\"" << format_double(W - mr - 130) << "\" y=\""
          << format_double(legend_y - 9) << "\" width=\"10\" height=\"10\" fill=\"" << stroke
          << "\"/>\n";
      label(W - mr - 115, legend_y, spec.series_column + "=" + name, "start");
      legend_y += 16;
    }
    ++color;
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace icl
