#pragma once

#include <string>
#include <vector>

namespace psmpc::plot {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  /// Draw as a zero-order-hold staircase.
  bool step = false;
};

struct Figure {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  /// Optional category names for integer y values (switching traces).
  std::vector<std::string> y_categories;
};

/// Self-contained SVG line plot.
std::string ToSvg(const Figure& fig, int width = 800, int height = 420);

/// Column-per-series CSV; all series must share the same x samples.
std::string ToCsv(const Figure& fig);

}  // namespace psmpc::plot
