#pragma once

// Minimal SVG line plots: axes, ticks at the data range ends, one polyline
// per series and a legend.

#include <string>
#include <vector>

namespace immunokit::plot {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  int width = 640;
  int height = 420;
};

// Throws ValidationError on empty or mismatched series, or non-positive
// values on a log axis.
std::string render_svg(const std::vector<Series>& series, const PlotOptions& options);

}  // namespace immunokit::plot
