#include "immunokit/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "immunokit/error.hpp"
#include "immunokit/textio.hpp"

namespace immunokit::plot {

namespace {

constexpr const char* kPalette[] = {"#1f4e9c", "#c0392b", "#2e8b57", "#8e44ad", "#d35400"};
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 55;

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

std::string fixed(double v) {
  std::ostringstream s;
  s.precision(2);
  s << std::fixed << v;
  return s.str();
}

std::string tick_label(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

struct Axis {
  double lo = 0, hi = 1;
  bool log = false;
  double map(double v) const {
    const double a = log ? std::log10(v) : v;
    return (a - lo) / (hi - lo);
  }
};

Axis make_axis(const std::vector<Series>& series, bool use_x, bool log) {
  Axis axis{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(), log};
  for (const auto& s : series) {
    for (double v : use_x ? s.x : s.y) {
      if (!std::isfinite(v)) throw ValidationError("plot values must be finite");
      if (log && !(v > 0.0)) throw ValidationError("log-scale axis needs positive values");
      const double a = log ? std::log10(v) : v;
      axis.lo = std::min(axis.lo, a);
      axis.hi = std::max(axis.hi, a);
    }
  }
  if (axis.hi == axis.lo) {
    axis.lo -= 0.5;
    axis.hi += 0.5;
  }
  return axis;
}

}  // namespace

std::string render_svg(const std::vector<Series>& series, const PlotOptions& opt) {
  if (series.empty()) throw ValidationError("nothing to plot");
  for (const auto& s : series) {
    if (s.x.empty() || s.x.size() != s.y.size()) {
      throw ValidationError("series '" + s.label + "' is empty or has mismatched lengths");
    }
  }
  const Axis ax = make_axis(series, true, opt.log_x);
  const Axis ay = make_axis(series, false, opt.log_y);
  const double w = opt.width, h = opt.height;
  const double pw = w - kLeft - kRight, ph = h - kTop - kBottom;
  auto px = [&](double v) { return kLeft + ax.map(v) * pw; };
  auto py = [&](double v) { return kTop + (1.0 - ay.map(v)) * ph; };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\""
      << opt.height << "\" viewBox=\"0 0 " << opt.width << ' ' << opt.height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << fixed(w / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << escape(opt.title) << "</text>\n";
  out << "<path d=\"M" << fixed(kLeft) << ' ' << fixed(kTop) << " V" << fixed(kTop + ph) << " H"
      << fixed(kLeft + pw) << "\" stroke=\"black\" fill=\"none\"/>\n";

  auto tick = [&](double frac_x, double frac_y, double value, bool is_x, bool log) {
    const double shown = log ? std::pow(10.0, value) : value;
    if (is_x) {
      const double x = kLeft + frac_x * pw;
      out << "<text x=\"" << fixed(x) << "\" y=\"" << fixed(kTop + ph + 18)
          << "\" text-anchor=\"middle\" font-size=\"11\">" << tick_label(shown) << "</text>\n";
    } else {
      const double y = kTop + (1.0 - frac_y) * ph;
      out << "<text x=\"" << fixed(kLeft - 6) << "\" y=\"" << fixed(y + 4)
          << "\" text-anchor=\"end\" font-size=\"11\">" << tick_label(shown) << "</text>\n";
    }
  };
  tick(0, 0, ax.lo, true, ax.log);
  tick(1, 0, ax.hi, true, ax.log);
  tick(0, 0, ay.lo, false, ay.log);
  tick(0, 1, ay.hi, false, ay.log);
  out << "<text x=\"" << fixed(kLeft + pw / 2) << "\" y=\"" << fixed(h - 12)
      << "\" text-anchor=\"middle\" font-size=\"13\">" << escape(opt.x_label) << "</text>\n";
  out << "<text x=\"16\" y=\"" << fixed(kTop + ph / 2) << "\" text-anchor=\"middle\" font-size=\"13\" "
      << "transform=\"rotate(-90 16 " << fixed(kTop + ph / 2) << ")\">" << escape(opt.y_label)
      << "</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* colour = kPalette[i % std::size(kPalette)];
    out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      out << (k ? " " : "") << fixed(px(s.x[k])) << ',' << fixed(py(s.y[k]));
    }
    out << "\"/>\n";
    const double ly = kTop + 14 + 16 * static_cast<double>(i);
    out << "<line x1=\"" << fixed(kLeft + 12) << "\" y1=\"" << fixed(ly) << "\" x2=\""
        << fixed(kLeft + 32) << "\" y2=\"" << fixed(ly) << "\" stroke=\"" << colour
        << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << fixed(kLeft + 38) << "\" y=\"" << fixed(ly + 4) << "\" font-size=\"12\">"
        << escape(s.label) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace immunokit::plot
