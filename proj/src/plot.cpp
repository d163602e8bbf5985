#include "watermark/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace watermark {

namespace {
constexpr int kWidth = 880;
constexpr int kHeight = 420;
constexpr int kMargin = 50;
const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
}  // namespace

void write_svg_plot(const std::string& path, const std::string& title,
                    const std::vector<PlotSeries>& series) {
  double xmin = std::numeric_limits<double>::infinity();
  double xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        continue;
      }
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (!(xmin <= xmax)) {
    xmin = 0.0;
    xmax = 1.0;
  }
  if (!(ymin <= ymax)) {
    ymin = 0.0;
    ymax = 1.0;
  }
  if (xmax == xmin) {
    xmax = xmin + 1.0;
  }
  if (ymax == ymin) {
    ymax = ymin + 1.0;
  }

  const double sx = (kWidth - 2.0 * kMargin) / (xmax - xmin);
  const double sy = (kHeight - 2.0 * kMargin) / (ymax - ymin);
  auto px = [&](double x) { return kMargin + (x - xmin) * sx; };
  auto py = [&](double y) { return kHeight - kMargin - (y - ymin) * sy; };

  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kWidth << "' height='" << kHeight
      << "'>\n<rect width='100%' height='100%' fill='white'/>\n"
      << "<text x='" << kWidth / 2 << "' y='24' text-anchor='middle' font-family='sans-serif'>"
      << title << "</text>\n"
      << "<line x1='" << kMargin << "' y1='" << kHeight - kMargin << "' x2='" << kWidth - kMargin
      << "' y2='" << kHeight - kMargin << "' stroke='black'/>\n"
      << "<line x1='" << kMargin << "' y1='" << kMargin << "' x2='" << kMargin << "' y2='"
      << kHeight - kMargin << "' stroke='black'/>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % (sizeof kColors / sizeof kColors[0])];
    svg << "<polyline fill='none' stroke='" << color << "' stroke-width='1.2' points='";
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      if (!std::isfinite(series[s].x[i]) || !std::isfinite(series[s].y[i])) {
        continue;
      }
      svg << px(series[s].x[i]) << ',' << py(series[s].y[i]) << ' ';
    }
    svg << "'/>\n<text x='" << kWidth - kMargin + 4 << "' y='" << kMargin + 16 * s
        << "' font-family='sans-serif' font-size='12' fill='" << color << "'>" << series[s].label
        << "</text>\n";
  }
  svg << "</svg>\n";

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("write_svg_plot: cannot write " + path);
  }
  out << svg.str();
}

}  // namespace watermark
