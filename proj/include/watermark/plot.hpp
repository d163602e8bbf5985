#pragma once

#include <string>
#include <vector>

namespace watermark {

struct PlotSeries {
  std::string label;
  std::vector<double> x, y;
};

/// Writes a minimal self-contained SVG line chart. Good enough to eyeball
/// statistic traces and detection-rate curves without a plotting stack.
void write_svg_plot(const std::string& path, const std::string& title,
                    const std::vector<PlotSeries>& series);

}  // namespace watermark
