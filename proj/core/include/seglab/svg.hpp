#pragma once

#include <string>
#include <utility>
#include <vector>

namespace seglab {

struct SvgSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

// Standalone line chart (one polyline per series, axes, legend). The output
// is well-formed XML.
void write_svg_chart(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<SvgSeries>& series);

}  // namespace seglab
