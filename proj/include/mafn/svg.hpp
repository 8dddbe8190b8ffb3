#ifndef MAFN_SVG_HPP
#define MAFN_SVG_HPP

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace mafn {

struct LineSeries {
  std::string label;
  std::string color;
  std::vector<std::pair<double, double>> points;
};

/// Vertical dashed line at x.
struct VerticalMarker {
  std::string label;
  std::string color;
  double x = 0.0;
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<LineSeries> series;
  std::vector<VerticalMarker> markers;
  int width = 800;
  int height = 450;
};

/// Standalone SVG document; output depends only on the chart contents.
void write_svg(std::ostream& os, const LineChart& chart);

std::string xml_escape(const std::string& text);

}  // namespace mafn

#endif  // MAFN_SVG_HPP
