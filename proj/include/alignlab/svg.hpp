#pragma once

#include <string>
#include <vector>

namespace alignlab::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool dashed = false;
};

struct HLine {
  std::string label;
  double y = 0.0;
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<Series> series;
  std::vector<HLine> hlines;
};

struct Histogram {
  std::string title;
  std::string x_label;
  std::vector<double> edges;  // counts.size() + 1
  std::vector<double> counts;
};

/// Deterministic SVG text. Non-positive values are dropped on log axes.
std::string render(const LineChart& chart, int width = 640, int height = 420);
std::string render(const Histogram& hist, int width = 640, int height = 420);

}  // namespace alignlab::svg
