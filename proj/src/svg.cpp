#include "alignlab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "alignlab/types.hpp"

namespace alignlab::svg {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
constexpr int kMarginLeft = 70;
constexpr int kMarginRight = 150;
constexpr int kMarginTop = 40;
constexpr int kMarginBottom = 50;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  return buf;
}

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

struct Axis {
  double lo = 0.0;
  double hi = 1.0;
  bool log = false;
  double px_lo = 0.0;
  double px_hi = 1.0;

  [[nodiscard]] double map(double v) const {
    const double t = log ? (std::log10(v) - std::log10(lo)) / (std::log10(hi) - std::log10(lo))
                         : (v - lo) / (hi - lo);
    return px_lo + t * (px_hi - px_lo);
  }

  [[nodiscard]] std::vector<double> ticks() const {
    std::vector<double> out;
    if (log) {
      for (double e = std::floor(std::log10(lo)); e <= std::ceil(std::log10(hi)); e += 1.0) {
        const double v = std::pow(10.0, e);
        if (v >= lo * (1 - 1e-12) && v <= hi * (1 + 1e-12)) out.push_back(v);
      }
      if (out.size() < 2) out = {lo, hi};
      return out;
    }
    for (int i = 0; i <= 5; ++i) out.push_back(lo + (hi - lo) * i / 5.0);
    return out;
  }
};

Axis fit_axis(std::vector<double> values, bool log, double px_lo, double px_hi) {
  Axis ax;
  ax.log = log;
  ax.px_lo = px_lo;
  ax.px_hi = px_hi;
  if (log) std::erase_if(values, [](double v) { return !(v > 0.0); });
  std::erase_if(values, [](double v) { return !std::isfinite(v); });
  if (values.empty()) return ax;
  ax.lo = *std::min_element(values.begin(), values.end());
  ax.hi = *std::max_element(values.begin(), values.end());
  if (ax.hi == ax.lo) {
    if (log) {
      ax.lo /= 2.0;
      ax.hi *= 2.0;
    } else {
      ax.lo -= 0.5;
      ax.hi += 0.5;
    }
  } else if (!log) {
    const double pad = 0.05 * (ax.hi - ax.lo);
    ax.lo -= pad;
    ax.hi += pad;
  }
  return ax;
}

void frame(std::ostringstream& o, int width, int height, const std::string& title) {
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  o << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
    << "</text>\n";
}

void axes(std::ostringstream& o, const Axis& x, const Axis& y, const std::string& xl,
          const std::string& yl, int width, int height) {
  const double x0 = kMarginLeft;
  const double y0 = height - kMarginBottom;
  o << "<g stroke=\"black\" fill=\"none\">"
    << "<line x1=\"" << num(x0) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(width - kMarginRight)
    << "\" y2=\"" << num(y0) << "\"/>"
    << "<line x1=\"" << num(x0) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(x0) << "\" y2=\""
    << kMarginTop << "\"/></g>\n";
  for (double t : x.ticks()) {
    o << "<text x=\"" << num(x.map(t)) << "\" y=\"" << num(y0 + 16) << "\" text-anchor=\"middle\">"
      << tick_label(t) << "</text>\n";
  }
  for (double t : y.ticks()) {
    o << "<text x=\"" << num(x0 - 6) << "\" y=\"" << num(y.map(t) + 4) << "\" text-anchor=\"end\">"
      << tick_label(t) << "</text>\n";
  }
  o << "<text x=\"" << num((x0 + width - kMarginRight) / 2) << "\" y=\"" << height - 12
    << "\" text-anchor=\"middle\">" << escape(xl) << "</text>\n";
  o << "<text x=\"16\" y=\"" << num((y0 + kMarginTop) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << num((y0 + kMarginTop) / 2) << ")\">" << escape(yl) << "</text>\n";
}

}  // namespace

std::string render(const LineChart& chart, int width, int height) {
  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& s : chart.series) {
    if (s.x.size() != s.y.size()) throw DimensionError("svg series '" + s.label + "' has mismatched x/y");
    xs.insert(xs.end(), s.x.begin(), s.x.end());
    ys.insert(ys.end(), s.y.begin(), s.y.end());
  }
  for (const auto& h : chart.hlines) ys.push_back(h.y);
  const Axis x = fit_axis(xs, chart.log_x, kMarginLeft, width - kMarginRight);
  const Axis y = fit_axis(ys, chart.log_y, height - kMarginBottom, kMarginTop);
  auto usable = [&](double vx, double vy) {
    return std::isfinite(vx) && std::isfinite(vy) && (!chart.log_x || vx > 0.0) && (!chart.log_y || vy > 0.0);
  };

  std::ostringstream o;
  frame(o, width, height, chart.title);
  axes(o, x, y, chart.x_label, chart.y_label, width, height);

  std::size_t idx = 0;
  double legend_y = kMarginTop + 10;
  auto legend = [&](const std::string& label, const char* color, bool dashed) {
    const double lx = width - kMarginRight + 10;
    o << "<line x1=\"" << num(lx) << "\" y1=\"" << num(legend_y) << "\" x2=\"" << num(lx + 20) << "\" y2=\""
      << num(legend_y) << "\" stroke=\"" << color << "\" stroke-width=\"2\""
      << (dashed ? " stroke-dasharray=\"5,3\"" : "") << "/>";
    o << "<text x=\"" << num(lx + 26) << "\" y=\"" << num(legend_y + 4) << "\">" << escape(label) << "</text>\n";
    legend_y += 18;
  };

  for (const auto& h : chart.hlines) {
    const char* color = kPalette[idx++ % std::size(kPalette)];
    if (!usable(x.lo, h.y)) continue;
    o << "<line class=\"hline\" x1=\"" << num(x.px_lo) << "\" y1=\"" << num(y.map(h.y)) << "\" x2=\""
      << num(x.px_hi) << "\" y2=\"" << num(y.map(h.y)) << "\" stroke=\"" << color
      << "\" stroke-dasharray=\"2,3\"/>\n";
    legend(h.label, color, true);
  }
  for (const auto& s : chart.series) {
    const char* color = kPalette[idx++ % std::size(kPalette)];
    o << "<polyline class=\"series\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\""
      << (s.dashed ? " stroke-dasharray=\"5,3\"" : "") << " points=\"";
    bool first = true;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!usable(s.x[i], s.y[i])) continue;
      o << (first ? "" : " ") << num(x.map(s.x[i])) << ',' << num(y.map(s.y[i]));
      first = false;
    }
    o << "\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!usable(s.x[i], s.y[i])) continue;
      o << "<circle cx=\"" << num(x.map(s.x[i])) << "\" cy=\"" << num(y.map(s.y[i])) << "\" r=\"3\" fill=\""
        << color << "\"/>\n";
    }
    legend(s.label, color, s.dashed);
  }
  o << "</svg>\n";
  return o.str();
}

std::string render(const Histogram& hist, int width, int height) {
  if (hist.edges.size() != hist.counts.size() + 1 || hist.counts.empty()) {
    throw DimensionError("svg histogram needs counts.size() + 1 edges");
  }
  const double top = std::max(1.0, *std::max_element(hist.counts.begin(), hist.counts.end()));
  const Axis x = fit_axis({hist.edges.front(), hist.edges.back()}, false, kMarginLeft, width - kMarginRight);
  Axis y;
  y.lo = 0.0;
  y.hi = top * 1.05;
  y.px_lo = height - kMarginBottom;
  y.px_hi = kMarginTop;

  std::ostringstream o;
  frame(o, width, height, hist.title);
  axes(o, x, y, hist.x_label, "count", width, height);
  for (std::size_t b = 0; b < hist.counts.size(); ++b) {
    const double x0 = x.map(hist.edges[b]);
    const double x1 = x.map(hist.edges[b + 1]);
    const double yt = y.map(hist.counts[b]);
    o << "<rect class=\"bar\" data-count=\"" << exact(hist.counts[b]) << "\" x=\"" << num(x0) << "\" y=\""
      << num(yt) << "\" width=\"" << num(std::max(0.0, x1 - x0 - 1.0)) << "\" height=\""
      << num(y.px_lo - yt) << "\" fill=\"" << kPalette[0] << "\"/>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace alignlab::svg
