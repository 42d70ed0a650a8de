#include "sepsis/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "sepsis/util.hpp"

namespace sepsis::svg {

namespace {

constexpr double kWidth = 640, kHeight = 480;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 55;

struct Range {
  double lo = 0, hi = 1;
  double map(double v, double a, double b) const {
    if (hi <= lo) return a;
    return a + (v - lo) / (hi - lo) * (b - a);
  }
};

std::string fmt_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return std::string(buf);
}

}  // namespace

Series from_curve(const eval::Curve& curve, const std::string& name, const std::string& color) {
  Series s;
  s.name = name;
  s.color = color;
  for (const auto& p : curve.points) s.points.emplace_back(p.x, p.y);
  return s;
}

void write_line_plot(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<Series>& series, bool include_diagonal) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);

  Range xr{std::numeric_limits<double>::max(), std::numeric_limits<double>::lowest()};
  Range yr = xr;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      xr.lo = std::min(xr.lo, x);
      xr.hi = std::max(xr.hi, x);
      yr.lo = std::min(yr.lo, y);
      yr.hi = std::max(yr.hi, y);
    }
  }
  if (xr.lo > xr.hi) xr = {0, 1};
  if (yr.lo > yr.hi) yr = {0, 1};
  if (xr.lo == xr.hi) xr.hi = xr.lo + 1;
  if (yr.lo == yr.hi) yr.hi = yr.lo + 1;
  // pad y a little
  const double ypad = (yr.hi - yr.lo) * 0.05;
  yr.lo -= ypad;
  yr.hi += ypad;

  auto px = [&](double x) { return xr.map(x, kLeft, kWidth - kRight); };
  auto py = [&](double y) { return yr.map(y, kHeight - kBottom, kTop); };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"16\" "
         "font-family=\"sans-serif\">" << title << "</text>\n";

  // axes
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
      << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\""
      << kWidth - kRight << "\" y2=\"" << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double fx = xr.lo + (xr.hi - xr.lo) * i / 5.0;
    const double fy = yr.lo + (yr.hi - yr.lo) * i / 5.0;
    out << "<text x=\"" << px(fx) << "\" y=\"" << kHeight - kBottom + 18
        << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">"
        << fmt_tick(fx) << "</text>\n";
    out << "<text x=\"" << kLeft - 8 << "\" y=\"" << py(fy) + 4
        << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << fmt_tick(fy)
        << "</text>\n";
    out << "<line x1=\"" << kLeft << "\" y1=\"" << py(fy) << "\" x2=\"" << kWidth - kRight
        << "\" y2=\"" << py(fy) << "\" stroke=\"#eeeeee\"/>\n";
  }
  out << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">" << x_label
      << "</text>\n";
  out << "<text x=\"16\" y=\"" << kHeight / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\" "
         "transform=\"rotate(-90 16 " << kHeight / 2 << ")\">" << y_label << "</text>\n";

  if (include_diagonal) {
    out << "<line x1=\"" << px(std::max(xr.lo, yr.lo)) << "\" y1=\"" << py(std::max(xr.lo, yr.lo))
        << "\" x2=\"" << px(std::min(xr.hi, yr.hi)) << "\" y2=\"" << py(std::min(xr.hi, yr.hi))
        << "\" stroke=\"#999999\" stroke-dasharray=\"5,4\"/>\n";
  }

  double legend_y = kTop + 8;
  for (const auto& s : series) {
    out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.6\" points=\"";
    for (const auto& [x, y] : s.points) out << px(x) << ',' << py(y) << ' ';
    out << "\"/>\n";
    out << "<line x1=\"" << kWidth - kRight - 150 << "\" y1=\"" << legend_y << "\" x2=\""
        << kWidth - kRight - 126 << "\" y2=\"" << legend_y << "\" stroke=\"" << s.color
        << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << kWidth - kRight - 120 << "\" y=\"" << legend_y + 4
        << "\" font-size=\"12\" font-family=\"sans-serif\">" << s.name << "</text>\n";
    legend_y += 16;
  }
  out << "</svg>\n";
}

}  // namespace sepsis::svg
