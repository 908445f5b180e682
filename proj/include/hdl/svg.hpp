#pragma once

// Minimal SVG line/area plotter for the report figures.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace hdl::svg {

struct Series {
  std::string label;
  std::vector<double> x, y;
  bool filled = false;
};

struct Plot {
  std::string title, x_label, y_label;
  std::vector<Series> series;
  double width = 640, height = 400;
};

namespace detail {

inline const char* color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  return palette[i % 8];
}

inline std::string esc(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else o += c;
  }
  return o;
}

inline std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

}  // namespace detail

inline std::string render(const Plot& p) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : p.series)
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  if (!(x0 < x1)) { x0 -= 1; x1 += 1; }
  if (!(y0 < y1)) { y0 -= 1; y1 += 1; }
  if (std::any_of(p.series.begin(), p.series.end(), [](const Series& s) { return s.filled; })) y0 = std::min(y0, 0.0);

  const double ml = 70, mr = 150, mt = 40, mb = 50;
  const double pw = p.width - ml - mr, ph = p.height - mt - mb;
  auto X = [&](double v) { return ml + (v - x0) / (x1 - x0) * pw; };
  auto Y = [&](double v) { return mt + ph - (v - y0) / (y1 - y0) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << p.width << "\" height=\"" << p.height
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << p.width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << detail::esc(p.title)
     << "</text>\n";
  os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4, yv = y0 + (y1 - y0) * k / 4;
    os << "<text x=\"" << X(xv) << "\" y=\"" << mt + ph + 16 << "\" text-anchor=\"middle\">" << detail::num(xv)
       << "</text>\n";
    os << "<text x=\"" << ml - 6 << "\" y=\"" << Y(yv) + 4 << "\" text-anchor=\"end\">" << detail::num(yv)
       << "</text>\n";
  }
  os << "<text x=\"" << ml + pw / 2 << "\" y=\"" << p.height - 10 << "\" text-anchor=\"middle\">"
     << detail::esc(p.x_label) << "</text>\n";
  os << "<text transform=\"translate(16," << mt + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << detail::esc(p.y_label) << "</text>\n";

  for (std::size_t k = 0; k < p.series.size(); ++k) {
    const auto& s = p.series[k];
    std::ostringstream pts;
    std::size_t n = 0;
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      pts << X(s.x[i]) << ',' << Y(s.y[i]) << ' ';
      ++n;
    }
    if (n == 0) continue;
    if (s.filled) {
      os << "<polygon points=\"" << X(s.x.front()) << ',' << Y(0) << ' ' << pts.str() << X(s.x.back()) << ','
         << Y(0) << "\" fill=\"" << detail::color(k) << "\" fill-opacity=\"0.3\" stroke=\"" << detail::color(k)
         << "\"/>\n";
    } else {
      os << "<polyline points=\"" << pts.str() << "\" fill=\"none\" stroke=\"" << detail::color(k)
         << "\" stroke-width=\"1.5\"/>\n";
    }
    const double ly = mt + 14 + 16 * double(k);
    os << "<rect x=\"" << ml + pw + 10 << "\" y=\"" << ly - 9 << "\" width=\"10\" height=\"10\" fill=\""
       << detail::color(k) << "\"/>\n";
    os << "<text x=\"" << ml + pw + 24 << "\" y=\"" << ly << "\">" << detail::esc(s.label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace hdl::svg
