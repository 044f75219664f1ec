#pragma once

// Minimal SVG line plots: one panel per wheel with truth, prediction and an
// optional +-2 sigma band. Coordinates are printed with fixed precision so the
// output is byte-stable.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "dbpnet/types.hpp"

namespace dbpnet::svg {

struct Series {
  std::vector<double> t;
  std::vector<WheelLoads> truth;
  std::vector<WheelLoads> mean;
  std::vector<WheelLoads> variance;  ///< empty: no band
};

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '&') o += "&amp;";
    else if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else o += c;
  }
  return o;
}

}  // namespace detail

inline std::string wheel_load_plot(const Series& s, const std::string& title) {
  const double w = 900, panel_h = 180, left = 60, right = 20, top = 40, gap = 30;
  const double h = top + 4 * (panel_h + gap);
  std::string o;
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::num(w) + "\" height=\"" +
       detail::num(h) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o += "<text x=\"" + detail::num(left) + "\" y=\"22\" font-size=\"14\">" + detail::escape(title) + "</text>\n";
  const std::size_t n = s.t.size();
  const bool band = s.variance.size() == n && n > 0;
  const double t0 = n ? s.t.front() : 0.0, t1 = n > 1 ? s.t.back() : t0 + 1.0;
  for (int c = 0; c < 4; ++c) {
    double lo = 1e300, hi = -1e300;
    for (std::size_t i = 0; i < n; ++i) {
      const double sd = band ? 2.0 * std::sqrt(std::max(0.0, s.variance[i][c])) : 0.0;
      lo = std::min({lo, s.truth[i][c], s.mean[i][c] - sd});
      hi = std::max({hi, s.truth[i][c], s.mean[i][c] + sd});
    }
    if (!(hi > lo)) {
      lo = n ? lo - 1.0 : 0.0;
      hi = lo + 2.0;
    }
    const double y0 = top + c * (panel_h + gap);
    auto px = [&](double t) { return left + (w - left - right) * (t - t0) / (t1 - t0); };
    auto py = [&](double f) { return y0 + panel_h * (1.0 - (f - lo) / (hi - lo)); };
    o += "<g>\n<rect x=\"" + detail::num(left) + "\" y=\"" + detail::num(y0) + "\" width=\"" +
         detail::num(w - left - right) + "\" height=\"" + detail::num(panel_h) +
         "\" fill=\"none\" stroke=\"#888\"/>\n";
    o += "<text x=\"" + detail::num(left + 6) + "\" y=\"" + detail::num(y0 + 14) + "\">" +
         corner_names[static_cast<std::size_t>(c)] + "</text>\n";
    o += "<text x=\"4\" y=\"" + detail::num(y0 + 10) + "\">" + detail::num(hi) + "</text>\n";
    o += "<text x=\"4\" y=\"" + detail::num(y0 + panel_h) + "\">" + detail::num(lo) + "</text>\n";
    if (band) {
      std::string pts;
      for (std::size_t i = 0; i < n; ++i)
        pts += detail::num(px(s.t[i])) + "," +
               detail::num(py(s.mean[i][c] + 2.0 * std::sqrt(std::max(0.0, s.variance[i][c])))) + " ";
      for (std::size_t i = n; i-- > 0;)
        pts += detail::num(px(s.t[i])) + "," +
               detail::num(py(s.mean[i][c] - 2.0 * std::sqrt(std::max(0.0, s.variance[i][c])))) + " ";
      o += "<polygon points=\"" + pts + "\" fill=\"#9ecae1\" fill-opacity=\"0.5\" stroke=\"none\"/>\n";
    }
    auto line = [&](const std::vector<WheelLoads>& v, const char* color) {
      std::string pts;
      for (std::size_t i = 0; i < n; ++i) pts += detail::num(px(s.t[i])) + "," + detail::num(py(v[i][c])) + " ";
      o += std::string("<polyline points=\"") + pts + "\" fill=\"none\" stroke=\"" + color +
           "\" stroke-width=\"1\"/>\n";
    };
    line(s.truth, "#222");
    line(s.mean, "#d62728");
    o += "</g>\n";
  }
  o += "<text x=\"" + detail::num(w - 260) + "\" y=\"22\">black: truth  red: estimate" +
       std::string(band ? "  band: +-2 sd" : "") + "</text>\n";
  o += "</svg>\n";
  return o;
}

}  // namespace dbpnet::svg
