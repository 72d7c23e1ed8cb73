// Copyright 2026 The cm2sim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

// Self-contained SVG line plots and histograms: axes, ticks, legend, and
// polylines, no external plotting dependency. Non-finite samples break the
// polyline instead of being drawn.

namespace cm2 {

namespace svgdetail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                 "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  return colors[i % 8];
}

struct Frame {
  double x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;
  int width = 760, height = 440;
  static constexpr int ml = 64, mr = 16, mt = 30, mb = 46;

  double px(double x) const {
    return ml + (x - x_lo) / (x_hi - x_lo) * (width - ml - mr);
  }
  double py(double y) const {
    return height - mb - (y - y_lo) / (y_hi - y_lo) * (height - mt - mb);
  }
};

inline void pad_range(double& lo, double& hi) {
  if (!(hi > lo)) {
    const double c = lo;
    lo = c - 1.0;
    hi = c + 1.0;
    return;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
}

inline std::string axes(const Frame& f, const std::string& title, const std::string& xlabel,
                        const std::string& ylabel) {
  std::string s;
  s += "<rect x='" + num(Frame::ml) + "' y='" + num(Frame::mt) + "' width='" +
       num(f.width - Frame::ml - Frame::mr) + "' height='" +
       num(f.height - Frame::mt - Frame::mb) +
       "' fill='none' stroke='#333' stroke-width='1'/>\n";
  for (int k = 0; k <= 5; ++k) {
    const double xv = f.x_lo + k * (f.x_hi - f.x_lo) / 5.0;
    const double yv = f.y_lo + k * (f.y_hi - f.y_lo) / 5.0;
    s += "<line x1='" + num(f.px(xv)) + "' y1='" + num(f.height - Frame::mb) + "' x2='" +
         num(f.px(xv)) + "' y2='" + num(f.height - Frame::mb + 4) + "' stroke='#333'/>\n";
    s += "<text x='" + num(f.px(xv)) + "' y='" + num(f.height - Frame::mb + 16) +
         "' font-size='10' text-anchor='middle'>" + num(xv) + "</text>\n";
    s += "<line x1='" + num(Frame::ml - 4) + "' y1='" + num(f.py(yv)) + "' x2='" +
         num(Frame::ml) + "' y2='" + num(f.py(yv)) + "' stroke='#333'/>\n";
    s += "<text x='" + num(Frame::ml - 6) + "' y='" + num(f.py(yv) + 3) +
         "' font-size='10' text-anchor='end'>" + num(yv) + "</text>\n";
  }
  s += "<text x='" + num((Frame::ml + f.width - Frame::mr) / 2.0) + "' y='16' font-size='13' "
       "text-anchor='middle'>" + title + "</text>\n";
  s += "<text x='" + num((Frame::ml + f.width - Frame::mr) / 2.0) + "' y='" +
       num(f.height - 8) + "' font-size='11' text-anchor='middle'>" + xlabel + "</text>\n";
  s += "<text x='14' y='" + num((Frame::mt + f.height - Frame::mb) / 2.0) +
       "' font-size='11' text-anchor='middle' transform='rotate(-90 14 " +
       num((Frame::mt + f.height - Frame::mb) / 2.0) + ")'>" + ylabel + "</text>\n";
  return s;
}

}  // namespace svgdetail

/// Multi-series line plot; call add_series, then render to a file.
class LinePlot {
 public:
  LinePlot(std::string title, std::string xlabel, std::string ylabel)
      : title_(std::move(title)), xlabel_(std::move(xlabel)), ylabel_(std::move(ylabel)) {}

  void add_series(const std::string& name, const std::vector<double>& x,
                  const std::vector<double>& y) {
    series_.push_back({name, x, y});
  }

  std::string render(const std::string& comment = {}, int width = 760,
                     int height = 440) const {
    svgdetail::Frame f;
    f.width = width;
    f.height = height;
    f.x_lo = f.y_lo = std::numeric_limits<double>::infinity();
    f.x_hi = f.y_hi = -std::numeric_limits<double>::infinity();
    for (const auto& s : series_)
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        f.x_lo = std::min(f.x_lo, s.x[i]);
        f.x_hi = std::max(f.x_hi, s.x[i]);
        f.y_lo = std::min(f.y_lo, s.y[i]);
        f.y_hi = std::max(f.y_hi, s.y[i]);
      }
    if (!std::isfinite(f.x_lo)) {
      f.x_lo = f.y_lo = 0;
      f.x_hi = f.y_hi = 1;
    }
    svgdetail::pad_range(f.x_lo, f.x_hi);
    svgdetail::pad_range(f.y_lo, f.y_hi);

    std::string s = "<svg xmlns='http://www.w3.org/2000/svg' width='" +
                    std::to_string(width) + "' height='" + std::to_string(height) + "'>\n";
    if (!comment.empty()) s += "<!-- " + comment + " -->\n";
    s += "<rect width='100%' height='100%' fill='white'/>\n";
    s += svgdetail::axes(f, title_, xlabel_, ylabel_);
    for (std::size_t k = 0; k < series_.size(); ++k) {
      const auto& sr = series_[k];
      std::string pts;
      bool open = false;
      for (std::size_t i = 0; i < sr.x.size(); ++i) {
        if (!std::isfinite(sr.x[i]) || !std::isfinite(sr.y[i])) {
          if (open) {
            s += polyline(pts, k);
            pts.clear();
            open = false;
          }
          continue;
        }
        pts += svgdetail::num(f.px(sr.x[i])) + "," + svgdetail::num(f.py(sr.y[i])) + " ";
        open = true;
      }
      if (open) s += polyline(pts, k);
      // legend entry
      const double ly = svgdetail::Frame::mt + 14.0 + 14.0 * static_cast<double>(k);
      const double lx = width - svgdetail::Frame::mr - 130.0;
      s += "<line x1='" + svgdetail::num(lx) + "' y1='" + svgdetail::num(ly - 3) + "' x2='" +
           svgdetail::num(lx + 18) + "' y2='" + svgdetail::num(ly - 3) + "' stroke='" +
           svgdetail::palette(k) + "' stroke-width='2'/>\n";
      s += "<text x='" + svgdetail::num(lx + 22) + "' y='" + svgdetail::num(ly) +
           "' font-size='10'>" + sr.name + "</text>\n";
    }
    s += "</svg>\n";
    return s;
  }

  void write(const std::string& path, const std::string& comment = {}) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << render(comment);
  }

 private:
  struct Series {
    std::string name;
    std::vector<double> x, y;
  };

  static std::string polyline(const std::string& pts, std::size_t k) {
    return "<polyline points='" + pts + "' fill='none' stroke='" +
           std::string(svgdetail::palette(k)) + "' stroke-width='1.5'/>\n";
  }

  std::string title_, xlabel_, ylabel_;
  std::vector<Series> series_;
};

/// Histogram bar chart over explicit bin edges (edges.size() == counts.size() + 1).
inline std::string render_histogram(const std::string& title, const std::string& xlabel,
                                    const std::vector<double>& edges,
                                    const std::vector<std::size_t>& counts,
                                    const std::string& comment = {}, int width = 560,
                                    int height = 400) {
  svgdetail::Frame f;
  f.width = width;
  f.height = height;
  std::size_t peak = 1;
  for (std::size_t c : counts) peak = std::max(peak, c);
  f.x_lo = edges.empty() ? 0.0 : edges.front();
  f.x_hi = edges.empty() ? 1.0 : edges.back();
  f.y_lo = 0.0;
  f.y_hi = static_cast<double>(peak);
  svgdetail::pad_range(f.y_lo, f.y_hi);
  f.y_lo = 0.0;
  if (!(f.x_hi > f.x_lo)) f.x_hi = f.x_lo + 1.0;

  std::string s = "<svg xmlns='http://www.w3.org/2000/svg' width='" + std::to_string(width) +
                  "' height='" + std::to_string(height) + "'>\n";
  if (!comment.empty()) s += "<!-- " + comment + " -->\n";
  s += "<rect width='100%' height='100%' fill='white'/>\n";
  s += svgdetail::axes(f, title, xlabel, "count");
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double x0 = f.px(edges[i]);
    const double x1 = f.px(edges[i + 1]);
    const double y = f.py(static_cast<double>(counts[i]));
    s += "<rect x='" + svgdetail::num(x0) + "' y='" + svgdetail::num(y) + "' width='" +
         svgdetail::num(std::max(x1 - x0 - 1.0, 0.5)) + "' height='" +
         svgdetail::num(f.py(0.0) - y) + "' fill='#1f77b4' stroke='none'/>\n";
  }
  s += "</svg>\n";
  return s;
}

}  // namespace cm2
