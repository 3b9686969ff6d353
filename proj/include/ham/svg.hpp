#pragma once
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ham/analytics.hpp"
#include "ham/trace.hpp"

// Dependency-free SVG plots. Output is built from pure string formatting, so
// rendering the same trace twice is byte-identical and diffs cleanly in tests.

namespace ham {

namespace svgdetail {

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct Frame {
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  static constexpr double width = 800, height = 500;
  static constexpr double left = 70, right = 775, top = 25, bottom = 455;

  double px(double x) const { return left + (x - xmin) / (xmax - xmin) * (right - left); }
  double py(double y) const { return bottom - (y - ymin) / (ymax - ymin) * (bottom - top); }

  void pad_y() {
    if (ymax == ymin) {
      ymax += 1.0;
      ymin -= 1.0;
    } else {
      const double pad = 0.05 * (ymax - ymin);
      ymax += pad;
      ymin -= pad;
    }
  }
};

// Gray ramp: earlier series lighter, later darker (sequence ordering).
inline std::string ramp_color(std::size_t index, std::size_t count) {
  const int hi = 185, lo = 15;
  const int v = count <= 1 ? lo : hi - int((hi - lo) * double(index) / double(count - 1));
  std::ostringstream os;
  os << "rgb(" << v << "," << v << "," << v << ")";
  return os.str();
}

class Canvas {
 public:
  explicit Canvas(Frame f, const std::string& title, const std::string& xlabel,
                  const std::string& ylabel)
      : f_(f) {
    out_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << Frame::width << "\" height=\""
         << Frame::height << "\" viewBox=\"0 0 " << Frame::width << " " << Frame::height << "\">\n";
    out_ << "<rect width=\"" << Frame::width << "\" height=\"" << Frame::height
         << "\" fill=\"white\"/>\n";
    text(Frame::width / 2, 16, title, 14, "middle");
    text((Frame::left + Frame::right) / 2, Frame::height - 8, xlabel, 12, "middle");
    out_ << "<text x=\"14\" y=\"" << (Frame::top + Frame::bottom) / 2
         << "\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
         << (Frame::top + Frame::bottom) / 2 << ")\">" << escape(ylabel) << "</text>\n";
    axes();
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color,
                bool dashed = false, double width = 1.5) {
    if (pts.empty()) return;
    out_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << num(width) << "\"";
    if (dashed) out_ << " stroke-dasharray=\"6,4\"";
    out_ << " points=\"";
    for (const auto& [x, y] : pts) out_ << num(f_.px(x)) << ',' << num(f_.py(y)) << ' ';
    out_ << "\"/>\n";
  }

  void circle(double x, double y, const std::string& color, double r = 4.0) {
    out_ << "<circle cx=\"" << num(f_.px(x)) << "\" cy=\"" << num(f_.py(y)) << "\" r=\"" << num(r)
         << "\" fill=\"" << color << "\" stroke=\"black\" stroke-width=\"0.75\"/>\n";
  }

  void legend(const std::vector<std::pair<std::string, std::string>>& entries) {
    double y = Frame::top + 14;
    for (const auto& [label, color] : entries) {
      out_ << "<line x1=\"" << Frame::left + 8 << "\" y1=\"" << num(y - 4) << "\" x2=\""
           << Frame::left + 34 << "\" y2=\"" << num(y - 4) << "\" stroke=\"" << color
           << "\" stroke-width=\"2\"/>\n";
      text(Frame::left + 40, y, label, 11, "start");
      y += 15;
    }
  }

  std::string finish() {
    out_ << "</svg>\n";
    return out_.str();
  }

 private:
  Frame f_;
  std::ostringstream out_;

  static std::string escape(const std::string& s) {
    std::string o;
    for (char c : s) {
      if (c == '<') o += "&lt;";
      else if (c == '>') o += "&gt;";
      else if (c == '&') o += "&amp;";
      else o += c;
    }
    return o;
  }

  void text(double x, double y, const std::string& s, int size, const std::string& anchor) {
    out_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-family=\"monospace\" font-size=\""
         << size << "\" text-anchor=\"" << anchor << "\">" << escape(s) << "</text>\n";
  }

  void axes() {
    out_ << "<line x1=\"" << Frame::left << "\" y1=\"" << Frame::bottom << "\" x2=\"" << Frame::right
         << "\" y2=\"" << Frame::bottom << "\" stroke=\"black\"/>\n";
    out_ << "<line x1=\"" << Frame::left << "\" y1=\"" << Frame::top << "\" x2=\"" << Frame::left
         << "\" y2=\"" << Frame::bottom << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 5; ++i) {
      const double xv = f_.xmin + (f_.xmax - f_.xmin) * i / 5.0;
      const double yv = f_.ymin + (f_.ymax - f_.ymin) * i / 5.0;
      const double xp = f_.px(xv), yp = f_.py(yv);
      out_ << "<line x1=\"" << num(xp) << "\" y1=\"" << Frame::bottom << "\" x2=\"" << num(xp)
           << "\" y2=\"" << Frame::bottom + 5 << "\" stroke=\"black\"/>\n";
      text(xp, Frame::bottom + 18, num(xv), 10, "middle");
      out_ << "<line x1=\"" << Frame::left - 5 << "\" y1=\"" << num(yp) << "\" x2=\"" << Frame::left
           << "\" y2=\"" << num(yp) << "\" stroke=\"black\"/>\n";
      text(Frame::left - 8, yp + 3, num(yv), 10, "end");
    }
  }
};

inline std::vector<std::pair<double, double>> curve_points(const std::vector<double>& v) {
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < v.size(); ++i) pts.emplace_back(double(i), v[i]);
  return pts;
}

inline std::string trace_label(const TraceFile& t) {
  std::string l = t.model_kind.empty() ? "model" : t.model_kind;
  if (t.epoch >= 0) l += " e" + std::to_string(t.epoch);
  if (!t.split.empty()) l += " " + t.split;
  return l;
}

}  // namespace svgdetail

// Causal and anticausal curves, both proportionality lines, and the
// equivariant point marker; several traces darken in input order.
inline std::string render_ham(const std::vector<TraceFile>& traces) {
  if (traces.empty()) throw std::invalid_argument("render_ham: no traces");
  using namespace svgdetail;
  Frame f;
  f.xmin = 0;
  f.xmax = 1;
  f.ymin = 0;
  f.ymax = 0;
  for (const auto& t : traces) {
    f.xmax = std::max(f.xmax, double(t.horizon));
    for (const auto* c : {t.causal ? &*t.causal : nullptr, t.anticausal ? &*t.anticausal : nullptr})
      if (c)
        for (double v : c->overall) f.ymax = std::max(f.ymax, v);
  }
  f.pad_y();
  Canvas cv(f, "horizon activation map", "cut", "gradient norm average");
  std::vector<std::pair<std::string, std::string>> legend;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& t = traces[i];
    const std::string color = ramp_color(i, traces.size());
    if (t.causal && t.anticausal) {
      const auto lc = proportionality_line(*t.causal);
      const auto la = proportionality_line(*t.anticausal);
      cv.polyline({{0.0, lc.y0}, {double(lc.horizon), lc.y1}}, color, false, 0.5);
      cv.polyline({{0.0, la.y0}, {double(la.horizon), la.y1}}, color, true, 0.5);
    }
    if (t.causal) cv.polyline(curve_points(t.causal->overall), color, false);
    if (t.anticausal) cv.polyline(curve_points(t.anticausal->overall), color, true);
    if (t.causal && t.anticausal) {
      const auto ep = equivariant_point(*t.causal, *t.anticausal);
      if (ep.found) cv.circle(ep.t_star, ep.value, color);
    }
    legend.emplace_back(trace_label(t) + " (solid causal, dashed anticausal)", color);
  }
  cv.legend(legend);
  return cv.finish();
}

inline std::string render_areas(const std::vector<TraceFile>& traces) {
  if (traces.empty()) throw std::invalid_argument("render_areas: no traces");
  using namespace svgdetail;
  std::vector<TraceAnalytics> an;
  Frame f;
  f.xmin = 0;
  f.xmax = 1;
  f.ymin = 0;
  f.ymax = 0;
  for (const auto& t : traces) {
    an.push_back(analyze_trace(t));
    f.xmax = std::max(f.xmax, double(t.horizon));
    for (const auto* a : {&an.back().causal_area, &an.back().anticausal_area})
      for (double v : a->values) {
        f.ymin = std::min(f.ymin, v);
        f.ymax = std::max(f.ymax, v);
      }
  }
  f.pad_y();
  Canvas cv(f, "cumulative signed areas", "cut", "signed area");
  std::vector<std::pair<std::string, std::string>> legend;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const std::string color = ramp_color(i, traces.size());
    if (traces[i].causal) cv.polyline(curve_points(an[i].causal_area.values), color, false);
    if (traces[i].anticausal) cv.polyline(curve_points(an[i].anticausal_area.values), color, true);
    legend.emplace_back(trace_label(traces[i]), color);
  }
  cv.legend(legend);
  return cv.finish();
}

// Normalized difference curves with equivariant points along the y=-1 line.
inline std::string render_diff(const std::vector<TraceFile>& traces) {
  if (traces.empty()) throw std::invalid_argument("render_diff: no traces");
  using namespace svgdetail;
  Frame f;
  f.xmin = 0;
  f.xmax = 1;
  f.ymin = -1.1;
  f.ymax = 1.1;
  for (const auto& t : traces) {
    if (!t.causal || !t.anticausal)
      throw std::invalid_argument("render_diff: trace is missing a mode");
    f.xmax = std::max(f.xmax, double(t.horizon));
  }
  Canvas cv(f, "difference plot", "t", "d(t)");
  std::vector<std::pair<std::string, std::string>> legend;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const std::string color = ramp_color(i, traces.size());
    const auto d = difference_curve(*traces[i].causal, *traces[i].anticausal);
    cv.polyline(curve_points(d.values), color, false);
    if (d.equivariant.found) cv.circle(d.equivariant.t_star, -1.0, color);
    legend.emplace_back(trace_label(traces[i]), color);
  }
  cv.legend(legend);
  return cv.finish();
}

inline std::string render_interp(const InterpolatedAreaPlot& plot) {
  using namespace svgdetail;
  Frame f;
  f.xmin = 0;
  f.xmax = 1;
  f.ymin = -1.1;
  f.ymax = 1.1;
  Canvas cv(f, "interpolated area plot", "cut / H", "area / max |area|");
  std::vector<std::pair<std::string, std::string>> legend;
  const std::size_t models = plot.series.size() / 2;
  for (std::size_t i = 0; i < plot.series.size(); ++i) {
    const auto& s = plot.series[i];
    const std::string color = ramp_color(i / 2, std::max<std::size_t>(models, 1));
    std::vector<std::pair<double, double>> pts;
    for (std::size_t k = 0; k < plot.grid.size(); ++k) pts.emplace_back(plot.grid[k], s.y[k]);
    cv.polyline(pts, color, s.mode == MaskMode::Anticausal);
    if (s.mode == MaskMode::Causal) legend.emplace_back(s.label, color);
  }
  cv.legend(legend);
  return cv.finish();
}

// Per-layer curves of a single trace, one color per layer.
inline std::string render_layerwise(const TraceFile& t) {
  using namespace svgdetail;
  const HamCurve* any = t.causal ? &*t.causal : (t.anticausal ? &*t.anticausal : nullptr);
  if (!any || any->per_layer.empty())
    throw std::invalid_argument("render_layerwise: trace has no per-layer curves");
  Frame f;
  f.xmin = 0;
  f.xmax = double(t.horizon);
  f.ymin = 0;
  f.ymax = 0;
  for (const auto* c : {t.causal ? &*t.causal : nullptr, t.anticausal ? &*t.anticausal : nullptr})
    if (c)
      for (const auto& [name, values] : c->per_layer)
        for (double v : values) f.ymax = std::max(f.ymax, v);
  f.pad_y();
  Canvas cv(f, "layer-wise horizon activation map", "cut", "gradient norm average");
  std::vector<std::pair<std::string, std::string>> legend;
  const std::size_t n = any->per_layer.size();
  for (std::size_t l = 0; l < n; ++l) {
    const std::string color = ramp_color(l, n);
    if (t.causal) cv.polyline(curve_points(t.causal->per_layer[l].second), color, false);
    if (t.anticausal && l < t.anticausal->per_layer.size())
      cv.polyline(curve_points(t.anticausal->per_layer[l].second), color, true);
    legend.emplace_back(any->per_layer[l].first, color);
  }
  cv.legend(legend);
  return cv.finish();
}

}  // namespace ham
