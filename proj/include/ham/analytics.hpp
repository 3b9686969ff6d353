#pragma once
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "ham/engine.hpp"

namespace ham {

// The straight line a curve would follow if gradient mass were spread
// uniformly over the horizon: causal from (0,0) to (H,G), anticausal from
// (0,G) to (H,0).
struct ProportionalityLine {
  MaskMode mode = MaskMode::Causal;
  std::size_t horizon = 0;
  double g = 0.0;
  double y0 = 0.0, y1 = 0.0;

  double at(double x) const {
    return horizon == 0 ? y0 : y0 + (y1 - y0) * (x / double(horizon));
  }

  static ProportionalityLine make(MaskMode mode, std::size_t horizon, double g) {
    ProportionalityLine l;
    l.mode = mode;
    l.horizon = horizon;
    l.g = g;
    l.y0 = mode == MaskMode::Causal ? 0.0 : g;
    l.y1 = mode == MaskMode::Causal ? g : 0.0;
    return l;
  }
};

enum class LineScope { PerMode, Global };
inline const char* scope_name(LineScope s) { return s == LineScope::PerMode ? "per-mode" : "global"; }

inline ProportionalityLine proportionality_line(const std::vector<double>& values, MaskMode mode,
                                                LineScope scope = LineScope::PerMode,
                                                const std::vector<double>* other = nullptr) {
  if (values.empty()) throw std::invalid_argument("proportionality_line: empty curve");
  double g = *std::max_element(values.begin(), values.end());
  if (scope == LineScope::Global && other && !other->empty())
    g = std::max(g, *std::max_element(other->begin(), other->end()));
  return ProportionalityLine::make(mode, values.size() - 1, g);
}

inline ProportionalityLine proportionality_line(const HamCurve& curve,
                                                LineScope scope = LineScope::PerMode,
                                                const HamCurve* other = nullptr) {
  return proportionality_line(curve.overall, curve.mode, scope, other ? &other->overall : nullptr);
}

// One maximal region between the curve and the line, bounded by intersection
// points (or the plot edges). vertices walk the curve left to right.
struct AreaRegion {
  int sign = 0;  // +1 above the line, -1 below
  double x_start = 0.0, x_end = 0.0;
  std::vector<std::pair<double, double>> vertices;  // on the curve
  double area = 0.0;                                // unsigned shoelace area
};

// A(cut): cumulative signed area between the piecewise-linear curve and the
// line, clipped at x <= cut. Slope changes of A mark intersections.
struct AreaCurve {
  MaskMode mode = MaskMode::Causal;
  std::size_t horizon = 0;
  ProportionalityLine line;
  std::vector<double> values;  // H+1, values[0] == 0
  std::vector<AreaRegion> regions;
};

namespace detail {

// Shoelace area of the closed polygon: curve vertices left to right, then
// back along the line. Orientation is irrelevant, the absolute value is
// signed by the region's side.
inline double shoelace_closed(const std::vector<std::pair<double, double>>& curve_pts,
                              const ProportionalityLine& line) {
  std::vector<std::pair<double, double>> poly = curve_pts;
  poly.emplace_back(curve_pts.back().first, line.at(curve_pts.back().first));
  poly.emplace_back(curve_pts.front().first, line.at(curve_pts.front().first));
  double s = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % poly.size()];
    s += p.first * q.second - q.first * p.second;
  }
  return std::abs(s) * 0.5;
}

// Region area clipped at x <= cut by a vertical cut.
inline double region_area_clipped(const AreaRegion& r, const ProportionalityLine& line, double cut) {
  if (cut <= r.x_start) return 0.0;
  if (cut >= r.x_end) return r.area;
  std::vector<std::pair<double, double>> pts;
  for (const auto& v : r.vertices) {
    if (v.first < cut) {
      pts.push_back(v);
    } else {
      break;
    }
  }
  // interpolated curve point at the cut
  for (std::size_t i = 0; i + 1 < r.vertices.size(); ++i) {
    const auto& a = r.vertices[i];
    const auto& b = r.vertices[i + 1];
    if (a.first <= cut && cut <= b.first && a.first < b.first) {
      const double t = (cut - a.first) / (b.first - a.first);
      pts.emplace_back(cut, a.second + t * (b.second - a.second));
      break;
    }
  }
  if (pts.size() < 2) return 0.0;
  return shoelace_closed(pts, line);
}

}  // namespace detail

inline AreaCurve signed_area(const std::vector<double>& curve, const ProportionalityLine& line) {
  const std::size_t H = line.horizon;
  if (curve.size() != H + 1)
    throw std::invalid_argument("signed_area: curve has " + std::to_string(curve.size()) +
                                " points, expected " + std::to_string(H + 1));

  AreaCurve out;
  out.mode = line.mode;
  out.horizon = H;
  out.line = line;
  out.values.assign(H + 1, 0.0);

  // Deviations at integer points plus interpolated zero crossings, in order.
  std::vector<std::pair<double, double>> knots;  // (x, curve - line)
  knots.reserve(2 * H + 1);
  auto dev = [&](std::size_t i) { return curve[i] - line.at(double(i)); };
  knots.emplace_back(0.0, dev(0));
  for (std::size_t i = 0; i < H; ++i) {
    const double e0 = dev(i), e1 = dev(i + 1);
    if ((e0 > 0.0 && e1 < 0.0) || (e0 < 0.0 && e1 > 0.0))
      knots.emplace_back(double(i) + e0 / (e0 - e1), 0.0);
    knots.emplace_back(double(i + 1), e1);
  }

  // Maximal runs of constant-sign segments become regions; stretches lying on
  // the line separate them and carry no area.
  AreaRegion cur;
  auto close = [&](double x_end) {
    if (cur.sign == 0) return;
    cur.x_end = x_end;
    cur.area = detail::shoelace_closed(cur.vertices, line);
    out.regions.push_back(cur);
    cur = AreaRegion{};
  };
  for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
    const auto& p = knots[k];
    const auto& q = knots[k + 1];
    int s = 0;
    if (p.second != 0.0)
      s = p.second > 0.0 ? 1 : -1;
    else if (q.second != 0.0)
      s = q.second > 0.0 ? 1 : -1;
    if (s != cur.sign) {
      close(p.first);
      if (s != 0) {
        cur.sign = s;
        cur.x_start = p.first;
        cur.vertices.emplace_back(p.first, p.second + line.at(p.first));
      }
    }
    if (s != 0) cur.vertices.emplace_back(q.first, q.second + line.at(q.first));
  }
  close(double(H));

  for (std::size_t cut = 1; cut <= H; ++cut) {
    double a = 0.0;
    for (const auto& r : out.regions)
      a += double(r.sign) * detail::region_area_clipped(r, line, double(cut));
    out.values[cut] = a;
  }
  return out;
}

inline AreaCurve signed_area(const HamCurve& curve, const ProportionalityLine& line) {
  return signed_area(curve.overall, line);
}

// The timestep where the causal and anticausal curves intersect: the first
// cut timesteps carry the same norm average as the remaining H - cut.
struct EquivariantPoint {
  double t_star = 0.0;
  double value = 0.0;
  bool found = false;
  bool degenerate = false;            // identical curves, every t is a crossing
  std::vector<double> crossings;      // all crossings, ascending
};

inline EquivariantPoint equivariant_point(const std::vector<double>& causal,
                                          const std::vector<double>& anticausal) {
  if (causal.size() != anticausal.size() || causal.empty())
    throw std::invalid_argument("equivariant_point: curves must share H");
  const std::size_t H = causal.size() - 1;

  EquivariantPoint ep;
  bool all_zero = true;
  for (std::size_t t = 0; t <= H; ++t)
    if (causal[t] != anticausal[t]) {
      all_zero = false;
      break;
    }
  if (all_zero) {
    ep.found = true;
    ep.degenerate = true;
    ep.t_star = 0.0;
    ep.value = causal[0];
    return ep;
  }

  auto diff = [&](std::size_t t) { return causal[t] - anticausal[t]; };
  for (std::size_t t = 0; t <= H; ++t) {
    if (diff(t) == 0.0) {
      ep.crossings.push_back(double(t));
    } else if (t < H) {
      const double d0 = diff(t), d1 = diff(t + 1);
      if ((d0 < 0.0 && d1 > 0.0) || (d0 > 0.0 && d1 < 0.0))
        ep.crossings.push_back(double(t) + d0 / (d0 - d1));
    }
  }
  if (ep.crossings.empty()) return ep;  // found == false

  ep.found = true;
  ep.t_star = ep.crossings.front();
  const std::size_t lo = std::min(std::size_t(std::floor(ep.t_star)), H - (H > 0 ? 1 : 0));
  const double frac = ep.t_star - double(lo);
  ep.value = causal[lo] + frac * (causal[std::min(lo + 1, H)] - causal[lo]);
  return ep;
}

inline EquivariantPoint equivariant_point(const HamCurve& causal, const HamCurve& anticausal) {
  return equivariant_point(causal.overall, anticausal.overall);
}

// d(t) = (causal(t) - anticausal(t)) / max_t |causal(t) - anticausal(t)|.
struct DifferenceCurve {
  std::vector<double> values;  // H+1, each in [-1,1]
  double normalizer = 0.0;     // max |raw difference|
  EquivariantPoint equivariant;
};

inline DifferenceCurve difference_curve(const std::vector<double>& causal,
                                        const std::vector<double>& anticausal) {
  if (causal.size() != anticausal.size() || causal.empty())
    throw std::invalid_argument("difference_curve: curves must share H");
  DifferenceCurve d;
  d.values.resize(causal.size());
  for (std::size_t t = 0; t < causal.size(); ++t) {
    d.values[t] = causal[t] - anticausal[t];
    d.normalizer = std::max(d.normalizer, std::abs(d.values[t]));
  }
  if (d.normalizer > 0.0)
    for (double& v : d.values) v /= d.normalizer;
  else
    std::fill(d.values.begin(), d.values.end(), 0.0);
  d.equivariant = equivariant_point(causal, anticausal);
  return d;
}

inline DifferenceCurve difference_curve(const HamCurve& causal, const HamCurve& anticausal) {
  return difference_curve(causal.overall, anticausal.overall);
}

// Max-normalized area curves of several models resampled onto one x in [0,1]
// grid, so different horizon lengths can be compared.
struct InterpSeries {
  std::string label;
  MaskMode mode = MaskMode::Causal;
  std::vector<double> y;
  bool all_zero = false;
};

struct InterpolatedAreaPlot {
  std::vector<double> grid;
  std::vector<InterpSeries> series;
};

struct ModelAreas {
  std::string label;
  AreaCurve causal, anticausal;
};

inline InterpolatedAreaPlot interpolated_area_plot(const std::vector<ModelAreas>& models,
                                                   std::size_t grid_size = 101) {
  if (models.empty()) throw std::invalid_argument("interpolated_area_plot: no models");
  if (grid_size < 2) throw std::invalid_argument("interpolated_area_plot: grid size must be >= 2");

  InterpolatedAreaPlot plot;
  plot.grid.resize(grid_size);
  for (std::size_t i = 0; i < grid_size; ++i) plot.grid[i] = double(i) / double(grid_size - 1);

  auto resample = [&](const AreaCurve& a, const std::string& label) {
    InterpSeries s;
    s.label = label;
    s.mode = a.mode;
    double maxabs = 0.0;
    for (double v : a.values) maxabs = std::max(maxabs, std::abs(v));
    s.all_zero = maxabs == 0.0;
    s.y.resize(grid_size, 0.0);
    if (!s.all_zero) {
      const double H = double(a.horizon);
      for (std::size_t i = 0; i < grid_size; ++i) {
        const double x = plot.grid[i] * H;
        const std::size_t lo = std::min(std::size_t(std::floor(x)), a.horizon - 1);
        const double frac = x - double(lo);
        const double v = a.values[lo] + frac * (a.values[lo + 1] - a.values[lo]);
        s.y[i] = v / maxabs;
      }
    }
    return s;
  };
  for (const auto& m : models) {
    plot.series.push_back(resample(m.causal, m.label));
    plot.series.push_back(resample(m.anticausal, m.label));
  }
  return plot;
}

}  // namespace ham
