#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "strokeopt/errors.hpp"
#include "strokeopt/geometry.hpp"
#include "strokeopt/image.hpp"

namespace strokeopt {

// Soft-coverage rasterizer settings. The output resolution is the sketch canvas.
struct RasterConfig {
  double softness = 0.7;      // logistic scale of the stroke edge, in pixels
  int samples_per_curve = 0;  // 0 selects default_samples(degree) per stroke

  // Coverage is exactly zero once the logistic argument drops below -kCutoff.
  static constexpr double kCutoff = 6.0;
};

namespace detail {

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline const double kCoverageFloor = logistic(-RasterConfig::kCutoff);

// Coverage as a function of z = (width/2 - distance) / softness. The logistic is shifted
// and rescaled so it reaches zero exactly at the cutoff; coverage stays continuous there.
inline double coverage_from_z(double z) {
  if (z <= -RasterConfig::kCutoff) return 0.0;
  return (logistic(z) - kCoverageFloor) / (1.0 - kCoverageFloor);
}

inline double coverage_slope_z(double z) {
  if (z <= -RasterConfig::kCutoff) return 0.0;
  const double s = logistic(z);
  return s * (1.0 - s) / (1.0 - kCoverageFloor);
}

struct PolylineHit {
  double dist = 0.0;
  double u = 0.0;   // position along the segment, 0 at start, 1 at end
  int segment = 0;  // index of the start vertex
  Point closest;
};

// Nearest point on a polyline. Ties resolve to the lowest segment index.
inline PolylineHit nearest_on_polyline(Point c, std::span<const Point> poly) {
  PolylineHit best;
  best.dist = INFINITY;
  const std::size_t segments = poly.size() - 1;
  for (std::size_t k = 0; k < segments; ++k) {
    const Point a = poly[k];
    const Point ab = poly[k + 1] - a;
    const double len2 = dot(ab, ab);
    double u = 0.0;
    if (len2 > 0.0) u = std::clamp(dot(c - a, ab) / len2, 0.0, 1.0);
    const Point q = a + u * ab;
    const double d = norm(c - q);
    if (d < best.dist) {
      best = {d, u, static_cast<int>(k), q};
    }
  }
  return best;
}

struct FlatStroke {
  std::vector<Point> poly;
  std::vector<double> ts;
  double half_width = 0.0;
  int degree = 0;
  // Inclusive pixel range whose centers may receive coverage.
  int x_begin = 0, x_end = -1, y_begin = 0, y_end = -1;
};

inline int pixel_index_floor(double v, int limit) {
  return static_cast<int>(std::clamp(std::floor(v), -1.0, static_cast<double>(limit)));
}
inline int pixel_index_ceil(double v, int limit) {
  return static_cast<int>(std::clamp(std::ceil(v), -1.0, static_cast<double>(limit)));
}

inline FlatStroke prepare_stroke(const Stroke& stroke, const RasterConfig& cfg, CanvasSize canvas) {
  stroke.validate();
  for (const auto& p : stroke.points) {
    if (!is_finite(p)) throw NumericError("non-finite control point");
  }
  FlatStroke fs;
  fs.degree = stroke.degree();
  const int samples = cfg.samples_per_curve > 0 ? cfg.samples_per_curve : default_samples(fs.degree);
  fs.ts = sample_parameters(samples);
  fs.poly.reserve(fs.ts.size());
  for (double t : fs.ts) fs.poly.push_back(eval_bezier(stroke, t));
  fs.half_width = 0.5 * stroke.width;

  double min_x = INFINITY, max_x = -INFINITY, min_y = INFINITY, max_y = -INFINITY;
  for (const auto& p : fs.poly) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const double reach = fs.half_width + RasterConfig::kCutoff * cfg.softness;
  // pixel center x + 0.5 must lie within [min - reach, max + reach]
  fs.x_begin = std::max(0, pixel_index_ceil(min_x - reach - 0.5, canvas.width));
  fs.x_end = std::min(canvas.width - 1, pixel_index_floor(max_x + reach - 0.5, canvas.width));
  fs.y_begin = std::max(0, pixel_index_ceil(min_y - reach - 0.5, canvas.height));
  fs.y_end = std::min(canvas.height - 1, pixel_index_floor(max_y + reach - 0.5, canvas.height));
  return fs;
}

inline std::vector<FlatStroke> prepare_sketch(const Sketch& sketch, const RasterConfig& cfg) {
  if (!(cfg.softness > 0.0) || !std::isfinite(cfg.softness)) {
    throw DomainError("raster softness must be positive");
  }
  if (sketch.canvas.width <= 0 || sketch.canvas.height <= 0) {
    throw DomainError("canvas must be non-empty");
  }
  std::vector<FlatStroke> out;
  out.reserve(sketch.strokes.size());
  for (const auto& s : sketch.strokes) out.push_back(prepare_stroke(s, cfg, sketch.canvas));
  return out;
}

inline Point pixel_center(int x, int y) { return {x + 0.5, y + 0.5}; }

inline bool in_band(const FlatStroke& fs, int x, int y) {
  return x >= fs.x_begin && x <= fs.x_end && y >= fs.y_begin && y <= fs.y_end;
}

inline double stroke_coverage_at(const FlatStroke& fs, Point c, double softness) {
  const auto hit = nearest_on_polyline(c, fs.poly);
  return coverage_from_z((fs.half_width - hit.dist) / softness);
}

}  // namespace detail

// Renders black strokes onto a white canvas. Each stroke covers a pixel with
// c = sigma((width/2 - d) / softness) (cut off at 6 softness units), where d is the
// distance from the pixel center to the flattened stroke; strokes composite by
// multiplying transmittances (1 - c) in stroke order.
inline RasterImage render(const Sketch& sketch, const RasterConfig& cfg = {}) {
  const auto flat = detail::prepare_sketch(sketch, cfg);
  RasterImage img(sketch.canvas.width, sketch.canvas.height, 1, 1.0);
  for (const auto& fs : flat) {
    for (int y = fs.y_begin; y <= fs.y_end; ++y) {
      for (int x = fs.x_begin; x <= fs.x_end; ++x) {
        const double c = detail::stroke_coverage_at(fs, detail::pixel_center(x, y), cfg.softness);
        if (c > 0.0) img.at(x, y) *= 1.0 - c;
      }
    }
  }
  return img;
}

// Gradient of sum(pixel_grad * render(sketch)) with respect to to_params(sketch).
inline ParamVector render_backward(const Sketch& sketch, const RasterConfig& cfg,
                                   const PixelGrad& pixel_grad) {
  if (pixel_grad.width != sketch.canvas.width || pixel_grad.height != sketch.canvas.height ||
      pixel_grad.channels != 1) {
    throw ShapeError("render_backward: pixel gradient " + pixel_grad.shape_string() +
                     " does not match canvas " + std::to_string(sketch.canvas.width) + "x" +
                     std::to_string(sketch.canvas.height) + "x1");
  }
  const auto flat = detail::prepare_sketch(sketch, cfg);
  const RasterImage transmittance = render(sketch, cfg);

  ParamVector grad(param_count(sketch), 0.0);
  std::size_t offset = 0;
  std::vector<Point> vertex_grad;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const auto& fs = flat[i];
    vertex_grad.assign(fs.poly.size(), Point{});
    for (int y = fs.y_begin; y <= fs.y_end; ++y) {
      for (int x = fs.x_begin; x <= fs.x_end; ++x) {
        const double g = pixel_grad.at(x, y);
        if (g == 0.0) continue;
        const Point c = detail::pixel_center(x, y);
        const auto hit = detail::nearest_on_polyline(c, fs.poly);
        const double z = (fs.half_width - hit.dist) / cfg.softness;
        if (z <= -RasterConfig::kCutoff || hit.dist == 0.0) continue;

        const double pass = 1.0 - detail::coverage_from_z(z);
        double others = 0.0;
        if (pass > 1e-6) {
          others = transmittance.at(x, y) / pass;
        } else {
          others = 1.0;
          for (std::size_t l = 0; l < flat.size(); ++l) {
            if (l == i || !detail::in_band(flat[l], x, y)) continue;
            others *= 1.0 - detail::stroke_coverage_at(flat[l], c, cfg.softness);
          }
        }
        // dP/dd = -others * dc/dd, and dc/dd = -slope / softness
        const double dloss_dd = g * others * detail::coverage_slope_z(z) / cfg.softness;
        const Point n = (1.0 / hit.dist) * (hit.closest - c);
        vertex_grad[hit.segment] += (dloss_dd * (1.0 - hit.u)) * n;
        vertex_grad[hit.segment + 1] += (dloss_dd * hit.u) * n;
      }
    }
    const int npts = fs.degree + 1;
    for (std::size_t k = 0; k < fs.poly.size(); ++k) {
      if (vertex_grad[k] == Point{}) continue;
      const auto w = bernstein_weights(fs.degree, fs.ts[k]);
      for (int j = 0; j < npts; ++j) {
        grad[offset + 2 * j] += w[j] * vertex_grad[k].x;
        grad[offset + 2 * j + 1] += w[j] * vertex_grad[k].y;
      }
    }
    offset += 2 * static_cast<std::size_t>(npts);
  }
  return grad;
}

}  // namespace strokeopt
