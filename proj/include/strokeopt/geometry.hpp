#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "strokeopt/errors.hpp"

namespace strokeopt {

// A 2D point in canvas pixel units. Pixel (x, y) has its center at (x + 0.5, y + 0.5).
struct Point {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Point operator*(double s, Point p) { return {s * p.x, s * p.y}; }
  constexpr Point& operator+=(Point o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  friend constexpr bool operator==(Point, Point) = default;
};

inline double dot(Point a, Point b) { return a.x * b.x + a.y * b.y; }
inline double norm(Point p) { return std::hypot(p.x, p.y); }
inline bool is_finite(Point p) { return std::isfinite(p.x) && std::isfinite(p.y); }

struct CanvasSize {
  int width = 224;
  int height = 224;
  friend constexpr bool operator==(CanvasSize, CanvasSize) = default;
};

// A black Bezier stroke of degree points.size() - 1 (1, 2 or 3).
struct Stroke {
  std::vector<Point> points;
  double width = 1.5;

  int degree() const { return static_cast<int>(points.size()) - 1; }

  void validate() const {
    if (points.size() < 2 || points.size() > 4) {
      throw DomainError("stroke must have 2, 3 or 4 control points, got " +
                        std::to_string(points.size()));
    }
    if (!(width > 0.0) || !std::isfinite(width)) {
      throw DomainError("stroke width must be positive and finite");
    }
  }

  friend bool operator==(const Stroke&, const Stroke&) = default;
};

struct Sketch {
  std::vector<Stroke> strokes;
  CanvasSize canvas;

  std::size_t size() const { return strokes.size(); }

  // Throws if any stroke is malformed, the canvas is empty, or (with uniform_width)
  // strokes disagree on width.
  void validate(bool uniform_width = false) const {
    if (canvas.width <= 0 || canvas.height <= 0) throw DomainError("canvas must be non-empty");
    if (strokes.empty()) throw DomainError("sketch needs at least one stroke");
    for (const auto& s : strokes) {
      s.validate();
      if (uniform_width && s.width != strokes.front().width) {
        throw DomainError("sketch strokes must share one width");
      }
    }
  }

  friend bool operator==(const Sketch&, const Sketch&) = default;
};

using ParamVector = std::vector<double>;

namespace detail {

inline constexpr std::array<std::array<double, 4>, 4> kBinomial = {{
    {1, 0, 0, 0},
    {1, 1, 0, 0},
    {1, 2, 1, 0},
    {1, 3, 3, 1},
}};

inline double ipow(double base, int exp) {
  double r = 1.0;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

}  // namespace detail

// Bernstein basis weights of the given degree at t; only the first degree+1 entries are used.
inline std::array<double, 4> bernstein_weights(int degree, double t) {
  std::array<double, 4> w{};
  const double s = 1.0 - t;
  for (int j = 0; j <= degree; ++j) {
    w[j] = detail::kBinomial[degree][j] * detail::ipow(t, j) * detail::ipow(s, degree - j);
  }
  return w;
}

inline Point eval_bezier(const Stroke& stroke, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("bezier parameter t must lie in [0, 1]");
  if (stroke.points.size() < 2 || stroke.points.size() > 4) {
    throw DomainError("stroke must have 2, 3 or 4 control points");
  }
  const int degree = stroke.degree();
  const auto w = bernstein_weights(degree, t);
  Point p{0.0, 0.0};
  for (int j = 0; j <= degree; ++j) p += w[j] * stroke.points[j];
  return p;
}

// Default polyline sample counts per degree: linear 2, quadratic 16, cubic 32.
inline int default_samples(int degree) {
  switch (degree) {
    case 1:
      return 2;
    case 2:
      return 16;
    default:
      return 32;
  }
}

// Sample parameters t_k = k / (samples - 1).
inline std::vector<double> sample_parameters(int samples) {
  if (samples < 2) throw DomainError("flatten needs at least 2 samples");
  std::vector<double> ts(samples);
  for (int k = 0; k < samples; ++k) ts[k] = static_cast<double>(k) / static_cast<double>(samples - 1);
  return ts;
}

inline std::vector<Point> flatten(const Stroke& stroke, int samples) {
  std::vector<Point> out;
  out.reserve(samples > 0 ? samples : 0);
  for (double t : sample_parameters(samples)) out.push_back(eval_bezier(stroke, t));
  return out;
}

inline std::size_t param_count(const Sketch& sketch) {
  std::size_t n = 0;
  for (const auto& s : sketch.strokes) n += 2 * s.points.size();
  return n;
}

// Layout: stroke-major, then point-major, (x, y) interleaved.
inline ParamVector to_params(const Sketch& sketch) {
  ParamVector v;
  v.reserve(param_count(sketch));
  for (const auto& s : sketch.strokes) {
    for (const auto& p : s.points) {
      v.push_back(p.x);
      v.push_back(p.y);
    }
  }
  return v;
}

// Rebuilds a sketch from params using the template's stroke count, degrees and widths.
inline Sketch from_params(const ParamVector& params, const Sketch& templ) {
  if (params.size() != param_count(templ)) {
    throw ShapeError("parameter vector has length " + std::to_string(params.size()) +
                     ", template expects " + std::to_string(param_count(templ)));
  }
  Sketch out = templ;
  std::size_t i = 0;
  for (auto& s : out.strokes) {
    for (auto& p : s.points) {
      p.x = params[i++];
      p.y = params[i++];
    }
  }
  return out;
}

}  // namespace strokeopt
