#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "strokeopt/errors.hpp"
#include "strokeopt/filters.hpp"
#include "strokeopt/geometry.hpp"
#include "strokeopt/image.hpp"
#include "strokeopt/image_io.hpp"

namespace strokeopt {

// Non-negative saliency field, 1 channel.
struct RelevancyMap : ImageBuffer {
  using ImageBuffer::ImageBuffer;

  static RelevancyMap uniform(int width, int height) { return RelevancyMap(width, height, 1, 1.0); }

  void validate() const {
    if (channels != 1) throw ShapeError("relevancy map must have one channel");
    for (double v : data) {
      if (!std::isfinite(v) || v < 0.0) throw DomainError("relevancy values must be finite and >= 0");
    }
  }
};

// Categorical distribution over canvas pixels, row-major.
struct DistributionMap {
  int width = 0;
  int height = 0;
  std::vector<double> probs;

  double at(int x, int y) const { return probs[static_cast<std::size_t>(y) * width + x]; }
};

struct XDoGParams {
  double sigma = 0.8;
  double k = 1.6;
  double tau = 0.99;
  double epsilon = 0.01;
  double phi = 200.0;
};

// Edge strength in [0,1] (high on edges and dark strokes). The luminance is min-max
// normalized first, so the result ignores brightness offsets and contrast scale; a
// constant image has no edges.
//   D = G_sigma * L - tau G_{k sigma} * L
//   xdog = 1 if D >= eps else 1 + tanh(phi (D - eps));   strength = 1 - xdog
inline RasterImage xdog(const RasterImage& gray, const XDoGParams& params = {}) {
  if (gray.channels != 1) throw ShapeError("xdog expects a grayscale image");
  if (!(params.sigma > 0.0)) throw DomainError("xdog sigma must be positive");
  if (!(params.k > 1.0)) throw DomainError("xdog k must exceed 1");
  RasterImage strength(gray.width, gray.height, 1, 0.0);
  if (gray.size() == 0) return strength;

  const auto [lo_it, hi_it] = std::minmax_element(gray.data.begin(), gray.data.end());
  const double lo = *lo_it, range = *hi_it - *lo_it;
  if (!std::isfinite(range)) throw NumericError("xdog input contains non-finite values");
  if (range <= 1e-12) return strength;

  RasterImage norm(gray.width, gray.height, 1);
  for (std::size_t i = 0; i < gray.size(); ++i) norm.data[i] = (gray.data[i] - lo) / range;

  const auto fine = gaussian_blur(norm, params.sigma, Boundary::Replicate);
  const auto coarse = gaussian_blur(norm, params.k * params.sigma, Boundary::Replicate);
  for (std::size_t i = 0; i < norm.size(); ++i) {
    const double d = fine.data[i] - params.tau * coarse.data[i];
    const double v = d >= params.epsilon ? 1.0 : 1.0 + std::tanh(params.phi * (d - params.epsilon));
    strength.data[i] = std::clamp(1.0 - v, 0.0, 1.0);
  }
  return strength;
}

inline DistributionMap uniform_distribution(int width, int height) {
  const std::size_t n = static_cast<std::size_t>(width) * height;
  return {width, height, std::vector<double>(n, 1.0 / static_cast<double>(n))};
}

// softmax(relevancy * edges / temperature) over all pixels. Relevancy is bilinearly
// resampled to the edge map's resolution. An all-zero product yields the uniform map.
inline DistributionMap build_distribution(const RelevancyMap& relevancy, const RasterImage& edges,
                                          double temperature = 1.0) {
  if (edges.channels != 1) throw ShapeError("edge map must have one channel");
  if (!(temperature > 0.0)) throw DomainError("softmax temperature must be positive");
  if (edges.size() == 0) throw ShapeError("edge map is empty");
  relevancy.validate();
  const RelevancyMap rel = resize_bilinear(relevancy, edges.width, edges.height);

  std::vector<double> logits(edges.size());
  bool any = false;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double prod = rel.data[i] * edges.data[i];
    if (!std::isfinite(prod)) throw NumericError("non-finite saliency product");
    any = any || prod != 0.0;
    logits[i] = prod / temperature;
  }
  if (!any) return uniform_distribution(edges.width, edges.height);

  const double peak = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double& l : logits) {
    l = std::exp(l - peak);
    sum += l;
  }
  for (double& l : logits) l /= sum;
  return {edges.width, edges.height, std::move(logits)};
}

namespace detail {

// Uniform double in [0, 1) from the top 53 bits; fixed across standard libraries.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace detail

struct InitOptions {
  int strokes = 16;
  int degree = 3;
  double radius = 0.05;  // fraction of min(canvas width, height)
  double width = 1.5;
  std::uint64_t seed = 0;
};

// First control point ~ dist (pixel center jittered uniformly inside the pixel); the
// remaining control points are uniform in the disk of radius * min(w, h) around it.
inline Sketch sample_initial_sketch(const DistributionMap& dist, const InitOptions& opt) {
  if (opt.strokes < 1) throw DomainError("stroke count must be >= 1");
  if (opt.degree < 1 || opt.degree > 3) throw DomainError("degree must be 1, 2 or 3");
  if (!(opt.radius > 0.0 && opt.radius < 1.0)) throw DomainError("radius must lie in (0, 1)");
  if (!(opt.width > 0.0)) throw DomainError("stroke width must be positive");
  if (dist.width <= 0 || dist.height <= 0 ||
      dist.probs.size() != static_cast<std::size_t>(dist.width) * dist.height) {
    throw ShapeError("distribution map is malformed");
  }

  std::vector<double> cdf(dist.probs.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < cdf.size(); ++i) {
    acc += dist.probs[i];
    cdf[i] = acc;
  }
  if (!(acc > 0.0)) throw DomainError("distribution map has no mass");

  std::mt19937_64 rng(opt.seed);
  const double disk = opt.radius * std::min(dist.width, dist.height);
  Sketch sketch;
  sketch.canvas = {dist.width, dist.height};
  sketch.strokes.reserve(opt.strokes);
  for (int s = 0; s < opt.strokes; ++s) {
    const double u = detail::unit_uniform(rng) * acc;
    // upper_bound never lands on a zero-mass cell
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    if (it == cdf.end()) it = std::prev(cdf.end());
    const auto idx = static_cast<std::size_t>(it - cdf.begin());
    const int px = static_cast<int>(idx % dist.width);
    const int py = static_cast<int>(idx / dist.width);

    Stroke stroke;
    stroke.width = opt.width;
    const Point first{px + detail::unit_uniform(rng), py + detail::unit_uniform(rng)};
    stroke.points.push_back(first);
    for (int j = 0; j < opt.degree; ++j) {
      const double r = disk * std::sqrt(detail::unit_uniform(rng));
      const double theta = 2.0 * std::numbers::pi * detail::unit_uniform(rng);
      stroke.points.push_back({first.x + r * std::cos(theta), first.y + r * std::sin(theta)});
    }
    sketch.strokes.push_back(std::move(stroke));
  }
  return sketch;
}

// Relevancy from an image file: luminance values, any resolution.
inline RelevancyMap load_relevancy(const std::string& path) {
  const RasterImage lum = luminance(read_image(path));
  RelevancyMap rel(lum.width, lum.height, 1);
  rel.data = lum.data;
  return rel;
}

}  // namespace strokeopt
