#pragma once

#include <cmath>
#include <vector>

#include "strokeopt/errors.hpp"
#include "strokeopt/image.hpp"

namespace strokeopt {

// Normalized 1D Gaussian taps on [-radius, radius], radius = ceil(3 sigma).
inline std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw DomainError("gaussian sigma must be positive");
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

enum class Boundary {
  Zero,       // taps outside the image read 0; the operator is symmetric (self-adjoint)
  Replicate,  // taps outside the image read the nearest edge pixel; preserves constants
};

namespace detail {

template <class Image>
Image convolve_axis(const Image& src, const std::vector<double>& kernel, bool horizontal,
                    Boundary boundary) {
  Image out(src.width, src.height, src.channels);
  const int radius = static_cast<int>(kernel.size() / 2);
  const int extent = horizontal ? src.width : src.height;
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      const int pos = horizontal ? x : y;
      for (int c = 0; c < src.channels; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          int p = pos + k;
          if (p < 0 || p >= extent) {
            if (boundary == Boundary::Zero) continue;
            p = std::clamp(p, 0, extent - 1);
          }
          acc += kernel[k + radius] * (horizontal ? src.at(p, y, c) : src.at(x, p, c));
        }
        out.at(x, y, c) = acc;
      }
    }
  }
  return out;
}

}  // namespace detail

// Separable Gaussian blur, channels filtered independently. sigma == 0 is the identity.
template <class Image>
Image gaussian_blur(const Image& src, double sigma, Boundary boundary) {
  if (sigma == 0.0) return src;
  const auto kernel = gaussian_kernel(sigma);
  return detail::convolve_axis(detail::convolve_axis(src, kernel, true, boundary), kernel, false,
                               boundary);
}

}  // namespace strokeopt
