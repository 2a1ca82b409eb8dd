#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "strokeopt/errors.hpp"

namespace strokeopt {

// Row-major, channel-interleaved double buffer.
struct ImageBuffer {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> data;

  ImageBuffer() = default;
  ImageBuffer(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {
    if (w < 0 || h < 0 || c <= 0) throw ShapeError("invalid image dimensions");
  }

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  std::size_t size() const { return data.size(); }

  double& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  bool same_shape(const ImageBuffer& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }

  std::string shape_string() const {
    return std::to_string(width) + "x" + std::to_string(height) + "x" + std::to_string(channels);
  }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;
};

// Intensity image in [0, 1], 1.0 = white. Holds both rendered sketches and targets.
struct RasterImage : ImageBuffer {
  using ImageBuffer::ImageBuffer;
};

// d(loss)/d(pixel), same shape as the image it differentiates.
struct PixelGrad : ImageBuffer {
  using ImageBuffer::ImageBuffer;
};

inline void require_same_shape(const ImageBuffer& a, const ImageBuffer& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

inline RasterImage composite_to_rgb(const RasterImage& gray) {
  if (gray.channels != 1) throw ShapeError("composite_to_rgb expects a 1-channel image");
  RasterImage rgb(gray.width, gray.height, 3);
  for (std::size_t i = 0; i < gray.pixel_count(); ++i) {
    rgb.data[3 * i] = rgb.data[3 * i + 1] = rgb.data[3 * i + 2] = gray.data[i];
  }
  return rgb;
}

// Adjoint of composite_to_rgb: sums the channel gradients.
inline PixelGrad sum_channels(const PixelGrad& grad) {
  PixelGrad out(grad.width, grad.height, 1);
  for (std::size_t i = 0; i < grad.pixel_count(); ++i) {
    double s = 0.0;
    for (int c = 0; c < grad.channels; ++c) s += grad.data[i * grad.channels + c];
    out.data[i] = s;
  }
  return out;
}

// Rec. 601 luma for 3-channel input; 1-channel input is copied.
inline RasterImage luminance(const RasterImage& img) {
  if (img.channels == 1) return img;
  if (img.channels != 3) throw ShapeError("luminance expects 1 or 3 channels");
  RasterImage out(img.width, img.height, 1);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    out.data[i] = 0.299 * img.data[3 * i] + 0.587 * img.data[3 * i + 1] + 0.114 * img.data[3 * i + 2];
  }
  return out;
}

// Bilinear resampling with pixel-center alignment (half-pixel offsets, edge clamped).
template <class Image>
Image resize_bilinear(const Image& src, int out_w, int out_h) {
  if (src.width <= 0 || src.height <= 0) throw ShapeError("cannot resize an empty image");
  if (out_w <= 0 || out_h <= 0) throw ShapeError("resize target must be non-empty");
  if (out_w == src.width && out_h == src.height) return src;
  Image out(out_w, out_h, src.channels);
  const double sx = static_cast<double>(src.width) / out_w;
  const double sy = static_cast<double>(src.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < src.channels; ++c) {
        const double top = (1 - wx) * src.at(x0, y0, c) + wx * src.at(x1, y0, c);
        const double bot = (1 - wx) * src.at(x0, y1, c) + wx * src.at(x1, y1, c);
        out.at(x, y, c) = (1 - wy) * top + wy * bot;
      }
    }
  }
  return out;
}

}  // namespace strokeopt
