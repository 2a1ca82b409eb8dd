#pragma once

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "strokeopt/errors.hpp"
#include "strokeopt/geometry.hpp"
#include "strokeopt/image.hpp"

namespace strokeopt {

namespace detail {

inline bool has_png_signature(const std::vector<unsigned char>& head) {
  static constexpr unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  return head.size() >= 8 && std::equal(sig, sig + 8, head.begin());
}

inline bool has_jpeg_signature(const std::vector<unsigned char>& head) {
  return head.size() >= 3 && head[0] == 0xFF && head[1] == 0xD8 && head[2] == 0xFF;
}

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

// Alpha is composited onto white. 16-bit linear input arrives premultiplied from libpng.
inline RasterImage read_png(const std::vector<unsigned char>& bytes, const std::string& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw IoError("cannot decode PNG " + path + ": " + image.message);
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  const bool wide = (image.format & PNG_FORMAT_FLAG_LINEAR) != 0;
  const int channels = color ? 3 : 1;
  image.format = (color ? PNG_FORMAT_FLAG_COLOR : 0U) | PNG_FORMAT_FLAG_ALPHA |
                 (wide ? PNG_FORMAT_FLAG_LINEAR : 0U);
  const int stride = channels + 1;
  const std::size_t count = static_cast<std::size_t>(image.width) * image.height * stride;

  RasterImage out(static_cast<int>(image.width), static_cast<int>(image.height), channels);
  if (wide) {
    std::vector<std::uint16_t> buf(count);
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
      png_image_free(&image);
      throw IoError("cannot decode PNG " + path + ": " + image.message);
    }
    for (std::size_t p = 0; p < out.pixel_count(); ++p) {
      const double a = buf[p * stride + channels] / 65535.0;
      for (int c = 0; c < channels; ++c) {
        out.data[p * channels + c] = buf[p * stride + c] / 65535.0 + (1.0 - a);
      }
    }
  } else {
    std::vector<std::uint8_t> buf(count);
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
      png_image_free(&image);
      throw IoError("cannot decode PNG " + path + ": " + image.message);
    }
    for (std::size_t p = 0; p < out.pixel_count(); ++p) {
      const double a = buf[p * stride + channels] / 255.0;
      for (int c = 0; c < channels; ++c) {
        out.data[p * channels + c] = buf[p * stride + c] / 255.0 * a + (1.0 - a);
      }
    }
  }
  for (double& v : out.data) v = std::clamp(v, 0.0, 1.0);
  return out;
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

struct JpegPixels {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<unsigned char> data;
};

// Only trivially-destructible locals live across setjmp; decoded pixels go to *out.
inline bool decode_jpeg(const std::vector<unsigned char>& bytes, JpegPixels* out, JpegError* err) {
  jpeg_decompress_struct cinfo;
  cinfo.err = jpeg_std_error(&err->mgr);
  err->mgr.error_exit = jpeg_error_exit;
  if (setjmp(err->jump)) {
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  if (cinfo.num_components != 1) cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out->width = static_cast<int>(cinfo.output_width);
  out->height = static_cast<int>(cinfo.output_height);
  out->channels = cinfo.output_components;
  out->data.resize(static_cast<std::size_t>(out->width) * out->height * out->channels);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out->data.data() +
                   static_cast<std::size_t>(cinfo.output_scanline) * out->width * out->channels;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

inline RasterImage read_jpeg(const std::vector<unsigned char>& bytes, const std::string& path) {
  auto pixels = std::make_unique<JpegPixels>();
  auto err = std::make_unique<JpegError>();
  if (!decode_jpeg(bytes, pixels.get(), err.get())) {
    throw IoError("cannot decode JPEG " + path + ": " + err->message);
  }
  if (pixels->channels != 1 && pixels->channels != 3) {
    throw IoError("unsupported JPEG channel count in " + path);
  }
  RasterImage out(pixels->width, pixels->height, pixels->channels);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = pixels->data[i] / 255.0;
  return out;
}

}  // namespace detail

// Reads a PNG (8/16-bit, any color type) or JPEG into [0,1] floats, 1 or 3 channels.
inline RasterImage read_image(const std::string& path) {
  const auto bytes = detail::read_file_bytes(path);
  if (detail::has_png_signature(bytes)) return detail::read_png(bytes, path);
  if (detail::has_jpeg_signature(bytes)) return detail::read_jpeg(bytes, path);
  throw IoError("unrecognized image format: " + path);
}

// Writes a 1- or 3-channel image as PNG; values are clamped to [0,1] and quantized.
inline void write_png(const std::string& path, const ImageBuffer& img, int bit_depth = 8) {
  if (img.channels != 1 && img.channels != 3) throw ShapeError("write_png expects 1 or 3 channels");
  if (bit_depth != 8 && bit_depth != 16) throw DomainError("PNG bit depth must be 8 or 16");
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = (img.channels == 3 ? PNG_FORMAT_FLAG_COLOR : 0U) |
                 (bit_depth == 16 ? PNG_FORMAT_FLAG_LINEAR : 0U);
  int ok = 0;
  if (bit_depth == 16) {
    std::vector<std::uint16_t> buf(img.size());
    for (std::size_t i = 0; i < buf.size(); ++i) {
      buf[i] = static_cast<std::uint16_t>(std::lround(std::clamp(img.data[i], 0.0, 1.0) * 65535.0));
    }
    ok = png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr);
  } else {
    std::vector<std::uint8_t> buf(img.size());
    for (std::size_t i = 0; i < buf.size(); ++i) {
      buf[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img.data[i], 0.0, 1.0) * 255.0));
    }
    ok = png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr);
  }
  if (!ok) throw IoError("cannot write PNG " + path + ": " + image.message);
}

struct TargetImage {
  RasterImage rgb;   // 3 channels, canvas resolution
  RasterImage gray;  // luminance of rgb, for edge extraction
};

// Decodes, resizes (bilinear) to the canvas and converts to 3 channels.
inline TargetImage load_target(const std::string& path, CanvasSize canvas) {
  RasterImage img = resize_bilinear(read_image(path), canvas.width, canvas.height);
  TargetImage t;
  t.rgb = img.channels == 3 ? img : composite_to_rgb(img);
  t.gray = luminance(t.rgb);
  return t;
}

// I <- I * mask + (1 - mask), mask luminance resized to the image (white = keep).
inline TargetImage apply_mask(const TargetImage& target, const RasterImage& mask_image) {
  const RasterImage mask =
      resize_bilinear(luminance(mask_image), target.rgb.width, target.rgb.height);
  TargetImage out = target;
  for (std::size_t p = 0; p < mask.pixel_count(); ++p) {
    const double m = mask.data[p];
    for (int c = 0; c < 3; ++c) {
      double& v = out.rgb.data[3 * p + c];
      v = v * m + (1.0 - m);
    }
  }
  out.gray = luminance(out.rgb);
  return out;
}

}  // namespace strokeopt
