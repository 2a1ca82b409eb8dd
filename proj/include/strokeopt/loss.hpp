#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "strokeopt/errors.hpp"
#include "strokeopt/filters.hpp"
#include "strokeopt/image.hpp"

namespace strokeopt {

// Loss value split into its geometric and semantic parts, plus d(total)/d(sketch pixels).
struct LossReport {
  double total = 0.0;
  double semantic = 0.0;
  double geometric = 0.0;
  PixelGrad pixel_grad;

  bool finite() const {
    if (!std::isfinite(total) || !std::isfinite(semantic) || !std::isfinite(geometric)) return false;
    for (double g : pixel_grad.data) {
      if (!std::isfinite(g)) return false;
    }
    return true;
  }
};

struct PixelL2Backend {
  friend bool operator==(const PixelL2Backend&, const PixelL2Backend&) = default;
};
struct BlurredL2Backend {
  std::vector<double> sigmas{0.0, 1.0, 2.0, 4.0};
  friend bool operator==(const BlurredL2Backend&, const BlurredL2Backend&) = default;
};
struct RemoteBackend {
  std::string endpoint;  // "cmd:<shell command>" or "tcp:<host>:<port>"
  bool l2_parity = false;
  friend bool operator==(const RemoteBackend&, const RemoteBackend&) = default;
};

using BackendKind = std::variant<PixelL2Backend, BlurredL2Backend, RemoteBackend>;

struct LossSpec {
  BackendKind backend = PixelL2Backend{};
  double semantic_weight = 0.1;
  int augment_views = 4;

  void validate() const {
    if (!std::isfinite(semantic_weight) || semantic_weight < 0.0) {
      throw DomainError("semantic weight must be finite and non-negative");
    }
    if (augment_views < 0) throw DomainError("augment_views must be >= 0");
    if (const auto* b = std::get_if<BlurredL2Backend>(&backend)) {
      if (b->sigmas.empty()) throw DomainError("blurred L2 needs at least one level");
      for (double s : b->sigmas) {
        if (!(s >= 0.0) || !std::isfinite(s)) throw DomainError("blur sigmas must be >= 0");
      }
    }
  }
};

inline double combine(double geometric, double semantic, double semantic_weight) {
  return geometric + semantic_weight * semantic;
}

// 1 - u.v / (|u| |v|), clamped to [0, 2].
inline double cosine_distance(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw ShapeError("cosine_distance: vector lengths differ");
  double uv = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uv += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (!(uu > 0.0) || !(vv > 0.0)) throw DomainError("cosine_distance of a zero vector");
  return std::clamp(1.0 - uv / (std::sqrt(uu) * std::sqrt(vv)), 0.0, 2.0);
}

// Mean squared error over all values; gradient 2 (s - t) / N.
inline LossReport pixel_l2(const RasterImage& sketch, const RasterImage& target) {
  require_same_shape(sketch, target, "pixel_l2");
  LossReport r;
  r.pixel_grad = PixelGrad(sketch.width, sketch.height, sketch.channels);
  const double n = static_cast<double>(sketch.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < sketch.size(); ++i) {
    const double diff = sketch.data[i] - target.data[i];
    acc += diff * diff;
    r.pixel_grad.data[i] = 2.0 * diff / n;
  }
  r.geometric = n > 0 ? acc / n : 0.0;
  r.total = r.geometric;
  return r;
}

// Sum over blur levels of the MSE between Gaussian-blurred images (zero-padded borders).
// A level with sigma 0 is the plain pixel MSE.
inline LossReport blurred_l2(const RasterImage& sketch, const RasterImage& target,
                             std::span<const double> sigmas) {
  require_same_shape(sketch, target, "blurred_l2");
  if (sigmas.empty()) throw DomainError("blurred_l2 needs at least one level");
  LossReport r;
  r.pixel_grad = PixelGrad(sketch.width, sketch.height, sketch.channels);
  const double n = static_cast<double>(sketch.size());
  for (double sigma : sigmas) {
    if (!(sigma >= 0.0)) throw DomainError("blur sigma must be >= 0");
    const auto bs = gaussian_blur(sketch, sigma, Boundary::Zero);
    const auto bt = gaussian_blur(target, sigma, Boundary::Zero);
    PixelGrad level_grad(sketch.width, sketch.height, sketch.channels);
    double acc = 0.0;
    for (std::size_t i = 0; i < bs.size(); ++i) {
      const double diff = bs.data[i] - bt.data[i];
      acc += diff * diff;
      level_grad.data[i] = 2.0 * diff / n;
    }
    r.geometric += acc / n;
    // the zero-padded Gaussian is symmetric, so its transpose is itself
    const auto back = gaussian_blur(level_grad, sigma, Boundary::Zero);
    for (std::size_t i = 0; i < back.size(); ++i) r.pixel_grad.data[i] += back.data[i];
  }
  r.total = r.geometric;
  return r;
}

// Per-evaluation options. augment_views == 0 requests the deterministic eval-mode loss.
struct EvalRequest {
  int augment_views = 0;
  std::uint64_t seed = 0;
};

// Maps a rendered (3-channel) sketch to a loss report against a fixed target.
class LossBackend {
 public:
  virtual ~LossBackend() = default;
  virtual LossReport evaluate(const RasterImage& sketch, const EvalRequest& request) = 0;
};

class NativePixelL2 final : public LossBackend {
 public:
  explicit NativePixelL2(RasterImage target) : target_(std::move(target)) {}
  LossReport evaluate(const RasterImage& sketch, const EvalRequest&) override {
    return pixel_l2(sketch, target_);
  }

 private:
  RasterImage target_;
};

class NativeBlurredL2 final : public LossBackend {
 public:
  NativeBlurredL2(RasterImage target, std::vector<double> sigmas)
      : target_(std::move(target)), sigmas_(std::move(sigmas)) {}
  LossReport evaluate(const RasterImage& sketch, const EvalRequest&) override {
    return blurred_l2(sketch, target_, sigmas_);
  }

 private:
  RasterImage target_;
  std::vector<double> sigmas_;
};

// Native backends only; remote backends come from bind_remote (remote.hpp).
inline std::unique_ptr<LossBackend> make_native_backend(const LossSpec& spec, const RasterImage& target) {
  spec.validate();
  if (std::holds_alternative<PixelL2Backend>(spec.backend)) {
    return std::make_unique<NativePixelL2>(target);
  }
  if (const auto* b = std::get_if<BlurredL2Backend>(&spec.backend)) {
    return std::make_unique<NativeBlurredL2>(target, b->sigmas);
  }
  throw DomainError("make_native_backend: remote backend requires a sidecar session");
}

}  // namespace strokeopt
