#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "strokeopt/errors.hpp"

/*
  Sidecar wire format, all integers and floats little-endian:

    frame  = "SKOP" | version u16 (=1) | msg_type u16 | payload_len u32 | payload
    image  = w u32 | h u32 | c u32 | w*h*c f32

    1   REGISTER_TARGET  image
    101 REGISTERED       target_id u32 | relevancy w*h f32
    2   EVAL_LOSS        target_id u32 | augment_views u32 | seed u64 | flags u32 | image
    102 LOSS             total f64 | semantic f64 | geometric f64 | grad w*h*c f32
    3   SHUTDOWN         (empty)
    103 SHUTDOWN_ACK     (empty)
    500 ERROR            UTF-8 message
*/

namespace strokeopt::wire {

inline constexpr std::array<std::uint8_t, 4> kMagic = {'S', 'K', 'O', 'P'};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 12;
inline constexpr std::uint32_t kMaxPayload = 1u << 28;

enum class MsgType : std::uint16_t {
  RegisterTarget = 1,
  EvalLoss = 2,
  Shutdown = 3,
  Registered = 101,
  Loss = 102,
  ShutdownAck = 103,
  Error = 500,
};

inline bool is_known(std::uint16_t t) {
  switch (static_cast<MsgType>(t)) {
    case MsgType::RegisterTarget:
    case MsgType::EvalLoss:
    case MsgType::Shutdown:
    case MsgType::Registered:
    case MsgType::Loss:
    case MsgType::ShutdownAck:
    case MsgType::Error:
      return true;
  }
  return false;
}

// EVAL_LOSS flag bits.
inline constexpr std::uint32_t kIncludeSemantic = 1u << 0;
inline constexpr std::uint32_t kIncludeGeometric = 1u << 1;
inline constexpr std::uint32_t kL2Parity = 1u << 2;

using Bytes = std::vector<std::uint8_t>;

struct Frame {
  MsgType type = MsgType::Error;
  Bytes payload;
  friend bool operator==(const Frame&, const Frame&) = default;
};

struct WireImage {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t channels = 0;
  std::vector<float> pixels;
  friend bool operator==(const WireImage&, const WireImage&) = default;
};

struct RegisterTarget {
  WireImage image;
  friend bool operator==(const RegisterTarget&, const RegisterTarget&) = default;
};

struct Registered {
  std::uint32_t target_id = 0;
  std::vector<float> relevancy;
  friend bool operator==(const Registered&, const Registered&) = default;
};

struct EvalLoss {
  std::uint32_t target_id = 0;
  std::uint32_t augment_views = 0;
  std::uint64_t seed = 0;
  std::uint32_t flags = 0;
  WireImage image;
  friend bool operator==(const EvalLoss&, const EvalLoss&) = default;
};

struct LossResult {
  double total = 0.0;
  double semantic = 0.0;
  double geometric = 0.0;
  std::vector<float> grad;
  friend bool operator==(const LossResult&, const LossResult&) = default;
};

class Writer {
 public:
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void image(const WireImage& img) {
    u32(img.width);
    u32(img.height);
    u32(img.channels);
    for (float p : img.pixels) f32(p);
  }
  Bytes take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  Bytes out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }

  std::vector<float> floats(std::uint64_t count) {
    if (count > remaining() / 4) throw ProtocolError("payload too short for float array");
    std::vector<float> v(count);
    for (auto& f : v) f = f32();
    return v;
  }

  WireImage image() {
    WireImage img;
    img.width = u32();
    img.height = u32();
    img.channels = u32();
    if (img.channels != 1 && img.channels != 3) {
      throw ProtocolError("image channel count must be 1 or 3");
    }
    // compared by division: w * h * c * 4 can exceed 64 bits
    const std::uint64_t pixels = std::uint64_t{img.width} * img.height;
    const std::uint64_t values = remaining() / 4;
    if (remaining() % 4 != 0 || values % img.channels != 0 || values / img.channels != pixels) {
      throw ProtocolError("image pixel data length does not match dimensions");
    }
    img.pixels = floats(values);
    return img;
  }

  std::size_t remaining() const { return data_.size() - pos_; }
  void expect_end() const {
    if (remaining() != 0) throw ProtocolError("trailing bytes in payload");
  }

 private:
  std::uint64_t get(int n) {
    if (remaining() < static_cast<std::size_t>(n)) throw ProtocolError("payload truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{data_[pos_ + i]} << (8 * i);
    pos_ += n;
    return v;
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

inline Bytes encode_frame(MsgType type, std::span<const std::uint8_t> payload) {
  if (payload.size() > kMaxPayload) throw ProtocolError("payload exceeds maximum frame size");
  Writer w;
  w.raw(kMagic);
  w.u16(kVersion);
  w.u16(static_cast<std::uint16_t>(type));
  w.u32(static_cast<std::uint32_t>(payload.size()));
  w.raw(payload);
  return w.take();
}

inline Bytes encode_frame(const Frame& f) { return encode_frame(f.type, f.payload); }

struct Header {
  MsgType type;
  std::uint32_t payload_len;
};

inline Header decode_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kHeaderSize) throw ProtocolError("frame header must be 12 bytes");
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) throw ProtocolError("bad frame magic");
  Reader r(bytes.subspan(4));
  const auto version = r.u16();
  if (version != kVersion) {
    throw ProtocolError("unsupported protocol version " + std::to_string(version));
  }
  const auto type = r.u16();
  if (!is_known(type)) throw ProtocolError("unknown message type " + std::to_string(type));
  const auto len = r.u32();
  if (len > kMaxPayload) throw ProtocolError("frame payload length exceeds limit");
  return {static_cast<MsgType>(type), len};
}

// Decodes exactly one complete frame; extra or missing bytes are protocol errors.
inline Frame decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) throw ProtocolError("frame shorter than header");
  const auto h = decode_header(bytes.first(kHeaderSize));
  if (bytes.size() - kHeaderSize != h.payload_len) {
    throw ProtocolError("frame length does not match payload_len");
  }
  return {h.type, Bytes(bytes.begin() + kHeaderSize, bytes.end())};
}

// Payload encoders.

inline Bytes encode(const RegisterTarget& m) {
  Writer w;
  w.image(m.image);
  return w.take();
}

inline Bytes encode(const Registered& m) {
  Writer w;
  w.u32(m.target_id);
  for (float v : m.relevancy) w.f32(v);
  return w.take();
}

inline Bytes encode(const EvalLoss& m) {
  Writer w;
  w.u32(m.target_id);
  w.u32(m.augment_views);
  w.u64(m.seed);
  w.u32(m.flags);
  w.image(m.image);
  return w.take();
}

inline Bytes encode(const LossResult& m) {
  Writer w;
  w.f64(m.total);
  w.f64(m.semantic);
  w.f64(m.geometric);
  for (float v : m.grad) w.f32(v);
  return w.take();
}

inline Bytes encode_error(std::string_view message) { return Bytes(message.begin(), message.end()); }

// Payload decoders. Reply decoders take the element count implied by the request.

inline RegisterTarget decode_register_target(std::span<const std::uint8_t> payload) {
  Reader r(payload);
  RegisterTarget m{r.image()};
  r.expect_end();
  return m;
}

inline Registered decode_registered(std::span<const std::uint8_t> payload, std::uint64_t expected_pixels) {
  Reader r(payload);
  Registered m;
  m.target_id = r.u32();
  if (r.remaining() != expected_pixels * 4) {
    throw ProtocolError("relevancy map size does not match the registered image");
  }
  m.relevancy = r.floats(expected_pixels);
  for (float v : m.relevancy) {
    if (!std::isfinite(v)) throw ProtocolError("non-finite value in relevancy map");
  }
  return m;
}

inline EvalLoss decode_eval_loss(std::span<const std::uint8_t> payload) {
  Reader r(payload);
  EvalLoss m;
  m.target_id = r.u32();
  m.augment_views = r.u32();
  m.seed = r.u64();
  m.flags = r.u32();
  m.image = r.image();
  r.expect_end();
  return m;
}

inline LossResult decode_loss_result(std::span<const std::uint8_t> payload, std::uint64_t expected_values) {
  Reader r(payload);
  LossResult m;
  m.total = r.f64();
  m.semantic = r.f64();
  m.geometric = r.f64();
  if (r.remaining() != expected_values * 4) {
    throw ProtocolError("gradient shape does not match the evaluated image");
  }
  m.grad = r.floats(expected_values);
  if (!std::isfinite(m.total) || !std::isfinite(m.semantic) || !std::isfinite(m.geometric)) {
    throw ProtocolError("non-finite loss value in reply");
  }
  for (float g : m.grad) {
    if (!std::isfinite(g)) throw ProtocolError("non-finite gradient value in reply");
  }
  return m;
}

inline std::string decode_error(std::span<const std::uint8_t> payload) {
  return std::string(payload.begin(), payload.end());
}

}  // namespace strokeopt::wire
