#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <type_traits>

#include "strokeopt/errors.hpp"
#include "strokeopt/image.hpp"
#include "strokeopt/loss.hpp"
#include "strokeopt/protocol.hpp"
#include "strokeopt/saliency.hpp"
#include "strokeopt/transport.hpp"

namespace strokeopt {

struct Endpoint {
  enum class Kind { Command, Tcp };
  Kind kind = Kind::Command;
  std::string command;
  std::string host;
  std::string port;

  // "cmd:<shell command>" or "tcp:<host>:<port>"
  static Endpoint parse(std::string_view spec) {
    Endpoint e;
    if (spec.starts_with("cmd:")) {
      e.kind = Kind::Command;
      e.command = std::string(spec.substr(4));
      if (e.command.empty()) throw DomainError("empty sidecar command");
      return e;
    }
    if (spec.starts_with("tcp:")) {
      const auto rest = spec.substr(4);
      const auto colon = rest.rfind(':');
      if (colon == std::string_view::npos || colon == 0 || colon + 1 == rest.size()) {
        throw DomainError("tcp endpoint must look like tcp:host:port");
      }
      e.kind = Kind::Tcp;
      e.host = std::string(rest.substr(0, colon));
      e.port = std::string(rest.substr(colon + 1));
      return e;
    }
    throw DomainError("backend endpoint must start with cmd: or tcp:");
  }
};

inline wire::WireImage to_wire(const ImageBuffer& img) {
  wire::WireImage w;
  w.width = static_cast<std::uint32_t>(img.width);
  w.height = static_cast<std::uint32_t>(img.height);
  w.channels = static_cast<std::uint32_t>(img.channels);
  w.pixels.reserve(img.size());
  for (double v : img.data) w.pixels.push_back(static_cast<float>(v));
  return w;
}

struct Registration {
  std::uint32_t target_id = 0;
  RelevancyMap relevancy;
};

// Client side of one sidecar connection. Requests are strictly sequential. The
// destructor sends SHUTDOWN (unless the stream is broken) and reaps a spawned child.
class SidecarSession {
 public:
  explicit SidecarSession(std::unique_ptr<Stream> stream, ChildProcess child = {})
      : stream_(std::move(stream)), child_(std::move(child)) {}

  static std::unique_ptr<SidecarSession> open(const Endpoint& endpoint) {
    if (endpoint.kind == Endpoint::Kind::Command) {
      auto spawned = spawn_command(endpoint.command);
      return std::make_unique<SidecarSession>(std::move(spawned.stream), std::move(spawned.child));
    }
    return std::make_unique<SidecarSession>(connect_tcp(endpoint.host, endpoint.port));
  }

  SidecarSession(const SidecarSession&) = delete;
  SidecarSession& operator=(const SidecarSession&) = delete;

  ~SidecarSession() {
    try {
      shutdown();
    } catch (const Error&) {
    }
    stream_.reset();
    child_.wait();
  }

  Registration register_target(const RasterImage& target) {
    const auto reply = request(wire::MsgType::RegisterTarget,
                               wire::encode(wire::RegisterTarget{to_wire(target)}),
                               wire::MsgType::Registered);
    const auto msg = guarded([&] { return wire::decode_registered(reply.payload, target.pixel_count()); });
    Registration r;
    r.target_id = msg.target_id;
    r.relevancy = RelevancyMap(target.width, target.height, 1);
    for (std::size_t i = 0; i < msg.relevancy.size(); ++i) {
      if (msg.relevancy[i] < 0.0f) {
        broken_ = true;
        throw ProtocolError("negative value in relevancy map");
      }
      r.relevancy.data[i] = msg.relevancy[i];
    }
    return r;
  }

  wire::LossResult evaluate(std::uint32_t target_id, const RasterImage& image,
                            std::uint32_t augment_views, std::uint64_t seed, std::uint32_t flags) {
    wire::EvalLoss req{target_id, augment_views, seed, flags, to_wire(image)};
    const auto reply = request(wire::MsgType::EvalLoss, wire::encode(req), wire::MsgType::Loss);
    return guarded([&] { return wire::decode_loss_result(reply.payload, image.size()); });
  }

  // Sends SHUTDOWN and waits for the acknowledgement. Idempotent.
  void shutdown() {
    if (closed_ || broken_) return;
    closed_ = true;
    request(wire::MsgType::Shutdown, {}, wire::MsgType::ShutdownAck);
  }

  bool broken() const { return broken_; }

 private:
  template <class F>
  std::invoke_result_t<F> guarded(F&& f) {
    try {
      return f();
    } catch (const ProtocolError&) {
      broken_ = true;
      throw;
    }
  }

  wire::Frame request(wire::MsgType type, const wire::Bytes& payload, wire::MsgType expected) {
    if (broken_) throw TransportError("sidecar session is no longer usable");
    if (closed_ && type != wire::MsgType::Shutdown) throw TransportError("sidecar session is shut down");
    wire::Frame reply;
    try {
      write_frame(*stream_, type, payload);
      reply = read_frame(*stream_);
    } catch (const Error&) {
      broken_ = true;
      throw;
    }
    if (reply.type == wire::MsgType::Error) {
      throw ProtocolError("sidecar error: " + wire::decode_error(reply.payload));
    }
    if (reply.type != expected) {
      broken_ = true;
      throw ProtocolError("unexpected reply type " + std::to_string(static_cast<int>(reply.type)));
    }
    return reply;
  }

  std::unique_ptr<Stream> stream_;
  ChildProcess child_;
  bool broken_ = false;
  bool closed_ = false;
};

inline std::uint32_t eval_flags(bool l2_parity) {
  return l2_parity ? wire::kL2Parity : (wire::kIncludeSemantic | wire::kIncludeGeometric);
}

// One loss evaluation through the sidecar. The reply must satisfy
// total == geometric + w_s * semantic (checked to 1e-5 relative) outside parity mode.
inline LossReport remote_loss(SidecarSession& session, const RasterImage& sketch,
                              std::uint32_t target_id, const LossSpec& spec,
                              const EvalRequest& request) {
  const auto* remote = std::get_if<RemoteBackend>(&spec.backend);
  const bool parity = remote != nullptr && remote->l2_parity;
  const auto res = session.evaluate(target_id, sketch, static_cast<std::uint32_t>(request.augment_views),
                                    request.seed, eval_flags(parity));
  if (!parity) {
    const double expected = combine(res.geometric, res.semantic, spec.semantic_weight);
    if (std::abs(res.total - expected) > 1e-5 * std::max(1.0, std::abs(res.total))) {
      throw ProtocolError("sidecar total " + std::to_string(res.total) +
                          " disagrees with geometric + w_s * semantic = " + std::to_string(expected) +
                          " (check the sidecar's semantic weight)");
    }
  }
  LossReport r;
  r.total = res.total;
  r.semantic = res.semantic;
  r.geometric = res.geometric;
  r.pixel_grad = PixelGrad(sketch.width, sketch.height, sketch.channels);
  for (std::size_t i = 0; i < res.grad.size(); ++i) r.pixel_grad.data[i] = res.grad[i];
  return r;
}

class RemoteLossBackend final : public LossBackend {
 public:
  RemoteLossBackend(std::shared_ptr<SidecarSession> session, std::uint32_t target_id, LossSpec spec)
      : session_(std::move(session)), target_id_(target_id), spec_(std::move(spec)) {}

  LossReport evaluate(const RasterImage& sketch, const EvalRequest& request) override {
    return remote_loss(*session_, sketch, target_id_, spec_, request);
  }

 private:
  std::shared_ptr<SidecarSession> session_;
  std::uint32_t target_id_;
  LossSpec spec_;
};

// Opens a session for a remote spec, registers the target, and returns the backend
// together with the relevancy map the sidecar computed at registration.
struct RemoteBinding {
  std::shared_ptr<SidecarSession> session;
  Registration registration;
  std::unique_ptr<LossBackend> backend;
};

inline RemoteBinding bind_remote(const LossSpec& spec, const RasterImage& target) {
  spec.validate();
  const auto* remote = std::get_if<RemoteBackend>(&spec.backend);
  if (remote == nullptr) throw DomainError("bind_remote needs a remote loss spec");
  RemoteBinding b;
  b.session = SidecarSession::open(Endpoint::parse(remote->endpoint));
  b.registration = b.session->register_target(target);
  b.backend = std::make_unique<RemoteLossBackend>(b.session, b.registration.target_id, spec);
  return b;
}

}  // namespace strokeopt
