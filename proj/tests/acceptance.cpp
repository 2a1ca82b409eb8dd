// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "strokeopt/geometry.hpp"
#include "strokeopt/loss.hpp"
#include "strokeopt/optimize.hpp"
#include "strokeopt/protocol.hpp"
#include "strokeopt/raster.hpp"
#include "strokeopt/saliency.hpp"
#include "strokeopt/svg.hpp"

namespace {

using namespace strokeopt;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240611);
  const CanvasSize canvas{32, 32};
  const RasterConfig cfg;
  oracle::GradCheck stats;
  int sketches = 0;
  for (int rep = 0; rep < 12; ++rep) {
    for (int n : {1, 4, 16}) {
      for (int degree : {1, 2, 3}) {
        const Sketch s = oracle::random_sketch(rng, n, degree, canvas);
        const PixelGrad g = oracle::random_pixel_grad(rng, canvas);
        oracle::check_gradient(s, cfg, g, 1e-3, 1e-3, stats);
        ++sketches;
      }
    }
  }
  const double secs = seconds_since(t0);
  const double rate = stats.checked > 0 ? double(stats.passed) / stats.checked : 0.0;
  Outcome o;
  o.pass = sketches >= 100 && rate >= 0.99 && secs < 60.0;
  o.detail = fmt("%d sketches, %d/%d non-tie parameters within 1e-3 (%.2f%%), %d tie-skipped, %.1fs", sketches,
                 stats.passed, stats.checked, 100.0 * rate, stats.skipped, secs);
  return o;
}

Outcome rasterizer_invariants() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(7);
  int mono_bad = 0, det_bad = 0;
  double mirror_err = 0.0;
  for (int rep = 0; rep < 60; ++rep) {
    const CanvasSize canvas = rep % 2 == 0 ? CanvasSize{32, 32} : CanvasSize{37, 21};
    const int degree = 1 + rep % 3;
    const int n = 1 + rep % 7;
    Sketch s = oracle::random_sketch(rng, n, degree, canvas, -3.0);
    const RasterConfig cfg;
    const auto base = render(s, cfg);

    // monotonicity: append and insert an extra stroke
    const Sketch extra = oracle::random_sketch(rng, 1, 1 + (rep + 1) % 3, canvas, -3.0);
    Sketch appended = s;
    appended.strokes.push_back(extra.strokes[0]);
    Sketch inserted = s;
    inserted.strokes.insert(inserted.strokes.begin() + rep % (n + 1), extra.strokes[0]);
    const auto a = render(appended, cfg);
    const auto b = render(inserted, cfg);
    for (std::size_t i = 0; i < base.data.size(); ++i) {
      // inserting mid-product reassociates the multiplication: allow a few ulps
      if (a.data[i] > base.data[i] || b.data[i] > base.data[i] * (1.0 + 4e-16)) ++mono_bad;
    }

    // mirror symmetry
    const auto m = render(oracle::mirror_x(s), cfg);
    for (int y = 0; y < canvas.height; ++y) {
      for (int x = 0; x < canvas.width; ++x) {
        mirror_err = std::max(mirror_err, std::abs(m.at(x, y) - base.at(canvas.width - 1 - x, y)));
      }
    }

    // determinism, forward and backward
    const auto again = render(s, cfg);
    if (std::memcmp(again.data.data(), base.data.data(), base.data.size() * sizeof(double)) != 0) ++det_bad;
    const auto g = oracle::random_pixel_grad(rng, canvas);
    const auto g1 = render_backward(s, cfg, g);
    const auto g2 = render_backward(s, cfg, g);
    if (std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(double)) != 0) ++det_bad;
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = mono_bad == 0 && mirror_err <= 1e-6 && det_bad == 0 && secs < 30.0;
  o.detail = fmt("60 sketches: monotonicity violations %d, max mirror error %.3g, nondeterministic %d, %.1fs",
                 mono_bad, mirror_err, det_bad, secs);
  return o;
}

// Pixel L2 only sees target ink inside the coverage band of a stroke, so at 64 px the
// edge is softened (2 px) and the init distribution sharpened (temperature 0.1) to put
// first control points on target edges.
Outcome end_to_end_native() {
  const CanvasSize canvas{64, 64};
  std::mt19937_64 rng(4);
  Sketch hidden = oracle::random_sketch(rng, 4, 3, canvas, 10.0, 2.0, 2.0);
  RasterConfig raster;
  raster.softness = 2.0;
  const RasterImage target = composite_to_rgb(render(hidden, raster));

  const auto edges = xdog(luminance(target));
  const auto dist = build_distribution(RelevancyMap::uniform(canvas.width, canvas.height), edges, 0.1);
  InitOptions init;
  init.strokes = 4;
  init.degree = 3;
  init.width = 2.0;

  OptConfig cfg;
  cfg.lr = 0.1;
  cfg.max_iters = 500;
  cfg.converge_delta = 0.0;
  cfg.seeds = 3;
  cfg.seed_base = 0;
  LossSpec loss;
  loss.backend = PixelL2Backend{};

  int good = 0;
  double worst_secs = 0.0;
  std::string per_seed;
  bool running_min_ok = true;
  for (int i = 0; i < cfg.seeds; ++i) {
    const auto t0 = Clock::now();
    InitOptions io = init;
    io.seed = cfg.seed_base + i;
    const Sketch start = sample_initial_sketch(dist, io);
    RunOptions ro;
    ro.raster = raster;
    ro.seed = io.seed;
    const auto run = run_single(target, loss, start, cfg, ro);
    worst_secs = std::max(worst_secs, seconds_since(t0));
    const double first = run.eval_losses.front().loss;
    const double last = run.final_loss();
    const double ratio = last / first;
    if (run.stop_reason != StopReason::Aborted && ratio < 0.10) ++good;
    double running = INFINITY;
    for (const auto& e : run.eval_losses) {
      const double next = std::min(running, e.loss);
      if (next > running) running_min_ok = false;
      running = next;
    }
    per_seed += fmt(" seed%d=%.4f", i, ratio);
  }
  Outcome o;
  o.pass = good >= 2 && running_min_ok && worst_secs < 120.0;
  o.detail = fmt("final/initial eval loss:%s; %d of 3 below 0.10; slowest seed %.1fs", per_seed.c_str(), good,
                 worst_secs);
  return o;
}

// Evaluation loss follows a script indexed by the number of steps taken so far.
struct ScriptedObjective {
  std::function<double(int)> script;
  int steps = 0;
  EvalRecord evaluate(const ParamVector&) { return {0, script(steps), 0.0, script(steps)}; }
  ParamVector gradient(const ParamVector& p, int) {
    ++steps;
    return ParamVector(p.size(), 0.0);
  }
};

Outcome convergence_rule() {
  const OptConfig defaults;
  struct Case {
    const char* name;
    std::function<double(int)> script;
    int max_iters;
    int expected;
  };
  // Evaluations land on iterations 10j. For L_j = 2^-j the gap L_{j-1} - L_j = 2^-j first
  // drops below 1e-5 at j = 17 (2^-16 = 1.53e-5, 2^-17 = 7.63e-6).
  // For L_j = 100/(j+1) the gap is 100/(j(j+1)), below 1e-5 once j(j+1) > 1e7, i.e. j = 3162.
  const std::vector<Case> cases = {
      {"geometric", [](int k) { return std::ldexp(1.0, -(k / 10)); }, 2000, 170},
      {"harmonic", [](int k) { return 100.0 / (k / 10 + 1); }, 40000, 31620},
      {"never", [](int k) { return 1.0 - 1e-3 * k; }, 2000, 2000},
  };
  Outcome o;
  o.pass = defaults.eval_every == 10 && defaults.converge_delta == 1e-5;
  for (const auto& c : cases) {
    OptConfig cfg = defaults;
    cfg.max_iters = c.max_iters;
    ScriptedObjective obj{c.script};
    const auto r = run_adam(ParamVector{0.0}, obj, cfg);
    const int stopped = r.evals.back().iter;
    const auto want = c.expected == c.max_iters ? StopReason::MaxIters : StopReason::Converged;
    const bool ok = stopped == c.expected && r.stop_reason == want && obj.steps == c.expected;
    o.pass = o.pass && ok;
    o.detail += fmt("%s%s stopped at %d (%s), expected %d", o.detail.empty() ? "" : "; ", c.name, stopped,
                    to_string(r.stop_reason), c.expected);
  }
  return o;
}

Outcome initialization() {
  // histogram total-variation distance on an 8x8 categorical map
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RelevancyMap rel(8, 8, 1);
  RasterImage edges(8, 8, 1);
  for (double& v : rel.data) v = u(rng);
  for (double& v : edges.data) v = 3.0 * u(rng);
  const auto dist = build_distribution(rel, edges, 0.5);
  InitOptions io;
  io.strokes = 100000;
  io.seed = 5;
  const Sketch sk = sample_initial_sketch(dist, io);
  std::vector<double> hist(64, 0.0);
  for (const auto& s : sk.strokes) {
    const int x = static_cast<int>(std::floor(s.points[0].x));
    const int y = static_cast<int>(std::floor(s.points[0].y));
    if (x >= 0 && x < 8 && y >= 0 && y < 8) hist[y * 8 + x] += 1.0;
  }
  double tv = 0.0;
  for (std::size_t i = 0; i < hist.size(); ++i) tv += std::abs(hist[i] / 1e5 - dist.probs[i]);
  tv *= 0.5;

  // radius rule on the default 224 canvas: 0.05 * 224 = 11.2 px
  InitOptions big;
  big.strokes = 100000;
  big.seed = 6;
  big.radius = 0.05;
  const Sketch wide = sample_initial_sketch(uniform_distribution(224, 224), big);
  int violations = 0;
  double max_r = 0.0;
  for (const auto& s : wide.strokes) {
    for (std::size_t j = 1; j < s.points.size(); ++j) {
      const double r = norm(s.points[j] - s.points[0]);
      max_r = std::max(max_r, r);
      if (r > 0.05 * 224) ++violations;
    }
  }

  // xdog is unchanged by a constant offset
  RasterImage img(48, 40, 1);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) img.at(x, y) = 0.5 * u(rng) * (x > 20 ? 1.0 : 0.2);
  }
  RasterImage shifted = img;
  for (double& v : shifted.data) v += 0.37;
  const auto e1 = xdog(img);
  const auto e2 = xdog(shifted);
  double dc = 0.0;
  for (std::size_t i = 0; i < e1.data.size(); ++i) dc = std::max(dc, std::abs(e1.data[i] - e2.data[i]));

  Outcome o;
  o.pass = tv <= 0.02 && violations == 0 && dc <= 1e-6;
  o.detail = fmt("TV %.4f over 1e5 draws; radius violations %d (max %.3f of 11.2 px); xdog offset change %.3g", tv,
                 violations, max_r, dc);
  return o;
}

Outcome svg_round_trip() {
  std::mt19937_64 rng(11);
  int mismatched_bytes = 0, mismatched_points = 0, total_points = 0;
  for (int rep = 0; rep < 50; ++rep) {
    Sketch s = oracle::random_sketch(rng, 1 + rep % 16, 1 + rep % 3, {224, 224}, -20.0, 0.5, 5.0);
    const std::string first = to_svg(s);
    const Sketch back = parse_svg(first);
    if (to_svg(back) != first) ++mismatched_bytes;
    for (std::size_t i = 0; i < s.strokes.size(); ++i) {
      for (std::size_t j = 0; j < s.strokes[i].points.size(); ++j) {
        const Point p = s.strokes[i].points[j];
        const Point q = back.strokes.at(i).points.at(j);
        char bx[64], by[64];
        std::snprintf(bx, sizeof bx, "%.6f", p.x);
        std::snprintf(by, sizeof by, "%.6f", p.y);
        ++total_points;
        if (q.x != std::strtod(bx, nullptr) || q.y != std::strtod(by, nullptr)) ++mismatched_points;
      }
    }
  }
  Outcome o;
  o.pass = mismatched_bytes == 0 && mismatched_points == 0;
  o.detail = fmt("50 sketches: %d byte mismatches, %d/%d control points differ from their 6-decimal value",
                 mismatched_bytes, mismatched_points, total_points);
  return o;
}

wire::Bytes fixture(const char* name) {
  std::ifstream f(std::string(STROKEOPT_FIXTURE_DIR) + "/" + name, std::ios::binary);
  if (!f) throw std::runtime_error(std::string("missing fixture ") + name);
  return wire::Bytes(std::istreambuf_iterator<char>(f), {});
}

Outcome protocol_conformance() {
  using namespace wire;
  int bad = 0;
  auto expect = [&](bool ok) { bad += ok ? 0 : 1; };

  const WireImage reg_img{2, 1, 1, {0.25f, 1.0f}};
  const WireImage eval_img{1, 2, 3, {0.0f, 0.5f, 1.0f, 0.75f, 0.25f, 0.125f}};
  const RegisterTarget reg{reg_img};
  const Registered regd{7, {0.5f, 0.125f}};
  const EvalLoss ev{7, 4, 0x0102030405060708ull, kIncludeSemantic | kIncludeGeometric, eval_img};
  const LossResult lr{1.25, 0.5, 1.2, {-0.25f, 0.125f}};

  expect(encode_frame(MsgType::RegisterTarget, encode(reg)) == fixture("register_target.bin"));
  expect(encode_frame(MsgType::Registered, encode(regd)) == fixture("registered.bin"));
  expect(encode_frame(MsgType::EvalLoss, encode(ev)) == fixture("eval_loss.bin"));
  expect(encode_frame(MsgType::Loss, encode(lr)) == fixture("loss.bin"));
  expect(encode_frame(MsgType::Shutdown, {}) == fixture("shutdown.bin"));
  expect(encode_frame(MsgType::ShutdownAck, {}) == fixture("shutdown_ack.bin"));
  expect(encode_frame(MsgType::Error, encode_error("unknown target 9")) == fixture("error.bin"));

  expect(decode_register_target(decode_frame(fixture("register_target.bin")).payload) == reg);
  expect(decode_registered(decode_frame(fixture("registered.bin")).payload, 2) == regd);
  expect(decode_eval_loss(decode_frame(fixture("eval_loss.bin")).payload) == ev);
  expect(decode_loss_result(decode_frame(fixture("loss.bin")).payload, 2) == lr);
  expect(decode_frame(fixture("shutdown.bin")).type == MsgType::Shutdown);
  expect(decode_frame(fixture("shutdown_ack.bin")).type == MsgType::ShutdownAck);
  expect(decode_error(decode_frame(fixture("error.bin")).payload) == "unknown target 9");
  const int golden_bad = bad;

  // malformed frames must raise ProtocolError
  int rejected = 0, accepted = 0;
  auto must_reject = [&](auto&& f) {
    try {
      f();
      ++accepted;
    } catch (const ProtocolError&) {
      ++rejected;
    }
  };
  const Bytes good = fixture("eval_loss.bin");
  auto mutate = [&](std::size_t at, std::uint8_t v) {
    Bytes b = good;
    b[at] = v;
    return b;
  };
  must_reject([&] { decode_frame(mutate(0, 'X')); });                     // magic
  must_reject([&] { decode_frame(mutate(4, 2)); });                       // version
  must_reject([&] { decode_frame(mutate(6, 42)); });                      // unknown type
  must_reject([&] { decode_frame(mutate(11, 0x7f)); });                   // length beyond limit
  must_reject([&] { decode_frame(Bytes(good.begin(), good.end() - 1)); });  // truncated payload
  must_reject([&] { decode_frame(Bytes(good.begin(), good.begin() + 7)); });  // truncated header
  must_reject([&] {
    Bytes b = good;
    b.push_back(0);
    decode_frame(b);
  });  // trailing byte
  must_reject([&] { decode_eval_loss(decode_frame(mutate(12 + 20 + 8, 2)).payload); });  // 2 channels
  must_reject([&] { decode_eval_loss(decode_frame(mutate(12 + 20, 9)).payload); });  // width vs data
  must_reject([&] { decode_loss_result(decode_frame(fixture("loss.bin")).payload, 3); });  // grad shape
  must_reject([&] {
    LossResult nan = lr;
    nan.total = std::nan("");
    decode_loss_result(encode(nan), 2);
  });
  must_reject([&] {
    LossResult inf = lr;
    inf.grad[1] = INFINITY;
    decode_loss_result(encode(inf), 2);
  });
  must_reject([&] { decode_registered(decode_frame(fixture("registered.bin")).payload, 3); });
  must_reject([&] { decode_registered(Bytes{1, 0}, 0); });
  const int explicit_cases = rejected + accepted;

  // random corruption: any outcome but a foreign exception or crash is acceptable
  std::mt19937_64 rng(3);
  int foreign = 0;
  const std::vector<Bytes> seeds = {fixture("register_target.bin"), fixture("registered.bin"), good,
                                    fixture("loss.bin"), fixture("error.bin")};
  for (int i = 0; i < 20000; ++i) {
    Bytes b = seeds[i % seeds.size()];
    const int edits = 1 + static_cast<int>(rng() % 4);
    for (int e = 0; e < edits; ++e) {
      switch (rng() % 3) {
        case 0:
          b[rng() % b.size()] = static_cast<std::uint8_t>(rng());
          break;
        case 1:
          if (b.size() > 1) b.resize(b.size() - 1 - rng() % std::min<std::size_t>(b.size() - 1, 8));
          break;
        default:
          b.push_back(static_cast<std::uint8_t>(rng()));
      }
    }
    try {
      const Frame f = decode_frame(b);
      switch (f.type) {
        case MsgType::RegisterTarget:
          decode_register_target(f.payload);
          break;
        case MsgType::Registered:
          decode_registered(f.payload, 2);
          break;
        case MsgType::EvalLoss:
          decode_eval_loss(f.payload);
          break;
        case MsgType::Loss:
          decode_loss_result(f.payload, 2);
          break;
        default:
          decode_error(f.payload);
      }
    } catch (const ProtocolError&) {
    } catch (...) {
      ++foreign;
    }
  }

  Outcome o;
  o.pass = golden_bad == 0 && accepted == 0 && foreign == 0;
  o.detail = fmt("golden mismatches %d/14; malformed frames rejected %d/%d; 20000 corrupted frames, %d non-protocol "
                 "failures",
                 golden_bad, rejected, explicit_cases, foreign);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    const char* name;
    Outcome (*run)();
  };
  const std::vector<Criterion> criteria = {
      {"gradient-correctness", gradient_correctness},
      {"rasterizer-invariants", rasterizer_invariants},
      {"end-to-end-native-optimization", end_to_end_native},
      {"convergence-rule", convergence_rule},
      {"initialization", initialization},
      {"svg-export", svg_round_trip},
      {"protocol", protocol_conformance},
  };
  const std::string only = argc > 1 ? argv[1] : "";
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && only != c.name) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
