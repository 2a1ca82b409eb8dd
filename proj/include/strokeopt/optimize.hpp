#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "strokeopt/errors.hpp"
#include "strokeopt/geometry.hpp"
#include "strokeopt/image.hpp"
#include "strokeopt/loss.hpp"
#include "strokeopt/raster.hpp"
#include "strokeopt/saliency.hpp"

namespace strokeopt {

struct OptConfig {
  double lr = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int max_iters = 2000;
  int eval_every = 10;
  double converge_delta = 1e-5;
  int seeds = 3;
  std::uint64_t seed_base = 0;
  int snapshot_every = 0;  // 0 disables snapshots

  void validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw DomainError("learning rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw DomainError("Adam betas must lie in [0, 1)");
    }
    if (!(eps > 0.0)) throw DomainError("Adam epsilon must be positive");
    if (max_iters < 1) throw DomainError("max_iters must be >= 1");
    if (eval_every < 1) throw DomainError("eval_every must be >= 1");
    if (!(converge_delta >= 0.0)) throw DomainError("converge_delta must be >= 0");
    if (seeds < 1) throw DomainError("seed count must be >= 1");
    if (snapshot_every < 0) throw DomainError("snapshot_every must be >= 0");
  }
};

struct AdamState {
  ParamVector m;
  ParamVector v;
  std::int64_t t = 0;
};

struct AdamUpdate {
  ParamVector params;
  AdamState state;
};

// Bias-corrected Adam. Empty moment vectors are treated as zeros.
inline AdamUpdate adam_step(ParamVector params, const ParamVector& grads, AdamState state,
                            const OptConfig& cfg) {
  if (grads.size() != params.size()) throw ShapeError("adam_step: gradient length differs from params");
  if (state.m.empty()) state.m.assign(params.size(), 0.0);
  if (state.v.empty()) state.v.assign(params.size(), 0.0);
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: moment length differs from params");
  }
  if (state.t < 0) throw DomainError("adam_step: negative step count");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
  return {std::move(params), std::move(state)};
}

// Stops once two successive evaluation losses differ by less than delta.
class ConvergenceMonitor {
 public:
  explicit ConvergenceMonitor(double delta) : delta_(delta) {}

  bool observe(double loss) {
    const bool done = seen_ && std::abs(loss - last_) < delta_;
    last_ = loss;
    seen_ = true;
    return done;
  }

 private:
  double delta_;
  double last_ = 0.0;
  bool seen_ = false;
};

enum class StopReason { Converged, MaxIters, Aborted };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::Converged:
      return "converged";
    case StopReason::MaxIters:
      return "max_iters";
    case StopReason::Aborted:
      return "aborted";
  }
  return "unknown";
}

struct EvalRecord {
  int iter = 0;
  double loss = 0.0;
  double semantic = 0.0;
  double geometric = 0.0;
};

struct LoopResult {
  ParamVector params;
  std::vector<EvalRecord> evals;
  StopReason stop_reason = StopReason::MaxIters;
  std::string message;
  std::vector<std::pair<int, ParamVector>> snapshots;
};

// An objective supplies an augmentation-free evaluation and a (possibly stochastic)
// training gradient.
template <class T>
concept Objective = requires(T& obj, const ParamVector& p, int iter) {
  { obj.evaluate(p) } -> std::convertible_to<EvalRecord>;
  { obj.gradient(p, iter) } -> std::convertible_to<ParamVector>;
};

// Adam loop. Iteration k evaluates (when k is a multiple of eval_every, or k == max_iters)
// before taking step k; evaluation at max_iters ends the run.
template <Objective Obj>
LoopResult run_adam(ParamVector params, Obj& objective, const OptConfig& cfg) {
  cfg.validate();
  LoopResult out;
  AdamState state;
  ConvergenceMonitor monitor(cfg.converge_delta);
  int iter = 0;
  try {
    for (;; ++iter) {
      if (cfg.snapshot_every > 0 && iter % cfg.snapshot_every == 0) {
        out.snapshots.emplace_back(iter, params);
      }
      if (iter % cfg.eval_every == 0 || iter == cfg.max_iters) {
        EvalRecord rec = objective.evaluate(params);
        rec.iter = iter;
        if (!std::isfinite(rec.loss)) throw NumericError("non-finite evaluation loss");
        out.evals.push_back(rec);
        if (monitor.observe(rec.loss)) {
          out.stop_reason = StopReason::Converged;
          break;
        }
      }
      if (iter == cfg.max_iters) {
        out.stop_reason = StopReason::MaxIters;
        break;
      }
      const ParamVector grads = objective.gradient(params, iter);
      for (double g : grads) {
        if (!std::isfinite(g)) throw NumericError("non-finite gradient");
      }
      auto step = adam_step(std::move(params), grads, std::move(state), cfg);
      params = std::move(step.params);
      state = std::move(step.state);
    }
  } catch (const Error& e) {
    out.stop_reason = StopReason::Aborted;
    out.message = "iteration " + std::to_string(iter) + ": " + e.what();
  }
  out.params = std::move(params);
  return out;
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t iter) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (iter + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

struct RunOptions {
  RasterConfig raster;
  int augment_views = 0;  // training-step views; evaluation always uses 0
  std::uint64_t seed = 0;
};

// Render -> loss -> pixel gradient -> rasterizer backward.
class SketchObjective {
 public:
  SketchObjective(LossBackend& backend, Sketch templ, RunOptions opt)
      : backend_(backend), templ_(std::move(templ)), opt_(opt) {}

  EvalRecord evaluate(const ParamVector& p) {
    const auto rep = backend_.evaluate(rgb(p), EvalRequest{0, opt_.seed});
    return {0, rep.total, rep.semantic, rep.geometric};
  }

  ParamVector gradient(const ParamVector& p, int iter) {
    const Sketch sketch = from_params(p, templ_);
    const auto img = composite_to_rgb(render(sketch, opt_.raster));
    const auto rep = backend_.evaluate(
        img, EvalRequest{opt_.augment_views, mix_seed(opt_.seed, static_cast<std::uint64_t>(iter))});
    if (!rep.pixel_grad.same_shape(img)) throw ShapeError("loss backend returned a mis-shaped gradient");
    return render_backward(sketch, opt_.raster, sum_channels(rep.pixel_grad));
  }

 private:
  RasterImage rgb(const ParamVector& p) const {
    return composite_to_rgb(render(from_params(p, templ_), opt_.raster));
  }

  LossBackend& backend_;
  Sketch templ_;
  RunOptions opt_;
};

struct OptRunResult {
  std::uint64_t seed = 0;
  Sketch final_sketch;
  std::vector<EvalRecord> eval_losses;
  StopReason stop_reason = StopReason::MaxIters;
  std::string message;
  std::vector<std::pair<int, Sketch>> snapshots;

  double final_loss() const {
    return eval_losses.empty() ? std::numeric_limits<double>::infinity() : eval_losses.back().loss;
  }
};

inline OptRunResult run_single(const RasterImage& target, LossBackend& backend, const Sketch& init,
                               const OptConfig& cfg, const RunOptions& opt = {}) {
  init.validate();
  if (target.width != init.canvas.width || target.height != init.canvas.height) {
    throw ShapeError("initial sketch canvas does not match the target image");
  }
  SketchObjective objective(backend, init, opt);
  auto loop = run_adam(to_params(init), objective, cfg);

  OptRunResult r;
  r.seed = opt.seed;
  r.final_sketch = from_params(loop.params, init);
  r.eval_losses = std::move(loop.evals);
  r.stop_reason = loop.stop_reason;
  r.message = std::move(loop.message);
  for (auto& [iter, p] : loop.snapshots) r.snapshots.emplace_back(iter, from_params(p, init));
  return r;
}

// Convenience overload for native loss specs.
inline OptRunResult run_single(const RasterImage& target, const LossSpec& loss, const Sketch& init,
                               const OptConfig& cfg, const RunOptions& opt = {}) {
  auto backend = make_native_backend(loss, target);
  return run_single(target, *backend, init, cfg, opt);
}

struct MultiSeedResult {
  std::size_t best = 0;
  std::vector<OptRunResult> runs;

  const OptRunResult& best_run() const { return runs.at(best); }
};

// Builds one backend per seed so remote seeds get independent sessions.
using BackendFactory = std::function<std::unique_ptr<LossBackend>(std::size_t seed_index)>;

// Seed i (seed = cfg.seed_base + i) draws its own initial sketch from dist and runs
// run_single. The best run has the lowest final eval loss among runs that did not abort,
// ties going to the lower index.
inline MultiSeedResult run_multi_seed(const RasterImage& target, const BackendFactory& make_backend,
                                      const DistributionMap& dist, InitOptions init,
                                      const OptConfig& cfg, RunOptions opt = {},
                                      bool parallel = false) {
  cfg.validate();
  auto one = [&](std::size_t i) {
    const std::uint64_t seed = cfg.seed_base + i;
    InitOptions io = init;
    io.seed = seed;
    const Sketch start = sample_initial_sketch(dist, io);
    RunOptions ro = opt;
    ro.seed = seed;
    try {
      auto backend = make_backend(i);
      return run_single(target, *backend, start, cfg, ro);
    } catch (const Error& e) {
      OptRunResult failed;
      failed.seed = seed;
      failed.final_sketch = start;
      failed.stop_reason = StopReason::Aborted;
      failed.message = e.what();
      return failed;
    }
  };

  MultiSeedResult out;
  const auto n = static_cast<std::size_t>(cfg.seeds);
  if (parallel && n > 1) {
    std::vector<std::future<OptRunResult>> jobs;
    for (std::size_t i = 0; i < n; ++i) jobs.push_back(std::async(std::launch::async, one, i));
    for (auto& j : jobs) out.runs.push_back(j.get());
  } else {
    for (std::size_t i = 0; i < n; ++i) out.runs.push_back(one(i));
  }

  bool found = false;
  for (std::size_t i = 0; i < out.runs.size(); ++i) {
    const auto& r = out.runs[i];
    if (r.stop_reason == StopReason::Aborted || r.eval_losses.empty()) continue;
    if (!found || r.final_loss() < out.runs[out.best].final_loss()) {
      out.best = i;
      found = true;
    }
  }
  if (!found) {
    std::string why = "all seeds aborted";
    if (!out.runs.empty() && !out.runs.front().message.empty()) why += ": " + out.runs.front().message;
    throw Error(why);
  }
  return out;
}

inline MultiSeedResult run_multi_seed(const RasterImage& target, const LossSpec& loss,
                                      const DistributionMap& dist, InitOptions init,
                                      const OptConfig& cfg, RunOptions opt = {},
                                      bool parallel = false) {
  loss.validate();
  BackendFactory factory = [&](std::size_t) { return make_native_backend(loss, target); };
  return run_multi_seed(target, factory, dist, init, cfg, opt, parallel);
}

}  // namespace strokeopt
