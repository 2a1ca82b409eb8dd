#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "strokeopt/errors.hpp"
#include "strokeopt/geometry.hpp"
#include "strokeopt/image_io.hpp"
#include "strokeopt/loss.hpp"
#include "strokeopt/optimize.hpp"
#include "strokeopt/raster.hpp"
#include "strokeopt/remote.hpp"
#include "strokeopt/saliency.hpp"
#include "strokeopt/svg.hpp"

namespace strokeopt {

inline constexpr std::string_view kToolVersion = "0.3.0";

// Everything needed to reproduce one run; serialized into manifest.json.
struct PipelineConfig {
  std::string input;
  std::optional<std::string> mask;
  int strokes = 16;
  int control_points = 4;
  double width = 1.5;
  int resolution = 224;
  double softness = 0.7;
  std::string loss = "l2";  // l2 | blur | clip
  std::vector<double> blur_sigmas = BlurredL2Backend{}.sigmas;
  double ws = 0.1;
  int augment_views = 4;
  std::string backend;             // cmd:<command> | tcp:<host>:<port>
  std::string relevancy = "auto";  // auto | none | file:<path>
  double temperature = 1.0;
  double radius = 0.05;
  XDoGParams xdog;
  OptConfig opt;
  bool parallel_seeds = false;
  std::string out = "out";

  void validate() const {
    if (input.empty()) throw DomainError("--input is required");
    if (strokes < 1) throw DomainError("stroke count must be >= 1");
    if (control_points < 2 || control_points > 4) throw DomainError("control points must be 2, 3 or 4");
    if (!(width > 0.0)) throw DomainError("stroke width must be positive");
    if (resolution < 1) throw DomainError("resolution must be >= 1");
    if (!(softness > 0.0)) throw DomainError("softness must be positive");
    if (loss != "l2" && loss != "blur" && loss != "clip") throw DomainError("loss must be l2, blur or clip");
    if (loss == "clip" && backend.empty()) throw DomainError("--loss clip needs --backend");
    if (relevancy != "auto" && relevancy != "none" && !relevancy.starts_with("file:")) {
      throw DomainError("relevancy must be auto, none or file:<path>");
    }
    if (!(temperature > 0.0)) throw DomainError("temperature must be positive");
    if (!(radius > 0.0 && radius < 1.0)) throw DomainError("radius must lie in (0, 1)");
    loss_spec().validate();
    opt.validate();
  }

  LossSpec loss_spec() const {
    LossSpec spec;
    spec.semantic_weight = ws;
    spec.augment_views = augment_views;
    if (loss == "blur") {
      spec.backend = BlurredL2Backend{blur_sigmas};
    } else if (loss == "clip") {
      spec.backend = RemoteBackend{backend, false};
    }
    return spec;
  }
};

inline void to_json(nlohmann::json& j, const XDoGParams& p) {
  j = {{"sigma", p.sigma}, {"k", p.k}, {"tau", p.tau}, {"epsilon", p.epsilon}, {"phi", p.phi}};
}
inline void from_json(const nlohmann::json& j, XDoGParams& p) {
  j.at("sigma").get_to(p.sigma);
  j.at("k").get_to(p.k);
  j.at("tau").get_to(p.tau);
  j.at("epsilon").get_to(p.epsilon);
  j.at("phi").get_to(p.phi);
}

inline void to_json(nlohmann::json& j, const OptConfig& c) {
  j = {{"lr", c.lr},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"eps", c.eps},
       {"max_iters", c.max_iters},
       {"eval_every", c.eval_every},
       {"converge_delta", c.converge_delta},
       {"seeds", c.seeds},
       {"seed_base", c.seed_base},
       {"snapshot_every", c.snapshot_every}};
}
inline void from_json(const nlohmann::json& j, OptConfig& c) {
  j.at("lr").get_to(c.lr);
  j.at("beta1").get_to(c.beta1);
  j.at("beta2").get_to(c.beta2);
  j.at("eps").get_to(c.eps);
  j.at("max_iters").get_to(c.max_iters);
  j.at("eval_every").get_to(c.eval_every);
  j.at("converge_delta").get_to(c.converge_delta);
  j.at("seeds").get_to(c.seeds);
  j.at("seed_base").get_to(c.seed_base);
  j.at("snapshot_every").get_to(c.snapshot_every);
}

inline void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = {{"input", c.input},
       {"mask", c.mask ? nlohmann::json(*c.mask) : nlohmann::json(nullptr)},
       {"strokes", c.strokes},
       {"control_points", c.control_points},
       {"width", c.width},
       {"resolution", c.resolution},
       {"softness", c.softness},
       {"loss", c.loss},
       {"blur_sigmas", c.blur_sigmas},
       {"ws", c.ws},
       {"augment_views", c.augment_views},
       {"backend", c.backend},
       {"relevancy", c.relevancy},
       {"temperature", c.temperature},
       {"radius", c.radius},
       {"xdog", c.xdog},
       {"opt", c.opt},
       {"parallel_seeds", c.parallel_seeds},
       {"out", c.out}};
}
inline void from_json(const nlohmann::json& j, PipelineConfig& c) {
  j.at("input").get_to(c.input);
  if (j.contains("mask") && !j.at("mask").is_null()) {
    c.mask = j.at("mask").get<std::string>();
  } else {
    c.mask.reset();
  }
  j.at("strokes").get_to(c.strokes);
  j.at("control_points").get_to(c.control_points);
  j.at("width").get_to(c.width);
  j.at("resolution").get_to(c.resolution);
  j.at("softness").get_to(c.softness);
  j.at("loss").get_to(c.loss);
  j.at("blur_sigmas").get_to(c.blur_sigmas);
  j.at("ws").get_to(c.ws);
  j.at("augment_views").get_to(c.augment_views);
  j.at("backend").get_to(c.backend);
  j.at("relevancy").get_to(c.relevancy);
  j.at("temperature").get_to(c.temperature);
  j.at("radius").get_to(c.radius);
  j.at("xdog").get_to(c.xdog);
  j.at("opt").get_to(c.opt);
  c.parallel_seeds = j.value("parallel_seeds", false);
  j.at("out").get_to(c.out);
}

struct RunManifest {
  PipelineConfig config;
  bool mask_applied = false;
  std::vector<std::uint64_t> seeds;
  std::string svg_path, png_path, csv_path, manifest_path;
  std::string tool_version{kToolVersion};
  std::size_t best_index = 0;
  std::vector<OptRunResult> runs;
};

inline nlohmann::json manifest_json(const RunManifest& m) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : m.runs) {
    runs.push_back({{"seed", r.seed},
                    {"stop_reason", to_string(r.stop_reason)},
                    {"final_eval_loss", r.eval_losses.empty() ? nlohmann::json(nullptr)
                                                              : nlohmann::json(r.final_loss())},
                    {"last_eval_iter", r.eval_losses.empty() ? 0 : r.eval_losses.back().iter},
                    {"message", r.message}});
  }
  return {{"tool", "strokeopt"},
          {"tool_version", m.tool_version},
          {"config", m.config},
          {"mask_applied", m.mask_applied},
          {"seeds", m.seeds},
          {"outputs",
           {{"svg", m.svg_path}, {"png", m.png_path}, {"csv", m.csv_path}, {"manifest", m.manifest_path}}},
          {"best_seed", m.runs.empty() ? 0 : m.runs.at(m.best_index).seed},
          {"runs", runs}};
}

// Reads the config block of a manifest written by run_pipeline.
inline PipelineConfig load_manifest_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open manifest " + path);
  try {
    return nlohmann::json::parse(f).at("config").get<PipelineConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed manifest " + path + ": " + e.what());
  }
}

inline std::string loss_csv(const std::vector<EvalRecord>& evals) {
  std::string out = "iter,eval_loss,semantic,geometric\n";
  char line[160];
  for (const auto& e : evals) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g\n", e.iter, e.loss, e.semantic, e.geometric);
    out += line;
  }
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("failed writing " + path.string());
}

using LogFn = std::function<void(const std::string&)>;

// Runs the full image -> sketch pipeline for one stroke budget and writes
// sketch.svg, sketch.png, losses.csv and manifest.json into config.out.
inline RunManifest run_pipeline(const PipelineConfig& config, const LogFn& log = {}) {
  config.validate();
  auto info = [&](const std::string& s) {
    if (log) log(s);
  };
  const CanvasSize canvas{config.resolution, config.resolution};
  TargetImage target = load_target(config.input, canvas);
  RunManifest manifest;
  manifest.config = config;
  if (config.mask) {
    target = apply_mask(target, read_image(*config.mask));
    manifest.mask_applied = true;
  }

  const LossSpec spec = config.loss_spec();
  const bool remote = std::holds_alternative<RemoteBackend>(spec.backend);

  // Remote seeds each get their own session; the first one is opened up front so its
  // relevancy map can seed the initialization.
  std::vector<std::shared_ptr<RemoteBinding>> bindings(static_cast<std::size_t>(config.opt.seeds));
  if (remote) {
    info("opening sidecar " + config.backend);
    bindings[0] = std::make_shared<RemoteBinding>(bind_remote(spec, target.rgb));
  }

  RelevancyMap relevancy = RelevancyMap::uniform(canvas.width, canvas.height);
  if (config.relevancy.starts_with("file:")) {
    relevancy = load_relevancy(config.relevancy.substr(5));
  } else if (config.relevancy == "auto" && remote) {
    relevancy = bindings[0]->registration.relevancy;
  }
  const RasterImage edges = xdog(target.gray, config.xdog);
  const DistributionMap dist = build_distribution(relevancy, edges, config.temperature);

  InitOptions init;
  init.strokes = config.strokes;
  init.degree = config.control_points - 1;
  init.radius = config.radius;
  init.width = config.width;

  RunOptions ro;
  ro.raster.softness = config.softness;
  ro.augment_views = config.augment_views;

  BackendFactory factory = [&](std::size_t i) -> std::unique_ptr<LossBackend> {
    if (!remote) return make_native_backend(spec, target.rgb);
    if (!bindings[i]) bindings[i] = std::make_shared<RemoteBinding>(bind_remote(spec, target.rgb));
    struct Borrowed final : LossBackend {
      std::shared_ptr<RemoteBinding> binding;
      LossReport evaluate(const RasterImage& s, const EvalRequest& r) override {
        return binding->backend->evaluate(s, r);
      }
    };
    auto b = std::make_unique<Borrowed>();
    b->binding = bindings[i];
    return b;
  };

  info("optimizing " + std::to_string(config.strokes) + " strokes over " +
       std::to_string(config.opt.seeds) + " seed(s)");
  const MultiSeedResult result = run_multi_seed(target.rgb, factory, dist, init, config.opt, ro, config.parallel_seeds);
  for (const auto& r : result.runs) {
    info("seed " + std::to_string(r.seed) + ": " + to_string(r.stop_reason) + ", final eval loss " +
         std::to_string(r.final_loss()) + (r.message.empty() ? "" : " (" + r.message + ")"));
  }
  const OptRunResult& best = result.best_run();

  const std::filesystem::path out(config.out);
  std::filesystem::create_directories(out);
  manifest.svg_path = (out / "sketch.svg").string();
  manifest.png_path = (out / "sketch.png").string();
  manifest.csv_path = (out / "losses.csv").string();
  manifest.manifest_path = (out / "manifest.json").string();
  for (int i = 0; i < config.opt.seeds; ++i) manifest.seeds.push_back(config.opt.seed_base + i);
  manifest.best_index = result.best;
  manifest.runs = result.runs;

  export_svg(best.final_sketch, manifest.svg_path);
  write_png(manifest.png_path, render(best.final_sketch, ro.raster));
  write_text(manifest.csv_path, loss_csv(best.eval_losses));
  if (!best.snapshots.empty()) {
    std::filesystem::create_directories(out / "snapshots");
    for (const auto& [iter, sk] : best.snapshots) {
      char name[32];
      std::snprintf(name, sizeof name, "iter_%06d.svg", iter);
      export_svg(sk, (out / "snapshots" / name).string());
    }
  }
  write_text(manifest.manifest_path, manifest_json(manifest).dump(2) + "\n");
  return manifest;
}

}  // namespace strokeopt
