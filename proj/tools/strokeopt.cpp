// strokeopt: turn a raster image into an n-stroke Bezier sketch.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "strokeopt/pipeline.hpp"

namespace {

constexpr int kUsageError = 2;
constexpr int kRuntimeError = 1;

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("strokeopt");
  logger->set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("STROKEOPT_LOG")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to "off"; only honor it when asked for explicitly
    if (level != spdlog::level::off || std::string(env) == "off") spdlog::set_level(level);
  }
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  using strokeopt::PipelineConfig;

  PipelineConfig cfg;
  std::vector<int> levels{cfg.strokes};
  std::string manifest;

  CLI::App app{"Optimize Bezier strokes so their rendering matches a target image."};
  app.set_version_flag("--version", std::string(strokeopt::kToolVersion));
  app.add_option("--input", cfg.input, "target image (PNG or JPEG)");
  app.add_option("--mask", cfg.mask, "foreground mask image, white = keep");
  app.add_option("--strokes", levels, "stroke count, or a comma list for an abstraction sweep")
      ->delimiter(',')
      ->check(CLI::PositiveNumber);
  app.add_option("--control-points", cfg.control_points, "control points per stroke")
      ->check(CLI::IsMember({2, 3, 4}));
  app.add_option("--width", cfg.width, "stroke width in pixels")->check(CLI::PositiveNumber);
  app.add_option("--resolution", cfg.resolution, "square canvas size in pixels")->check(CLI::PositiveNumber);
  app.add_option("--softness", cfg.softness, "edge softness in pixels")->check(CLI::PositiveNumber);
  app.add_option("--loss", cfg.loss, "loss backend")->check(CLI::IsMember({"l2", "blur", "clip"}));
  app.add_option("--blur-sigmas", cfg.blur_sigmas, "blur levels for --loss blur")->delimiter(',');
  app.add_option("--ws", cfg.ws, "semantic loss weight")->check(CLI::NonNegativeNumber);
  app.add_option("--augment-views", cfg.augment_views, "augmented views per step (remote loss)")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--backend", cfg.backend, "sidecar endpoint: cmd:<command> or tcp:<host>:<port>");
  app.add_option("--relevancy", cfg.relevancy, "auto, none or file:<path>");
  app.add_option("--temperature", cfg.temperature, "softmax temperature of the init distribution")
      ->check(CLI::PositiveNumber);
  app.add_option("--radius", cfg.radius, "control point spread as a fraction of the canvas");
  app.add_option("--xdog-sigma", cfg.xdog.sigma);
  app.add_option("--xdog-k", cfg.xdog.k);
  app.add_option("--xdog-tau", cfg.xdog.tau);
  app.add_option("--xdog-epsilon", cfg.xdog.epsilon);
  app.add_option("--xdog-phi", cfg.xdog.phi);
  app.add_option("--seeds", cfg.opt.seeds, "independent initializations")->check(CLI::PositiveNumber);
  app.add_option("--seed-base", cfg.opt.seed_base, "seed of the first run");
  app.add_option("--iters", cfg.opt.max_iters, "maximum iterations")->check(CLI::PositiveNumber);
  app.add_option("--lr", cfg.opt.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  app.add_option("--eval-every", cfg.opt.eval_every, "iterations between evaluations")
      ->check(CLI::PositiveNumber);
  app.add_option("--converge-delta", cfg.opt.converge_delta, "convergence threshold")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--snapshot-every", cfg.opt.snapshot_every, "write an SVG snapshot every N iterations")
      ->check(CLI::NonNegativeNumber);
  auto* out_opt = app.add_option("--out", cfg.out, "output directory");
  app.add_option("--manifest", manifest, "replay the configuration stored in a manifest.json")
      ->check(CLI::ExistingFile);
  app.add_flag("--parallel-seeds", cfg.parallel_seeds, "run seeds concurrently");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  std::vector<PipelineConfig> jobs;
  try {
    if (!manifest.empty()) {
      PipelineConfig replay = strokeopt::load_manifest_config(manifest);
      if (out_opt->count() > 0) replay.out = cfg.out;
      jobs.push_back(replay);
    } else {
      for (int n : levels) {
        PipelineConfig job = cfg;
        job.strokes = n;
        if (levels.size() > 1) job.out = (std::filesystem::path(cfg.out) / ("strokes_" + std::to_string(n))).string();
        jobs.push_back(job);
      }
    }
    for (const auto& job : jobs) job.validate();
  } catch (const strokeopt::Error& e) {
    std::cerr << "strokeopt: " << e.what() << "\nRun with --help for more information.\n";
    return kUsageError;
  }

  try {
    for (const auto& job : jobs) {
      const auto m = strokeopt::run_pipeline(job, [](const std::string& s) { spdlog::info("{}", s); });
      spdlog::info("wrote {}", m.svg_path);
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kRuntimeError;
  }
  return 0;
}
