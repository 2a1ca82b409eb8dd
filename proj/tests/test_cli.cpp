#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "strokeopt/image_io.hpp"
#include "test_support.hpp"

namespace strokeopt {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), {});
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    RasterImage img(48, 48, 3, 1.0);
    for (int i = 8; i < 40; ++i) {
      for (int c = 0; c < 3; ++c) {
        img.at(i, 20, c) = 0.0;
        img.at(30, i, c) = 0.0;
      }
    }
    input = (dir.path / "input.png").string();
    write_png(input, img);
  }

  // Runs the CLI with stderr captured to a log file and returns its exit code.
  int run(const std::string& args) {
    const std::string cmd = std::string(STROKEOPT_CLI) + " " + args + " 2>" + (dir.path / "stderr.txt").string() +
                            " >/dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string small_run(const fs::path& out, int seeds = 1) const {
    return "--input " + input + " --resolution 32 --strokes 2 --iters 20 --seeds " + std::to_string(seeds) +
           " --out " + out.string();
  }

  std::string stderr_text() const { return slurp(dir.path / "stderr.txt"); }

  testing::TempDir dir;
  std::string input;
};

TEST_F(Cli, WritesAllOutputs) {
  const fs::path out = dir.path / "run";
  ASSERT_EQ(run(small_run(out) + " --loss blur"), 0) << stderr_text();
  for (const char* f : {"sketch.svg", "sketch.png", "losses.csv", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  const auto m = nlohmann::json::parse(slurp(out / "manifest.json"));
  EXPECT_EQ(m.at("tool").get<std::string>(), "strokeopt");
  EXPECT_EQ(m.at("config").at("strokes").get<int>(), 2);
  EXPECT_EQ(m.at("runs").size(), 1u);
  const auto png = read_image((out / "sketch.png").string());
  EXPECT_EQ(png.width, 32);
  EXPECT_EQ(slurp(out / "losses.csv").rfind("iter,eval_loss,semantic,geometric\n", 0), 0u);
}

TEST_F(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run("--input " + input + " --strokes 0"), 2);
  EXPECT_EQ(run("--strokes 4"), 2);
  EXPECT_NE(stderr_text().find("--input"), std::string::npos);
  EXPECT_EQ(run("--input " + input + " --loss clip"), 2);
  EXPECT_EQ(run("--input " + input + " --bogus-flag"), 2);
}

TEST_F(Cli, MissingInputIsRuntimeError) {
  EXPECT_EQ(run("--input " + (dir.path / "absent.png").string() + " --out " + (dir.path / "o").string()), 1);
}

TEST_F(Cli, ManifestReplayReproducesOutputs) {
  const fs::path a = dir.path / "a", b = dir.path / "b";
  ASSERT_EQ(run(small_run(a, 2) + " --snapshot-every 10"), 0) << stderr_text();
  ASSERT_EQ(run("--manifest " + (a / "manifest.json").string() + " --out " + b.string()), 0) << stderr_text();
  for (const char* f : {"sketch.svg", "sketch.png", "losses.csv", "snapshots/iter_000010.svg"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
}

TEST_F(Cli, StrokeSweepUsesSubdirectories) {
  const fs::path out = dir.path / "sweep";
  ASSERT_EQ(run("--input " + input + " --resolution 32 --strokes 1,3 --iters 10 --seeds 1 --out " + out.string()), 0)
      << stderr_text();
  for (const char* sub : {"strokes_1", "strokes_3"}) EXPECT_TRUE(fs::exists(out / sub / "sketch.svg")) << sub;
  const auto m = nlohmann::json::parse(slurp(out / "strokes_3" / "manifest.json"));
  EXPECT_EQ(m.at("config").at("strokes").get<int>(), 3);
}

TEST_F(Cli, RemoteLossShutsSidecarDown) {
  const fs::path marker = dir.path / "marker";
  const std::string backend = std::string("'cmd:exec ") + STROKEOPT_FAKE_SIDECAR + " --marker " + marker.string() + "'";
  ASSERT_EQ(run(small_run(dir.path / "remote") + " --loss clip --backend " + backend), 0) << stderr_text();
  EXPECT_TRUE(fs::exists(marker));
  EXPECT_TRUE(fs::exists(dir.path / "remote" / "sketch.svg"));
}

TEST_F(Cli, SidecarFailureStillShutsDownAndFails) {
  const fs::path marker = dir.path / "marker";
  const std::string backend = std::string("'cmd:exec ") + STROKEOPT_FAKE_SIDECAR + " --error-after 1 --marker " +
                              marker.string() + "'";
  EXPECT_EQ(run(small_run(dir.path / "remote") + " --loss clip --backend " + backend), 1);
  EXPECT_TRUE(fs::exists(marker));
  EXPECT_NE(stderr_text().find("injected failure"), std::string::npos);
}

}  // namespace
}  // namespace strokeopt
