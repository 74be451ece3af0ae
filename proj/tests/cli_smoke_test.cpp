#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cipherbreak/cli.hpp"
#include "cipherbreak/diffusion/attack.hpp"
#include "cipherbreak/image_io.hpp"
#include "cipherbreak/keyed_rng.hpp"

using namespace cipherbreak;
namespace fs = std::filesystem;

namespace {

int invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cipherbreak::cli::run(args, out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

}  // namespace

// make-dataset -> train-attack -> attack -> score on 32x32 synthetic shapes.
TEST(CliSmoke, EndToEndPipelineWithinBudget) {
  const auto start = std::chrono::steady_clock::now();
  const auto dir = fs::temp_directory_path() / "cb_cli_smoke";
  fs::remove_all(dir);
  const std::string key = MasterKey::from_seed(1).to_hex();
  const auto p = [&](const char* rel) { return (dir / rel).string(); };

  ASSERT_EQ(invoke({"--seed", "1", "make-dataset", "--synthetic", "64", "--size", "32", "--scheme", "etc", "--split", "0.875",
                 "--out", p("ds")}),
            0);
  ASSERT_EQ(invoke({"--seed", "1", "train-attack", "--manifest", p("ds/manifest-train.json"), "--out", p("att"), "--steps",
                 "500", "--batch", "8", "--log-every", "0"}),
            0);
  // Trailing 100-step mean of the logged loss, read at each full window: no
  // rise beyond 3 sigma of the difference of two window means, and a net fall.
  std::ifstream log(dir / "att" / "loss.csv");
  std::string line;
  std::getline(log, line);
  std::vector<double> losses;
  while (std::getline(log, line)) losses.push_back(std::stod(line.substr(line.find(',', line.find(',') + 1) + 1)));
  ASSERT_EQ(losses.size(), 500u);
  const auto smoothed = diffusion::smooth(losses, 100);
  const auto window_var = [&](std::size_t end) {
    double ss = 0;
    for (std::size_t j = end - 99; j <= end; ++j) ss += (losses[j] - smoothed[end]) * (losses[j] - smoothed[end]);
    return ss / 99 / 100;
  };
  for (std::size_t i = 199; i < smoothed.size(); i += 100)
    EXPECT_LE(smoothed[i], smoothed[i - 100] + 3 * std::sqrt(window_var(i) + window_var(i - 100))) << "step " << i + 1;
  EXPECT_LT(smoothed[499], smoothed[99] - 3 * std::sqrt(window_var(499) + window_var(99)));

  ASSERT_EQ(invoke({"export-pairs", "--manifest", p("ds/manifest-val.json"), "--key-hex", key, "--out", p("val")}), 0);
  ASSERT_EQ(invoke({"--seed", "2", "attack", "--checkpoint", p("att/single.ckpt"), "--encrypted", p("val/encrypted"),
                 "--out", p("recon"), "--guidance-scale", "3"}),
            0);
  ASSERT_EQ(invoke({"score", "--plain", p("val/plain"), "--recon", p("recon"), "--out", p("score"), "--label", "smoke"}), 0);
  EXPECT_EQ(list_png_files(dir / "recon").size(), 8u);
  EXPECT_TRUE(fs::exists(dir / "score" / "scores.csv"));
  for (const char* d : {"ds", "att", "val", "recon", "score"}) EXPECT_TRUE(fs::exists(dir / d / "run-manifest.json")) << d;
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60;
  std::cout << "end-to-end smoke took " << minutes << " min\n";
  EXPECT_LE(minutes, 15.0);
}
