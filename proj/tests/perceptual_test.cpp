#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "cipherbreak/errors.hpp"
#include "cipherbreak/image_io.hpp"
#include "cipherbreak/perceptual.hpp"
#include "cipherbreak/rng.hpp"
#include "cipherbreak/synthetic.hpp"
#include "test_util.hpp"

using namespace cipherbreak;
namespace fs = std::filesystem;

namespace {

nn::Tensor<double> feat(int c, int h, int w, std::vector<double> v) { return nn::Tensor<double>({1, c, h, w}, std::move(v)); }

FeatureNet seeded_net() { return FeatureNet::from_embedder(Embedder(EmbedderSpec{})); }

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("cb_perceptual_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(LpipsArithmetic, SingleChannelTwoByTwo) {
  // Unit-normalizing one channel leaves signs: a -> [1,-1,0,1], b -> [1,1,0,-1].
  const auto a = feat(1, 2, 2, {1, -2, 0, 3});
  const auto b = feat(1, 2, 2, {2, 2, 0, -1});
  const double d = lpips_from_features<double>({a}, {b}, {{1.0}});
  EXPECT_NEAR(d, 2.0, 2.0 * 1e-6);  // (0 + 4 + 0 + 4) / 4
}

TEST(LpipsArithmetic, TwoLayersWithChannelWeights) {
  // Layer 2 locations: (3,4)->(.6,.8) vs (4,3)->(.8,.6); (1,0) vs (0,2)->(0,1).
  const auto a1 = feat(1, 2, 2, {1, -2, 0, 3});
  const auto b1 = feat(1, 2, 2, {2, 2, 0, -1});
  const auto a2 = feat(2, 1, 2, {3, 1, 4, 0});
  const auto b2 = feat(2, 1, 2, {4, 0, 3, 2});
  EXPECT_NEAR(lpips_from_features<double>({a2}, {b2}, {{1.0, 1.0}}), 1.04, 1.04e-6);     // (0.08 + 2) / 2
  EXPECT_NEAR(lpips_from_features<double>({a2}, {b2}, {{0.5, 2.0}}), 2.21, 2.21e-6);     // (0.17 + 4.25) / 2
  EXPECT_NEAR(lpips_from_features<double>({a1, a2}, {b1, b2}, {{1.0}, {1.0, 1.0}}), 3.04, 3.04e-6);
}

TEST(LpipsArithmetic, ShapeAndLayerMismatchesThrow) {
  const auto a = feat(1, 2, 2, {1, 2, 3, 4});
  const auto b = feat(1, 1, 4, {1, 2, 3, 4});
  EXPECT_THROW(lpips_from_features<double>({a}, {b}, {{1.0}}), DimensionError);
  EXPECT_THROW(lpips_from_features<double>({a}, {a, a}, {{1.0}}), StructuralError);
  EXPECT_THROW(lpips_from_features<double>({a}, {a}, {{1.0, 1.0}}), StructuralError);
}

TEST(LpipsProxy, IdentityAndSymmetry) {
  const auto net = seeded_net();
  for (std::uint64_t i = 0; i < 5; ++i) {
    const auto x = synthetic::shapes_image(32, 1, i);
    const auto y = synthetic::shapes_image(32, 2, i);
    EXPECT_EQ(net.distance(x, x), 0.0);
    const double d = net.distance(x, y);
    EXPECT_GT(d, 0.0);
    EXPECT_EQ(d, net.distance(y, x));
  }
  EXPECT_THROW(net.distance(synthetic::shapes_image(32, 1, 0), synthetic::shapes_image(64, 1, 0)), DimensionError);
}

TEST(LpipsProxy, MonotoneInNoiseLevel) {
  const auto net = seeded_net();
  const double sigmas[] = {0, 4, 8, 16, 32, 64};
  double prev = -1;
  for (double sigma : sigmas) {
    double total = 0;
    for (std::uint64_t i = 0; i < 8; ++i) {
      const auto x = synthetic::shapes_image(32, 3, i);
      Rng rng(100 + i);
      ImageTensor y = x;
      for (auto& v : y.data()) v = static_cast<std::uint8_t>(std::lround(std::clamp(v + sigma * rng.normal(), 0.0, 255.0)));
      total += net.distance(x, y);
    }
    const double mean = total / 8;
    EXPECT_GE(mean, prev) << "sigma " << sigma;
    prev = mean;
  }
}

TEST(LpipsProxy, DeterministicAcrossInstances) {
  const auto x = synthetic::shapes_image(32, 4, 0);
  const auto y = synthetic::shapes_image(32, 4, 1);
  EXPECT_EQ(seeded_net().distance(x, y), seeded_net().distance(x, y));
}

TEST(PixelBaselines, ClosedForms) {
  const ImageTensor black(4, 4, 0), white(4, 4, 255), gray(4, 4, 100), inv(4, 4, 155);
  EXPECT_EQ(pixel_baselines(black, black).mse, 0.0);
  EXPECT_TRUE(std::isinf(pixel_baselines(black, black).psnr));
  EXPECT_EQ(pixel_baselines(black, white).mse, 255.0 * 255.0);
  EXPECT_NEAR(pixel_baselines(black, white).psnr, 0.0, 1e-12);
  // 255 - 100 = 155: difference 55 everywhere.
  EXPECT_EQ(pixel_baselines(gray, inv).mse, 55.0 * 55.0);
  EXPECT_THROW(pixel_baselines(black, ImageTensor(2, 2)), DimensionError);
}

TEST(BoxSummary, QuartilesFencesAndOutliers) {
  const auto s = summarize({1, 2, 3, 4, 5, 6, 7, 8, 100});
  EXPECT_EQ(s.count, 9u);
  EXPECT_DOUBLE_EQ(s.median, 5);
  EXPECT_DOUBLE_EQ(s.q1, 3);
  EXPECT_DOUBLE_EQ(s.q3, 7);
  EXPECT_DOUBLE_EQ(s.lower_fence, 3 - 1.5 * 4);
  EXPECT_DOUBLE_EQ(s.upper_fence, 7 + 1.5 * 4);
  EXPECT_DOUBLE_EQ(s.whisker_low, 1);
  EXPECT_DOUBLE_EQ(s.whisker_high, 8);
  ASSERT_EQ(s.outliers.size(), 1u);
  EXPECT_DOUBLE_EQ(s.outliers[0], 100);
  EXPECT_DOUBLE_EQ(s.mean, 136.0 / 9);
  // Interpolated quartile between order statistics.
  EXPECT_DOUBLE_EQ(quantile_sorted({0, 10}, 0.25), 2.5);
}

TEST(ScoreDir, IdenticalDirsScoreZeroAndCsvIsConsistent) {
  const auto dir = scratch("same");
  for (int i = 0; i < 6; ++i) write_png(dir / ("img" + std::to_string(i) + ".png"), synthetic::shapes_image(32, 5, i));
  const auto net = seeded_net();
  const auto r = score_dir(net, dir, dir);
  ASSERT_EQ(r.scores.size(), 6u);
  for (const auto& s : r.scores) EXPECT_EQ(s.lpips, 0.0);
  EXPECT_EQ(r.summary.mean, 0.0);

  const auto other = scratch("other");
  for (int i = 0; i < 6; ++i) write_png(other / ("img" + std::to_string(i) + ".png"), synthetic::shapes_image(32, 6, i));
  const auto r2 = score_dir(net, dir, other);
  write_scores_csv(other / "scores.csv", r2);
  std::ifstream in(other / "scores.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "id,lpips_proxy,mse,psnr");
  double sum = 0;
  int rows = 0;
  while (std::getline(in, line)) {
    const auto a = line.find(','), b = line.find(',', a + 1);
    sum += std::stod(line.substr(a + 1, b - a - 1));
    ++rows;
  }
  EXPECT_EQ(rows, 6);
  EXPECT_NEAR(sum / rows, r2.summary.mean, 1e-6 * r2.summary.mean);
}

TEST(ScoreDir, UnmatchedFilesAreNamed) {
  const auto a = scratch("a");
  const auto b = scratch("b");
  write_png(a / "x.png", ImageTensor(8, 8));
  write_png(a / "y.png", ImageTensor(8, 8));
  write_png(b / "x.png", ImageTensor(8, 8));
  try {
    score_dir(seeded_net(), a, b);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("y.png"), std::string::npos);
  }
}
