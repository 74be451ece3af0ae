#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "cipherbreak/embedder.hpp"
#include "cipherbreak/image.hpp"
#include "cipherbreak/nn/tensor.hpp"

namespace cipherbreak {

// Feature maps [1,C,H,W] per layer, unit-normalized over channels at each
// location, differenced, scaled per channel by w_l, squared, summed over
// channels and averaged over locations; layer terms are summed.
template <class T>
double lpips_from_features(const std::vector<nn::Tensor<T>>& a, const std::vector<nn::Tensor<T>>& b,
                           const std::vector<std::vector<double>>& weights);

inline constexpr double kFeatureNormEps = 1e-10;

// LPIPS-proxy: the conv layers of a toy_conv embedder with w_l = 1. Not
// calibrated to human judgments.
class FeatureNet {
 public:
  explicit FeatureNet(std::shared_ptr<const ToyConvNet> net);
  static FeatureNet from_embedder(const Embedder& e);

  static constexpr const char* kMetricName = "LPIPS-proxy";

  std::vector<nn::Tensor<float>> features(const ImageTensor& img) const;
  const std::vector<std::vector<double>>& weights() const { return weights_; }

  double distance(const ImageTensor& a, const ImageTensor& b) const;

 private:
  std::shared_ptr<const ToyConvNet> net_;
  std::vector<std::vector<double>> weights_;
};

struct PixelScores {
  double mse;   // on the 0..255 scale
  double psnr;  // dB; +infinity for identical images
};

PixelScores pixel_baselines(const ImageTensor& a, const ImageTensor& b);

struct BoxSummary {
  std::size_t count = 0;
  double mean = 0, median = 0, q1 = 0, q3 = 0;
  double lower_fence = 0, upper_fence = 0;  // Q1 - 1.5 IQR, Q3 + 1.5 IQR
  double whisker_low = 0, whisker_high = 0;  // extreme values inside the fences
  std::vector<double> outliers;
};

// Quartiles by linear interpolation between order statistics.
BoxSummary summarize(std::vector<double> values);
double quantile_sorted(const std::vector<double>& sorted, double q);

struct ImageScore {
  std::string id;
  double lpips;
  PixelScores pixel;
};

struct ScoreReport {
  std::vector<ImageScore> scores;
  BoxSummary summary;  // over lpips
};

ScoreReport score_pairs(const FeatureNet& net, const std::vector<std::string>& ids,
                        const std::vector<ImageTensor>& plain, const std::vector<ImageTensor>& recon);

// Matches *.png by file name; unmatched names raise DataError listing them.
ScoreReport score_dir(const FeatureNet& net, const std::filesystem::path& plain_dir,
                      const std::filesystem::path& recon_dir);

std::string format_number(double v);
void write_scores_csv(const std::filesystem::path& path, const ScoreReport& r);
void write_summary_csv(const std::filesystem::path& path, const std::vector<std::string>& labels,
                       const std::vector<BoxSummary>& rows);

}  // namespace cipherbreak
