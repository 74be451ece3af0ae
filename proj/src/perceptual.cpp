#include "cipherbreak/perceptual.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include "cipherbreak/errors.hpp"
#include "cipherbreak/image_io.hpp"
#include "cipherbreak/nn/convert.hpp"

namespace cipherbreak {

template <class T>
double lpips_from_features(const std::vector<nn::Tensor<T>>& a, const std::vector<nn::Tensor<T>>& b,
                           const std::vector<std::vector<double>>& weights) {
  if (a.size() != b.size() || a.size() != weights.size()) throw StructuralError("lpips: layer counts differ");
  double total = 0;
  for (std::size_t l = 0; l < a.size(); ++l) {
    const auto& fa = a[l];
    const auto& fb = b[l];
    if (fa.shape() != fb.shape() || fa.rank() != 4 || fa.dim(0) != 1) {
      throw DimensionError("lpips: feature shapes differ at layer " + std::to_string(l));
    }
    const int c = fa.dim(1);
    if (static_cast<int>(weights[l].size()) != c) throw StructuralError("lpips: weight vector length differs from channels");
    const std::size_t hw = static_cast<std::size_t>(fa.dim(2)) * fa.dim(3);
    double layer = 0;
    for (std::size_t p = 0; p < hw; ++p) {
      double na = 0, nb = 0;
      for (int k = 0; k < c; ++k) {
        const double va = fa[k * hw + p], vb = fb[k * hw + p];
        na += va * va;
        nb += vb * vb;
      }
      na = std::sqrt(na) + kFeatureNormEps;
      nb = std::sqrt(nb) + kFeatureNormEps;
      double sq = 0;
      for (int k = 0; k < c; ++k) {
        const double diff = weights[l][static_cast<std::size_t>(k)] * (fa[k * hw + p] / na - fb[k * hw + p] / nb);
        sq += diff * diff;
      }
      layer += sq;
    }
    total += layer / static_cast<double>(hw);
  }
  return total;
}

template double lpips_from_features<float>(const std::vector<nn::Tensor<float>>&, const std::vector<nn::Tensor<float>>&,
                                           const std::vector<std::vector<double>>&);
template double lpips_from_features<double>(const std::vector<nn::Tensor<double>>&,
                                            const std::vector<nn::Tensor<double>>&,
                                            const std::vector<std::vector<double>>&);

FeatureNet::FeatureNet(std::shared_ptr<const ToyConvNet> net) : net_(std::move(net)) {
  if (!net_) throw ArgumentError("feature net requires a toy_conv network");
  const int widths[ToyConvNet::kFeatureLayers] = {16, 32, 64};
  for (int w : widths) weights_.emplace_back(static_cast<std::size_t>(w), 1.0);
}

FeatureNet FeatureNet::from_embedder(const Embedder& e) {
  if (!e.net()) throw ArgumentError("LPIPS-proxy needs a toy_conv embedder");
  return FeatureNet(e.net());
}

std::vector<nn::Tensor<float>> FeatureNet::features(const ImageTensor& img) const {
  return net_->features(nn::to_model(img));
}

double FeatureNet::distance(const ImageTensor& a, const ImageTensor& b) const {
  if (a.width() != b.width() || a.height() != b.height()) throw DimensionError("lpips: image sizes differ");
  return lpips_from_features(features(a), features(b), weights_);
}

PixelScores pixel_baselines(const ImageTensor& a, const ImageTensor& b) {
  if (a.width() != b.width() || a.height() != b.height()) throw DimensionError("pixel baselines: image sizes differ");
  if (a.empty()) throw ArgumentError("pixel baselines: empty image");
  double sum = 0;
  const auto pa = a.data(), pb = b.data();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const double d = static_cast<double>(pa[i]) - pb[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(pa.size());
  const double psnr = mse == 0.0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(255.0 * 255.0 / mse);
  return {mse, psnr};
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw ArgumentError("quantile of an empty list");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

BoxSummary summarize(std::vector<double> values) {
  BoxSummary s;
  s.count = values.size();
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  s.median = quantile_sorted(values, 0.5);
  s.q1 = quantile_sorted(values, 0.25);
  s.q3 = quantile_sorted(values, 0.75);
  const double iqr = s.q3 - s.q1;
  s.lower_fence = s.q1 - 1.5 * iqr;
  s.upper_fence = s.q3 + 1.5 * iqr;
  s.whisker_low = s.q1;
  s.whisker_high = s.q3;
  for (double v : values) {
    if (v < s.lower_fence || v > s.upper_fence) {
      s.outliers.push_back(v);
    } else {
      s.whisker_low = std::min(s.whisker_low, v);
      s.whisker_high = std::max(s.whisker_high, v);
    }
  }
  return s;
}

ScoreReport score_pairs(const FeatureNet& net, const std::vector<std::string>& ids,
                        const std::vector<ImageTensor>& plain, const std::vector<ImageTensor>& recon) {
  if (ids.size() != plain.size() || plain.size() != recon.size()) throw ArgumentError("score_pairs: list sizes differ");
  ScoreReport r;
  std::vector<double> values;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    ImageScore s{ids[i], net.distance(plain[i], recon[i]), pixel_baselines(plain[i], recon[i])};
    values.push_back(s.lpips);
    r.scores.push_back(std::move(s));
  }
  r.summary = summarize(std::move(values));
  return r;
}

ScoreReport score_dir(const FeatureNet& net, const std::filesystem::path& plain_dir,
                      const std::filesystem::path& recon_dir) {
  std::map<std::string, std::filesystem::path> plain, recon;
  for (const auto& p : list_png_files(plain_dir)) plain[p.filename().string()] = p;
  for (const auto& p : list_png_files(recon_dir)) recon[p.filename().string()] = p;
  std::string unmatched;
  for (const auto& [name, _] : plain)
    if (!recon.count(name)) unmatched += " " + name + " (no reconstruction)";
  for (const auto& [name, _] : recon)
    if (!plain.count(name)) unmatched += " " + name + " (no plain image)";
  if (!unmatched.empty()) throw DataError("unmatched files:" + unmatched);
  if (plain.empty()) throw DataError("no PNG files in " + plain_dir.string());
  std::vector<std::string> ids;
  std::vector<ImageTensor> a, b;
  for (const auto& [name, path] : plain) {
    ids.push_back(std::filesystem::path(name).stem().string());
    a.push_back(read_png(path));
    b.push_back(read_png(recon.at(name)));
  }
  return score_pairs(net, ids, a, b);
}

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.8g", v);
  return buf;
}

void write_scores_csv(const std::filesystem::path& path, const ScoreReport& r) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << "id,lpips_proxy,mse,psnr\n";
  for (const auto& s : r.scores) {
    out << s.id << "," << format_number(s.lpips) << "," << format_number(s.pixel.mse) << ","
        << format_number(s.pixel.psnr) << "\n";
  }
  if (!out) throw DataError("cannot write " + path.string());
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<std::string>& labels,
                       const std::vector<BoxSummary>& rows) {
  if (labels.size() != rows.size()) throw ArgumentError("summary labels differ from rows");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << "label,count,mean,median,q1,q3,lower_fence,upper_fence,whisker_low,whisker_high,outliers\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& s = rows[i];
    out << labels[i] << "," << s.count << "," << format_number(s.mean) << "," << format_number(s.median) << ","
        << format_number(s.q1) << "," << format_number(s.q3) << "," << format_number(s.lower_fence) << ","
        << format_number(s.upper_fence) << "," << format_number(s.whisker_low) << ","
        << format_number(s.whisker_high) << ",";
    for (std::size_t k = 0; k < s.outliers.size(); ++k) out << (k ? ";" : "") << format_number(s.outliers[k]);
    out << "\n";
  }
  if (!out) throw DataError("cannot write " + path.string());
}

}  // namespace cipherbreak
