#include "cipherbreak/similarity.hpp"

#include "cipherbreak/errors.hpp"

namespace cipherbreak {

SimilarityAnalysis analyze_similarity(const Embedder& embedder, const std::vector<ImageTensor>& images,
                                      const SchemeConfig& cfg, const std::vector<MasterKey>& keys) {
  if (images.size() < 2) throw ArgumentError("similarity analysis needs at least two images");
  if (keys.size() < 2) throw ArgumentError("similarity analysis needs at least two keys");
  const std::size_t n = images.size(), v = keys.size() + 1;

  // variants[k][i]: k = 0 plain, k >= 1 encrypted under keys[k-1].
  std::vector<std::vector<Embedding>> variants;
  variants.push_back(embedder.embed_batch(images));
  for (const auto& key : keys) {
    std::vector<ImageTensor> enc;
    enc.reserve(n);
    for (const auto& img : images) enc.push_back(encrypt(img, key, cfg));
    variants.push_back(embedder.embed_batch(enc));
  }

  SimilarityAnalysis a;
  a.labels.push_back("plain");
  for (std::size_t k = 1; k < v; ++k) a.labels.push_back("key" + std::to_string(k));
  a.mean_matrix.assign(v, std::vector<double>(v, 0.0));
  for (std::size_t p = 0; p < v; ++p) {
    a.mean_matrix[p][p] = 1.0;
    for (std::size_t q = p + 1; q < v; ++q) {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += cosine(variants[p][i], variants[q][i]);
      a.mean_matrix[p][q] = a.mean_matrix[q][p] = s / static_cast<double>(n);
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    double ck = 0, pe = 0;
    int ck_n = 0;
    for (std::size_t p = 1; p < v; ++p) {
      pe += cosine(variants[0][i], variants[p][i]);
      for (std::size_t q = p + 1; q < v; ++q, ++ck_n) ck += cosine(variants[p][i], variants[q][i]);
    }
    a.per_image_cross_key.push_back(ck / ck_n);
    a.per_image_plain_vs_encrypted.push_back(pe / static_cast<double>(v - 1));
    const std::size_t j = (i + 1) % n;
    a.unrelated_plain += cosine(variants[0][i], variants[0][j]);
    a.unrelated_encrypted += cosine(variants[1][i], variants[1][j]);
  }
  const auto mean = [](const std::vector<double>& x) {
    double s = 0;
    for (double y : x) s += y;
    return s / static_cast<double>(x.size());
  };
  a.cross_key = mean(a.per_image_cross_key);
  a.plain_vs_encrypted = mean(a.per_image_plain_vs_encrypted);
  a.unrelated_plain /= static_cast<double>(n);
  a.unrelated_encrypted /= static_cast<double>(n);
  return a;
}

nlohmann::json to_json(const SimilarityAnalysis& a) {
  return {{"labels", a.labels},
          {"mean_matrix", a.mean_matrix},
          {"cross_key", a.cross_key},
          {"plain_vs_encrypted", a.plain_vs_encrypted},
          {"unrelated_plain", a.unrelated_plain},
          {"unrelated_encrypted", a.unrelated_encrypted},
          {"images", a.per_image_cross_key.size()},
          {"cross_key_exceeds_unrelated", a.cross_key > a.unrelated_plain},
          {"cross_key_above_0_9", a.cross_key > 0.9}};
}

}  // namespace cipherbreak
