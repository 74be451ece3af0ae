#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cipherbreak/ciphers.hpp"
#include "cipherbreak/embedder.hpp"

namespace cipherbreak {

// Embedding-similarity statistics of one scheme over a corpus. Variants of an
// image are its plain form and its encryptions under each key.
struct SimilarityAnalysis {
  std::vector<std::string> labels;  // "plain", "key1", ..., "keyN"
  Matrix mean_matrix;               // corpus mean of cos(variant a, variant b) of the same image
  double cross_key = 0;             // mean cos(E_Ka(x), E_Kb(x)), a < b
  double plain_vs_encrypted = 0;    // mean cos(x, E_K(x))
  double unrelated_plain = 0;       // mean cos(x_i, x_{i+1})
  double unrelated_encrypted = 0;   // mean cos(E_K1(x_i), E_K1(x_{i+1}))
  std::vector<double> per_image_cross_key;
  std::vector<double> per_image_plain_vs_encrypted;
};

// Requires >= 2 images and >= 2 keys.
SimilarityAnalysis analyze_similarity(const Embedder& embedder, const std::vector<ImageTensor>& images,
                                      const SchemeConfig& cfg, const std::vector<MasterKey>& keys);

nlohmann::json to_json(const SimilarityAnalysis& a);

}  // namespace cipherbreak
