#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "cipherbreak/image.hpp"
#include "cipherbreak/nn/graph.hpp"

namespace cipherbreak {

enum class EmbedderKind { ToyConv, RandomProjection };

std::string to_string(EmbedderKind k);
EmbedderKind parse_embedder_kind(const std::string& s);

struct EmbedderSpec {
  EmbedderKind kind = EmbedderKind::ToyConv;
  int d = 768;
  std::uint64_t seed = 0;
  int input_size = 32;
  // Parameter container for toy_conv; empty means seeded initialization.
  std::filesystem::path weights;

  void validate() const;
};

nlohmann::json to_json(const EmbedderSpec& s);
// Relative weight paths resolve against `base_dir`.
EmbedderSpec embedder_spec_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
EmbedderSpec read_embedder_spec(const std::filesystem::path& path);
void write_embedder_spec(const std::filesystem::path& path, const EmbedderSpec& s);

using Embedding = std::vector<float>;

// conv3x3(3->16) ReLU pool conv3x3(16->32) ReLU pool conv3x3(32->64) ReLU
// global-mean fc(64->256) ReLU fc(256->d). Inputs are [N,3,H,W] in [-1,1].
class ToyConvNet {
 public:
  static constexpr int kFeatureLayers = 3;

  ToyConvNet(int d, std::uint64_t seed);

  nn::ParameterSet<float>& params() { return params_; }
  const nn::ParameterSet<float>& params() const { return params_; }
  int dim() const { return d_; }

  nn::Var embed(nn::Graph<float>& g, nn::Var x) const;
  // Post-ReLU activations of the three conv layers, for any H,W divisible by 4.
  std::vector<nn::Tensor<float>> features(const nn::Tensor<float>& x) const;

 private:
  nn::Var conv_stack(nn::Graph<float>& g, nn::Var x, std::vector<nn::Var>* taps) const;

  int d_;
  nn::ParameterSet<float> params_;
  nn::Parameter<float>*c1w, *c1b, *c2w, *c2b, *c3w, *c3b, *f1w, *f1b, *f2w, *f2b;
};

class Embedder {
 public:
  explicit Embedder(EmbedderSpec spec);

  const EmbedderSpec& spec() const { return spec_; }
  // Short hash over the spec and the weights actually loaded.
  const std::string& fingerprint() const { return fingerprint_; }
  int dim() const { return spec_.d; }

  Embedding embed(const ImageTensor& img) const;
  std::vector<Embedding> embed_batch(const std::vector<ImageTensor>& images) const;

  // Null for random_projection.
  std::shared_ptr<const ToyConvNet> net() const { return net_; }

 private:
  nn::Tensor<float> prepare(const std::vector<ImageTensor>& images) const;

  EmbedderSpec spec_;
  std::shared_ptr<ToyConvNet> net_;
  std::vector<float> projection_;  // [d, kPatchFeatures] for random_projection
  std::string fingerprint_;
};

// Center-crop to square then bilinear resize to size x size.
ImageTensor square_resize(const ImageTensor& img, int size);

// Throws ArgumentError on a dimension mismatch or a zero vector.
double cosine(const Embedding& a, const Embedding& b);

using Matrix = std::vector<std::vector<double>>;

// Symmetric with an exact unit diagonal. Requires >= 2 images.
Matrix similarity_matrix(const Embedder& e, const std::vector<ImageTensor>& images);
Matrix similarity_matrix(const std::vector<Embedding>& embeddings);
void write_matrix_csv(const std::filesystem::path& path, const std::vector<std::string>& labels, const Matrix& m);

struct ContrastiveConfig {
  int steps = 1500;
  int batch = 32;  // pairs per step
  double lr = 2e-3;
  double weight_decay = 1e-4;
  double temperature = 0.1;
  std::uint64_t seed = 0;
};

// SimCLR-style training on plain images with crop/flip/color-jitter views.
// Returns the per-step loss.
std::vector<double> train_contrastive(ToyConvNet& net, const std::vector<ImageTensor>& images, int input_size,
                                      const ContrastiveConfig& cfg);

}  // namespace cipherbreak
