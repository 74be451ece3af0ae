#include "cipherbreak/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "cipherbreak/errors.hpp"
#include "cipherbreak/keyed_rng.hpp"
#include "cipherbreak/nn/convert.hpp"
#include "cipherbreak/nn/ops.hpp"
#include "cipherbreak/nn/optim.hpp"
#include "cipherbreak/nn/serialize.hpp"
#include "cipherbreak/rng.hpp"

namespace cipherbreak {

namespace {

constexpr int kPatchGrid = 4;
constexpr int kPatchFeatures = kPatchGrid * kPatchGrid * 3 * 2;

}  // namespace

std::string to_string(EmbedderKind k) { return k == EmbedderKind::ToyConv ? "toy_conv" : "random_projection"; }

EmbedderKind parse_embedder_kind(const std::string& s) {
  if (s == "toy_conv") return EmbedderKind::ToyConv;
  if (s == "random_projection") return EmbedderKind::RandomProjection;
  throw ArgumentError("unknown embedder kind '" + s + "' (expected toy_conv or random_projection)");
}

void EmbedderSpec::validate() const {
  if (d <= 0) throw ArgumentError("embedding dimension must be positive");
  if (input_size <= 0 || input_size % 16 != 0) throw ArgumentError("embedder input size must be a positive multiple of 16");
  if (kind == EmbedderKind::RandomProjection && !weights.empty()) {
    throw ArgumentError("random_projection embedder takes no weights");
  }
}

nlohmann::json to_json(const EmbedderSpec& s) {
  nlohmann::json j = {{"kind", to_string(s.kind)}, {"d", s.d}, {"seed", s.seed}, {"input_size", s.input_size}};
  if (!s.weights.empty()) j["weights"] = s.weights.generic_string();
  return j;
}

EmbedderSpec embedder_spec_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  EmbedderSpec s;
  try {
    s.kind = parse_embedder_kind(j.at("kind").get<std::string>());
    s.d = j.value("d", 768);
    s.seed = j.value("seed", std::uint64_t{0});
    s.input_size = j.value("input_size", 32);
    if (j.contains("weights")) {
      s.weights = j.at("weights").get<std::string>();
      if (s.weights.is_relative() && !base_dir.empty()) s.weights = base_dir / s.weights;
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad embedder spec: ") + e.what());
  }
  s.validate();
  return s;
}

EmbedderSpec read_embedder_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedder spec " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return embedder_spec_from_json(j, path.parent_path());
}

void write_embedder_spec(const std::filesystem::path& path, const EmbedderSpec& s) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  EmbedderSpec rel = s;
  if (!rel.weights.empty() && path.has_parent_path()) {
    rel.weights = std::filesystem::relative(std::filesystem::absolute(s.weights),
                                            std::filesystem::absolute(path.parent_path()));
  }
  std::ofstream out(path);
  out << to_json(rel).dump(2) << "\n";
  if (!out) throw DataError("cannot write " + path.string());
}

// ---- ToyConvNet ----

ToyConvNet::ToyConvNet(int d, std::uint64_t seed) : d_(d) {
  Rng rng(seed);
  auto add = [&](const std::string& name, nn::Shape shape, int fan_in, bool bias) {
    auto& p = params_.add(name, std::move(shape));
    if (!bias) nn::init_uniform_fan_in(p, fan_in, rng, std::sqrt(6.0));
    return &p;
  };
  c1w = add("conv1.w", {16, 3, 3, 3}, 27, false);
  c1b = add("conv1.b", {16}, 27, true);
  c2w = add("conv2.w", {32, 16, 3, 3}, 144, false);
  c2b = add("conv2.b", {32}, 144, true);
  c3w = add("conv3.w", {64, 32, 3, 3}, 288, false);
  c3b = add("conv3.b", {64}, 288, true);
  f1w = add("fc1.w", {256, 64}, 64, false);
  f1b = add("fc1.b", {256}, 64, true);
  f2w = add("fc2.w", {d, 256}, 256, false);
  f2b = add("fc2.b", {d}, 256, true);
}

nn::Var ToyConvNet::conv_stack(nn::Graph<float>& g, nn::Var x, std::vector<nn::Var>* taps) const {
  auto p = [&](nn::Parameter<float>* q) { return g.param(*q); };
  nn::Var h = nn::relu(g, nn::conv2d(g, x, p(c1w), p(c1b), 1, 1));
  if (taps) taps->push_back(h);
  h = nn::avg_pool2(g, h);
  h = nn::relu(g, nn::conv2d(g, h, p(c2w), p(c2b), 1, 1));
  if (taps) taps->push_back(h);
  h = nn::avg_pool2(g, h);
  h = nn::relu(g, nn::conv2d(g, h, p(c3w), p(c3b), 1, 1));
  if (taps) taps->push_back(h);
  return h;
}

nn::Var ToyConvNet::embed(nn::Graph<float>& g, nn::Var x) const {
  nn::Var h = nn::global_mean_pool(g, conv_stack(g, x, nullptr));
  h = nn::relu(g, nn::linear(g, h, g.param(*f1w), g.param(*f1b)));
  return nn::linear(g, h, g.param(*f2w), g.param(*f2b));
}

std::vector<nn::Tensor<float>> ToyConvNet::features(const nn::Tensor<float>& x) const {
  if (x.rank() != 4 || x.dim(2) % 4 != 0 || x.dim(3) % 4 != 0) {
    throw DimensionError("feature extraction needs [N,3,H,W] with H,W divisible by 4");
  }
  nn::Graph<float> g(false);
  std::vector<nn::Var> taps;
  conv_stack(g, g.constant(x), &taps);
  std::vector<nn::Tensor<float>> out;
  for (nn::Var v : taps) out.push_back(g.value(v));
  return out;
}

// ---- Embedder ----

ImageTensor square_resize(const ImageTensor& img, int size) {
  if (img.width() == size && img.height() == size) return img;
  return resize_bilinear(center_crop_square(img), size, size);
}

Embedder::Embedder(EmbedderSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  nlohmann::json id = to_json(spec_);
  id.erase("weights");
  std::string material = id.dump();
  if (spec_.kind == EmbedderKind::ToyConv) {
    net_ = std::make_shared<ToyConvNet>(spec_.d, spec_.seed);
    if (!spec_.weights.empty()) nn::load_parameters(spec_.weights, net_->params());
    for (std::size_t i = 0; i < net_->params().size(); ++i) {
      const auto& v = net_->params()[i].value;
      material.append(reinterpret_cast<const char*>(v.data()), v.numel() * sizeof(float));
    }
  } else {
    Rng rng(spec_.seed);
    projection_.resize(static_cast<std::size_t>(spec_.d) * kPatchFeatures);
    const double scale = 1.0 / std::sqrt(static_cast<double>(kPatchFeatures));
    for (auto& v : projection_) v = static_cast<float>(rng.normal() * scale);
  }
  const auto digest = sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(material.data()), material.size()));
  fingerprint_ = digest.substr(0, 16);
}

nn::Tensor<float> Embedder::prepare(const std::vector<ImageTensor>& images) const {
  std::vector<ImageTensor> resized;
  resized.reserve(images.size());
  for (const auto& img : images) resized.push_back(square_resize(img, spec_.input_size));
  return nn::to_model(resized);
}

std::vector<Embedding> Embedder::embed_batch(const std::vector<ImageTensor>& images) const {
  std::vector<Embedding> out;
  if (images.empty()) return out;
  const nn::Tensor<float> x = prepare(images);
  const int n = x.dim(0), d = spec_.d;
  if (net_) {
    constexpr int kChunk = 64;
    const std::size_t per = static_cast<std::size_t>(3) * x.dim(2) * x.dim(3);
    for (int start = 0; start < n; start += kChunk) {
      const int m = std::min(kChunk, n - start);
      nn::Tensor<float> part({m, 3, x.dim(2), x.dim(3)},
                             std::vector<float>(x.data() + start * per, x.data() + (start + m) * per));
      nn::Graph<float> g(false);
      const auto& y = g.value(net_->embed(g, g.constant(std::move(part))));
      for (int i = 0; i < m; ++i) out.emplace_back(y.data() + static_cast<std::size_t>(i) * d, y.data() + static_cast<std::size_t>(i + 1) * d);
    }
    return out;
  }
  const int s = spec_.input_size, patch = s / kPatchGrid;
  for (int i = 0; i < n; ++i) {
    std::vector<double> f;
    f.reserve(kPatchFeatures);
    for (int py = 0; py < kPatchGrid; ++py)
      for (int px = 0; px < kPatchGrid; ++px)
        for (int c = 0; c < 3; ++c) {
          double sum = 0, sq = 0;
          for (int y = py * patch; y < (py + 1) * patch; ++y)
            for (int xx = px * patch; xx < (px + 1) * patch; ++xx) {
              const double v = x.at(i, c, y, xx);
              sum += v;
              sq += v * v;
            }
          const double cnt = static_cast<double>(patch) * patch;
          const double mean = sum / cnt;
          f.push_back(mean);
          f.push_back(std::sqrt(std::max(0.0, sq / cnt - mean * mean)));
        }
    Embedding e(static_cast<std::size_t>(d));
    for (int r = 0; r < d; ++r) {
      double acc = 0;
      for (int k = 0; k < kPatchFeatures; ++k) acc += projection_[static_cast<std::size_t>(r) * kPatchFeatures + k] * f[k];
      e[static_cast<std::size_t>(r)] = static_cast<float>(acc);
    }
    out.push_back(std::move(e));
  }
  return out;
}

Embedding Embedder::embed(const ImageTensor& img) const { return embed_batch({img}).front(); }

double cosine(const Embedding& a, const Embedding& b) {
  if (a.size() != b.size()) throw ArgumentError("cosine: embedding dimensions differ");
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  if (aa == 0.0 || bb == 0.0) throw ArgumentError("cosine similarity undefined for a zero vector");
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

Matrix similarity_matrix(const std::vector<Embedding>& embeddings) {
  const std::size_t n = embeddings.size();
  if (n < 2) throw ArgumentError("similarity matrix needs at least 2 images");
  Matrix m(n, std::vector<double>(n, 1.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m[i][j] = m[j][i] = cosine(embeddings[i], embeddings[j]);
  return m;
}

Matrix similarity_matrix(const Embedder& e, const std::vector<ImageTensor>& images) {
  if (images.size() < 2) throw ArgumentError("similarity matrix needs at least 2 images");
  return similarity_matrix(e.embed_batch(images));
}

void write_matrix_csv(const std::filesystem::path& path, const std::vector<std::string>& labels, const Matrix& m) {
  if (labels.size() != m.size()) throw ArgumentError("label count differs from matrix size");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << "label";
  for (const auto& l : labels) out << "," << l;
  out << "\n";
  char buf[32];
  for (std::size_t i = 0; i < m.size(); ++i) {
    out << labels[i];
    for (double v : m[i]) {
      std::snprintf(buf, sizeof buf, "%.6f", v);
      out << "," << buf;
    }
    out << "\n";
  }
  if (!out) throw DataError("cannot write " + path.string());
}

// ---- contrastive training ----

namespace {

// Random square crop covering 50-100% of the area, resized, maybe mirrored,
// with brightness/contrast jitter in model space.
void augmented_view(const ImageTensor& img, int size, Rng& rng, float* dst) {
  const int side = std::min(img.width(), img.height());
  const int crop = std::max(4, static_cast<int>(std::lround(side * std::sqrt(rng.uniform(0.5, 1.0)))));
  const int x0 = rng.range(0, img.width() - crop), y0 = rng.range(0, img.height() - crop);
  ImageTensor cut(crop, crop);
  for (int y = 0; y < crop; ++y)
    for (int x = 0; x < crop; ++x)
      for (int c = 0; c < 3; ++c) cut.at(x, y, c) = img.at(x0 + x, y0 + y, c);
  const ImageTensor view = resize_bilinear(cut, size, size);
  const bool flip = rng.bernoulli(0.5);
  const float brightness = static_cast<float>(rng.uniform(-0.1, 0.1));
  const float contrast = static_cast<float>(rng.uniform(0.85, 1.15));
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  for (int c = 0; c < 3; ++c) {
    float mean = 0;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) mean += to_unit_range(view.at(x, y, c));
    mean /= static_cast<float>(plane);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const float v = to_unit_range(view.at(flip ? size - 1 - x : x, y, c));
        dst[c * plane + static_cast<std::size_t>(y) * size + x] =
            std::clamp((v - mean) * contrast + mean + brightness, -1.0f, 1.0f);
      }
  }
}

}  // namespace

std::vector<double> train_contrastive(ToyConvNet& net, const std::vector<ImageTensor>& images, int input_size,
                                      const ContrastiveConfig& cfg) {
  if (images.size() < 2) throw ArgumentError("contrastive training needs at least 2 images");
  if (cfg.batch < 2 || cfg.steps < 0 || !(cfg.temperature > 0)) throw ArgumentError("invalid contrastive config");
  Rng rng(cfg.seed);
  nn::AdamW<float> opt(net.params(), {cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  const int b = std::min<int>(cfg.batch, static_cast<int>(images.size()));
  const std::size_t per = static_cast<std::size_t>(3) * input_size * input_size;
  std::vector<double> losses;
  std::vector<std::size_t> order(images.size());
  for (int step = 0; step < cfg.steps; ++step) {
    // Distinct images per batch so the only positive of a row is its twin view.
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (int i = 0; i < b; ++i) std::swap(order[static_cast<std::size_t>(i)], order[i + rng.below(order.size() - i)]);
    nn::Tensor<float> x({2 * b, 3, input_size, input_size});
    for (int i = 0; i < b; ++i) {
      const auto& img = images[order[static_cast<std::size_t>(i)]];
      augmented_view(img, input_size, rng, x.data() + static_cast<std::size_t>(i) * per);
      augmented_view(img, input_size, rng, x.data() + static_cast<std::size_t>(i + b) * per);
    }
    nn::Graph<float> g;
    const nn::Var loss = nn::nt_xent(g, net.embed(g, g.constant(std::move(x))), static_cast<float>(cfg.temperature));
    const double value = g.value(loss)[0];
    if (!std::isfinite(value)) throw NumericError("contrastive loss became non-finite at step " + std::to_string(step));
    net.params().zero_grad();
    g.backward(loss);
    opt.step();
    losses.push_back(value);
  }
  return losses;
}

}  // namespace cipherbreak
