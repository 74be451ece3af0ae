#include "cipherbreak/nn/convert.hpp"

#include "cipherbreak/errors.hpp"

namespace cipherbreak::nn {

Tensor<float> to_model(const std::vector<ImageTensor>& images) {
  if (images.empty()) throw ArgumentError("to_model: no images");
  const int w = images[0].width(), h = images[0].height();
  Tensor<float> out({static_cast<int>(images.size()), 3, h, w});
  for (std::size_t n = 0; n < images.size(); ++n) {
    const auto& img = images[n];
    if (img.width() != w || img.height() != h) throw DimensionError("to_model: images differ in size");
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) out.at(static_cast<int>(n), c, y, x) = to_unit_range(img.at(x, y, c));
  }
  return out;
}

Tensor<float> to_model(const ImageTensor& image) { return to_model(std::vector<ImageTensor>{image}); }

ImageTensor from_model(const Tensor<float>& batch, int n) {
  if (batch.rank() != 4 || batch.dim(1) != 3) throw DimensionError("from_model expects [N,3,H,W]");
  const int h = batch.dim(2), w = batch.dim(3);
  ImageTensor img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = from_unit_range(batch.at(n, c, y, x));
  return img;
}

}  // namespace cipherbreak::nn
