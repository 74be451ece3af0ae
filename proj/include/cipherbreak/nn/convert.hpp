#pragma once

#include <vector>

#include "cipherbreak/image.hpp"
#include "cipherbreak/nn/tensor.hpp"

namespace cipherbreak::nn {

// Stacks same-sized images into [N,3,H,W] on the [-1,1] scale.
Tensor<float> to_model(const std::vector<ImageTensor>& images);
Tensor<float> to_model(const ImageTensor& image);

// Item n of a [N,3,H,W] tensor, clamped to [-1,1] and rounded to 8 bits.
ImageTensor from_model(const Tensor<float>& batch, int n);

}  // namespace cipherbreak::nn
