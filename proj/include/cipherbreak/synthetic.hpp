#pragma once

#include <cstdint>
#include <filesystem>

#include "cipherbreak/image.hpp"

namespace cipherbreak::synthetic {

// 1-3 filled rectangles, ellipses or triangles in saturated colors on a
// plain background. Image `index` of a given seed is always the same.
ImageTensor shapes_image(int size, std::uint64_t seed, std::uint64_t index);

// Smooth gradients plus band-limited texture; every pixel varies, which makes
// exact-match statistics meaningful (used for wrong-key and avalanche tests).
ImageTensor textured_image(int size, std::uint64_t seed, std::uint64_t index);

// Writes shapes_<index>.png for index in [0, count) into `dir`.
void write_shapes_dataset(const std::filesystem::path& dir, int count, int size,
                          std::uint64_t seed);

}  // namespace cipherbreak::synthetic
