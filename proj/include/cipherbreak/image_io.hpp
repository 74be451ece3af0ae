#pragma once

#include <filesystem>
#include <vector>

#include "cipherbreak/image.hpp"

namespace cipherbreak {

// PNG is the only accepted format on the cipher path; anything else (JPEG,
// WebP, ...) raises DataError. Gray/alpha/16-bit PNGs are converted to RGB8.
ImageTensor read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const ImageTensor& img);

std::vector<std::uint8_t> encode_png(const ImageTensor& img);
ImageTensor decode_png(const std::vector<std::uint8_t>& bytes);

bool is_png_file(const std::filesystem::path& path);

// Sorted list of *.png files directly under `dir`.
std::vector<std::filesystem::path> list_png_files(const std::filesystem::path& dir);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace cipherbreak
