#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace cipherbreak {

// H x W x 3 8-bit RGB, row-major, channel-interleaved.
class ImageTensor {
 public:
  static constexpr int kChannels = 3;

  ImageTensor() = default;
  ImageTensor(int width, int height, std::uint8_t fill = 0);
  ImageTensor(int width, int height, std::vector<std::uint8_t> data);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::uint8_t& at(int x, int y, int c) { return data_[index(x, y, c)]; }
  std::uint8_t at(int x, int y, int c) const { return data_[index(x, y, c)]; }

  std::span<std::uint8_t> data() { return data_; }
  std::span<const std::uint8_t> data() const { return data_; }
  const std::vector<std::uint8_t>& bytes() const { return data_; }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * kChannels + c;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

// M x M x 3 tile with the same layout as ImageTensor.
struct Tile {
  int size = 0;
  std::vector<std::uint8_t> data;

  Tile() = default;
  explicit Tile(int m) : size(m), data(static_cast<std::size_t>(m) * m * 3) {}

  std::uint8_t& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * size + x) * 3 + c]; }
  std::uint8_t at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * size + x) * 3 + c]; }

  friend bool operator==(const Tile&, const Tile&) = default;
};

struct BlockGrid {
  int block_size = 0;
  int rows = 0;
  int cols = 0;
  std::vector<Tile> blocks;  // row-major
};

// Errors: DimensionError if M does not divide both dimensions.
BlockGrid partition(const ImageTensor& img, int block_size);
// Errors: StructuralError on tile count or tile size mismatch.
ImageTensor integrate(const BlockGrid& grid);

// Dihedral op k in 0..7: optional horizontal flip (k >= 4) followed by
// k % 4 quarter turns counter-clockwise.
inline constexpr int kDihedralOps = 8;
Tile dihedral_transform(const Tile& tile, int op);
int dihedral_inverse(int op);
// Index of the op equivalent to applying `first` then `second`.
int dihedral_compose(int first, int second);

// Model-side conversions: 8-bit value v maps to v / 127.5 - 1.
float to_unit_range(std::uint8_t v);
std::uint8_t from_unit_range(float v);

ImageTensor center_crop_square(const ImageTensor& img);
// Bilinear with half-pixel centers (edge-clamped).
ImageTensor resize_bilinear(const ImageTensor& img, int width, int height);

}  // namespace cipherbreak
