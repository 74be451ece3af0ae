#include "cipherbreak/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "cipherbreak/errors.hpp"

namespace cipherbreak {

ImageTensor::ImageTensor(int width, int height, std::uint8_t fill)
    : width_(width), height_(height),
      data_(static_cast<std::size_t>(width) * height * kChannels, fill) {
  if (width < 0 || height < 0) throw ArgumentError("negative image dimensions");
}

ImageTensor::ImageTensor(int width, int height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data)) {
  if (width < 0 || height < 0) throw ArgumentError("negative image dimensions");
  if (data_.size() != static_cast<std::size_t>(width) * height * kChannels) {
    throw StructuralError("image data length " + std::to_string(data_.size()) +
                          " does not match " + std::to_string(width) + "x" +
                          std::to_string(height) + "x3");
  }
}

BlockGrid partition(const ImageTensor& img, int block_size) {
  if (block_size <= 0) throw ArgumentError("block size must be positive");
  if (img.width() % block_size != 0 || img.height() % block_size != 0) {
    throw DimensionError("image " + std::to_string(img.width()) + "x" +
                         std::to_string(img.height()) + " is not divisible by block size " +
                         std::to_string(block_size));
  }
  BlockGrid g;
  g.block_size = block_size;
  g.rows = img.height() / block_size;
  g.cols = img.width() / block_size;
  g.blocks.reserve(static_cast<std::size_t>(g.rows) * g.cols);
  const std::size_t row_bytes = static_cast<std::size_t>(block_size) * 3;
  for (int br = 0; br < g.rows; ++br) {
    for (int bc = 0; bc < g.cols; ++bc) {
      Tile t(block_size);
      for (int y = 0; y < block_size; ++y) {
        const auto* src = &img.data()[((static_cast<std::size_t>(br) * block_size + y) * img.width() +
                                       static_cast<std::size_t>(bc) * block_size) * 3];
        std::copy(src, src + row_bytes, t.data.begin() + static_cast<std::ptrdiff_t>(y * row_bytes));
      }
      g.blocks.push_back(std::move(t));
    }
  }
  return g;
}

ImageTensor integrate(const BlockGrid& grid) {
  const int m = grid.block_size;
  if (m <= 0 || grid.rows <= 0 || grid.cols <= 0) throw StructuralError("empty block grid");
  if (grid.blocks.size() != static_cast<std::size_t>(grid.rows) * grid.cols) {
    throw StructuralError("block grid holds " + std::to_string(grid.blocks.size()) +
                          " tiles, expected " + std::to_string(grid.rows * grid.cols));
  }
  ImageTensor img(grid.cols * m, grid.rows * m);
  const std::size_t row_bytes = static_cast<std::size_t>(m) * 3;
  for (int br = 0; br < grid.rows; ++br) {
    for (int bc = 0; bc < grid.cols; ++bc) {
      const Tile& t = grid.blocks[static_cast<std::size_t>(br) * grid.cols + bc];
      if (t.size != m || t.data.size() != row_bytes * m) {
        throw StructuralError("tile size mismatch in block grid");
      }
      for (int y = 0; y < m; ++y) {
        auto* dst = &img.data()[((static_cast<std::size_t>(br) * m + y) * img.width() +
                                 static_cast<std::size_t>(bc) * m) * 3];
        std::copy(t.data.begin() + static_cast<std::ptrdiff_t>(y * row_bytes),
                  t.data.begin() + static_cast<std::ptrdiff_t>((y + 1) * row_bytes), dst);
      }
    }
  }
  return img;
}

namespace {

// Source coordinate read by output pixel (x, y) under `op`.
std::pair<int, int> dihedral_source(int op, int x, int y, int m) {
  // Undo the rotations first (they were applied last), then the flip.
  for (int r = 0; r < op % 4; ++r) {
    // One CCW quarter turn: out(x, y) = in(m - 1 - y, x).
    int sx = m - 1 - y;
    int sy = x;
    x = sx;
    y = sy;
  }
  if (op >= 4) x = m - 1 - x;
  return {x, y};
}

struct DihedralTables {
  std::array<int, kDihedralOps> inverse{};
  std::array<std::array<int, kDihedralOps>, kDihedralOps> compose{};
};

// Tables derived by acting on a 3x3 probe whose pixels are all distinct.
const DihedralTables& tables() {
  static const DihedralTables t = [] {
    DihedralTables d;
    Tile probe(3);
    for (int i = 0; i < 9; ++i) probe.data[static_cast<std::size_t>(i) * 3] = static_cast<std::uint8_t>(i);
    std::array<Tile, kDihedralOps> images;
    for (int k = 0; k < kDihedralOps; ++k) images[k] = dihedral_transform(probe, k);
    for (int a = 0; a < kDihedralOps; ++a) {
      for (int b = 0; b < kDihedralOps; ++b) {
        Tile ab = dihedral_transform(images[a], b);
        for (int k = 0; k < kDihedralOps; ++k) {
          if (images[k] == ab) d.compose[a][b] = k;
        }
      }
      for (int k = 0; k < kDihedralOps; ++k) {
        if (d.compose[a][k] == 0) d.inverse[a] = k;
      }
    }
    return d;
  }();
  return t;
}

void check_op(int op) {
  if (op < 0 || op >= kDihedralOps) {
    throw ArgumentError("dihedral op " + std::to_string(op) + " out of range 0..7");
  }
}

}  // namespace

Tile dihedral_transform(const Tile& tile, int op) {
  check_op(op);
  if (op == 0) return tile;
  const int m = tile.size;
  Tile out(m);
  for (int y = 0; y < m; ++y) {
    for (int x = 0; x < m; ++x) {
      auto [sx, sy] = dihedral_source(op, x, y, m);
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = tile.at(sx, sy, c);
    }
  }
  return out;
}

int dihedral_inverse(int op) {
  check_op(op);
  return tables().inverse[op];
}

int dihedral_compose(int first, int second) {
  check_op(first);
  check_op(second);
  return tables().compose[first][second];
}

float to_unit_range(std::uint8_t v) { return static_cast<float>(v) / 127.5f - 1.0f; }

std::uint8_t from_unit_range(float v) {
  if (!(v >= -1.0f)) v = -1.0f;  // also maps NaN to the lower bound
  if (v > 1.0f) v = 1.0f;
  return static_cast<std::uint8_t>(std::lround((v + 1.0f) * 127.5f));
}

ImageTensor center_crop_square(const ImageTensor& img) {
  const int side = std::min(img.width(), img.height());
  if (side == img.width() && side == img.height()) return img;
  const int x0 = (img.width() - side) / 2;
  const int y0 = (img.height() - side) / 2;
  ImageTensor out(side, side);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x0 + x, y0 + y, c);
    }
  }
  return out;
}

ImageTensor resize_bilinear(const ImageTensor& img, int width, int height) {
  if (width <= 0 || height <= 0) throw ArgumentError("resize target must be positive");
  if (img.empty()) throw ArgumentError("cannot resize an empty image");
  if (width == img.width() && height == img.height()) return img;
  ImageTensor out(width, height);
  const double sx = static_cast<double>(img.width()) / width;
  const double sy = static_cast<double>(img.height()) / height;
  for (int y = 0; y < height; ++y) {
    double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height() - 1.0);
    int y0 = static_cast<int>(fy);
    int y1 = std::min(y0 + 1, img.height() - 1);
    double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width() - 1.0);
      int x0 = static_cast<int>(fx);
      int x1 = std::min(x0 + 1, img.width() - 1);
      double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        double top = img.at(x0, y0, c) * (1 - wx) + img.at(x1, y0, c) * wx;
        double bot = img.at(x0, y1, c) * (1 - wx) + img.at(x1, y1, c) * wx;
        out.at(x, y, c) = static_cast<std::uint8_t>(std::lround(std::clamp(top * (1 - wy) + bot * wy, 0.0, 255.0)));
      }
    }
  }
  return out;
}

}  // namespace cipherbreak
